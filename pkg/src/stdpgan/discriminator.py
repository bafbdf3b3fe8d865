"""Critic: graph embedding plus gated spatial/temporal self-attention, temporal conv, linear head.

For a (T, N) sample ``x``::

    Z     = L x^T + alpha * X_s + beta * X_t^T          (N, T)
    x_bar = leaky_relu(conv_time(Z, K_d))               (N, T - k_d + 1)
    score = W_d vec(x_bar) + b_d

with ``X_s = softmax(Q_s K_s^T) V_s`` attending over nodes and
``X_t = softmax(Q_t K_t^T) V_t`` attending over timestamps.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import DimensionError
from .graph import graph_embed
from .params import ParamSet, as_mapping
from .tensor import (
    Tensor,
    add,
    add_scalar,
    as_tensor,
    conv1d,
    leaky_relu,
    matmul,
    reshape,
    scale,
    shared_conv_rows,
    softmax_rows,
    transpose,
)

ATTENTION_PARAMS = ("W_sq", "W_sk", "V_s", "W_tq", "W_tk", "V_t", "alpha", "beta")
LEAK = 0.2


@dataclasses.dataclass
class DiscriminatorParams(ParamSet):
    W_sq: np.ndarray  # (T, M)
    W_sk: np.ndarray  # (T, M)
    V_s: np.ndarray  # (T, T, 1) kernel-size-1 conv over the node axis
    W_tq: np.ndarray  # (N, H)
    W_tk: np.ndarray  # (N, H)
    V_t: np.ndarray  # (N, N, 1) kernel-size-1 conv over the time axis
    alpha: np.ndarray  # ()
    beta: np.ndarray  # ()
    K_d: np.ndarray  # (k_d,)
    W_d: np.ndarray  # (1, N * (T - k_d + 1))
    b_d: np.ndarray  # ()

    def __post_init__(self):
        super().__post_init__()
        T, M = self.W_sq.shape
        N, H = self.W_tq.shape
        kd = self.K_d.shape[0]
        expected = {
            "W_sk": (T, M),
            "V_s": (T, T, 1),
            "W_tk": (N, H),
            "V_t": (N, N, 1),
            "alpha": (),
            "beta": (),
            "W_d": (1, N * (T - kd + 1)),
            "b_d": (),
        }
        for name, shp in expected.items():
            if getattr(self, name).shape != shp:
                raise DimensionError(f"{name} must have shape {shp}, got {getattr(self, name).shape}")

    @property
    def dims(self) -> tuple[int, int]:
        """(T, N)."""
        return self.W_sq.shape[0], self.W_tq.shape[0]


def trainable_names(attention: bool) -> list[str]:
    names = DiscriminatorParams.names()
    if attention:
        return names
    return [n for n in names if n not in ATTENTION_PARAMS]


def default_hidden(T: int) -> int:
    return max(1, math.ceil(T / 2))


def init_discriminator(
    length: int,
    n_nodes: int,
    rng: np.random.Generator,
    hidden_spatial: int | None = None,
    hidden_temporal: int | None = None,
    kernel_d: int = 3,
    init_std: float = 0.1,
) -> DiscriminatorParams:
    T, N = length, n_nodes
    M = hidden_spatial or default_hidden(T)
    H = hidden_temporal or default_hidden(T)
    if kernel_d > T:
        raise DimensionError(f"critic kernel length {kernel_d} exceeds sample length {T}")
    out_len = T - kernel_d + 1

    def g(*shape):
        return init_std * rng.standard_normal(shape)

    return DiscriminatorParams(
        W_sq=g(T, M),
        W_sk=g(T, M),
        V_s=np.eye(T)[:, :, None] + g(T, T, 1),
        W_tq=g(N, H),
        W_tk=g(N, H),
        V_t=np.eye(N)[:, :, None] + g(N, N, 1),
        alpha=np.array(0.0),
        beta=np.array(0.0),
        K_d=g(kernel_d),
        W_d=g(1, N * out_len),
        b_d=np.array(0.0),
    )


def _check_x(x: Tensor, T: int, N: int):
    if x.shape != (T, N):
        raise DimensionError(f"sample must be ({T}, {N}), got {x.shape}")


def spatial_attention(params, x) -> Tensor:
    """Node-over-node attention; returns (N, T)."""
    p = as_mapping(params)
    x = as_tensor(x)
    Wq, Wk = as_tensor(p["W_sq"]), as_tensor(p["W_sk"])
    T = Wq.shape[0]
    if x.data.ndim != 2 or x.shape[0] != T:
        raise DimensionError(f"spatial attention expects {T} timestamps, got sample {x.shape}")
    xt = transpose(x)  # (N, T)
    q = matmul(xt, Wq)
    k = matmul(xt, Wk)
    v = transpose(conv1d(x, p["V_s"]))  # conv over node axis with T channels -> (N, T)
    attn = softmax_rows(matmul(q, transpose(k)))  # (N, N)
    return matmul(attn, v)


def temporal_attention(params, x) -> Tensor:
    """Timestamp-over-timestamp attention; returns (T, N)."""
    p = as_mapping(params)
    x = as_tensor(x)
    Wq, Wk = as_tensor(p["W_tq"]), as_tensor(p["W_tk"])
    N = Wq.shape[0]
    if x.data.ndim != 2 or x.shape[1] != N:
        raise DimensionError(f"temporal attention expects {N} nodes, got sample {x.shape}")
    q = matmul(x, Wq)  # (T, H)
    k = matmul(x, Wk)
    v = transpose(conv1d(transpose(x), p["V_t"]))  # conv over time with N channels -> (T, N)
    attn = softmax_rows(matmul(q, transpose(k)))  # (T, T)
    return matmul(attn, v)


def features(params, L, x, attention: bool = True) -> Tensor:
    """The combined (N, T) representation ``L x^T + alpha X_s + beta X_t^T``."""
    p = as_mapping(params)
    x = as_tensor(x)
    T, N = p["W_sq"].shape[0], p["W_tq"].shape[0]
    _check_x(x, T, N)
    z = graph_embed(L, x)
    if attention:
        z = add(z, scale(as_tensor(p["alpha"]), spatial_attention(p, x)))
        z = add(z, scale(as_tensor(p["beta"]), transpose(temporal_attention(p, x))))
    return z


def score(params, L, x, attention: bool = True) -> Tensor:
    """Critic value of one (T, N) sample as a 0-d tensor.

    With ``attention=False`` the gates are treated as frozen at zero and the
    attention branches are skipped entirely.
    """
    p = as_mapping(params)
    z = features(p, L, x, attention)
    h = leaky_relu(shared_conv_rows(z, p["K_d"]), LEAK)
    flat = reshape(h, (h.size, 1))
    out = matmul(as_tensor(p["W_d"]), flat)
    return reshape(add_scalar(out, as_tensor(p["b_d"])), ())
