"""Noise-to-sample generator: a linear map followed by a transposed 1-D convolution.

The latent vector ``z`` (length N) becomes ``z_tilde = W_g z + b_g``, is viewed
as N channels of length one, and is scattered through a kernel of length T
into N channels of length T. The result is returned as a (T, N) sample.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import DimensionError
from .params import ParamSet, as_mapping
from .tensor import Tensor, add, as_tensor, matmul, reshape, trans_conv1d, transpose


@dataclasses.dataclass
class GeneratorParams(ParamSet):
    W_g: np.ndarray  # (N, N)
    b_g: np.ndarray  # (N,)
    K_g: np.ndarray  # (N, N, T): in-channel, out-channel, time

    def __post_init__(self):
        super().__post_init__()
        N = self.W_g.shape[0]
        if self.W_g.shape != (N, N) or self.b_g.shape != (N,):
            raise DimensionError(f"W_g must be (N, N) and b_g (N,), got {self.W_g.shape}, {self.b_g.shape}")
        if self.K_g.ndim != 3 or self.K_g.shape[:2] != (N, N):
            raise DimensionError(f"K_g must be (N, N, T), got {self.K_g.shape}")

    @property
    def n_nodes(self) -> int:
        return self.W_g.shape[0]

    @property
    def length(self) -> int:
        return self.K_g.shape[2]


def init_generator(
    n_nodes: int,
    length: int,
    rng: np.random.Generator,
    kernel_mean: float = 0.0,
    kernel_std: float = 1.0,
    w_scale: float = 1.0,
    w_jitter: float = 0.01,
) -> GeneratorParams:
    """Kernel ~ N(kernel_mean, kernel_std^2); W_g = w_scale * I plus small Gaussian jitter.

    Pass the training-data mean as ``kernel_mean`` to start the kernel centred on the data.
    """
    W = w_scale * np.eye(n_nodes) + w_jitter * rng.standard_normal((n_nodes, n_nodes))
    K = kernel_mean + kernel_std * rng.standard_normal((n_nodes, n_nodes, length))
    return GeneratorParams(W_g=W, b_g=np.zeros(n_nodes), K_g=K)


def generate(params, z) -> Tensor:
    p = as_mapping(params)
    W, b, K = as_tensor(p["W_g"]), as_tensor(p["b_g"]), as_tensor(p["K_g"])
    z = as_tensor(z)
    N = W.shape[0]
    if z.shape != (N,):
        raise DimensionError(f"noise vector must have shape ({N},), got {z.shape}")
    z_tilde = add(matmul(W, reshape(z, (N, 1))), reshape(b, (N, 1)))
    out = trans_conv1d(z_tilde, K)  # (N, T)
    return transpose(out)


def sample_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(n)


# ---------------------------------------------------------------------------
# statistical check of the output distribution of the transposed convolution


@dataclasses.dataclass(frozen=True)
class TheoremOneSpec:
    """Moments of the noise entries (mu1, sigma1) and kernel entries (mu2, sigma2).

    ``m`` is the number of nonzero entries in one row of the transposed-convolution matrix.
    """

    mu1: float
    sigma1: float
    mu2: float
    sigma2: float
    m: int

    def __post_init__(self):
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ValueError("sigma1 and sigma2 must be positive")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")

    @property
    def closed_mean(self) -> float:
        return self.m * self.mu1 * self.mu2

    @property
    def closed_var(self) -> float:
        s1, s2 = self.sigma1**2, self.sigma2**2
        return self.m * (s1 * s2 + s1 * self.mu2**2 + s2 * self.mu1**2)


@dataclasses.dataclass(frozen=True)
class TheoremOneReport:
    empirical_mean: float
    empirical_var: float
    closed_mean: float
    closed_var: float
    standard_error: float
    passed: bool


def verify_theorem1(
    spec: TheoremOneSpec,
    samples: int,
    rng: np.random.Generator,
    chunk: int = 200_000,
    mean_tol_se: float = 4.0,
    var_rel_tol: float = 0.03,
) -> TheoremOneReport:
    """Monte-Carlo of ``sum_{j<m} k_j x_j`` against its closed-form mean and variance.

    Passes when the sample mean lies within ``mean_tol_se`` standard errors of
    ``m mu1 mu2`` and the sample variance within ``var_rel_tol`` (relative) of
    ``m (s1^2 s2^2 + s1^2 mu2^2 + s2^2 mu1^2)``.
    """
    if samples < 100_000:
        raise ValueError("verify_theorem1 needs at least 1e5 samples")
    total = 0.0
    total_sq = 0.0
    done = 0
    # chunked so 1e6 x m draws never sit in memory at once
    while done < samples:
        n = min(chunk, samples - done)
        x = rng.normal(spec.mu1, spec.sigma1, size=(n, spec.m))
        k = rng.normal(spec.mu2, spec.sigma2, size=(n, spec.m))
        y = np.sum(x * k, axis=1)
        total += float(y.sum())
        total_sq += float(np.dot(y, y))
        done += n
    mean = total / samples
    var = (total_sq - samples * mean * mean) / (samples - 1)
    se = math.sqrt(spec.closed_var / samples)
    ok_mean = abs(mean - spec.closed_mean) <= mean_tol_se * se
    ok_var = abs(var - spec.closed_var) <= var_rel_tol * spec.closed_var
    return TheoremOneReport(mean, var, spec.closed_mean, spec.closed_var, se, ok_mean and ok_var)
