"""Thresholded Gaussian-kernel adjacency, symmetric normalized Laplacian, graph embedding."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, ValidationError
from .tensor import Tensor, as_tensor, matmul, transpose


def pairwise_distances(coords: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix for an (N, d) coordinate array."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2:
        raise ValidationError(f"coordinates must be (N, d), got shape {coords.shape}")
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def build_adjacency(dist: np.ndarray, alpha_k: float, beta_k: float) -> np.ndarray:
    """``w_ij = exp(-d_ij^2 / alpha_k^2)`` for i != j when that weight is >= beta_k, else 0.

    ``alpha_k`` is the kernel width and ``beta_k`` the sparsity threshold.
    """
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise ValidationError(f"distance matrix must be square, got shape {dist.shape}")
    if not np.all(np.isfinite(dist)):
        raise ValidationError("distance matrix contains non-finite entries")
    if np.any(dist < 0):
        raise ValidationError("distance matrix has negative entries")
    if not np.array_equal(dist, dist.T):
        raise ValidationError("distance matrix is not symmetric")
    if np.any(np.diag(dist) != 0):
        raise ValidationError("distance matrix must have a zero diagonal")
    if not alpha_k > 0:
        raise ValidationError(f"alpha_k must be positive, got {alpha_k}")
    w = np.exp(-(dist**2) / alpha_k**2)
    w[w < beta_k] = 0.0
    np.fill_diagonal(w, 0.0)
    return w


def normalized_laplacian(W: np.ndarray) -> np.ndarray:
    """``L = I - D^{-1/2} W D^{-1/2}``; isolated nodes keep an identity row."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValidationError(f"adjacency must be square, got shape {W.shape}")
    deg = W.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    norm_adj = inv_sqrt[:, None] * W * inv_sqrt[None, :]
    L = np.eye(len(W)) - norm_adj
    # exact symmetry despite rounding in the outer scaling
    return 0.5 * (L + L.T)


def scaled_laplacian(W: np.ndarray) -> np.ndarray:
    """``2 L / lambda_max - I``: spectrum in [-1, 1], and constant signals are no longer annihilated."""
    return rescale_laplacian(normalized_laplacian(W))


def rescale_laplacian(L: np.ndarray) -> np.ndarray:
    """Rescale a symmetric Laplacian ``L`` to ``2 L / lambda_max - I``."""
    L = np.asarray(L, dtype=np.float64)
    lam = float(np.max(np.linalg.eigvalsh(L)))
    if lam <= 0:
        return -np.eye(len(L))
    return 2.0 * L / lam - np.eye(len(L))


def normalized_adjacency(W: np.ndarray) -> np.ndarray:
    """``D^{-1/2} W D^{-1/2}``, zero rows for isolated nodes."""
    return np.eye(len(W)) - normalized_laplacian(W)


def graph_embed(L, x) -> Tensor:
    """``L @ x.T`` for a (T, N) sample, giving an (N, T) tensor."""
    L, x = as_tensor(L), as_tensor(x)
    if x.data.ndim != 2 or L.shape != (x.shape[1], x.shape[1]):
        raise DimensionError(f"graph_embed needs L (N, N) and x (T, N); got {L.shape} and {x.shape}")
    return matmul(L, transpose(x))
