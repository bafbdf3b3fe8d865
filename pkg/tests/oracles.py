"""Independent numerical oracles used only by the test-suite.

Nothing here imports the package's accountant: the RDP oracle integrates the
Renyi moment of the subsampled Gaussian mixture directly with adaptive
quadrature.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate


def _log_integrand(z, q, sigma, alpha):
    # mu0 = N(0, s^2), mixture = (1-q) mu0 + q N(1, s^2); integrand mu0 * (mixture / mu0)^alpha
    log_mu0 = -0.5 * (z / sigma) ** 2 - math.log(sigma * math.sqrt(2 * math.pi))
    shift = (2 * z - 1) / (2 * sigma**2)
    if q == 1.0:
        log_ratio = shift
    else:
        log_ratio = np.logaddexp(math.log1p(-q), math.log(q) + shift)
    return log_mu0 + alpha * log_ratio


def rdp_quadrature(q: float, sigma: float, alpha: int) -> float:
    """Renyi divergence bound of order ``alpha`` by piecewise adaptive quadrature."""
    lo, hi = -40 * sigma, alpha + 40 * sigma
    grid = np.linspace(lo, hi, 401)
    peak = float(np.max(_log_integrand(grid, q, sigma, alpha)))

    def f(z):
        return math.exp(float(_log_integrand(z, q, sigma, alpha)) - peak)

    total = 0.0
    for a, b in zip(grid[:-1], grid[1:]):
        val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-12, limit=200)
        total += val
    for a, b in ((-np.inf, lo), (hi, np.inf)):
        val, _ = integrate.quad(f, a, b, epsabs=1e-300, epsrel=1e-12, limit=200)
        total += val
    log_a = peak + math.log(total)
    return log_a / (alpha - 1)


def epsilon_oracle(q, sigma, delta, steps, orders=range(2, 65), rdp_cache=None):
    if steps == 0:
        return 0.0
    best = math.inf
    for a in orders:
        r = rdp_cache[a] if rdp_cache is not None else rdp_quadrature(q, sigma, a)
        best = min(best, steps * r + math.log(1 / delta) / (a - 1))
    return best


def steps_within_oracle(q, sigma, delta, budget, orders=range(2, 65)):
    """Largest step count with epsilon strictly below ``budget`` (quadrature RDP)."""
    cache = {a: rdp_quadrature(q, sigma, a) for a in orders}
    lo, hi = 0, 1
    while epsilon_oracle(q, sigma, delta, hi, orders, cache) < budget:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if epsilon_oracle(q, sigma, delta, mid, orders, cache) < budget:
            lo = mid
        else:
            hi = mid
    return lo


def numeric_grad(f, x, step=1e-5):
    """Central differences of scalar ``f`` over every entry of array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * step)
    return g
