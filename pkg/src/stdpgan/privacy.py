"""DP-SGD gradient sanitization and Renyi-DP accounting for the Poisson-subsampled Gaussian."""

from __future__ import annotations

import dataclasses
import json
import math
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import NumericError, ValidationError

DEFAULT_ORDERS = tuple(range(2, 65))


@dataclasses.dataclass(frozen=True)
class SanitizedGradient:
    vector: np.ndarray
    pre_clip_norm: float
    was_clipped: bool


def clip(g: np.ndarray, C: float) -> SanitizedGradient:
    """``g / max(1, ||g||_2 / C)``; ``C = inf`` disables clipping."""
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise NumericError("cannot clip a gradient with non-finite entries")
    if not C > 0:
        raise ValidationError(f"clip bound must be positive, got {C}")
    norm = float(np.linalg.norm(g))
    factor = max(1.0, norm / C)
    return SanitizedGradient(g / factor, norm, factor > 1.0)


def noise_and_average(
    clipped: Sequence[SanitizedGradient],
    sigma: float,
    C: float,
    lot_size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """``(sum of clipped + N(0, sigma^2 C^2 I)) / lot_size``.

    With ``sigma == 0`` no noise is drawn and the generator state is untouched.
    """
    if not clipped:
        raise ValidationError("noise_and_average needs a nonempty lot")
    if lot_size < 1:
        raise ValidationError(f"lot_size must be >= 1, got {lot_size}")
    dim = clipped[0].vector.shape
    total = np.zeros(dim)
    for c in clipped:
        if c.vector.shape != dim:
            raise ValidationError("clipped gradients differ in length")
        total = total + c.vector
    if sigma > 0:
        if not math.isfinite(C):
            raise ValidationError("noise needs a finite clip bound")
        total = total + rng.normal(0.0, sigma * C, size=dim)
    return total / lot_size


# ---------------------------------------------------------------------------
# accountant


def rdp_subsampled_gaussian(q: float, sigma: float, order: int) -> float:
    """Per-step RDP of the Poisson-subsampled Gaussian mechanism at an integer order.

    Uses the binomial expansion
    ``A = sum_i C(a, i) q^i (1-q)^(a-i) exp((i^2 - i) / (2 sigma^2))`` and returns
    ``log(A) / (a - 1)``.
    """
    if int(order) != order or order < 2:
        raise ValidationError(f"RDP order must be an integer >= 2, got {order}")
    if not 0 <= q <= 1:
        raise ValidationError(f"sampling probability must lie in [0, 1], got {q}")
    if sigma <= 0:
        return math.inf
    a = int(order)
    if q == 0:
        return 0.0
    if q == 1:
        return a / (2 * sigma**2)
    i = np.arange(a + 1, dtype=np.float64)
    log_binom = gammaln(a + 1) - gammaln(i + 1) - gammaln(a - i + 1)
    terms = log_binom + i * math.log(q) + (a - i) * math.log1p(-q) + (i * i - i) / (2 * sigma**2)
    return max(float(logsumexp(terms)) / (a - 1), 0.0)


def epsilon_from_rdp(rdp: Sequence[float], orders: Sequence[int], delta: float) -> float:
    """``min_a [rdp_a + log(1/delta) / (a - 1)]``."""
    best = math.inf
    log_inv_delta = math.log(1.0 / delta)
    for r, a in zip(rdp, orders):
        best = min(best, r + log_inv_delta / (a - 1))
    return best


@dataclasses.dataclass
class PrivacyLedger:
    """Running (epsilon, delta) account of private steps.

    ``noise_multiplier == 0`` marks a non-private run; its epsilon is infinite.
    """

    q: float
    noise_multiplier: float
    delta: float
    clip_bound: float
    steps_taken: int = 0
    rdp_orders: tuple[int, ...] = DEFAULT_ORDERS

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise ValidationError(f"q must be in (0, 1], got {self.q}")
        if self.noise_multiplier < 0:
            raise ValidationError(f"noise multiplier must be >= 0, got {self.noise_multiplier}")
        if not 0 < self.delta < 1:
            raise ValidationError(f"delta must be in (0, 1), got {self.delta}")
        if not self.clip_bound > 0:
            raise ValidationError(f"clip bound must be positive, got {self.clip_bound}")
        if any(int(a) != a or a < 2 for a in self.rdp_orders):
            raise ValidationError("RDP orders must be integers >= 2")
        self.rdp_orders = tuple(int(a) for a in self.rdp_orders)
        self._per_step = [rdp_subsampled_gaussian(self.q, self.noise_multiplier, a) for a in self.rdp_orders]

    @property
    def private(self) -> bool:
        return self.noise_multiplier > 0

    @property
    def per_step_rdp(self) -> list[float]:
        return list(self._per_step)

    @property
    def accumulated_rdp(self) -> list[float]:
        if self.steps_taken == 0:
            return [0.0] * len(self.rdp_orders)
        return [self.steps_taken * r for r in self._per_step]

    def step(self, n: int = 1) -> None:
        if n < 0:
            raise ValueError("cannot take a negative number of steps")
        self.steps_taken += n

    def epsilon_after(self, steps: int) -> float:
        if steps == 0:
            return 0.0
        if not self.private:
            return math.inf
        return epsilon_from_rdp([steps * r for r in self._per_step], self.rdp_orders, self.delta)

    def to_dict(self) -> dict:
        eps = self.epsilon_after(self.steps_taken)
        return {
            "format": "stdpgan-ledger",
            "version": 1,
            "q": self.q,
            "noise_multiplier": self.noise_multiplier,
            "delta": self.delta,
            "clip_bound": _json_float(self.clip_bound),
            "steps_taken": self.steps_taken,
            "rdp_orders": list(self.rdp_orders),
            "accumulated_rdp": [_json_float(r) for r in self.accumulated_rdp],
            "epsilon": _json_float(eps),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> PrivacyLedger:
        if d.get("format") != "stdpgan-ledger":
            raise ValidationError("not a ledger document")
        return cls(
            q=float(d["q"]),
            noise_multiplier=float(d["noise_multiplier"]),
            delta=float(d["delta"]),
            clip_bound=float(d["clip_bound"]),
            steps_taken=int(d["steps_taken"]),
            rdp_orders=tuple(d["rdp_orders"]),
        )


def _json_float(x: float):
    # JSON has no infinity; the string "inf" is the sentinel
    return "inf" if x == math.inf else x


def epsilon(ledger: PrivacyLedger) -> float:
    return ledger.epsilon_after(ledger.steps_taken)


def budget_exhausted(ledger: PrivacyLedger, budget_eps: float) -> bool:
    """True when one more step would reach or pass ``budget_eps``; never for an infinite budget."""
    if budget_eps == math.inf:
        return False
    if not budget_eps > 0:
        raise ValidationError(f"budget must be positive, got {budget_eps}")
    return ledger.epsilon_after(ledger.steps_taken + 1) >= budget_eps


def steps_within_budget(ledger: PrivacyLedger, budget_eps: float) -> int:
    """Largest step count whose epsilon stays strictly below ``budget_eps``."""
    if budget_eps == math.inf:
        raise ValueError("an infinite budget never binds")
    if not ledger.private:
        return 0
    lo, hi = 0, 1
    while ledger.epsilon_after(hi) < budget_eps:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ledger.epsilon_after(mid) < budget_eps:
            lo = mid
        else:
            hi = mid
    return lo
