"""Alternating WGAN training with a DP-SGD critic and an RMSProp generator."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from pathlib import Path
from typing import Callable

import numpy as np

from . import checkpoint
from .discriminator import DiscriminatorParams, init_discriminator, score, trainable_names
from .errors import BudgetExhaustedError, NumericError, ValidationError
from .graph import rescale_laplacian
from .generator import GeneratorParams, generate, init_generator, sample_noise
from .privacy import PrivacyLedger, SanitizedGradient, budget_exhausted, clip, noise_and_average
from .tensor import Tape, flatten_grads, per_example_grads, scale, stack_sum, unflatten

log = logging.getLogger(__name__)


@dataclasses.dataclass
class TrainConfig:
    learning_rate: float = 0.05
    gen_learning_rate: float | None = 1e-3  # None: reuse learning_rate
    k_critic: int = 5
    max_epochs: int = 400
    batch_size: int = 10
    budget_eps: float = math.inf
    q: float = 0.01
    sigma: float = 2.0
    delta: float = 1e-7
    clip_bound: float = 1.0
    weight_clip_c: float | None = 0.01
    seed: int = 0
    attention_enabled: bool = True
    count_generator_steps: bool = False
    kernel_d: int = 3
    hidden_spatial: int | None = None
    hidden_temporal: int | None = None
    critic_init_std: float = 0.01
    gen_kernel_std: float = 1.0
    gen_w_scale: float = 0.1
    kernel_mean_from_data: bool = True
    critic_optimizer: str = "sgd"  # "sgd" or "rmsprop"; applied to the sanitized gradient
    graph_operator: str = "scaled"  # "scaled": 2L/lambda_max - I, "laplacian": L as given
    rmsprop_decay: float = 0.9
    rmsprop_eps: float = 1e-8

    def __post_init__(self):
        self.budget_eps = float(self.budget_eps)
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.gen_learning_rate is not None and not self.gen_learning_rate > 0:
            raise ValidationError("gen_learning_rate must be positive")
        if self.k_critic < 1:
            raise ValidationError("k_critic must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ValidationError("max_epochs must be >= 0")
        if not 0 < self.q <= 1:
            raise ValidationError("q must lie in (0, 1]")
        if self.sigma < 0 or not self.clip_bound > 0 or not 0 < self.delta < 1:
            raise ValidationError("need sigma >= 0, clip_bound > 0, 0 < delta < 1")
        if not self.budget_eps > 0:
            raise ValidationError("budget_eps must be positive (use inf to disable privacy)")
        if self.weight_clip_c is not None and not self.weight_clip_c > 0:
            raise ValidationError("weight_clip_c must be positive or None")
        if self.graph_operator not in ("scaled", "laplacian"):
            raise ValidationError(f"graph_operator must be 'scaled' or 'laplacian', got {self.graph_operator!r}")
        if self.critic_optimizer not in ("sgd", "rmsprop"):
            raise ValidationError(f"critic_optimizer must be 'sgd' or 'rmsprop', got {self.critic_optimizer!r}")

    @property
    def private(self) -> bool:
        """A finite budget switches on clipping, noise and accounting."""
        return math.isfinite(self.budget_eps)

    @property
    def lots_per_epoch(self) -> int:
        return math.ceil(1.0 / self.q)

    @property
    def gen_lr(self) -> float:
        return self.learning_rate if self.gen_learning_rate is None else self.gen_learning_rate

    def sanitizer(self) -> tuple[float, float]:
        """(noise multiplier, clip bound) actually applied to critic gradients."""
        return (self.sigma, self.clip_bound) if self.private else (0.0, math.inf)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {unknown}")
        vals = {k: (math.inf if v in ("inf", "Infinity") else v) for k, v in d.items()}
        return cls(**vals)


@dataclasses.dataclass
class TrainState:
    generator: GeneratorParams
    discriminator: DiscriminatorParams
    rms: dict[str, np.ndarray]
    ledger: PrivacyLedger
    rng: np.random.Generator
    critic_rms: dict[str, np.ndarray] = dataclasses.field(default_factory=dict)
    epoch: int = 0
    critic_steps: int = 0
    generator_steps: int = 0
    history: list[dict] = dataclasses.field(default_factory=list)
    stop_reason: str = ""
    wall_clock: float = 0.0


def init_state(samples: np.ndarray, config: TrainConfig) -> TrainState:
    """Fresh parameters for (n, T, N) training samples."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 3:
        raise ValidationError(f"training samples must be (n, T, N), got {samples.shape}")
    _, T, N = samples.shape
    rng = np.random.default_rng(config.seed)
    kernel_mean = float(samples.mean()) if config.kernel_mean_from_data else 0.0
    gen = init_generator(N, T, rng, kernel_mean=kernel_mean, kernel_std=config.gen_kernel_std, w_scale=config.gen_w_scale)
    disc = init_discriminator(
        T,
        N,
        rng,
        hidden_spatial=config.hidden_spatial,
        hidden_temporal=config.hidden_temporal,
        kernel_d=config.kernel_d,
        init_std=config.critic_init_std,
    )
    sigma, C = config.sanitizer()
    ledger = PrivacyLedger(q=config.q, noise_multiplier=sigma, delta=config.delta, clip_bound=C)
    rms = {k: np.zeros_like(v) for k, v in gen.as_dict().items()}
    critic_rms = {k: np.zeros_like(v) for k, v in disc.as_dict().items()} if config.critic_optimizer == "rmsprop" else {}
    return TrainState(gen, disc, rms, ledger, rng, critic_rms=critic_rms)


def _critic_pair_loss(p, pair, L, attention):
    real, fake = pair
    return score(p, L, real, attention) - score(p, L, fake, attention)


def _assert_finite(params: dict[str, np.ndarray], who: str):
    for k, v in params.items():
        if not np.all(np.isfinite(v)):
            raise NumericError(f"{who} parameter {k} became non-finite")


def draw_lot(n: int, config: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    """Poisson sampling with probability q when private, else a uniform batch without replacement."""
    if config.private:
        return np.flatnonzero(rng.random(n) < config.q)
    return rng.choice(n, size=min(config.batch_size, n), replace=False)


def critic_step(
    state: TrainState, real_lot, L: np.ndarray, config: TrainConfig, expected_lot: float = 1.0
) -> float:
    """One sanitized gradient-ascent step on ``mean F(real) - mean F(fake)``.

    Each real example is paired with a fresh fake sample; the pair's gradient is
    clipped, the lot sum is noised, and the average is applied. Returns the
    batch estimate of the critic objective.
    """
    if budget_exhausted(state.ledger, config.budget_eps):
        raise BudgetExhaustedError(f"privacy budget {config.budget_eps} exhausted at epsilon {state.ledger.epsilon_after(state.ledger.steps_taken)}")
    rng = state.rng
    gen = state.generator.as_dict()
    disc = state.discriminator.as_dict()
    names = trainable_names(config.attention_enabled)
    sigma, C = config.sanitizer()
    real_lot = [np.asarray(x, dtype=np.float64) for x in real_lot]
    N = state.generator.n_nodes
    fakes = [generate(gen, sample_noise(N, rng)).data for _ in real_lot]
    if real_lot:
        pairs = list(zip(real_lot, fakes))
        grads, values = per_example_grads(
            lambda p, pair: _critic_pair_loss(p, pair, L, config.attention_enabled),
            disc,
            pairs,
            names=names,
            return_values=True,
        )
        clipped = [clip(g, C) for g in grads]
        lot_size = len(real_lot)
        objective = float(np.mean(values))
    else:
        # an empty Poisson draw still releases noise
        dim = sum(disc[n].size for n in names)
        clipped = [SanitizedGradient(np.zeros(dim), 0.0, False)]
        lot_size = max(1, round(expected_lot))
        objective = 0.0
    update = noise_and_average(clipped, sigma, C, lot_size, rng)
    delta = unflatten(update, disc, names)
    new = dict(disc)
    for k in names:
        if config.critic_optimizer == "rmsprop":
            r = state.critic_rms[k] = config.rmsprop_decay * state.critic_rms[k] + (1 - config.rmsprop_decay) * delta[k] ** 2
            w = disc[k] + config.learning_rate * delta[k] / (np.sqrt(r) + config.rmsprop_eps)
        else:
            w = disc[k] + config.learning_rate * delta[k]
        if config.weight_clip_c is not None:
            w = np.clip(w, -config.weight_clip_c, config.weight_clip_c)
        new[k] = w
    _assert_finite(new, "critic")
    state.discriminator = DiscriminatorParams.from_dict(new)
    state.ledger.step()
    state.critic_steps += 1
    return objective


def _generator_loss(p, zs, disc, L, attention):
    scores = [score(disc, L, generate(p, z), attention) for z in zs]
    return scale(-1.0 / len(zs), stack_sum(scores))


def generator_step(state: TrainState, L: np.ndarray, config: TrainConfig, m: int) -> float:
    """RMSProp descent on ``-mean F(G(z))`` over ``m`` fresh noise draws. Returns the loss."""
    N = state.generator.n_nodes
    zs = [sample_noise(N, state.rng) for _ in range(m)]
    gen = state.generator.as_dict()
    disc = state.discriminator.as_dict()
    tape = Tape()
    tracked = {k: tape.watch(v) for k, v in gen.items()}
    loss = _generator_loss(tracked, zs, disc, L, config.attention_enabled)
    grads = dict(zip(tracked, tape.gradient(loss, list(tracked.values()))))
    rho, eps, lr = config.rmsprop_decay, config.rmsprop_eps, config.gen_lr
    new = {}
    for k, g in grads.items():
        state.rms[k] = rho * state.rms[k] + (1 - rho) * g * g
        new[k] = gen[k] - lr * g / (np.sqrt(state.rms[k]) + eps)
    _assert_finite(new, "generator")
    state.generator = GeneratorParams.from_dict(new)
    state.generator_steps += 1
    if config.count_generator_steps and config.private:
        state.ledger.step()
    return loss.item()


def generator_batch(config: TrainConfig, n: int) -> int:
    return max(1, round(config.q * n)) if config.private else config.batch_size


def state_tensors(state: TrainState) -> dict[str, np.ndarray]:
    t = {}
    t.update(checkpoint.with_prefix("generator", state.generator.as_dict()))
    t.update(checkpoint.with_prefix("discriminator", state.discriminator.as_dict()))
    t.update(checkpoint.with_prefix("rmsprop", state.rms))
    if state.critic_rms:
        t.update(checkpoint.with_prefix("critic_rmsprop", state.critic_rms))
    return t


def run_report(state: TrainState, config: TrainConfig) -> dict:
    eps = state.ledger.epsilon_after(state.ledger.steps_taken)
    return {
        "config": config.to_dict(),
        "stop_reason": state.stop_reason,
        "epochs_completed": state.epoch,
        "critic_steps": state.critic_steps,
        "generator_steps": state.generator_steps,
        "ledger_steps": state.ledger.steps_taken,
        "final_epsilon": "inf" if math.isinf(eps) else eps,
        "history": state.history,
    }


def graph_operator(laplacian: np.ndarray, config: TrainConfig) -> np.ndarray:
    """The matrix the critic multiplies samples by.

    The plain normalized Laplacian annihilates degree-weighted constant signals,
    which leaves the critic blind to the sample mean; the rescaled form does not.
    """
    L = np.asarray(laplacian, dtype=np.float64)
    return rescale_laplacian(L) if config.graph_operator == "scaled" else L


def train(
    samples: np.ndarray,
    laplacian: np.ndarray,
    config: TrainConfig,
    checkpoint_path=None,
    checkpoint_meta: dict | None = None,
    on_epoch: Callable[[TrainState], None] | None = None,
) -> tuple[TrainState, dict]:
    """Run the alternating loop until ``max_epochs`` or the privacy budget stops it.

    ``samples`` is (n, T, N). One epoch is ``ceil(1/q)`` critic steps; the
    generator steps once after every ``k_critic`` critic steps. On a numeric
    abort the partial state is written to ``checkpoint_path`` (if given) and
    the error re-raised.
    """
    samples = np.asarray(samples, dtype=np.float64)
    state = init_state(samples, config)
    L = graph_operator(laplacian, config)
    n = samples.shape[0]
    m_gen = generator_batch(config, n)
    started = time.perf_counter()
    since_gen = 0
    try:
        while state.epoch < config.max_epochs:
            critic_vals, gen_vals = [], []
            for _ in range(config.lots_per_epoch):
                if budget_exhausted(state.ledger, config.budget_eps):
                    state.stop_reason = "budget_exhausted"
                    break
                idx = draw_lot(n, config, state.rng)
                critic_vals.append(critic_step(state, samples[idx], L, config, expected_lot=config.q * n))
                since_gen += 1
                if since_gen == config.k_critic:
                    gen_vals.append(generator_step(state, L, config, m_gen))
                    since_gen = 0
            if critic_vals:
                eps = state.ledger.epsilon_after(state.ledger.steps_taken)
                state.history.append(
                    {
                        "epoch": state.epoch,
                        "critic_objective": float(np.mean(critic_vals)),
                        "generator_loss": float(np.mean(gen_vals)) if gen_vals else None,
                        "epsilon": "inf" if math.isinf(eps) else eps,
                        "ledger_steps": state.ledger.steps_taken,
                    }
                )
            if state.stop_reason:
                break
            state.epoch += 1
            if on_epoch is not None:
                on_epoch(state)
        else:
            state.stop_reason = "max_epochs"
    except NumericError:
        state.stop_reason = "numeric_error"
        if checkpoint_path is not None:
            checkpoint.save(checkpoint_path, state_tensors(state), {**(checkpoint_meta or {}), "partial": True})
        raise
    state.wall_clock = time.perf_counter() - started
    if checkpoint_path is not None:
        checkpoint.save(checkpoint_path, state_tensors(state), checkpoint_meta)
    log.info("training stopped (%s) after %d critic steps", state.stop_reason, state.critic_steps)
    return state, run_report(state, config)


def generator_from_tensors(tensors: dict[str, np.ndarray]) -> GeneratorParams:
    return GeneratorParams.from_dict(checkpoint.split_prefix(tensors, "generator"))


def sample_generator(
    params: GeneratorParams, count: int, rng: np.random.Generator, bounds: tuple[float, float] | None = None
) -> np.ndarray:
    """(count, T, N) array of generated samples, optionally clipped to ``bounds`` (the normalized range)."""
    N = params.n_nodes
    if not count:
        return np.zeros((0, params.length, N))
    out = np.stack([generate(params, sample_noise(N, rng)).data for _ in range(count)])
    return out if bounds is None else np.clip(out, *bounds)


def save_state_checkpoint(path, state: TrainState, meta: dict | None = None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    checkpoint.save(path, state_tensors(state), meta)
