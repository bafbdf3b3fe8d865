"""Desk-scale experiment runners shared by ``scripts/`` and the acceptance suite."""

from __future__ import annotations

import dataclasses
import time

import numpy as np

from .data import synth_dataset
from .pipeline import prepare, train_and_evaluate
from .training import TrainConfig

DESK_DATA = dict(n_nodes=8, length=2000, seed=7)


@dataclasses.dataclass
class RunResult:
    seed: int
    epsilon_budget: float
    attention: bool
    real_mse: dict[str, float]
    generated_mse: dict[str, float]
    final_epsilon: float | str
    critic_steps: int
    stop_reason: str
    seconds: float

    @property
    def ols_ratio(self) -> float:
        return self.generated_mse["ols"] / self.real_mse["ols"]

    @property
    def average_generated(self) -> float:
        return float(np.mean(list(self.generated_mse.values())))


def desk_prepared(window_len: int = 6, horizon: int = 3):
    return prepare(synth_dataset(**DESK_DATA), window_len, horizon)


def run_once(prepared, config: TrainConfig, regressors=("ols",)) -> RunResult:
    started = time.perf_counter()
    report, run, _ = train_and_evaluate(prepared, config, regressors=regressors)
    return RunResult(
        seed=config.seed,
        epsilon_budget=config.budget_eps,
        attention=config.attention_enabled,
        real_mse={r: report.get(r, "real").mse for r in regressors},
        generated_mse={r: report.get(r, "generated").mse for r in regressors},
        final_epsilon=run["final_epsilon"],
        critic_steps=run["critic_steps"],
        stop_reason=run["stop_reason"],
        seconds=time.perf_counter() - started,
    )


def run_seeds(prepared, seeds, regressors=("ols",), log=print, **config) -> list[RunResult]:
    out = []
    for seed in seeds:
        r = run_once(prepared, TrainConfig(seed=seed, **config), regressors)
        if log:
            log(
                f"seed={seed} eps={r.epsilon_budget} attention={r.attention} steps={r.critic_steps} "
                f"stop={r.stop_reason} final_eps={r.final_epsilon} "
                + " ".join(f"{k}: real={r.real_mse[k]:.3g} gen={r.generated_mse[k]:.3g}" for k in regressors)
                + f" ({r.seconds:.0f}s)"
            )
        out.append(r)
    return out


def median(values) -> float:
    return float(np.median(list(values)))
