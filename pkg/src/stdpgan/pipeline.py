"""End-to-end helpers: prepare windows, train, sample, and run TSTR."""

from __future__ import annotations

import dataclasses

import numpy as np

from .data import SpatioTemporalDataset, WindowedSamples, make_windows, normalize, split
from .evaluation import TstrReport, tstr
from .training import TrainConfig, TrainState, sample_generator, train


@dataclasses.dataclass
class PreparedData:
    dataset: SpatioTemporalDataset  # normalized
    train: WindowedSamples
    val: WindowedSamples
    test: WindowedSamples

    @property
    def gan_samples(self) -> np.ndarray:
        """Training blocks of window_len + horizon rows; these are the GAN's (T, N) samples."""
        return self.train.blocks()


def prepare(dataset: SpatioTemporalDataset, window_len: int = 6, horizon: int = 3) -> PreparedData:
    scaled, _ = normalize(dataset)
    tr, va, te = split(scaled)
    return PreparedData(
        scaled,
        make_windows(tr, window_len, horizon),
        make_windows(va, window_len, horizon),
        make_windows(te, window_len, horizon),
    )


def generated_windows(state: TrainState, count: int, window_len: int, seed: int) -> WindowedSamples:
    rng = np.random.default_rng(seed)
    # raw samples: clipping breaks the exact low-rank structure OLS relies on and inflates TSTR error
    return WindowedSamples.from_blocks(sample_generator(state.generator, count, rng), window_len)


def train_and_evaluate(
    prepared: PreparedData,
    config: TrainConfig,
    regressors=("ols",),
    sample_seed: int | None = None,
) -> tuple[TstrReport, dict, TrainState]:
    """Train on the prepared split, draw as many generated windows as real ones, and run TSTR."""
    state, report = train(prepared.gan_samples, prepared.dataset.laplacian, config)
    seed = config.seed + 1 if sample_seed is None else sample_seed
    gen = generated_windows(state, len(prepared.train), prepared.train.window_len, seed)
    eps = report["final_epsilon"]
    tr = tstr(
        prepared.train,
        prepared.test,
        gen,
        regressors=regressors,
        seed=config.seed,
        config={"epsilon": eps, "seed": config.seed, "epochs": report["epochs_completed"]},
    )
    return tr, report, state
