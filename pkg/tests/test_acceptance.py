"""Acceptance suite: one PASS/FAIL line per primary criterion, at the stated tolerances.

The desk-scale GAN runs are slow (tens of minutes in total); set
``STDPGAN_SKIP_SLOW=1`` to skip them during development.
"""

import math
import os
import time

import numpy as np
import pytest
from scipy import stats

from stdpgan.cli import main as cli_main
from stdpgan.discriminator import init_discriminator, score, spatial_attention, temporal_attention
from stdpgan.evaluation import REGRESSORS
from stdpgan.experiments import desk_prepared, median, run_seeds
from stdpgan.generator import GeneratorParams, TheoremOneSpec, generate, init_generator, verify_theorem1
from stdpgan.privacy import (
    PrivacyLedger,
    SanitizedGradient,
    clip,
    epsilon,
    noise_and_average,
    rdp_subsampled_gaussian,
    steps_within_budget,
)
from stdpgan.tensor import Tape, Tensor, conv1d, matmul, mul, softmax_rows, total, trans_conv1d
from stdpgan.training import TrainConfig, train

from conftest import ACCEPTANCE_LINES
from oracles import numeric_grad, rdp_quadrature
from test_training import reference_wgan, toy

SLOW = pytest.mark.skipif(os.environ.get("STDPGAN_SKIP_SLOW") == "1", reason="slow desk-scale GAN runs skipped")
FROZEN_CROSSING = {1: 954, 4: 15196, 8: 55401, 10: 83308, 12: 115951}
DP = dict(q=0.01, sigma=2.0, delta=1e-7)
DP_EPOCHS = 50


def verdict(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# --- 1. gradients --------------------------------------------------------------------------------


def _rel_err(loss, arrays):
    tape = Tape()
    tracked = {k: tape.watch(v) for k, v in arrays.items()}
    grads = dict(zip(tracked, tape.gradient(loss(tracked), list(tracked.values()))))
    worst = 0.0
    for name, value in arrays.items():

        def f(v, name=name):
            d = dict(arrays)
            d[name] = v
            return float(np.asarray(loss(d).data))

        fd = numeric_grad(f, value)
        worst = max(worst, np.max(np.abs(grads[name] - fd)) / max(1e-8, np.max(np.abs(fd))))
    return worst


def test_gradient_correctness():
    started = time.perf_counter()
    rng = np.random.default_rng(0)
    T, N = 4, 3
    disc = init_discriminator(T, N, rng, 2, 2, kernel_d=3, init_std=0.7).as_dict()
    disc["alpha"], disc["beta"] = np.array(0.6), np.array(-0.4)
    gen = init_generator(N, T, rng, w_jitter=0.3).as_dict()
    gen["b_g"] = rng.normal(size=N)
    L = rng.normal(size=(N, N))
    x = rng.normal(size=(T, N))
    w_tn, w_nt = rng.normal(size=(T, N)), rng.normal(size=(N, T))

    def weighted(t, w):
        return total(mul(t, Tensor(w)))

    cases = {
        "matmul": (lambda d: weighted(matmul(d["a"], d["b"]), w_tn), {"a": rng.normal(size=(T, 2)), "b": rng.normal(size=(2, N))}),
        "softmax": (lambda d: weighted(softmax_rows(d["x"]), w_tn), {"x": x}),
        "conv1d": (
            lambda d: weighted(conv1d(d["x"], d["k"]), np.random.default_rng(1).normal(size=(2, T - 1))),
            {"x": rng.normal(size=(N, T)), "k": rng.normal(size=(2, N, 2))},
        ),
        "trans_conv1d": (
            lambda d: weighted(trans_conv1d(d["x"], d["k"]), np.random.default_rng(2).normal(size=(2, T + 1))),
            {"x": rng.normal(size=(N, T)), "k": rng.normal(size=(N, 2, 2))},
        ),
        "spatial attention": (lambda d: weighted(spatial_attention(d, d["x"]), w_nt), dict(disc, x=x)),
        "temporal attention": (lambda d: weighted(temporal_attention(d, d["x"]), w_tn), dict(disc, x=x)),
        "critic score": (lambda d: score(d, L, d["x"]), dict(disc, x=x)),
        "generator": (lambda d: weighted(generate(d, d["z"]), w_tn), dict(gen, z=rng.normal(size=N))),
    }
    errs = {name: _rel_err(loss, arrays) for name, (loss, arrays) in cases.items()}
    elapsed = time.perf_counter() - started
    worst = max(errs.values())
    verdict(
        "gradient correctness",
        worst < 1e-4 and elapsed < 60,
        f"worst relative error {worst:.2e} over {len(errs)} layers (< 1e-4), {elapsed:.1f}s (< 60s)",
    )


# --- 2. generator moments ----------------------------------------------------------------------------------


def test_theorem1_verification():
    started = time.perf_counter()
    specs = [TheoremOneSpec(0, 1, 0, 1, m) for m in (1, 3, 8)] + [TheoremOneSpec(0.5, 1, 0.3, 1, 4)]
    rng = np.random.default_rng(2024)
    reports = [verify_theorem1(s, 1_000_000, rng) for s in specs]
    elapsed = time.perf_counter() - started
    worst_var = max(abs(r.empirical_var - r.closed_var) / r.closed_var for r in reports)
    worst_se = max(abs(r.empirical_mean - r.closed_mean) / r.standard_error for r in reports)
    verdict(
        "generator output moments",
        all(r.passed for r in reports) and elapsed < 120,
        f"{len(specs)} cases at 1e6 draws, worst mean offset {worst_se:.2f} SE (<= 4), worst variance error {worst_var:.2%} (<= 3%), {elapsed:.0f}s",
    )


# --- 3. accountant ----------------------------------------------------------------------------------


def test_accountant_vs_oracle():
    worst = 0.0
    for q in (0.005, 0.01, 0.1):
        for sigma in (1.0, 2.0, 4.0):
            for a in range(2, 65):
                worst = max(worst, abs(rdp_subsampled_gaussian(q, sigma, a) - rdp_quadrature(q, sigma, a)))
    mono = True
    for q in (0.005, 0.01, 0.1):
        for sigma in (1.0, 2.0, 4.0):
            for delta in (1e-9, 1e-7, 1e-5):
                led = dict(q=q, noise_multiplier=sigma, delta=delta, clip_bound=1.0)
                e = [epsilon(PrivacyLedger(**led, steps_taken=s)) for s in (0, 10, 100, 1000)]
                mono &= all(b >= a for a, b in zip(e, e[1:]))
                mono &= epsilon(PrivacyLedger(**dict(led, noise_multiplier=2 * sigma), steps_taken=100)) <= e[2]
                mono &= epsilon(PrivacyLedger(**dict(led, delta=10 * delta), steps_taken=100)) <= e[2]
                mono &= epsilon(PrivacyLedger(**dict(led, q=min(1.0, 2 * q)), steps_taken=100)) >= e[2]
    base = PrivacyLedger(q=0.01, noise_multiplier=2.0, delta=1e-7, clip_bound=1.0)
    steps = {b: steps_within_budget(base, b) for b in FROZEN_CROSSING}
    verdict(
        "accountant vs oracle",
        worst < 1e-6 and mono and steps == FROZEN_CROSSING,
        f"max |RDP - quadrature| {worst:.1e} over 567 points (< 1e-6); monotonicity grid {'ok' if mono else 'violated'}; crossing steps {steps}",
    )


# --- 4. sanitizer -------------------------------------------------------------------------------------


def test_sanitizer():
    rng = np.random.default_rng(5)
    n, C, sigma = 100_000, 1.0, 2.0
    g = rng.standard_normal((n, 6)) * rng.lognormal(0, 2, size=(n, 1))
    max_norm = max(np.linalg.norm(clip(row, C).vector) for row in g)
    zero = [SanitizedGradient(np.zeros(1), 0.0, False)]
    draws = np.array([noise_and_average(zero, sigma, C, 1, rng)[0] for _ in range(n)])
    var_err = abs(draws.var() - sigma**2 * C**2) / (sigma**2 * C**2)
    p = stats.kstest(draws / (sigma * C), "norm").pvalue
    verdict(
        "sanitizer",
        max_norm <= C + 1e-12 and p > 0.01 and var_err < 0.05,
        f"max post-clip norm {max_norm:.6f} (<= {C}); KS p={p:.3f} (> 0.01); variance error {var_err:.2%} (< 5%)",
    )


# --- 5. DP-off equivalence ------------------------------------------------------------------------------


def test_dp_off_equivalence():
    samples, L = toy(n=15)
    cfg = TrainConfig(
        q=0.02, max_epochs=1, batch_size=4, kernel_d=2, seed=11, critic_init_std=0.1,
        learning_rate=0.05, gen_learning_rate=1e-3, attention_enabled=True, weight_clip_c=None,
        graph_operator="laplacian",
    )
    state, _ = train(samples, L, cfg)
    gen, disc = reference_wgan(samples, L, cfg, 50)
    diff = max(
        max(np.max(np.abs(v - gen[k])) for k, v in state.generator.as_dict().items()),
        max(np.max(np.abs(v - disc[k])) for k, v in state.discriminator.as_dict().items()),
    )
    verdict(
        "DP-off equivalence",
        state.critic_steps == 50 and diff < 1e-10,
        f"{state.critic_steps} steps with sigma=0, C=inf vs plain WGAN: max parameter difference {diff:.1e} (< 1e-10)",
    )


# --- 6-8. desk-scale GAN runs ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def prepared():
    return desk_prepared()


@pytest.fixture(scope="module")
def eps12_attention(prepared):
    return run_seeds(prepared, (0, 1, 2), REGRESSORS, budget_eps=12.0, max_epochs=DP_EPOCHS, attention_enabled=True, **DP)


@SLOW
def test_desk_tstr_utility(prepared):
    started = time.perf_counter()
    runs = run_seeds(prepared, (0, 1, 2), ("ols",), budget_eps=math.inf, max_epochs=200, batch_size=10, attention_enabled=False)
    elapsed = time.perf_counter() - started
    ratio = median(r.ols_ratio for r in runs)
    verdict(
        "desk TSTR utility",
        ratio <= 3 and elapsed < 20 * 60,
        f"median OLS TSTR / train-on-real = {ratio:.1f} (<= 3); real MSE {runs[0].real_mse['ols']:.2e}; {elapsed / 60:.1f} min (< 20)",
    )


@SLOW
def test_epsilon_trend(prepared, eps12_attention):
    started = time.perf_counter()
    eps1 = run_seeds(prepared, (0, 1, 2), ("ols",), budget_eps=1.0, max_epochs=DP_EPOCHS, attention_enabled=True, **DP)
    elapsed = time.perf_counter() - started + sum(r.seconds for r in eps12_attention)
    m1, m12 = median(r.generated_mse["ols"] for r in eps1), median(r.generated_mse["ols"] for r in eps12_attention)
    verdict(
        "epsilon trend",
        m1 >= m12 and elapsed < 40 * 60,
        f"median OLS TSTR MSE eps=1: {m1:.4g} >= eps=12: {m12:.4g}; steps {eps1[0].critic_steps} vs {eps12_attention[0].critic_steps}; {elapsed / 60:.1f} min (< 40)",
    )


@SLOW
def test_attention_ablation(prepared, eps12_attention):
    plain = run_seeds(prepared, (0, 1, 2), REGRESSORS, budget_eps=12.0, max_epochs=DP_EPOCHS, attention_enabled=False, **DP)
    attn = median(r.average_generated for r in eps12_attention)
    base = median(r.average_generated for r in plain)
    verdict(
        "attention ablation",
        attn <= 1.25 * base,
        f"average TSTR MSE attention {attn:.4g} vs no attention {base:.4g} (ratio {attn / base:.3f}; soft <= 1, hard <= 1.25)",
    )


# --- 9. CLI reproducibility -------------------------------------------------------------------------------


def test_cli_reproducibility(tmp_path):
    files = ("t/ckpt.bin", "t/report.json", "t/report.csv", "t/ledger.json", "g/generated.csv", "e/report.json", "e/report.csv", "s/observations.csv", "s/coords.csv")
    for d in ("a", "b"):
        b = tmp_path / d
        assert cli_main(["synth", "--nodes", "4", "--length", "150", "--seed", "3", "--out", str(b / "s")]) == 0
        assert cli_main(["train", "--data", str(b / "s"), "--eps", "12", "--epochs", "2", "--seed", "4", "--out", str(b / "t")]) == 0
        assert cli_main(["generate", "--ckpt", str(b / "t"), "--count", "30", "--seed", "5", "--out", str(b / "g")]) == 0
        assert cli_main(["evaluate", "--real", str(b / "s"), "--generated", str(b / "g" / "generated.csv"), "--out", str(b / "e")]) == 0
    same = [f for f in files if (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()]
    verdict(
        "CLI reproducibility",
        len(same) == len(files),
        f"{len(same)}/{len(files)} artifacts byte-identical across two invocations (synth, train, generate, evaluate)",
    )
