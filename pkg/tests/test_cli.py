import json

import numpy as np
import pytest

from stdpgan import checkpoint
from stdpgan.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main
from stdpgan.data import read_observations

EPS_AT_1000 = 1.0226334793672698  # quadrature oracle, q=0.01 sigma=2 delta=1e-7

TRAIN_CONFIG = """
[train]
q = 0.1
kernel_d = 2
learning_rate = 0.05
"""


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    assert main(["synth", "--nodes", "3", "--length", "120", "--seed", "1", "--out", str(root / "data")]) == 0
    (root / "cfg.toml").write_text(TRAIN_CONFIG, encoding="utf-8")
    return root


@pytest.fixture(scope="module")
def trained(toy):
    out = toy / "run"
    code = main(["train", "--data", str(toy / "data"), "--config", str(toy / "cfg.toml"), "--eps", "inf", "--epochs", "5", "--seed", "2", "--out", str(out)])
    assert code == 0
    return out


# --- synth ------------------------------------------------------------------------------


def test_synth_writes_files(tmp_path, capsys):
    code, out, _ = run(capsys, "synth", "--nodes", 8, "--length", 2000, "--seed", 7, "--out", tmp_path)
    assert code == EXIT_OK and "2000 rows" in out
    ids, values, _, _ = read_observations(tmp_path / "observations.csv")
    assert values.shape == (2000, 8) and len(ids) == 8
    assert (tmp_path / "coords.csv").exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["outputs"] == ["coords.csv", "observations.csv"]
    assert set(manifest["versions"]) >= {"stdpgan", "numpy", "python"}


def test_synth_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        run(capsys, "synth", "--nodes", 4, "--length", 50, "--seed", 3, "--out", tmp_path / d)
    for f in ("observations.csv", "coords.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_one_node_is_usage_error(tmp_path, capsys):
    code, _, err = run(capsys, "synth", "--nodes", 1, "--out", tmp_path)
    assert code == EXIT_USAGE and "nodes" in err


# --- train ---------------------------------------------------------------------------------


def test_train_outputs(trained):
    names = {p.name for p in trained.iterdir()}
    assert names == {"ckpt.bin", "report.json", "report.csv", "ledger.json", "manifest.json"}
    report = json.loads((trained / "report.json").read_text())
    assert report["stop_reason"] == "max_epochs" and report["epochs_completed"] == 5
    assert report["final_epsilon"] == "inf"
    assert json.loads((trained / "ledger.json").read_text())["epsilon"] == "inf"
    assert (trained / "report.csv").read_text().splitlines()[0] == "epoch,critic_objective,generator_loss,epsilon,ledger_steps"
    manifest = json.loads((trained / "manifest.json").read_text())
    assert manifest["config_sha256"] and manifest["seed"] == 2


def test_train_budget_ordering(toy, capsys):
    steps = {}
    cfg = toy / "dp.json"
    cfg.write_text(json.dumps({"q": 0.01, "sigma": 2.0, "delta": 1e-7, "kernel_d": 2, "attention_enabled": False}))
    for eps in ("1", "12"):
        code, out, _ = run(capsys, "train", "--data", toy / "data", "--config", cfg, "--eps", eps, "--epochs", 12, "--seed", 0, "--out", toy / f"eps{eps}")
        assert code == EXIT_OK, out
        steps[eps] = json.loads((toy / f"eps{eps}" / "report.json").read_text())["critic_steps"]
    assert steps["1"] == 954 and steps["12"] == 1200
    assert json.loads((toy / "eps1" / "report.json").read_text())["stop_reason"] == "budget_exhausted"


def test_train_missing_data_is_usage_error(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--out", tmp_path)
    assert code == EXIT_USAGE and "--data" in err


@pytest.mark.parametrize("text", ["learning_rate = -1", "bogus_key = 3", "q = ["])
def test_train_bad_config_is_usage_error(toy, tmp_path, capsys, text):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(text)
    code, _, _ = run(capsys, "train", "--data", toy / "data", "--config", cfg, "--out", tmp_path / "o")
    assert code == EXIT_USAGE


def test_train_missing_graph_is_validation_error(toy, tmp_path, capsys):
    code, _, _ = run(capsys, "train", "--data", toy / "data" / "observations.csv", "--out", tmp_path)
    assert code == EXIT_VALIDATION


def test_train_budget_too_small_for_one_step(toy, tmp_path, capsys):
    code, _, err = run(capsys, "train", "--data", toy / "data", "--eps", "1e-6", "--epochs", 1, "--out", tmp_path)
    assert code == EXIT_NUMERIC and "budget" in err
    assert (tmp_path / "ledger.json").exists()


# --- generate ---------------------------------------------------------------------------------


def test_generate_blocks_and_range(trained, tmp_path, capsys):
    code, _, _ = run(capsys, "generate", "--ckpt", trained, "--count", 100, "--seed", 4, "--out", tmp_path)
    assert code == EXIT_OK
    ids, values, index, name = read_observations(tmp_path / "generated.csv")
    assert name == "sample" and values.shape == (100 * 9, 3)
    assert sorted(set(index), key=int) == [str(i) for i in range(100)]
    _, meta = checkpoint.load(trained / "ckpt.bin")
    lo, hi = meta["stats"]["min"], meta["stats"]["max"]
    slack = 0.05 * (hi - lo)
    assert values.min() >= lo - slack and values.max() <= hi + slack


def test_generate_no_clip_keeps_raw_tails(trained, tmp_path, capsys):
    run(capsys, "generate", "--ckpt", trained, "--count", 50, "--seed", 4, "--out", tmp_path / "c")
    run(capsys, "generate", "--ckpt", trained, "--count", 50, "--seed", 4, "--no-clip", "--out", tmp_path / "r")
    clipped = read_observations(tmp_path / "c" / "generated.csv")[1]
    raw = read_observations(tmp_path / "r" / "generated.csv")[1]
    _, meta = checkpoint.load(trained / "ckpt.bin")
    lo, hi = meta["stats"]["min"], meta["stats"]["max"]
    np.testing.assert_allclose(clipped, np.clip(raw, lo, hi), atol=1e-12)


def test_generate_deterministic(trained, tmp_path, capsys):
    for d in ("a", "b"):
        run(capsys, "generate", "--ckpt", trained / "ckpt.bin", "--count", 5, "--seed", 9, "--out", tmp_path / d)
    assert (tmp_path / "a" / "generated.csv").read_bytes() == (tmp_path / "b" / "generated.csv").read_bytes()


def test_generate_missing_checkpoint(tmp_path, capsys):
    code, _, _ = run(capsys, "generate", "--ckpt", tmp_path / "nope.bin", "--out", tmp_path)
    assert code == EXIT_VALIDATION


# --- evaluate ---------------------------------------------------------------------------------


def test_evaluate_fixed_point(toy, tmp_path, capsys):
    code, _, _ = run(
        capsys, "evaluate", "--real", toy / "data", "--generated", toy / "data" / "observations.csv",
        "--regressors", "ols,tree", "--out", tmp_path,
    )
    assert code == EXIT_OK
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["columns"] == ["regressor", "source", "mse", "mae"]
    rows = {(r["regressor"], r["source"]): (r["mse"], r["mae"]) for r in doc["rows"]}
    assert rows[("ols", "real")] == rows[("ols", "generated")]
    assert rows[("tree", "real")] == rows[("tree", "generated")]
    assert (tmp_path / "report.csv").read_text().startswith("regressor,source,mse,mae\n")


def test_evaluate_generated_blocks(toy, trained, tmp_path, capsys):
    run(capsys, "generate", "--ckpt", trained, "--count", 30, "--out", tmp_path / "g")
    code, out, _ = run(capsys, "evaluate", "--real", toy / "data", "--generated", tmp_path / "g" / "generated.csv", "--regressors", "ols", "--out", tmp_path / "e")
    assert code == EXIT_OK and "generated" in out


@pytest.mark.parametrize(
    "content",
    ["n0,n1\n1,2\n", "sample,n0,n1,n2\n0,1,2,3\n0,1,2,3\n", "n0,n1,n2\n1,2,x\n"],
)
def test_evaluate_malformed_generated(toy, tmp_path, capsys, content):
    bad = tmp_path / "bad.csv"
    bad.write_text(content)
    code, _, _ = run(capsys, "evaluate", "--real", toy / "data", "--generated", bad, "--out", tmp_path / "e")
    assert code != 0


def test_evaluate_unknown_regressor(toy, tmp_path, capsys):
    code, _, _ = run(capsys, "evaluate", "--real", toy / "data", "--generated", toy / "data" / "observations.csv", "--regressors", "lstm", "--out", tmp_path)
    assert code == EXIT_USAGE


# --- account ----------------------------------------------------------------------------------


def _eps_from(out):
    text = out.split("=", 1)[1].split()[0]
    return float(text)


def test_account_zero_steps(capsys):
    code, out, _ = run(capsys, "account", "--q", 0.01, "--sigma", 2, "--delta", 1e-7, "--steps", 0)
    assert code == EXIT_OK and _eps_from(out) == 0.0


def test_account_doubling_sigma_lowers_epsilon(capsys):
    _, a, _ = run(capsys, "account", "--q", 0.01, "--sigma", 2, "--delta", 1e-7, "--steps", 5000)
    _, b, _ = run(capsys, "account", "--q", 0.01, "--sigma", 4, "--delta", 1e-7, "--steps", 5000)
    assert _eps_from(b) < _eps_from(a)


def test_account_frozen_operating_point(capsys):
    _, out, _ = run(capsys, "account", "--q", 0.01, "--sigma", 2, "--delta", 1e-7, "--steps", 1000)
    assert abs(_eps_from(out) - EPS_AT_1000) < 1e-6


def test_account_from_ledger(trained, toy, capsys):
    code, out, _ = run(capsys, "account", "--ledger", trained / "ledger.json")
    assert code == EXIT_OK and "epsilon = inf" in out
    _, out, _ = run(capsys, "account", "--ledger", toy / "eps1" / "ledger.json")
    assert _eps_from(out) < 1.0


def test_account_needs_arguments(capsys):
    code, _, err = run(capsys, "account", "--q", 0.01)
    assert code == EXIT_USAGE and "sigma" in err


# --- reproducibility --------------------------------------------------------------------------


def test_runs_are_byte_identical(toy, tmp_path, capsys):
    for d in ("a", "b"):
        base = tmp_path / d
        assert main(["train", "--data", str(toy / "data"), "--config", str(toy / "cfg.toml"), "--eps", "30", "--epochs", "2", "--seed", "5", "--out", str(base / "t")]) == 0
        assert main(["generate", "--ckpt", str(base / "t"), "--count", "20", "--seed", "6", "--out", str(base / "g")]) == 0
        assert main(["evaluate", "--real", str(toy / "data"), "--generated", str(base / "g" / "generated.csv"), "--seed", "1", "--out", str(base / "e")]) == 0
    capsys.readouterr()
    for rel in ("t/ckpt.bin", "t/report.json", "t/report.csv", "t/ledger.json", "g/generated.csv", "e/report.json", "e/report.csv"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel
