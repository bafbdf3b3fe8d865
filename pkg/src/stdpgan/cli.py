"""Command-line entry point: ``stdpgan {synth,train,generate,evaluate,account}``.

Every artifact-writing command puts its outputs under ``--out`` with fixed file
names and writes one ``manifest.json`` there. Wall-clock time is recorded only
in the manifest, so every other output is byte-identical across invocations
with the same flags and seed.

Exit codes: 0 success, 2 usage, 3 validation, 4 numeric or budget failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, checkpoint
from .data import (
    NormStats,
    WindowedSamples,
    load_dataset,
    make_windows,
    normalize,
    read_observations,
    save_dataset,
    split,
    synth_dataset,
    write_observations,
)
from .errors import BudgetExhaustedError, NumericError, ValidationError
from .evaluation import REGRESSORS, tstr
from .privacy import PrivacyLedger
from .training import TrainConfig, generator_from_tensors, sample_generator, train

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("stdpgan")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _eps(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("epsilon must be positive (or inf)")
    return value


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _versions() -> dict:
    import scipy
    import sklearn

    return {
        "stdpgan": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


def write_manifest(out: Path, argv, seed, outputs, started: float, config_hash: str | None = None) -> Path:
    doc = {
        "argv": list(argv),
        "config_sha256": config_hash,
        "seed": seed,
        "versions": _versions(),
        "outputs": sorted(outputs),
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    path = out / "manifest.json"
    path.write_text(_dump(doc), encoding="utf-8")
    return path


def read_config_file(path) -> tuple[dict, str]:
    """Parse a TOML or JSON config; returns (mapping, sha256 of the raw bytes)."""
    raw = Path(path).read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    try:
        if str(path).endswith(".json"):
            doc = json.loads(raw.decode("utf-8"))
        else:
            doc = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"config {path} must be a table of TrainConfig fields")
    return doc.get("train", doc), digest


def resolve_data(path, graph=None) -> tuple[Path, Path]:
    """A dataset directory (observations.csv plus coords.csv or dist.csv) or an explicit file pair."""
    path = Path(path)
    if path.is_dir():
        obs = path / "observations.csv"
        if graph is None:
            graph = next((path / n for n in ("coords.csv", "dist.csv") if (path / n).exists()), None)
    else:
        obs = path
    if not obs.exists():
        raise ValidationError(f"observation file {obs} does not exist")
    if graph is None or not Path(graph).exists():
        raise ValidationError(f"no coordinate or distance file for {path}; pass --graph")
    return obs, Path(graph)


def _windows(series: np.ndarray, window_len: int, horizon: int):
    tr, va, te = split(series)
    return make_windows(tr, window_len, horizon), make_windows(va, window_len, horizon), make_windows(te, window_len, horizon)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    if args.nodes < 2:
        raise UsageError("--nodes must be at least 2")
    if args.length < 1:
        raise UsageError("--length must be positive")
    started = time.perf_counter()
    out = Path(args.out)
    ds = synth_dataset(args.nodes, args.length, args.seed)
    obs, coords = save_dataset(ds, out)
    write_manifest(out, args.argv, args.seed, [obs.name, coords.name], started)
    print(f"wrote {obs} ({ds.length} rows, {ds.n_nodes} nodes)")
    return EXIT_OK


def build_config(args) -> tuple[TrainConfig, str | None]:
    values, digest = ({}, None)
    if args.config:
        values, digest = read_config_file(args.config)
    values = dict(values)
    for flag, field in (("eps", "budget_eps"), ("epochs", "max_epochs"), ("seed", "seed")):
        v = getattr(args, flag)
        if v is not None:
            values[field] = v
    if args.no_attention:
        values["attention_enabled"] = False
    try:
        return TrainConfig.from_dict(values), digest
    except (TypeError, ValidationError) as exc:
        raise UsageError(f"bad config: {exc}") from None


def cmd_train(args) -> int:
    started = time.perf_counter()
    config, digest = build_config(args)
    obs_path, graph_path = resolve_data(args.data, args.graph)
    dataset = load_dataset(obs_path, graph_path, alpha_k=args.alpha_k, beta_k=args.beta_k)
    scaled, stats = normalize(dataset)
    train_w = make_windows(split(scaled.observations)[0], args.window, args.horizon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "node_ids": dataset.node_ids,
        "stats": stats.to_dict(),
        "window_len": args.window,
        "horizon": args.horizon,
        "config": config.to_dict(),
    }
    ckpt = out / "ckpt.bin"
    state, report = train(train_w.blocks(), scaled.laplacian, config, checkpoint_path=ckpt, checkpoint_meta=meta)
    if state.critic_steps == 0 and state.stop_reason == "budget_exhausted":
        (out / "ledger.json").write_text(state.ledger.to_json() + "\n", encoding="utf-8")
        raise BudgetExhaustedError(f"budget epsilon={config.budget_eps} allows no critic step")
    (out / "report.json").write_text(_dump(report), encoding="utf-8")
    (out / "report.csv").write_text(history_csv(report["history"]), encoding="utf-8")
    (out / "ledger.json").write_text(state.ledger.to_json() + "\n", encoding="utf-8")
    outputs = ["ckpt.bin", "report.json", "report.csv", "ledger.json"]
    write_manifest(out, args.argv, config.seed, outputs, started, digest)
    print(f"stopped: {report['stop_reason']} after {report['critic_steps']} critic steps; epsilon = {report['final_epsilon']}")
    return EXIT_OK


def history_csv(history: list[dict]) -> str:
    cols = ("epoch", "critic_objective", "generator_loss", "epsilon", "ledger_steps")
    lines = [",".join(cols)]
    for row in history:
        lines.append(",".join("" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else str(row[c])) for c in cols))
    return "\n".join(lines) + "\n"


def _load_checkpoint(path):
    path = Path(path)
    if path.is_dir():
        path = path / "ckpt.bin"
    if not path.exists():
        raise ValidationError(f"checkpoint {path} does not exist")
    tensors, meta = checkpoint.load(path)
    for key in ("node_ids", "stats", "window_len"):
        if key not in meta:
            raise ValidationError(f"checkpoint {path} lacks metadata field {key!r}")
    return tensors, meta


def cmd_generate(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be positive")
    started = time.perf_counter()
    tensors, meta = _load_checkpoint(args.ckpt)
    params = generator_from_tensors(tensors)
    node_ids = meta["node_ids"]
    if params.n_nodes != len(node_ids):
        raise ValidationError(f"checkpoint generator has {params.n_nodes} nodes but metadata lists {len(node_ids)}")
    stats = NormStats.from_dict(meta["stats"])
    bounds = None if args.no_clip else (0.0, 1.0)
    blocks = stats.invert(sample_generator(params, args.count, np.random.default_rng(args.seed), bounds))
    T = params.length
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index = [str(i) for i in range(args.count) for _ in range(T)]
    write_observations(out / "generated.csv", blocks.reshape(-1, len(node_ids)), node_ids, index, index_name="sample")
    write_manifest(out, args.argv, args.seed, ["generated.csv"], started)
    print(f"wrote {args.count} blocks of {T} rows to {out / 'generated.csv'}")
    return EXIT_OK


def generated_windows_from_csv(path, node_ids, stats: NormStats, window_len: int, horizon: int) -> WindowedSamples:
    """Blocks (``sample`` column) become one window each; a plain series is split and windowed like real data."""
    gen_ids, values, index, index_name = read_observations(path)
    if gen_ids != list(node_ids):
        raise ValidationError(f"{path}: node columns {gen_ids} differ from the real data's {list(node_ids)}")
    if np.any(np.isnan(values)):
        raise ValidationError(f"{path}: generated data has missing values")
    scaled = stats.apply(values)
    if index_name == "sample":
        order, blocks = [], {}
        for key, row in zip(index, scaled):
            if key not in blocks:
                order.append(key)
                blocks[key] = []
            blocks[key].append(row)
        sizes = {len(blocks[k]) for k in order}
        if sizes != {window_len + horizon}:
            raise ValidationError(f"{path}: every sample block needs {window_len + horizon} rows, found sizes {sorted(sizes)}")
        return WindowedSamples.from_blocks(np.stack([np.stack(blocks[k]) for k in order]), window_len)
    return _windows(scaled, window_len, horizon)[0]


def cmd_evaluate(args) -> int:
    started = time.perf_counter()
    regressors = tuple(args.regressors.split(",")) if args.regressors else REGRESSORS
    unknown = [r for r in regressors if r not in REGRESSORS]
    if unknown:
        raise UsageError(f"unknown regressors {unknown}; choose from {REGRESSORS}")
    obs_path, graph_path = resolve_data(args.real, args.graph)
    real = load_dataset(obs_path, graph_path)
    scaled, stats = normalize(real)
    real_train, _, real_test = _windows(scaled.observations, args.window, args.horizon)
    gen = generated_windows_from_csv(args.generated, real.node_ids, stats, args.window, args.horizon)
    report = tstr(real_train, real_test, gen, regressors=regressors, seed=args.seed, config={"seed": args.seed})
    out = Path(args.out)
    report.write(out)
    write_manifest(out, args.argv, args.seed, ["report.json", "report.csv"], started)
    for row in report.rows + report.averages():
        print(f"{row.regressor:>10} {row.source:>9} mse={row.mse:.6g} mae={row.mae:.6g}")
    return EXIT_OK


def cmd_account(args) -> int:
    if args.ledger:
        try:
            doc = json.loads(Path(args.ledger).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read ledger {args.ledger}: {exc}") from None
        ledger = PrivacyLedger.from_dict(doc)
    else:
        missing = [f for f in ("q", "sigma", "delta", "steps") if getattr(args, f) is None]
        if missing:
            raise UsageError("account needs --ledger or all of --q --sigma --delta --steps (missing: " + ", ".join(missing) + ")")
        if args.steps < 0:
            raise UsageError("--steps must be nonnegative")
        ledger = PrivacyLedger(q=args.q, noise_multiplier=args.sigma, delta=args.delta, clip_bound=1.0, steps_taken=args.steps)
    eps = ledger.epsilon_after(ledger.steps_taken)
    print(f"epsilon = {'inf' if math.isinf(eps) else repr(eps)} after {ledger.steps_taken} steps "
          f"(q={ledger.q!r}, sigma={ledger.noise_multiplier!r}, delta={ledger.delta!r})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stdpgan", description="Differentially private spatiotemporal WGAN.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write the synthetic ring dataset")
    s.add_argument("--nodes", type=int, default=8)
    s.add_argument("--length", type=int, default=2000)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    def data_args(sp, name):
        sp.add_argument(name, required=True, help="dataset directory or observation CSV")
        sp.add_argument("--graph", help="coordinate or distance CSV (default: found next to the observations)")
        sp.add_argument("--window", type=int, default=6)
        sp.add_argument("--horizon", type=int, default=3)

    t = sub.add_parser("train", help="train a generator")
    data_args(t, "--data")
    t.add_argument("--config", help="TOML or JSON file of TrainConfig fields")
    t.add_argument("--eps", type=_eps, help="privacy budget; inf disables DP")
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--no-attention", action="store_true")
    t.add_argument("--alpha-k", type=float, default=1.0, help="adjacency kernel width")
    t.add_argument("--beta-k", type=float, default=0.1, help="adjacency threshold")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("generate", help="sample from a trained generator")
    g.add_argument("--ckpt", required=True, help="ckpt.bin or the training output directory")
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--no-clip", action="store_true", help="keep values outside the training min-max range (use for TSTR evaluation)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="train-on-synthetic, test-on-real report")
    data_args(e, "--real")
    e.add_argument("--generated", required=True)
    e.add_argument("--regressors", help=f"comma list from {','.join(REGRESSORS)}")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("account", help="privacy spent by a ledger or a step count")
    a.add_argument("--ledger")
    a.add_argument("--q", type=float)
    a.add_argument("--sigma", type=float)
    a.add_argument("--delta", type=float)
    a.add_argument("--steps", type=int)
    a.set_defaults(func=cmd_account)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.argv = argv
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericError, BudgetExhaustedError) as exc:
        print(f"stopped: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
