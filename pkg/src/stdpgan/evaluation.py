"""Train-on-synthetic / test-on-real utility evaluation."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from pathlib import Path
from typing import Protocol

import numpy as np
from sklearn.tree import DecisionTreeRegressor

from .data import WindowedSamples
from .errors import DimensionError, ValidationError
from .tensor import Tape, add, matmul, mean, relu, square, sub

REGRESSORS = ("ols", "sgd-linear", "tree", "mlp")
REPORT_COLUMNS = ("regressor", "source", "mse", "mae")


def _pair(pred, truth):
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction shape {pred.shape} differs from truth {truth.shape}")
    if pred.size == 0:
        raise DimensionError("metrics need at least one element")
    return pred, truth


def mse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean((pred - truth) ** 2))


def mae(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


class Regressor(Protocol):
    def predict(self, X: np.ndarray) -> np.ndarray: ...


@dataclasses.dataclass
class LinearModel:
    coef: np.ndarray  # (features, outputs)
    intercept: np.ndarray  # (outputs,)

    def predict(self, X):
        return np.asarray(X) @ self.coef + self.intercept


def fit_ols(X, Y, jitter: float = 1e-8) -> LinearModel:
    """Least squares with intercept via ridge-jittered normal equations."""
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    gram = Xa.T @ Xa + jitter * np.eye(Xa.shape[1])
    beta = np.linalg.solve(gram, Xa.T @ Y)
    return LinearModel(beta[:-1], beta[-1])


def fit_sgd_linear(X, Y, seed: int = 0, epochs: int = 50, batch: int = 32, lr0: float = 0.05) -> LinearModel:
    """Minibatch SGD on squared loss with step ``lr0 / (1 + epoch)``, features centred internally."""
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    rng = np.random.default_rng(seed)
    mu = X.mean(axis=0)
    Xc = X - mu
    n, d = Xc.shape
    W = np.zeros((d, Y.shape[1]))
    b = Y.mean(axis=0).copy()
    for epoch in range(epochs):
        lr = lr0 / (1.0 + epoch)
        order = rng.permutation(n)
        for s in range(0, n, batch):
            idx = order[s : s + batch]
            resid = Xc[idx] @ W + b - Y[idx]
            W -= lr * Xc[idx].T @ resid / len(idx)
            b -= lr * resid.mean(axis=0)
    return LinearModel(W, b - mu @ W)


@dataclasses.dataclass
class TreeModel:
    tree: DecisionTreeRegressor

    def predict(self, X):
        out = self.tree.predict(np.asarray(X, float))
        return out.reshape(len(X), -1)


def fit_tree(X, Y, seed: int = 0, max_depth: int = 8) -> TreeModel:
    tree = DecisionTreeRegressor(max_depth=max_depth, random_state=seed)
    tree.fit(np.asarray(X, float), np.asarray(Y, float))
    return TreeModel(tree)


@dataclasses.dataclass
class MLPModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def predict(self, X):
        h = np.maximum(np.asarray(X, float) @ self.W1 + self.b1, 0.0)
        return h @ self.W2 + self.b2


def _mlp_loss(p, X, Y):
    ones = np.ones((X.shape[0], 1))
    h = relu(add(matmul(X, p["W1"]), matmul(ones, p["b1"])))
    out = add(matmul(h, p["W2"]), matmul(ones, p["b2"]))
    return mean(square(sub(out, Y)))


def fit_mlp(X, Y, seed: int = 0, hidden: int = 64, epochs: int = 60, batch: int = 32, lr: float = 1e-3) -> MLPModel:
    """One ReLU hidden layer trained with Adam through the package's autodiff."""
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    rng = np.random.default_rng(seed)
    n, d = X.shape
    k = Y.shape[1]
    params = {
        "W1": rng.standard_normal((d, hidden)) * np.sqrt(2.0 / d),
        "b1": np.zeros((1, hidden)),
        "W2": rng.standard_normal((hidden, k)) * np.sqrt(1.0 / hidden),
        "b2": Y.mean(axis=0, keepdims=True),
    }
    # constant target columns are answered exactly and never trained
    const = np.all(Y == Y[:1], axis=0)
    params["W2"][:, const] = 0.0
    params["b2"][0, const] = Y[0, const]
    frozen = {"W2": (slice(None), const), "b2": (slice(None), const)}
    m = {k_: np.zeros_like(v) for k_, v in params.items()}
    v = {k_: np.zeros_like(v_) for k_, v_ in params.items()}
    b1_, b2_, eps = 0.9, 0.999, 1e-8
    t = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for s in range(0, n, batch):
            idx = order[s : s + batch]
            tape = Tape()
            tracked = {name: tape.watch(val) for name, val in params.items()}
            loss = _mlp_loss(tracked, X[idx], Y[idx])
            grads = dict(zip(tracked, tape.gradient(loss, list(tracked.values()))))
            t += 1
            for name in params:
                g = grads[name]
                if name in frozen:
                    g[frozen[name]] = 0.0
                m[name] = b1_ * m[name] + (1 - b1_) * g
                v[name] = b2_ * v[name] + (1 - b2_) * g * g
                mhat = m[name] / (1 - b1_**t)
                vhat = v[name] / (1 - b2_**t)
                params[name] = params[name] - lr * mhat / (np.sqrt(vhat) + eps)
    return MLPModel(params["W1"], params["b1"][0], params["W2"], params["b2"][0])


def fit_regressor(kind: str, inputs, targets, seed: int = 0) -> Regressor:
    X, Y = np.asarray(inputs, float), np.asarray(targets, float)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise DimensionError(f"need 2-D inputs and targets with equal rows, got {X.shape}, {Y.shape}")
    if kind == "ols":
        return fit_ols(X, Y)
    if kind == "sgd-linear":
        return fit_sgd_linear(X, Y, seed=seed)
    if kind == "tree":
        return fit_tree(X, Y, seed=seed)
    if kind == "mlp":
        return fit_mlp(X, Y, seed=seed)
    raise ValidationError(f"unknown regressor {kind!r}; choose from {REGRESSORS}")


# ---------------------------------------------------------------------------
# report


@dataclasses.dataclass
class TstrRow:
    regressor: str
    source: str  # "real" or "generated"
    mse: float
    mae: float


@dataclasses.dataclass
class TstrReport:
    rows: list[TstrRow]
    config: dict = dataclasses.field(default_factory=dict)

    def get(self, regressor: str, source: str) -> TstrRow:
        for r in self.rows:
            if r.regressor == regressor and r.source == source:
                return r
        raise KeyError((regressor, source))

    def averages(self) -> list[TstrRow]:
        out = []
        for source in ("real", "generated"):
            rows = [r for r in self.rows if r.source == source]
            if rows:
                out.append(
                    TstrRow(
                        "average",
                        source,
                        float(np.mean([r.mse for r in rows])),
                        float(np.mean([r.mae for r in rows])),
                    )
                )
        return out

    def to_dict(self) -> dict:
        return {
            "columns": list(REPORT_COLUMNS),
            "rows": [dataclasses.asdict(r) for r in self.rows],
            "averages": [dataclasses.asdict(r) for r in self.averages()],
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows + self.averages():
            w.writerow([r.regressor, r.source, repr(r.mse), repr(r.mae)])
        return buf.getvalue()

    def write(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(self.to_json(), encoding="utf-8")
        (directory / "report.csv").write_text(self.to_csv(), encoding="utf-8")


def _check_windows(w: WindowedSamples, name: str):
    if len(w) == 0:
        raise ValidationError(f"{name} has no windows")


def tstr(
    real_train: WindowedSamples,
    real_test: WindowedSamples,
    generated_train: WindowedSamples,
    regressors=REGRESSORS,
    seed: int = 0,
    config: dict | None = None,
) -> TstrReport:
    for w, name in ((real_train, "real_train"), (real_test, "real_test"), (generated_train, "generated_train")):
        _check_windows(w, name)
    if generated_train.inputs.shape[1:] != real_train.inputs.shape[1:] or (
        generated_train.targets.shape[1:] != real_train.targets.shape[1:]
    ):
        raise DimensionError("generated windows are not shaped like the real training windows")
    Xte, Yte = real_test.features()
    rows = []
    for kind in regressors:
        for source, train in (("real", real_train), ("generated", generated_train)):
            X, Y = train.features()
            model = fit_regressor(kind, X, Y, seed=seed)
            pred = model.predict(Xte)
            rows.append(TstrRow(kind, source, mse(pred, Yte), mae(pred, Yte)))
    return TstrReport(rows, dict(config or {}))
