"""Dataset ingestion, normalization, windowing, chronological splits and a synthetic ring dataset.

File formats (UTF-8 CSV):

* observations: header row of node ids, one row per timestamp. An optional
  first column named ``timestamp`` (ISO-8601) or ``sample`` (generated block
  index) is carried along but not used as a node. Empty cells are missing.
* coordinates: ``node_id,x,y``.
* distances: ``node_i,node_j,dist`` (symmetric; unlisted pairs are unreachable).
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .graph import build_adjacency, normalized_adjacency, normalized_laplacian, pairwise_distances

log = logging.getLogger(__name__)

INDEX_COLUMNS = ("timestamp", "sample")


@dataclasses.dataclass
class NormStats:
    minimum: float
    maximum: float

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - self.minimum) / (self.maximum - self.minimum)

    def invert(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) * (self.maximum - self.minimum) + self.minimum

    def to_dict(self) -> dict:
        return {"method": "minmax", "min": self.minimum, "max": self.maximum}

    @classmethod
    def from_dict(cls, d: dict) -> NormStats:
        if d.get("method", "minmax") != "minmax":
            raise ValidationError(f"unknown normalization method {d.get('method')!r}")
        return cls(float(d["min"]), float(d["max"]))


@dataclasses.dataclass
class SpatioTemporalDataset:
    node_ids: list[str]
    observations: np.ndarray  # (time, N)
    adjacency: np.ndarray
    laplacian: np.ndarray
    coords: np.ndarray | None = None
    dist: np.ndarray | None = None
    timestamps: list[str] | None = None
    stats: NormStats | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def length(self) -> int:
        return self.observations.shape[0]


@dataclasses.dataclass
class WindowedSamples:
    inputs: np.ndarray  # (samples, window_len, N)
    targets: np.ndarray  # (samples, horizon, N)
    window_len: int
    horizon: int

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def blocks(self) -> np.ndarray:
        """Inputs and targets joined along time: (samples, window_len + horizon, N)."""
        return np.concatenate([self.inputs, self.targets], axis=1)

    def features(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened regression design: (samples, window_len*N) and (samples, horizon*N)."""
        n = len(self)
        return self.inputs.reshape(n, -1), self.targets.reshape(n, -1)

    @classmethod
    def from_blocks(cls, blocks: np.ndarray, window_len: int) -> WindowedSamples:
        blocks = np.asarray(blocks, dtype=np.float64)
        if blocks.ndim != 3 or blocks.shape[1] <= window_len:
            raise ValidationError(f"blocks of shape {blocks.shape} cannot hold {window_len} inputs plus targets")
        return cls(blocks[:, :window_len].copy(), blocks[:, window_len:].copy(), window_len, blocks.shape[1] - window_len)


# ---------------------------------------------------------------------------
# reading and writing


def _read_rows(path) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [row for row in csv.reader(fh) if row]


def read_observations(path) -> tuple[list[str], np.ndarray, list[str] | None, str | None]:
    """Parse an observation CSV into (node_ids, values with NaN gaps, index values, index name)."""
    rows = _read_rows(path)
    if not rows:
        raise ValidationError(f"{path}: empty observation file")
    header = [h.strip() for h in rows[0]]
    index_name = header[0] if header and header[0].lower() in INDEX_COLUMNS else None
    start = 1 if index_name else 0
    node_ids = header[start:]
    if not node_ids:
        raise ValidationError(f"{path}: no node columns in header")
    if len(set(node_ids)) != len(node_ids):
        raise ValidationError(f"{path}: duplicate node ids in header")
    index, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValidationError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
        if index_name:
            index.append(row[0].strip())
        vals = []
        for col, cell in zip(node_ids, row[start:]):
            cell = cell.strip()
            if cell == "" or cell.lower() == "nan":
                vals.append(math.nan)
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise ValidationError(f"{path}: line {lineno}, node {col}: not a number: {cell!r}") from None
        values.append(vals)
    if not values:
        raise ValidationError(f"{path}: no observation rows")
    arr = np.array(values, dtype=np.float64)
    if np.any(np.isinf(arr)):
        raise ValidationError(f"{path}: infinite observation values")
    return node_ids, arr, (index if index_name else None), index_name


def interpolate_missing(values: np.ndarray, node_ids: list[str]) -> np.ndarray:
    """Linear interpolation of NaN gaps per node; edges take the nearest observed value."""
    out = values.copy()
    t = np.arange(values.shape[0])
    for j, node in enumerate(node_ids):
        col = out[:, j]
        miss = np.isnan(col)
        if miss.all():
            raise ValidationError(f"node {node}: every observation is missing")
        if miss.any():
            log.info("node %s: interpolating %d missing values", node, int(miss.sum()))
            col[miss] = np.interp(t[miss], t[~miss], col[~miss])
    return out


def write_observations(path, values: np.ndarray, node_ids, index=None, index_name: str = "timestamp") -> None:
    """Write an observation CSV; floats use repr so a reload is bit-identical."""
    values = np.asarray(values, dtype=np.float64)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(([index_name] if index is not None else []) + list(node_ids))
    for i, row in enumerate(values):
        cells = [repr(float(v)) for v in row]
        w.writerow(([index[i]] if index is not None else []) + cells)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_coords(path, node_ids, coords: np.ndarray) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_id", "x", "y"])
    for nid, (x, y) in zip(node_ids, np.asarray(coords)):
        w.writerow([nid, repr(float(x)), repr(float(y))])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_graph_file(path, node_ids: list[str]) -> tuple[np.ndarray | None, np.ndarray]:
    """Read a coordinate or distance CSV, aligned to ``node_ids``; returns (coords or None, dist)."""
    rows = _read_rows(path)
    if not rows:
        raise ValidationError(f"{path}: empty graph file")
    header = [h.strip().lower() for h in rows[0]]
    pos = {n: i for i, n in enumerate(node_ids)}
    if header[:1] == ["node_id"]:
        coords = {}
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != len(header):
                raise ValidationError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
            coords[row[0].strip()] = [float(v) for v in row[1:]]
        unknown = sorted(set(coords) - set(pos))
        if unknown:
            raise ValidationError(f"{path}: unknown node ids {unknown}")
        missing = [n for n in node_ids if n not in coords]
        if missing:
            raise ValidationError(f"{path}: no coordinates for nodes {missing}")
        xy = np.array([coords[n] for n in node_ids], dtype=np.float64)
        return xy, pairwise_distances(xy)
    if header[:3] == ["node_i", "node_j", "dist"]:
        n = len(node_ids)
        dist = np.full((n, n), np.inf)
        np.fill_diagonal(dist, 0.0)
        unknown = set()
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 3:
                raise ValidationError(f"{path}: line {lineno} has {len(row)} fields, expected 3")
            a, b, d = row[0].strip(), row[1].strip(), float(row[2])
            if a not in pos or b not in pos:
                unknown.update(x for x in (a, b) if x not in pos)
                continue
            dist[pos[a], pos[b]] = dist[pos[b], pos[a]] = d
        if unknown:
            raise ValidationError(f"{path}: unknown node ids {sorted(unknown)}")
        return None, dist
    raise ValidationError(f"{path}: header must start with node_id or node_i,node_j,dist")


def load_dataset(obs_path, graph_path, alpha_k: float = 1.0, beta_k: float = 0.1) -> SpatioTemporalDataset:
    node_ids, raw, index, _ = read_observations(obs_path)
    obs = interpolate_missing(raw, node_ids)
    coords, dist = read_graph_file(graph_path, node_ids)
    # unreachable pairs from a sparse distance list get zero weight
    finite = np.where(np.isfinite(dist), dist, 0.0)
    W = build_adjacency(finite, alpha_k, beta_k)
    W[~np.isfinite(dist)] = 0.0
    return SpatioTemporalDataset(
        node_ids=node_ids,
        observations=obs,
        adjacency=W,
        laplacian=normalized_laplacian(W),
        coords=coords,
        dist=dist,
        timestamps=index,
    )


def save_dataset(dataset: SpatioTemporalDataset, directory) -> tuple[Path, Path]:
    """Write ``observations.csv`` and ``coords.csv`` (needs coordinates)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    obs_path, coords_path = directory / "observations.csv", directory / "coords.csv"
    write_observations(obs_path, dataset.observations, dataset.node_ids, dataset.timestamps)
    if dataset.coords is None:
        raise ValidationError("dataset has no coordinates to save")
    write_coords(coords_path, dataset.node_ids, dataset.coords)
    return obs_path, coords_path


# ---------------------------------------------------------------------------
# transforms


def fit_stats(values: np.ndarray) -> NormStats:
    lo, hi = float(np.min(values)), float(np.max(values))
    if not hi > lo:
        raise ValidationError("cannot min-max normalize a constant dataset")
    return NormStats(lo, hi)


def normalize(dataset: SpatioTemporalDataset, stats: NormStats | None = None):
    """Global min-max scaling to [0, 1]; returns (scaled dataset, stats)."""
    stats = stats or fit_stats(dataset.observations)
    scaled = dataclasses.replace(dataset, observations=stats.apply(dataset.observations), stats=stats)
    return scaled, stats


def save_stats(stats: NormStats, path) -> None:
    Path(path).write_text(json.dumps(stats.to_dict(), indent=2), encoding="utf-8")


def load_stats(path) -> NormStats:
    return NormStats.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _series(data) -> np.ndarray:
    return data.observations if isinstance(data, SpatioTemporalDataset) else np.asarray(data, dtype=np.float64)


def make_windows(data, window_len: int = 6, horizon: int = 3, stride: int = 1) -> WindowedSamples:
    series = _series(data)
    need = window_len + horizon
    if series.shape[0] < need:
        raise ValidationError(f"series of length {series.shape[0]} is too short; need at least {need}")
    starts = range(0, series.shape[0] - need + 1, stride)
    blocks = np.stack([series[s : s + need] for s in starts])
    return WindowedSamples.from_blocks(blocks, window_len)


def split(data, train: float = 0.70, val: float = 0.20, test: float = 0.10):
    """Chronological contiguous split: floor, floor, remainder."""
    if min(train, val, test) < 0 or abs(train + val + test - 1.0) > 1e-9:
        raise ValidationError(f"split fractions must be nonnegative and sum to 1, got {train}, {val}, {test}")
    series = _series(data)
    n = series.shape[0]
    n_train = math.floor(n * train + 1e-9)
    n_val = math.floor(n * val + 1e-9)
    parts = (series[:n_train], series[n_train : n_train + n_val], series[n_train + n_val :])
    return tuple(p.copy() for p in parts)


# ---------------------------------------------------------------------------
# synthetic ring dataset


def ring_coordinates(n: int) -> np.ndarray:
    """Nodes on a circle whose neighbouring chord length is 1."""
    radius = 1.0 / (2.0 * math.sin(math.pi / n))
    angles = 2 * math.pi * np.arange(n) / n
    return np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)


def synth_dataset(
    n_nodes: int,
    length: int,
    seed: int,
    period: float = 24.0,
    diffusion: float = 0.3,
    noise_sd: float = 0.05,
    alpha_k: float = 1.0,
    beta_k: float = 0.1,
) -> SpatioTemporalDataset:
    """Phase-shifted unit sinusoids on a ring, mixed once per timestep by the normalized adjacency.

    ``x_t = s_t + diffusion * A_norm s_t + noise`` where node n carries
    ``sin(2 pi t / period + 2 pi n / N + phi)`` with a seed-dependent phase ``phi``.
    """
    if n_nodes < 2:
        raise ValidationError(f"synthetic dataset needs at least 2 nodes, got {n_nodes}")
    rng = np.random.default_rng(seed)
    coords = ring_coordinates(n_nodes)
    dist = pairwise_distances(coords)
    dist = 0.5 * (dist + dist.T)
    W = build_adjacency(dist, alpha_k, beta_k)
    A = normalized_adjacency(W)
    phi = rng.uniform(0, 2 * math.pi)
    t = np.arange(length)[:, None]
    phase = 2 * math.pi * np.arange(n_nodes)[None, :] / n_nodes
    signal = np.sin(2 * math.pi * t / period + phase + phi)
    mixed = signal + diffusion * signal @ A.T
    obs = mixed + noise_sd * rng.standard_normal(mixed.shape)
    return SpatioTemporalDataset(
        node_ids=[f"n{i}" for i in range(n_nodes)],
        observations=obs,
        adjacency=W,
        laplacian=normalized_laplacian(W),
        coords=coords,
        dist=dist,
    )
