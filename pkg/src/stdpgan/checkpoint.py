"""Versioned checkpoint document: named float64 tensors plus JSON metadata.

The file is UTF-8 JSON. Each tensor stores its shape and the base64 of its
little-endian float64 bytes, so a save/load round trip is bit-exact and two
saves of equal content are byte-identical.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError

FORMAT = "stdpgan-checkpoint"
VERSION = 1


def encode_tensors(tensors: dict[str, np.ndarray]) -> dict:
    out = {}
    for name in sorted(tensors):
        # asarray keeps 0-d scalars 0-d; tobytes always emits C order
        arr = np.asarray(tensors[name], dtype="<f8")
        out[name] = {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}
    return out


def decode_tensors(doc: dict) -> dict[str, np.ndarray]:
    out = {}
    for name, rec in doc.items():
        raw = base64.b64decode(rec["data"])
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        out[name] = arr.reshape(rec["shape"])
    return out


def dumps(tensors: dict[str, np.ndarray], meta: dict | None = None) -> str:
    doc = {"format": FORMAT, "version": VERSION, "meta": meta or {}, "tensors": encode_tensors(tensors)}
    return json.dumps(doc, indent=1, sort_keys=True)


def loads(text: str) -> tuple[dict[str, np.ndarray], dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"checkpoint is not valid JSON: {exc}") from None
    if doc.get("format") != FORMAT:
        raise ValidationError("not a stdpgan checkpoint")
    if doc.get("version") != VERSION:
        raise ValidationError(f"unsupported checkpoint version {doc.get('version')}")
    return decode_tensors(doc["tensors"]), doc.get("meta", {})


def save(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    Path(path).write_text(dumps(tensors, meta), encoding="utf-8")


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_text(encoding="utf-8"))


def split_prefix(tensors: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    p = prefix + "/"
    return {k[len(p) :]: v for k, v in tensors.items() if k.startswith(p)}


def with_prefix(prefix: str, tensors: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {f"{prefix}/{k}": v for k, v in tensors.items()}
