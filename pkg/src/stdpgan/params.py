"""Named parameter sets shared by the generator and discriminator."""

from __future__ import annotations

import dataclasses
from typing import Mapping

import numpy as np


@dataclasses.dataclass
class ParamSet:
    """Dataclass of named float64 arrays; field order is the flattening order."""

    def __post_init__(self):
        for f in dataclasses.fields(self):
            arr = np.array(getattr(self, f.name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {f.name} has non-finite entries")
            setattr(self, f.name, arr)

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in self.names()}

    @classmethod
    def from_dict(cls, d: Mapping[str, np.ndarray]):
        return cls(**{n: np.array(d[n], dtype=np.float64) for n in cls.names()})

    def copy(self):
        return self.from_dict({k: v.copy() for k, v in self.as_dict().items()})

    def size(self) -> int:
        return sum(v.size for v in self.as_dict().values())


def as_mapping(params) -> Mapping:
    return params.as_dict() if isinstance(params, ParamSet) else params
