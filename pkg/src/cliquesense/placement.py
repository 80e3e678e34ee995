from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np


@dataclass(frozen=True, eq=False)
class Placement:
    """Ordered sensor locations (rows of the selection matrix C) with provenance."""

    indices: np.ndarray
    method: str
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        if idx.size < 1:
            raise ValueError("a placement needs at least one sensor")
        if np.unique(idx).size != idx.size:
            raise ValueError("placement indices must be distinct")
        if idx.min() < 0:
            raise ValueError("placement indices must be nonnegative")
        object.__setattr__(self, "indices", idx)

    def __eq__(self, other):
        if not isinstance(other, Placement):
            return NotImplemented
        return (self.method == other.method and np.array_equal(self.indices, other.indices)
                and self.params == other.params)

    __hash__ = None

    @property
    def q(self):
        return self.indices.size

    def selection_matrix(self, n):
        """Dense q x n matrix with a single unity element per row."""
        if self.indices.max() >= n:
            raise IndexError(f"placement index {self.indices.max()} out of range for n={n}")
        C = np.zeros((self.q, n))
        C[np.arange(self.q), self.indices] = 1.0
        return C

    def to_dict(self):
        return {"method": self.method, "q": int(self.q), "indices": [int(i) for i in self.indices],
                "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(indices=np.asarray(d["indices"], dtype=np.int64), method=d["method"], params=dict(d.get("params", {})))
