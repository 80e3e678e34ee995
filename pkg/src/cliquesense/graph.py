"""Candidate similarity graph, thresholding, complement and threshold calibration."""
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import _accel
from ._accel import kernel

MAX_ORDER = 8192


@dataclass(frozen=True)
class CandidateSet:
    indices: np.ndarray
    selection_rule: str = "uniform-stride"

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size < 2:
            raise ValueError("a candidate set needs at least 2 indices")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("candidate indices must be distinct and sorted ascending")
        if idx[0] < 0:
            raise ValueError("candidate indices must be nonnegative")
        object.__setattr__(self, "indices", idx)

    @property
    def k(self):
        return self.indices.size

    def __len__(self):
        return self.indices.size


@dataclass(frozen=True)
class WeightedGraph:
    """Complete graph on the candidates; ``weights`` is the condensed upper triangle.

    Pair (a, b) with a < b sits at position ``a*k - a*(a+1)//2 + (b - a - 1)``,
    the same layout as ``scipy.spatial.distance.squareform``.
    """

    weights: np.ndarray
    vertex_map: np.ndarray

    @property
    def order(self):
        return self.vertex_map.size

    def weight(self, a, b):
        if a == b:
            raise ValueError("no self-edges")
        if a > b:
            a, b = b, a
        k = self.order
        return self.weights[a * k - a * (a + 1) // 2 + (b - a - 1)]

    def matrix(self):
        """Dense symmetric weight matrix with a zero diagonal."""
        k = self.order
        W = np.zeros((k, k))
        iu = np.triu_indices(k, 1)
        W[iu] = self.weights
        W.T[iu] = self.weights
        return W

    @property
    def max_weight(self):
        return float(self.weights.max())


@dataclass(frozen=True)
class ThresholdGraph:
    """Unweighted graph as a dense boolean adjacency (one bit row per vertex)."""

    adjacency: np.ndarray
    threshold: float
    complemented: bool
    vertex_map: np.ndarray
    _csr: Optional[Tuple[np.ndarray, np.ndarray]] = field(default=None, init=False, repr=False, compare=False)

    @property
    def order(self):
        return self.adjacency.shape[0]

    def edges(self):
        """Edge list as an (E, 2) array with a < b, in row-major order."""
        a, b = np.nonzero(np.triu(self.adjacency, 1))
        return np.stack([a, b], axis=1).astype(np.int64)

    @property
    def n_edges(self):
        return int(np.count_nonzero(self.adjacency)) // 2

    def csr(self):
        """Neighbour lists as (indptr, indices) int32 arrays."""
        if self._csr is None:
            deg = self.adjacency.sum(axis=1)
            indptr = np.zeros(self.order + 1, dtype=np.int32)
            np.cumsum(deg, out=indptr[1:])
            indices = np.nonzero(self.adjacency)[1].astype(np.int32)
            object.__setattr__(self, "_csr", (indptr, indices))
        return self._csr

    def is_clique(self, vertices):
        v = np.asarray(vertices, dtype=np.int64)
        sub = self.adjacency[np.ix_(v, v)]
        return bool(np.all(sub | np.eye(v.size, dtype=bool)))


@kernel
def _pair_weight_unit(ua, ub, r):
    d = 0.0
    s = 0.0
    for i in range(r):
        x = ua[i] - ub[i]
        y = ua[i] + ub[i]
        d += x * x
        s += y * y
    if d == 0.0 or s == 0.0:
        return 0.0
    # sin of the angle between the unit vectors, from the half-angle chord lengths
    sin_t = 2.0 * math.sqrt(d) * math.sqrt(s) / (d + s)
    return min(sin_t, 1.0)


@kernel
def _condensed_weights(unit, norms):
    k, r = unit.shape
    out = np.empty(k * (k - 1) // 2)
    pos = 0
    for a in range(k - 1):
        for b in range(a + 1, k):
            if norms[a] == 0.0 or norms[b] == 0.0:
                out[pos] = 0.0
            else:
                out[pos] = norms[a] * norms[b] * _pair_weight_unit(unit[a], unit[b], r)
            pos += 1
    return out


def _condensed_weights_numpy(unit, norms):
    k = unit.shape[0]
    out = np.empty(k * (k - 1) // 2)
    pos = 0
    for a in range(k - 1):
        d = ((unit[a + 1:] - unit[a]) ** 2).sum(axis=1)
        s = ((unit[a + 1:] + unit[a]) ** 2).sum(axis=1)
        denom = d + s
        with np.errstate(invalid="ignore", divide="ignore"):
            sin_t = np.where((d == 0) | (s == 0), 0.0, 2.0 * np.sqrt(d) * np.sqrt(s) / np.where(denom == 0, 1.0, denom))
        sin_t = np.minimum(sin_t, 1.0)
        w = norms[a] * norms[a + 1:] * sin_t
        w[(norms[a + 1:] == 0) | (norms[a] == 0)] = 0.0
        out[pos:pos + w.size] = w
        pos += w.size
    return out


def _unit_rows(R):
    # scale by the max-abs entry first so tiny or huge rows do not under/overflow when squared
    scale = np.abs(R).max(axis=1)
    safe_scale = np.where(scale > 0, scale, 1.0)
    S = R / safe_scale[:, None]
    s_norms = np.sqrt(np.einsum("ij,ij->i", S, S))
    norms = scale * s_norms
    safe = np.where(s_norms > 0, s_norms, 1.0)
    return S / safe[:, None], norms


def pair_weight(u, v):
    """Area of the parallelogram spanned by ``u`` and ``v``.

    Equals ``sqrt(|u|^2 |v|^2 - (u.v)^2)`` (and ``|u x v|`` for r = 3) but is
    evaluated as ``|u| |v| sin(angle)`` from the chords between the unit
    vectors, which stays accurate for nearly parallel pairs.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1 or u.size < 1:
        raise ValueError(f"vectors must be 1-D with equal length, got {u.shape} and {v.shape}")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("non-finite entries in row vectors")
    unit, norms = _unit_rows(np.stack([u, v]))
    if norms[0] == 0 or norms[1] == 0:
        return 0.0
    return float(norms[0] * norms[1] * _pair_weight_unit(unit[0], unit[1], u.size))


def select_candidates(n, k, grid_shape=None):
    """``k`` points at stride ``n // k`` in row-major order (all points if k >= n)."""
    if k < 2:
        raise ValueError(f"need at least 2 candidates, got k={k}")
    if n < 2:
        raise ValueError(f"need at least 2 spatial points, got n={n}")
    if k >= n:
        return CandidateSet(np.arange(n), selection_rule="all")
    stride = n // k
    return CandidateSet(np.arange(k) * stride, selection_rule="uniform-stride")


def build_graph(basis, candidates):
    """Complete weighted graph over the candidates' weighted POD rows."""
    idx = candidates.indices
    if idx[-1] >= basis.n:
        raise IndexError(f"candidate index {idx[-1]} out of range for n={basis.n}")
    if idx.size > MAX_ORDER:
        raise ValueError(f"at most {MAX_ORDER} candidates supported, got {idx.size}")
    R = np.ascontiguousarray(basis.weighted_rows[idx])
    unit, norms = _unit_rows(R)
    if _accel.USE_NUMBA:
        w = _condensed_weights(unit, norms)
    else:
        w = _condensed_weights_numpy(unit, norms)
    return WeightedGraph(weights=w, vertex_map=idx.copy())


def threshold_graph(g, c):
    """Keep edges with weight strictly greater than ``c``."""
    if c < 0:
        raise ValueError(f"threshold must be nonnegative, got {c}")
    k = g.order
    A = np.zeros((k, k), dtype=bool)
    iu = np.triu_indices(k, 1)
    keep = g.weights > c
    A[iu[0][keep], iu[1][keep]] = True
    A |= A.T
    return ThresholdGraph(adjacency=A, threshold=float(c), complemented=False, vertex_map=g.vertex_map)


def complement(g):
    if g.complemented:
        raise ValueError("graph is already a complement; refusing to invert twice")
    A = ~g.adjacency
    np.fill_diagonal(A, False)
    return ThresholdGraph(adjacency=A, threshold=g.threshold, complemented=True, vertex_map=g.vertex_map)


def uncomplement(g):
    """Inverse of :func:`complement`."""
    if not g.complemented:
        raise ValueError("graph is not a complement")
    A = ~g.adjacency
    np.fill_diagonal(A, False)
    return ThresholdGraph(adjacency=A, threshold=g.threshold, complemented=False, vertex_map=g.vertex_map)


class InfeasibleTarget(RuntimeError):
    """No threshold yields a clique of the requested size."""

    def __init__(self, q_target, best_found):
        super().__init__(f"clique size {q_target} unreachable; largest found at c=0 is {best_found}")
        self.q_target = q_target
        self.best_found = best_found


@dataclass
class Calibration:
    threshold: float
    achieved: int
    payload: object = None
    probes: List[Tuple[float, int]] = field(default_factory=list)

    def __iter__(self):
        # allows ``c, q = calibrate_threshold(...)``
        yield self.threshold
        yield self.achieved


def calibrate_threshold(g, q_target, evaluator: Callable, max_steps=32):
    """Largest probed ``c`` whose clique size reaches ``q_target``, by bisection.

    ``evaluator(c)`` returns ``(clique_size, payload)`` for ``G_c``. The
    search stops early when a probe hits ``q_target`` exactly.
    """
    if not 1 <= q_target <= g.order:
        raise ValueError(f"q_target must be in [1, {g.order}], got {q_target}")
    probes = []

    def probe(c):
        size, payload = evaluator(c)
        probes.append((float(c), int(size)))
        return int(size), payload

    hi = g.max_weight
    size_hi, payload_hi = probe(hi)
    if size_hi >= q_target:
        return Calibration(hi, size_hi, payload_hi, probes)
    lo = 0.0
    size_lo, payload_lo = probe(lo)
    if size_lo < q_target:
        raise InfeasibleTarget(q_target, size_lo)
    best = Calibration(lo, size_lo, payload_lo, probes)
    if size_lo == q_target:
        return best
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        size, payload = probe(mid)
        if size >= q_target:
            lo = mid
            best = Calibration(mid, size, payload, probes)
            if size == q_target:
                break
        else:
            hi = mid
    return best
