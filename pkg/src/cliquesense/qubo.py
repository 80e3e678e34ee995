"""Independent-set QUBO on the complement graph and its simulated-annealing solver.

Hamiltonian over bits x (one per candidate vertex), with Omega the edge set
of the complement graph:

    H(x) = -lambda1 * sum_z x_z + lambda2 * sum_{(z, y) in Omega} x_z x_y

For lambda1 < lambda2 every minimizer is an independent set of the
complement, i.e. a clique of the thresholded similarity graph.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _accel
from ._accel import fallback_errstate, kernel
from .graph import Calibration, ThresholdGraph, calibrate_threshold, complement, threshold_graph
from .placement import Placement
from .rng import next_double, replica_seed

MAX_BITS = 8192
MAX_EXHAUSTIVE = 24


@dataclass(frozen=True)
class AnnealSchedule:
    sweeps: int = 10_000
    temp_start: float = 4.0
    temp_end: float = 0.01
    replicas: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.sweeps < 1 or self.replicas < 1:
            raise ValueError("sweeps and replicas must be at least 1")
        if not (self.temp_start > 0 and self.temp_end > 0 and self.temp_end < self.temp_start):
            raise ValueError("temperatures must be positive with temp_end < temp_start")

    @classmethod
    def default_for(cls, lambda1=1.0, lambda2=2.0, **overrides):
        """Default schedule: start at 2*lambda2, end at 0.01*lambda1."""
        params = dict(temp_start=2.0 * lambda2, temp_end=0.01 * lambda1)
        params.update(overrides)
        return cls(**params)

    def betas(self):
        return 1.0 / np.geomspace(self.temp_start, self.temp_end, self.sweeps)

    def to_dict(self):
        return {"sweeps": self.sweeps, "temp_start": self.temp_start, "temp_end": self.temp_end,
                "replicas": self.replicas, "seed": int(self.seed)}


@dataclass(frozen=True)
class QuboProblem:
    size: int
    lambda1: float
    lambda2: float
    edges: np.ndarray
    indptr: np.ndarray = field(repr=False, compare=False, default=None)
    indices: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if not 0 < self.lambda1 < self.lambda2:
            raise ValueError(
                f"need 0 < lambda1 < lambda2 so that penalized pairs never pay off "
                f"(got lambda1={self.lambda1}, lambda2={self.lambda2})")
        if not 1 <= self.size <= MAX_BITS:
            raise ValueError(f"problem size must be in [1, {MAX_BITS}], got {self.size}")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (np.any(edges[:, 0] >= edges[:, 1]) or edges.min() < 0 or edges.max() >= self.size):
            raise ValueError("edges must be pairs (a, b) with 0 <= a < b < size")
        object.__setattr__(self, "edges", edges)
        if self.indptr is None:
            indptr, indices = _csr_from_edges(self.size, edges)
            object.__setattr__(self, "indptr", indptr)
            object.__setattr__(self, "indices", indices)

    @property
    def linear(self):
        return np.full(self.size, -self.lambda1)

    @property
    def quadratic(self):
        return {(int(a), int(b)): self.lambda2 for a, b in self.edges}

    def matrix(self):
        """Upper-triangular Q with x^T Q x = H(x) for binary x."""
        Q = np.diag(self.linear)
        Q[self.edges[:, 0], self.edges[:, 1]] = self.lambda2
        return Q


def _csr_from_edges(k, edges):
    both = np.concatenate([edges, edges[:, ::-1]]) if edges.size else np.zeros((0, 2), np.int64)
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    indptr = np.zeros(k + 1, dtype=np.int32)
    np.cumsum(np.bincount(both[:, 0], minlength=k), out=indptr[1:])
    return indptr, both[:, 1].astype(np.int32)


def build_qubo(comp, lambda1=1.0, lambda2=2.0):
    """Encode the independent-set problem on a complement graph."""
    if not isinstance(comp, ThresholdGraph) or not comp.complemented:
        raise ValueError("build_qubo expects a complemented ThresholdGraph")
    if not 0 < lambda1 < lambda2:
        raise ValueError(f"feasibility requires 0 < lambda1 < lambda2, got {lambda1}, {lambda2}")
    indptr, indices = comp.csr()
    return QuboProblem(size=comp.order, lambda1=float(lambda1), lambda2=float(lambda2),
                       edges=comp.edges(), indptr=indptr, indices=indices)


def qubo_from_edges(k, edges, lambda1=1.0, lambda2=2.0):
    return QuboProblem(size=k, lambda1=float(lambda1), lambda2=float(lambda2), edges=edges)


def _as_bits(problem, x):
    x = np.asarray(x)
    if x.shape != (problem.size,):
        raise ValueError(f"assignment length {x.shape} does not match problem size {problem.size}")
    if not np.all((x == 0) | (x == 1)):
        raise ValueError("assignment entries must be 0 or 1")
    return x.astype(np.uint8)


def penalty_pairs(problem, x):
    x = _as_bits(problem, x)
    e = problem.edges
    return int(np.count_nonzero(x[e[:, 0]] & x[e[:, 1]])) if e.size else 0


def energy(problem, x):
    x = _as_bits(problem, x)
    return -problem.lambda1 * int(x.sum()) + problem.lambda2 * penalty_pairs(problem, x)


@kernel
def _anneal_replica(k, lambda1, lambda2, indptr, indices, betas, seed, trace):
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    x = np.zeros(k, dtype=np.uint8)
    nbr = np.zeros(k, dtype=np.int64)
    for i in range(k):
        if next_double(state) < 0.5:
            x[i] = 1
    n_set = 0
    for i in range(k):
        if x[i] == 1:
            n_set += 1
            for p in range(indptr[i], indptr[i + 1]):
                nbr[indices[p]] += 1
    pairs = 0
    for i in range(k):
        if x[i] == 1:
            pairs += nbr[i]
    pairs //= 2
    best = x.copy()
    best_e = -lambda1 * n_set + lambda2 * pairs
    for s in range(betas.size):
        beta = betas[s]
        for i in range(k):
            if x[i] == 1:
                de = lambda1 - lambda2 * nbr[i]
            else:
                de = -lambda1 + lambda2 * nbr[i]
            accept = de <= 0.0
            if not accept:
                accept = next_double(state) < math.exp(-de * beta)
            if accept:
                if x[i] == 1:
                    x[i] = 0
                    n_set -= 1
                    pairs -= nbr[i]
                    step = -1
                else:
                    x[i] = 1
                    n_set += 1
                    pairs += nbr[i]
                    step = 1
                for p in range(indptr[i], indptr[i + 1]):
                    nbr[indices[p]] += step
        e = -lambda1 * n_set + lambda2 * pairs
        trace[s] = e
        if e < best_e:
            best_e = e
            best[:] = x
    return best, best_e


def _code_less(a, b):
    """True if bit vector ``a`` encodes a smaller integer sum(x_z 2**z) than ``b``."""
    diff = np.nonzero(a != b)[0]
    return bool(diff.size) and a[diff[-1]] < b[diff[-1]]


@dataclass
class AnnealResult:
    bits: np.ndarray
    energy: float
    replica_energies: np.ndarray
    traces: Optional[np.ndarray] = None

    def __iter__(self):
        yield self.bits
        yield self.energy


def anneal(problem, schedule, return_trace=False):
    """Single-bit-flip Metropolis annealing with geometric cooling.

    Each replica sweeps the bits in index order, owns a SplitMix64 stream
    seeded with ``replica_seed(schedule.seed, replica)`` and keeps its best
    end-of-sweep state. Replicas are merged by lowest energy, then by the
    smallest integer code.
    """
    betas = schedule.betas()
    k = problem.size
    best_bits = None
    best_e = np.inf
    rep_e = np.empty(schedule.replicas)
    traces = np.empty((schedule.replicas, schedule.sweeps))
    with fallback_errstate():
        for rep in range(schedule.replicas):
            seed = np.uint64(replica_seed(schedule.seed, rep))
            bits, _ = _anneal_replica(k, problem.lambda1, problem.lambda2, problem.indptr, problem.indices,
                                      betas, seed, traces[rep])
            e = energy(problem, bits)
            rep_e[rep] = e
            if best_bits is None or e < best_e or (e == best_e and _code_less(bits, best_bits)):
                best_bits, best_e = bits, e
    return AnnealResult(best_bits, float(best_e), rep_e, traces if return_trace else None)


@kernel
def _exhaustive(k, lambda1, lambda2, indptr, indices):
    x = np.zeros(k, dtype=np.uint8)
    nbr = np.zeros(k, dtype=np.int64)
    n_set = 0
    pairs = 0
    code = 0
    best_code = 0
    best_e = 0.0
    for i in range(1, 1 << k):
        bit = 0
        while not (i >> bit) & 1:
            bit += 1
        code ^= 1 << bit
        if x[bit] == 1:
            x[bit] = 0
            n_set -= 1
            pairs -= nbr[bit]
            step = -1
        else:
            x[bit] = 1
            n_set += 1
            pairs += nbr[bit]
            step = 1
        for p in range(indptr[bit], indptr[bit + 1]):
            nbr[indices[p]] += step
        e = -lambda1 * n_set + lambda2 * pairs
        if e < best_e or (e == best_e and code < best_code):
            best_e = e
            best_code = code
    return best_code, best_e


def _exhaustive_numpy(problem, chunk=1 << 16):
    k = problem.size
    shifts = np.arange(k, dtype=np.int64)
    a, b = problem.edges[:, 0], problem.edges[:, 1]
    best_code, best_e = 0, 0.0
    for start in range(0, 1 << k, chunk):
        codes = np.arange(start, min(start + chunk, 1 << k), dtype=np.int64)
        bits = (codes[:, None] >> shifts) & 1
        n_set = bits.sum(axis=1)
        pairs = (bits[:, a] & bits[:, b]).sum(axis=1) if a.size else np.zeros_like(n_set)
        e = -problem.lambda1 * n_set + problem.lambda2 * pairs
        j = int(np.argmin(e))  # first minimum has the smallest code in this chunk
        if e[j] < best_e:
            best_code, best_e = int(codes[j]), float(e[j])
    return best_code, best_e


def exhaustive_solve(problem):
    """Global minimum by enumeration; ties go to the smallest integer code sum(x_z 2**z)."""
    k = problem.size
    if k > MAX_EXHAUSTIVE:
        raise ValueError(f"exhaustive search limited to {MAX_EXHAUSTIVE} bits, got {k}")
    if _accel.USE_NUMBA:
        code, _ = _exhaustive(k, problem.lambda1, problem.lambda2, problem.indptr, problem.indices)
    else:
        code, _ = _exhaustive_numpy(problem)
    bits = ((int(code) >> np.arange(k)) & 1).astype(np.uint8)
    return bits, energy(problem, bits)


def repair_to_independent_set(comp, x):
    """Clear bits until no complement edge has both endpoints set.

    Each step clears the set vertex with the most violated edges, preferring
    the larger index on ties. Feasible inputs come back unchanged.
    """
    if not comp.complemented:
        raise ValueError("repair expects the complement graph")
    x = np.asarray(x).astype(np.uint8).copy()
    indptr, indices = comp.csr()
    k = comp.order
    set_nbrs = np.zeros(k, dtype=np.int64)
    deg = np.diff(indptr)
    owner = np.repeat(np.arange(k), deg)
    np.add.at(set_nbrs, owner, x[indices])
    viol = set_nbrs * x
    while viol.max(initial=0) > 0:
        i = k - 1 - int(np.argmax(viol[::-1]))
        x[i] = 0
        nb = indices[indptr[i]:indptr[i + 1]]
        viol[nb] -= x[nb]
        viol[i] = 0
    return x


def clique_from_solution(g_c, x, params=None):
    """Map an independent set of the complement back to sensor indices, checking the clique."""
    if g_c.complemented:
        raise ValueError("clique_from_solution expects the thresholded graph, not its complement")
    x = np.asarray(x)
    verts = np.nonzero(x)[0]
    if verts.size == 0:
        raise ValueError("empty solution")
    if not g_c.is_clique(verts):
        raise ValueError("solution is not a clique of G_c; an unrepaired assignment leaked through")
    return Placement(indices=g_c.vertex_map[verts], method="clique", params=dict(params or {}))


@dataclass
class CliqueSolve:
    bits: np.ndarray
    g_c: ThresholdGraph
    comp: ThresholdGraph
    problem: QuboProblem
    anneal_energy: float

    @property
    def size(self):
        return int(self.bits.sum())


def solve_clique(wgraph, c, schedule, lambda1=1.0, lambda2=2.0, exact=False):
    """Threshold at ``c``, build the complement QUBO, solve and repair."""
    g_c = threshold_graph(wgraph, c)
    comp = complement(g_c)
    problem = build_qubo(comp, lambda1, lambda2)
    if exact:
        bits, e = exhaustive_solve(problem)
    else:
        bits, e = anneal(problem, schedule)
    bits = repair_to_independent_set(comp, bits)
    return CliqueSolve(bits=bits, g_c=g_c, comp=comp, problem=problem, anneal_energy=float(e))


def clique_size_evaluator(wgraph, schedule, lambda1=1.0, lambda2=2.0, exact=False):
    """Evaluator for :func:`calibrate_threshold` returning ``(size, CliqueSolve)``."""

    def evaluate(c):
        sol = solve_clique(wgraph, c, schedule, lambda1, lambda2, exact=exact)
        return sol.size, sol

    return evaluate


@dataclass
class CliquePlacementResult:
    placement: Placement
    energy: float
    penalty_pairs: int
    threshold: float
    clique_size: int
    calibration: Optional[Calibration] = None

    @property
    def penalty_free(self):
        return self.penalty_pairs == 0


def clique_placement(basis, candidates, wgraph, q_target=None, c=None, lambda1=1.0, lambda2=2.0,
                     schedule=None, probe_schedule=None, trim=True):
    """Clique-method placement with either a fixed threshold ``c`` or a size target.

    With ``q_target`` the threshold is calibrated by bisection using the
    cheaper ``probe_schedule``; the final solve at the calibrated threshold
    uses ``schedule``. A clique larger than ``q_target`` is trimmed to the
    ``q_target`` vertices with the largest weighted-row norms (a sub-clique
    stays penalty free).
    """
    if (q_target is None) == (c is None):
        raise ValueError("give exactly one of q_target or c")
    schedule = schedule or AnnealSchedule.default_for(lambda1, lambda2)
    calib = None
    if q_target is not None:
        probe_schedule = probe_schedule or schedule
        calib = calibrate_threshold(wgraph, q_target, clique_size_evaluator(wgraph, probe_schedule, lambda1, lambda2))
        c = calib.threshold
        sol = solve_clique(wgraph, c, schedule, lambda1, lambda2)
        if calib.payload is not None and calib.payload.size > sol.size:
            sol = calib.payload
    else:
        sol = solve_clique(wgraph, c, schedule, lambda1, lambda2)
    bits = sol.bits.copy()
    found = int(bits.sum())
    if q_target is not None and trim and found > q_target:
        verts = np.nonzero(bits)[0]
        norms = np.linalg.norm(basis.weighted_rows[wgraph.vertex_map[verts]], axis=1)
        keep = verts[np.lexsort((verts, -norms))[:q_target]]
        bits[:] = 0
        bits[keep] = 1
    params = {"c": float(c), "lambda1": lambda1, "lambda2": lambda2, "r": basis.rank, "k": candidates.k,
              "schedule": schedule.to_dict(), "clique_size_found": found}
    if q_target is not None:
        params["q_target"] = int(q_target)
        params["probe_schedule"] = probe_schedule.to_dict()
    placement = clique_from_solution(sol.g_c, bits, params)
    return CliquePlacementResult(placement=placement, energy=energy(sol.problem, bits),
                                 penalty_pairs=penalty_pairs(sol.problem, bits), threshold=float(c),
                                 clique_size=found, calibration=calib)
