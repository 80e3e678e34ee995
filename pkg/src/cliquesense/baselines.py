"""Greedy determinant-based and random sensor placement baselines."""
from dataclasses import dataclass
from typing import List

import numpy as np

from .placement import Placement
from .rng import SplitMix64


@dataclass(frozen=True)
class TrialStatistics:
    trials: int
    mean: float
    std_dev: float
    per_trial: List[float]


def trial_statistics(values):
    """Mean and population standard deviation of per-trial values."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("no trial values")
    arr = np.asarray(vals)
    return TrialStatistics(trials=len(vals), mean=float(arr.mean()), std_dev=float(arr.std()), per_trial=vals)


def d_optimality(modes, rows):
    """det(Theta Theta^T) for q <= r, det(Theta^T Theta) for q > r."""
    theta = modes[np.asarray(rows)]
    q, r = theta.shape
    return float(np.linalg.det(theta @ theta.T if q <= r else theta.T @ theta))


def greedy_determinant_placement(basis, candidates, q):
    """Determinant-maximizing greedy selection over unweighted POD rows.

    While fewer than r sensors are chosen the candidate maximizing
    det(Theta Theta^T) is added, which is the one with the largest residual
    after projecting out the span of the chosen rows. Afterwards the
    candidate maximizing det(Theta^T Theta), i.e. u^T (Theta^T Theta)^-1 u,
    is added. Ties go to the smallest spatial index; earlier picks are never
    revisited.
    """
    k = candidates.k
    if not 1 <= q <= k:
        raise ValueError(f"q must be in [1, {k}], got {q}")
    U = basis.modes[candidates.indices]
    r = U.shape[1]
    available = np.ones(k, dtype=bool)
    chosen = []

    R = U.copy()
    scale = float(np.max(np.einsum("ij,ij->i", U, U))) or 1.0
    while len(chosen) < min(q, r):
        res2 = np.einsum("ij,ij->i", R, R)
        score = np.where(available, res2, -np.inf)
        j = int(np.argmax(score))
        if res2[j] <= 1e-24 * scale:
            break
        chosen.append(j)
        available[j] = False
        e = R[j] / np.sqrt(res2[j])
        R -= np.outer(R @ e, e)

    if len(chosen) < q:
        theta = U[chosen]
        M = np.linalg.pinv(theta.T @ theta)
        full_rank = len(chosen) >= r and np.linalg.matrix_rank(theta) == r
        while len(chosen) < q:
            score = np.einsum("ij,jk,ik->i", U, M, U)
            score = np.where(available, score, -np.inf)
            j = int(np.argmax(score))
            chosen.append(j)
            available[j] = False
            if full_rank:
                Mu = M @ U[j]
                M -= np.outer(Mu, Mu) / (1.0 + U[j] @ Mu)
            else:
                theta = U[chosen]
                M = np.linalg.pinv(theta.T @ theta)
                full_rank = np.linalg.matrix_rank(theta) == r

    return Placement(indices=candidates.indices[chosen], method="greedy",
                     params={"r": basis.rank, "k": k})


def random_placement(candidates, q, seed):
    """``q`` distinct candidates by a SplitMix64-driven partial Fisher-Yates shuffle."""
    k = candidates.k
    if not 1 <= q <= k:
        raise ValueError(f"q must be in [1, {k}], got {q}")
    rng = SplitMix64(seed)
    pool = candidates.indices.copy()
    for i in range(q):
        j = i + rng.below(k - i)
        pool[i], pool[j] = pool[j], pool[i]
    return Placement(indices=pool[:q].copy(), method="random", params={"seed": int(seed), "k": k})
