"""Snapshot POD: economy SVD, rank truncation and singular-value-weighted rows."""
import warnings
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


class SvdError(RuntimeError):
    """The SVD kernel failed to converge."""


@dataclass(frozen=True)
class DataMatrix:
    """n x m snapshot matrix; column ``l`` is the snapshot at time step ``l``.

    ``grid_shape`` is ``(n_v, n_h)`` for image data reshaped row-major.
    """

    values: np.ndarray
    grid_shape: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"snapshot matrix must be 2-D and non-empty, got shape {values.shape}")
        object.__setattr__(self, "values", values)
        if self.grid_shape is not None:
            nv, nh = (int(s) for s in self.grid_shape)
            if nv * nh != values.shape[0]:
                raise ValueError(f"grid_shape {nv}x{nh} does not match {values.shape[0]} rows")
            object.__setattr__(self, "grid_shape", (nv, nh))

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def column(self, l):
        return self.values[:, l]

    def check_finite(self):
        bad = ~np.isfinite(self.values)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValueError(f"non-finite entry {float(self.values[i, j])} at row {i}, column {j}")


@dataclass(frozen=True)
class SvdFactorization:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    mean: Optional[np.ndarray] = None

    @property
    def p(self):
        return self.sigma.shape[0]


@dataclass(frozen=True)
class PodBasis:
    """Rank-r POD basis.

    ``weighted_rows[j]`` is the row vector of ``modes @ diag(singular_values)``
    for spatial point ``j``; it feeds the similarity graph, while ``modes``
    alone is used for reconstruction.
    """

    modes: np.ndarray
    singular_values: np.ndarray
    grid_shape: Optional[Tuple[int, int]] = None
    weighted_rows: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=np.float64)
        sv = np.asarray(self.singular_values, dtype=np.float64)
        if modes.ndim != 2 or sv.shape != (modes.shape[1],):
            raise ValueError("modes must be n x r and singular_values length r")
        if modes.shape[1] < 1:
            raise ValueError("rank must be at least 1")
        if np.any(sv < 0) or np.any(np.diff(sv) > 0):
            raise ValueError("singular values must be nonnegative and descending")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "singular_values", sv)
        object.__setattr__(self, "weighted_rows", modes * sv[None, :])

    @property
    def rank(self):
        return self.modes.shape[1]

    @property
    def n(self):
        return self.modes.shape[0]


def compute_svd(X, center=False):
    """Economy SVD ``X = U diag(sigma) V^T`` with p = min(n, m).

    Signs are normalized so the largest-magnitude entry of each column of U
    is positive, which makes the factorization reproducible across LAPACK
    builds. With ``center=True`` the temporal mean is removed first and kept
    on the result.
    """
    if not isinstance(X, DataMatrix):
        X = DataMatrix(X)
    X.check_finite()
    A = X.values
    mean = None
    if center:
        mean = A.mean(axis=1)
        A = A - mean[:, None]
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdError(f"SVD did not converge for {A.shape[0]}x{A.shape[1]} input: {exc}") from exc
    pivot = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivot, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs
    V = Vt.T * signs
    return SvdFactorization(U=U, sigma=s, V=V, mean=mean)


def truncate(svd, r, grid_shape=None):
    """Keep the leading ``r`` modes."""
    p = svd.p
    if not 1 <= r <= p:
        raise ValueError(f"rank r={r} outside the valid interval [1, {p}]")
    return PodBasis(modes=svd.U[:, :r].copy(), singular_values=svd.sigma[:r].copy(), grid_shape=grid_shape)


def weighted_row(basis, j):
    if not 0 <= j < basis.n:
        raise IndexError(f"spatial index {j} out of range [0, {basis.n})")
    return basis.weighted_rows[j]


def omega_approx(beta):
    """Cubic fit of the unknown-noise threshold coefficient (Gavish & Donoho 2014)."""
    return 0.56 * beta**3 - 0.95 * beta**2 + 1.82 * beta + 1.43


def known_noise_coefficient(beta):
    """lambda*(beta); equals 4/sqrt(3) for square matrices."""
    return np.sqrt(2.0 * (beta + 1.0) + 8.0 * beta / ((beta + 1.0) + np.sqrt(beta**2 + 14.0 * beta + 1.0)))


def optimal_hard_threshold_rank(sigma, n, m, noise_sigma=None):
    """Number of singular values above the optimal hard threshold.

    With ``noise_sigma=None`` the noise level is unknown and the threshold is
    ``omega(beta) * median(sigma)``; otherwise ``lambda*(beta) * sqrt(max(n, m)) * noise_sigma``.
    The result is clamped to at least 1.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.size == 0:
        raise ValueError("empty singular value list")
    if n < 1 or m < 1:
        raise ValueError("matrix dimensions must be positive")
    beta = min(n, m) / max(n, m)
    if not np.any(sigma > 0):
        warnings.warn("all singular values are zero; returning rank 1", RuntimeWarning, stacklevel=2)
        return 1
    if noise_sigma is None:
        tau = omega_approx(beta) * np.median(sigma)
    else:
        tau = known_noise_coefficient(beta) * np.sqrt(max(n, m)) * noise_sigma
    return max(int(np.count_nonzero(sigma > tau)), 1)


def pod_basis(X, r=None, center=False):
    """SVD plus truncation; ``r=None`` picks the hard-threshold rank."""
    if not isinstance(X, DataMatrix):
        X = DataMatrix(X)
    svd = compute_svd(X, center=center)
    if r is None:
        r = optimal_hard_threshold_rank(svd.sigma, X.n, X.m)
    return truncate(svd, r, grid_shape=X.grid_shape), svd
