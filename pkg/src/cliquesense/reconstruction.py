"""Field reconstruction from sensor readings and evaluation metrics.

Two paths share the measurement operator Theta = C U (rows of the
unweighted modes at the sensors):

* pseudo-inverse: a_l = pinv(Theta) y_l, x_l ~ U a_l, for clean validation data;
* denoising: phi_l = spatial mean of the noisy field around every sensor,
  alpha_l = argmin (1/2q)|phi_l - Theta alpha|^2 + lambda |alpha|_1 with lambda
  chosen per snapshot by K-fold CV and the one-standard-error rule.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ._accel import fallback_errstate, kernel
from .pod import DataMatrix

CD_TOL = 1e-9
CD_MAX_PASSES = 10_000
PINV_RCOND = 1e-12


@dataclass(frozen=True)
class MeasurementOperator:
    placement: object
    theta: np.ndarray
    theta_pinv: np.ndarray
    rank: int

    @property
    def q(self):
        return self.theta.shape[0]

    @property
    def r(self):
        return self.theta.shape[1]

    @property
    def rank_deficient(self):
        return self.rank < min(self.theta.shape)


@dataclass
class ReconstructionReport:
    method: str
    coefficients: np.ndarray
    fields: Optional[np.ndarray]
    e_reconst: float
    rmse_by_probe: np.ndarray
    probe_series: np.ndarray
    snapshots: np.ndarray
    metadata: Dict = field(default_factory=dict)

    @property
    def rmse_mean(self):
        return float(np.mean(self.rmse_by_probe)) if self.rmse_by_probe.size else float("nan")


def pinv_svd(A, rcond=PINV_RCOND):
    """Moore-Penrose inverse via SVD; singular values below rcond*s_max are dropped."""
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    cutoff = rcond * (s[0] if s.size else 0.0)
    keep = s > cutoff
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T, int(keep.sum())


def make_operator(basis, placement):
    idx = placement.indices
    if idx.max() >= basis.n:
        raise IndexError(f"placement index {idx.max()} out of range for n={basis.n}")
    theta = basis.modes[idx]
    theta_pinv, rank = pinv_svd(theta)
    return MeasurementOperator(placement=placement, theta=theta, theta_pinv=theta_pinv, rank=rank)


def pinv_coefficients(op, y):
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != op.q:
        raise ValueError(f"expected {op.q} sensor readings, got {y.shape[0]}")
    return op.theta_pinv @ y


def reconstruct_field(basis, a):
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] != basis.rank:
        raise ValueError(f"coefficient length {a.shape[0]} does not match rank {basis.rank}")
    return basis.modes @ a


def reconstruction_error(X, Xr):
    """Snapshot-averaged relative squared error (1/N) sum |x_l - xr_l|^2 / |x_l|^2."""
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    Xr = np.asarray(getattr(Xr, "values", Xr), dtype=np.float64)
    if X.ndim == 1:
        X, Xr = X[:, None], Xr.reshape(-1, 1)
    if X.shape != Xr.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {Xr.shape}")
    norms = np.einsum("ij,ij->j", X, X)
    zero = np.nonzero(norms == 0)[0]
    if zero.size:
        raise ValueError(f"snapshot column {zero[0]} has zero norm")
    D = X - Xr
    return float(np.mean(np.einsum("ij,ij->j", D, D) / norms))


def probe_rmse(reconstructed, reference):
    a = np.asarray(reconstructed, dtype=np.float64).ravel()
    b = np.asarray(reference, dtype=np.float64).ravel()
    if a.size != b.size or a.size < 1:
        raise ValueError(f"series lengths differ or are empty: {a.size} vs {b.size}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _point_rc(point, grid_shape):
    nv, nh = grid_shape
    if isinstance(point, (tuple, list, np.ndarray)) and np.ndim(point) == 1 and len(point) == 2:
        i, j = int(point[0]), int(point[1])
    else:
        flat = int(point)
        if not 0 <= flat < nv * nh:
            raise IndexError(f"point {flat} out of range for grid {nv}x{nh}")
        i, j = divmod(flat, nh)
    if not (0 <= i < nv and 0 <= j < nh):
        raise IndexError(f"point ({i}, {j}) out of range for grid {nv}x{nh}")
    return i, j


def window_indices(point, grid_shape, radius):
    """Flat indices of the (2R+1)^2 window around ``point``, clipped to the grid."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    nv, nh = grid_shape
    i, j = _point_rc(point, grid_shape)
    rows = np.arange(max(i - radius, 0), min(i + radius, nv - 1) + 1)
    cols = np.arange(max(j - radius, 0), min(j + radius, nh - 1) + 1)
    return (rows[:, None] * nh + cols[None, :]).ravel()


def spatial_mean_filter(field_values, grid_shape, point, radius=1):
    if grid_shape is None:
        raise ValueError("spatial filtering needs a grid shape")
    f = np.asarray(field_values, dtype=np.float64)
    return float(f[window_indices(point, grid_shape, radius)].mean())


def filter_at_points(values, grid_shape, points, radius=1):
    """Window means of every column of ``values`` (n x L) at each point -> q x L."""
    if grid_shape is None:
        raise ValueError("spatial filtering needs a grid shape")
    out = np.empty((len(points), values.shape[1]))
    for s, p in enumerate(points):
        out[s] = values[window_indices(p, grid_shape, radius)].mean(axis=0)
    return out


POLISH_EVERY = 3


@kernel
def _kkt_polish(G, b, thresh, coef):
    """Active-set jump to the exact minimizer, seeded with the current CD support.

    The sign-fixed stationarity system is solved on the support; coordinates
    whose solution disagrees with their sign are dropped, and the worst KKT
    violator outside the support is added with the sign of its gradient.
    ``coef`` is only overwritten once the full KKT conditions hold.
    """
    r = b.size
    active = coef != 0.0
    sgn = np.sign(coef)
    slack = thresh * (1.0 + 1e-10) + 1e-13 * (np.abs(b).max() + 1.0)
    for _ in range(2 * r + 2):
        na = 0
        for i in range(r):
            if active[i]:
                na += 1
        act = np.empty(na, dtype=np.int64)
        k = 0
        for i in range(r):
            if active[i]:
                act[k] = i
                k += 1
        x = np.zeros(na)
        if na > 0:
            GA = np.empty((na, na))
            rhs = np.empty(na)
            for u in range(na):
                rhs[u] = b[act[u]] - thresh * sgn[act[u]]
                for v in range(na):
                    GA[u, v] = G[act[u], act[v]]
            try:
                x = np.linalg.solve(GA, rhs)
            except Exception:
                return False
            for u in range(na):
                if not np.isfinite(x[u]):
                    return False
        flipped = False
        for u in range(na):
            if x[u] * sgn[act[u]] <= 0.0:
                active[act[u]] = False
                flipped = True
        if flipped:
            continue
        worst = -1
        worst_g = 0.0
        worst_v = slack
        for i in range(r):
            if not active[i]:
                g = b[i]
                for u in range(na):
                    g -= G[i, act[u]] * x[u]
                if abs(g) > worst_v:
                    worst_v = abs(g)
                    worst = i
                    worst_g = g
        if worst >= 0:
            active[worst] = True
            sgn[worst] = 1.0 if worst_g > 0 else -1.0
            continue
        coef[:] = 0.0
        for u in range(na):
            coef[act[u]] = x[u]
        return True
    return False


@kernel
def _cd_gram(G, b, n_rows, lam, coef, tol, max_pass, yy, history):
    """Cyclic coordinate descent on (1/2n)|y - A a|^2 + lam |a|_1 given G = A^T A, b = A^T y.

    Every few passes an active-set solve seeded with the current support is
    tried; the candidate is kept only if it satisfies the full KKT
    conditions, and the following pass then confirms convergence. The polish
    interval doubles after each failed attempt.
    """
    r = b.size
    thresh = n_rows * lam
    next_polish = POLISH_EVERY
    gap = POLISH_EVERY
    for p in range(max_pass):
        max_delta = 0.0
        for i in range(r):
            gii = G[i, i]
            if gii <= 0.0:
                new = 0.0
            else:
                rho = b[i]
                for j in range(r):
                    rho -= G[i, j] * coef[j]
                rho += gii * coef[i]
                if rho > thresh:
                    new = (rho - thresh) / gii
                elif rho < -thresh:
                    new = (rho + thresh) / gii
                else:
                    new = 0.0
            d = abs(new - coef[i])
            if d > max_delta:
                max_delta = d
            coef[i] = new
        if history.size > 0:
            quad = 0.0
            lin = 0.0
            l1 = 0.0
            for i in range(r):
                lin += b[i] * coef[i]
                l1 += abs(coef[i])
                for j in range(r):
                    quad += coef[i] * G[i, j] * coef[j]
            history[p] = 0.5 * (yy - 2.0 * lin + quad) / n_rows + lam * l1
        if max_delta < tol:
            return p + 1, True
        if p + 1 == next_polish:
            if not _kkt_polish(G, b, thresh, coef):
                gap *= 2
            next_polish += gap
    return max_pass, False


@kernel
def _lasso_cv_one(theta, phi, fold_of, n_folds, G_folds, n_train, G_full, lambdas, tol, max_pass,
                  cv_mean, cv_se, coef):
    q, r = theta.shape
    L = lambdas.size
    errs = np.zeros((L, n_folds))
    b = np.empty(r)
    work = np.zeros(r)
    empty = np.empty(0)
    converged = True
    for f in range(n_folds):
        for i in range(r):
            s = 0.0
            for t in range(q):
                if fold_of[t] != f:
                    s += theta[t, i] * phi[t]
            b[i] = s
        work[:] = 0.0
        n_test = 0
        for t in range(q):
            if fold_of[t] == f:
                n_test += 1
        for li in range(L):
            _, ok = _cd_gram(G_folds[f], b, n_train[f], lambdas[li], work, tol, max_pass, 0.0, empty)
            converged = converged and ok
            sse = 0.0
            for t in range(q):
                if fold_of[t] == f:
                    pred = 0.0
                    for i in range(r):
                        pred += theta[t, i] * work[i]
                    res = phi[t] - pred
                    sse += res * res
            errs[li, f] = sse / n_test
    for li in range(L):
        m = 0.0
        for f in range(n_folds):
            m += errs[li, f]
        m /= n_folds
        v = 0.0
        for f in range(n_folds):
            v += (errs[li, f] - m) ** 2
        cv_mean[li] = m
        cv_se[li] = np.sqrt(v / (n_folds - 1)) / np.sqrt(n_folds)
    imin = 0
    for li in range(1, L):
        if cv_mean[li] < cv_mean[imin]:
            imin = li
    bound = cv_mean[imin] + cv_se[imin]
    sel = imin
    for li in range(L):
        if cv_mean[li] <= bound:
            sel = li
            break
    for i in range(r):
        s = 0.0
        for t in range(q):
            s += theta[t, i] * phi[t]
        b[i] = s
    coef[:] = 0.0
    for li in range(sel + 1):
        _, ok = _cd_gram(G_full, b, float(q), lambdas[li], coef, tol, max_pass, 0.0, empty)
        converged = converged and ok
    return sel, converged


@kernel
def _lasso_cv_batch(theta, Phi, fold_of, n_folds, G_folds, n_train, G_full, grid, relative, tol, max_pass,
                    coefs, selected):
    q, r = theta.shape
    L = grid.size
    cv_mean = np.empty(L)
    cv_se = np.empty(L)
    lambdas = np.empty(L)
    phi = np.empty(q)
    coef = np.empty(r)
    n_bad = 0
    for s in range(Phi.shape[1]):
        for t in range(q):
            phi[t] = Phi[t, s]
        if relative:
            lmax = 0.0
            for i in range(r):
                c = 0.0
                for t in range(q):
                    c += theta[t, i] * phi[t]
                if abs(c) > lmax:
                    lmax = abs(c)
            lmax /= q
            for li in range(L):
                lambdas[li] = lmax * grid[li]
        else:
            lambdas[:] = grid
        sel, ok = _lasso_cv_one(theta, phi, fold_of, n_folds, G_folds, n_train, G_full, lambdas, tol, max_pass,
                                cv_mean, cv_se, coef)
        if not ok:
            n_bad += 1
        coefs[:, s] = coef
        selected[s] = lambdas[sel]
    return n_bad


@dataclass
class LassoFit:
    coef: np.ndarray
    passes: int
    converged: bool
    objective_history: Optional[np.ndarray] = None


def lasso_objective(op, phi, alpha, lam):
    theta = op.theta if isinstance(op, MeasurementOperator) else np.asarray(op)
    res = np.asarray(phi) - theta @ alpha
    return float(res @ res / (2 * theta.shape[0]) + lam * np.abs(alpha).sum())


def lasso_fit(op, phi, lam, tol=CD_TOL, max_passes=CD_MAX_PASSES, track_objective=False):
    """Minimize (1/2q)|phi - Theta alpha|^2 + lam |alpha|_1 by cyclic coordinate descent from zero."""
    theta = op.theta if isinstance(op, MeasurementOperator) else np.asarray(op, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if phi.shape != (theta.shape[0],):
        raise ValueError(f"phi must have length {theta.shape[0]}")
    G = theta.T @ theta
    b = theta.T @ phi
    coef = np.zeros(theta.shape[1])
    hist = np.empty(max_passes if track_objective else 0)
    with fallback_errstate():
        passes, ok = _cd_gram(G, b, float(theta.shape[0]), float(lam), coef, tol, max_passes, float(phi @ phi), hist)
    return LassoFit(coef=coef, passes=int(passes), converged=bool(ok),
                    objective_history=hist[:passes].copy() if track_objective else None)


def default_lambda_grid(n_lambda=50, ratio=1e-4):
    """Relative grid: fractions of lambda_max, log-spaced from 1 to ``ratio``."""
    return np.geomspace(1.0, ratio, n_lambda)


def _fold_setup(theta, folds):
    q = theta.shape[0]
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if q < folds:
        raise ValueError(f"{q} sensors cannot be split into {folds} folds")
    fold_of = (np.arange(q) % folds).astype(np.int64)
    G_folds = np.empty((folds, theta.shape[1], theta.shape[1]))
    n_train = np.empty(folds)
    for f in range(folds):
        tr = theta[fold_of != f]
        G_folds[f] = tr.T @ tr
        n_train[f] = tr.shape[0]
    return fold_of, G_folds, n_train


@dataclass
class LassoCV:
    lam: float
    coef: np.ndarray
    lambdas: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    converged: bool

    def __iter__(self):
        yield self.lam
        yield self.coef


def lasso_cv(op, phi, folds=10, lambda_grid=None, tol=CD_TOL, max_passes=CD_MAX_PASSES):
    """K-fold CV over a descending lambda grid; picks the largest lambda within one SE of the minimum.

    Fold of sensor t is ``t % folds``. Without ``lambda_grid`` the default
    50-point relative grid below lambda_max = max|Theta^T phi|/q is used.
    """
    theta = op.theta if isinstance(op, MeasurementOperator) else np.asarray(op, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != (theta.shape[0],):
        raise ValueError(f"phi must have length {theta.shape[0]}")
    if lambda_grid is None:
        lambdas = np.abs(theta.T @ phi).max() / theta.shape[0] * default_lambda_grid()
    else:
        lambdas = np.asarray(lambda_grid, dtype=np.float64).ravel()
        if lambdas.size == 0:
            raise ValueError("empty lambda grid")
        if np.any(np.diff(lambdas) > 0) or np.any(lambdas < 0):
            raise ValueError("lambda grid must be nonnegative and descending")
    fold_of, G_folds, n_train = _fold_setup(theta, folds)
    cv_mean = np.empty(lambdas.size)
    cv_se = np.empty(lambdas.size)
    coef = np.empty(theta.shape[1])
    with fallback_errstate():
        sel, ok = _lasso_cv_one(theta, phi, fold_of, folds, G_folds, n_train, theta.T @ theta, lambdas, tol,
                                max_passes, cv_mean, cv_se, coef)
    return LassoCV(lam=float(lambdas[sel]), coef=coef, lambdas=lambdas, cv_mean=cv_mean, cv_se=cv_se,
                   converged=bool(ok))


def lasso_cv_batch(op, Phi, folds=10, lambda_grid=None, relative=None, tol=CD_TOL, max_passes=CD_MAX_PASSES):
    """:func:`lasso_cv` for every column of ``Phi`` (q x L). Returns (coefs r x L, lambdas, n_unconverged).

    ``lambda_grid=None`` uses the default relative grid. An explicit grid is
    absolute unless ``relative=True``.
    """
    theta = np.ascontiguousarray(op.theta if isinstance(op, MeasurementOperator) else op, dtype=np.float64)
    Phi = np.ascontiguousarray(Phi, dtype=np.float64)
    if lambda_grid is None:
        grid, rel = default_lambda_grid(), True
    else:
        grid = np.asarray(lambda_grid, dtype=np.float64).ravel()
        rel = bool(relative)
        if grid.size == 0 or np.any(np.diff(grid) > 0) or np.any(grid < 0):
            raise ValueError("lambda grid must be non-empty, nonnegative and descending")
    fold_of, G_folds, n_train = _fold_setup(theta, folds)
    coefs = np.empty((theta.shape[1], Phi.shape[1]))
    selected = np.empty(Phi.shape[1])
    with fallback_errstate():
        n_bad = _lasso_cv_batch(theta, Phi, fold_of, folds, G_folds, n_train, theta.T @ theta, grid, rel, tol,
                                max_passes, coefs, selected)
    return coefs, selected, int(n_bad)


def _finish_report(method, basis, coefs, snapshots, reference, probes, keep_fields, metadata):
    probes = [] if probes is None else list(probes)
    probe_idx = np.asarray([_flat(p, basis.grid_shape) for p in probes], dtype=np.int64)
    probe_series = basis.modes[probe_idx] @ coefs if probe_idx.size else np.zeros((0, coefs.shape[1]))
    fields = None
    e = float("nan")
    if reference is not None or keep_fields:
        fields = basis.modes @ coefs
        if reference is not None:
            ref = reference[:, snapshots]
            e = reconstruction_error(ref, fields)
            rmse = np.array([probe_rmse(probe_series[i], ref[p]) for i, p in enumerate(probe_idx)])
        if not keep_fields:
            fields = None
    if reference is None:
        rmse = np.full(probe_idx.size, np.nan)
    return ReconstructionReport(method=method, coefficients=coefs, fields=fields, e_reconst=e,
                                rmse_by_probe=rmse, probe_series=probe_series, snapshots=snapshots,
                                metadata=metadata)


def _flat(p, grid_shape):
    if grid_shape is None:
        return int(p)
    i, j = _point_rc(p, grid_shape)
    return i * grid_shape[1] + j


def _snapshot_index(m, snapshots):
    return np.arange(m) if snapshots is None else np.asarray(snapshots, dtype=np.int64)


def pinv_pipeline(basis, placement, data, snapshots=None, reference=None, probes=None, keep_fields=False):
    """Pseudo-inverse reconstruction from raw sensor values; errors against ``reference`` (default: data)."""
    X = data.values if isinstance(data, DataMatrix) else np.asarray(data)
    snaps = _snapshot_index(X.shape[1], snapshots)
    op = make_operator(basis, placement)
    coefs = op.theta_pinv @ X[np.ix_(placement.indices, snaps)]
    ref = X if reference is None else getattr(reference, "values", reference)
    return _finish_report("pinv", basis, coefs, snaps, ref, probes, keep_fields,
                          {"rank_deficient": op.rank_deficient, "theta_rank": op.rank})


def denoise_pipeline(basis, placement, noisy, radius=1, lambda_grid=None, folds=10, snapshots=None,
                     reference=None, probes=None, keep_fields=False, relative_grid=None):
    """Filter at the sensors, fit LASSO-CV amplitudes per snapshot and rebuild the fields."""
    if not isinstance(noisy, DataMatrix):
        noisy = DataMatrix(noisy, grid_shape=basis.grid_shape)
    grid_shape = noisy.grid_shape or basis.grid_shape
    if grid_shape is None:
        raise ValueError("denoising needs image-shaped data (grid_shape)")
    snaps = _snapshot_index(noisy.m, snapshots)
    op = make_operator(basis, placement)
    Phi = filter_at_points(noisy.values[:, snaps], grid_shape, placement.indices, radius)
    coefs, lams, n_bad = lasso_cv_batch(op, Phi, folds=folds, lambda_grid=lambda_grid, relative=relative_grid)
    ref = noisy.values if reference is None else getattr(reference, "values", reference)
    meta = {"rank_deficient": op.rank_deficient, "theta_rank": op.rank, "radius": radius, "folds": folds,
            "selected_lambda_median": float(np.median(lams)), "unconverged_snapshots": n_bad}
    return _finish_report("lasso", basis, coefs, snaps, ref, probes, keep_fields, meta)
