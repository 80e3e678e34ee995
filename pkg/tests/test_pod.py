import numpy as np
import pytest

from cliquesense import pod
from conftest import low_rank


def test_identity_singular_values():
    svd = pod.compute_svd(pod.DataMatrix(np.eye(3)))
    np.testing.assert_allclose(svd.sigma, [1, 1, 1], atol=1e-14)


def test_rank_one_outer_product():
    u = np.array([2.0, 0, 0, 0])
    v = np.array([0, 3.0, 0])
    svd = pod.compute_svd(pod.DataMatrix(np.outer(u, v)))
    np.testing.assert_allclose(svd.sigma, [6, 0, 0], atol=1e-13)


@pytest.mark.parametrize("shape", [(8, 5), (5, 8), (1, 4), (4, 1), (200, 37)])
def test_svd_contract(rng, shape):
    X = rng.standard_normal(shape)
    svd = pod.compute_svd(pod.DataMatrix(X))
    p = min(shape)
    assert svd.U.shape == (shape[0], p) and svd.V.shape == (shape[1], p) and svd.sigma.shape == (p,)
    assert np.all(np.diff(svd.sigma) <= 0) and svd.sigma[-1] >= 0
    assert np.abs(svd.U.T @ svd.U - np.eye(p)).max() <= 1e-10
    assert np.abs(svd.V.T @ svd.V - np.eye(p)).max() <= 1e-10
    res = np.linalg.norm(X - svd.U @ np.diag(svd.sigma) @ svd.V.T) / np.linalg.norm(X)
    assert res <= 1e-12


def test_sign_convention_deterministic(rng):
    X = rng.standard_normal((30, 10))
    a = pod.compute_svd(pod.DataMatrix(X))
    b = pod.compute_svd(pod.DataMatrix(X.copy()))
    assert np.array_equal(a.U, b.U)
    idx = np.argmax(np.abs(a.U), axis=0)
    assert np.all(a.U[idx, np.arange(a.U.shape[1])] > 0)


def test_nonfinite_rejected_naming_entry():
    X = np.ones((4, 3))
    X[2, 1] = np.nan
    with pytest.raises(ValueError, match="nan at row 2, column 1"):
        pod.compute_svd(pod.DataMatrix(X))


def test_grid_shape_must_match():
    with pytest.raises(ValueError):
        pod.DataMatrix(np.ones((6, 2)), grid_shape=(2, 4))


def test_truncate_full_rank_is_exact(rng):
    X = rng.standard_normal((12, 7))
    svd = pod.compute_svd(pod.DataMatrix(X))
    b = pod.truncate(svd, 7)
    assert np.linalg.norm(X - b.modes @ np.diag(b.singular_values) @ svd.V.T) <= 1e-10 * np.linalg.norm(X)


def test_rank_two_truncation(rng):
    X = low_rank(rng, 40, 25, 2).values
    svd = pod.compute_svd(pod.DataMatrix(X))
    b = pod.truncate(svd, 2)
    Xr = b.modes @ np.diag(b.singular_values) @ svd.V[:, :2].T
    assert np.linalg.norm(X - Xr) <= 1e-10 * np.linalg.norm(X)


def test_truncation_residual_monotone(rng):
    X = rng.standard_normal((30, 12))
    svd = pod.compute_svd(pod.DataMatrix(X))
    res = [np.linalg.norm(X - svd.U[:, :r] @ np.diag(svd.sigma[:r]) @ svd.V[:, :r].T) for r in range(1, 13)]
    assert all(a >= b - 1e-12 for a, b in zip(res, res[1:]))


def test_truncate_bad_rank_names_interval(rng):
    svd = pod.compute_svd(pod.DataMatrix(rng.standard_normal((6, 4))))
    for r in (0, 5):
        with pytest.raises(ValueError, match=r"\[1, 4\]"):
            pod.truncate(svd, r)


def test_weighted_row_examples():
    b = pod.PodBasis(modes=np.array([[1.0, 0.0], [0.0, 1.0]]), singular_values=np.array([3.0, 2.0]))
    np.testing.assert_array_equal(pod.weighted_row(b, 0), [3.0, 0.0])
    b1 = pod.PodBasis(modes=np.array([[0.6, 0.8], [0.8, -0.6]]), singular_values=np.array([1.0, 1.0]))
    np.testing.assert_array_equal(pod.weighted_row(b1, 1), b1.modes[1])
    with pytest.raises(IndexError):
        pod.weighted_row(b, 2)


def test_weighted_rows_identity_and_bound(rng):
    X = pod.DataMatrix(rng.standard_normal((50, 20)))
    b, _ = pod.pod_basis(X, r=5)
    for j in range(b.n):
        for i in range(5):
            assert b.weighted_rows[j, i] == b.modes[j, i] * b.singular_values[i]
        assert np.linalg.norm(b.weighted_rows[j]) <= b.singular_values[0] * np.linalg.norm(b.modes[j]) + 1e-12


def test_hard_threshold_examples():
    s = np.array([10, 9, 0.1, 0.1, 0.1, 0.1, 0.1])
    assert pod.optimal_hard_threshold_rank(s, 7, 7) == 2
    assert pod.optimal_hard_threshold_rank(np.full(5, 3.0), 5, 5) == 1
    assert abs(pod.known_noise_coefficient(1.0) - 4 / np.sqrt(3)) < 1e-12
    assert abs(pod.omega_approx(1.0) - (0.56 - 0.95 + 1.82 + 1.43)) < 1e-12


def test_hard_threshold_scale_invariant(rng):
    s = np.sort(rng.exponential(size=40))[::-1]
    base = pod.optimal_hard_threshold_rank(s, 100, 40)
    for a in (1e-6, 0.3, 7.0, 1e8):
        assert pod.optimal_hard_threshold_rank(a * s, 100, 40) == base


def test_hard_threshold_all_zero_warns():
    with pytest.warns(RuntimeWarning):
        assert pod.optimal_hard_threshold_rank(np.zeros(4), 4, 4) == 1


def test_hard_threshold_recovers_planted_rank(rng):
    X = low_rank(rng, 300, 120, 6).values * 5 + 0.05 * rng.standard_normal((300, 120))
    svd = pod.compute_svd(pod.DataMatrix(X))
    assert pod.optimal_hard_threshold_rank(svd.sigma, 300, 120) == 6
    assert pod.optimal_hard_threshold_rank(svd.sigma, 300, 120, noise_sigma=0.05) == 6


def test_centering_opt_in(rng):
    X = rng.standard_normal((20, 10)) + 5.0
    raw = pod.compute_svd(pod.DataMatrix(X))
    cen = pod.compute_svd(pod.DataMatrix(X), center=True)
    assert raw.mean is None
    np.testing.assert_allclose(cen.mean, X.mean(axis=1))
    assert cen.sigma[0] < raw.sigma[0]
