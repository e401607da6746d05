import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from pnest.common.errors import NonFiniteError, NotPositiveDefiniteError
from pnest.estimator import project_weighted_ball, secular_root, weighted_objective


def random_spd(rng, p, cond):
    Q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    eigs = np.logspace(0, np.log10(cond), p)
    rng.shuffle(eigs)
    M = Q @ np.diag(eigs) @ Q.T
    return 0.5 * (M + M.T)


def bisection_oracle(M, x, D, iters=300):
    """Project by bisection on the multiplier, independent of the Newton solver."""
    lam, V = np.linalg.eigh(M)
    c = V.T @ x
    def norm_at(mu):
        return np.linalg.norm(lam * c / (lam + mu))
    lo, hi = 0.0, 1.0
    while norm_at(hi) > D:
        hi *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if norm_at(mid) > D:
            lo = mid
        else:
            hi = mid
    return V @ (lam * c / (lam + hi))


def test_interior_point_is_returned_unchanged():
    x = np.array([0.3, -0.4, 0.5])
    w = project_weighted_ball(np.diag([1.0, 10.0, 100.0]), x, 1.0)
    assert_array_equal(w, x)
    assert w is not x


def test_identity_weight_scales_radially():
    x = np.array([3.0, 4.0])
    assert_allclose(project_weighted_ball(np.eye(2), x, 2.0), x * 2.0 / 5.0, rtol=1e-9)


def test_diagonal_weight_moves_cheap_coordinate_more():
    x = np.array([2.0, 2.0])
    w = project_weighted_ball(np.diag([100.0, 1.0]), x, 1.0)
    assert np.linalg.norm(w) == pytest.approx(1.0, rel=1e-9)
    # moving along the heavily weighted axis is expensive
    assert abs(x[0] - w[0]) < abs(x[1] - w[1])


def test_matches_bisection_oracle():
    rng = np.random.default_rng(0)
    for _ in range(300):
        p = int(rng.integers(1, 13))
        cond = 10.0 ** rng.uniform(0, 6)
        M = random_spd(rng, p, cond)
        D = rng.uniform(0.5, 3.0)
        x = rng.standard_normal(p)
        x *= D * rng.uniform(1.01, 20.0) / np.linalg.norm(x)
        w = project_weighted_ball(M, x, D)
        oracle = bisection_oracle(M, x, D)
        assert np.linalg.norm(w) <= D * (1 + 1e-10)
        f, f_oracle = weighted_objective(M, x, w), weighted_objective(M, x, oracle)
        assert abs(f - f_oracle) <= 1e-6 * max(1.0, f_oracle)


def test_secular_root_satisfies_equation():
    lam = np.array([1.0, 5.0, 50.0])
    c = np.array([2.0, -1.0, 3.0])
    mu = secular_root(lam, c, 1.0)
    assert mu > 0
    assert np.linalg.norm(lam * c / (lam + mu)) == pytest.approx(1.0, rel=1e-9)


def test_secular_root_rejects_interior_point():
    with pytest.raises(ValueError):
        secular_root(np.ones(2), np.array([0.1, 0.1]), 1.0)


def test_rejects_bad_weights():
    x = np.array([3.0, 0.0])
    with pytest.raises(NotPositiveDefiniteError):
        project_weighted_ball(np.diag([1.0, -1.0]), x, 1.0)
    with pytest.raises(NotPositiveDefiniteError):
        project_weighted_ball(np.array([[1.0, 0.5], [0.0, 1.0]]), x, 1.0)
    with pytest.raises(NonFiniteError):
        project_weighted_ball(np.eye(2), np.array([np.nan, 1.0]), 1.0)
    with pytest.raises(ValueError):
        project_weighted_ball(np.eye(2), x, 0.0)


def test_two_dimensional_example_against_oracle():
    M = np.diag([1.0, 4.0])
    x = np.array([2.0, 2.0])
    w = project_weighted_ball(M, x, 1.0, tol=1e-12)
    w_ref = bisection_oracle(M, x, 1.0)
    assert np.linalg.norm(w) == pytest.approx(1.0, rel=1e-9)
    assert_allclose(w, w_ref, atol=1e-8)
    assert weighted_objective(M, x, w) <= weighted_objective(M, x, w_ref) * (1 + 1e-9)


def test_projection_is_idempotent():
    rng = np.random.default_rng(11)
    for _ in range(100):
        M = random_spd(rng, 5, 1e4)
        x = 5.0 * rng.standard_normal(5)
        w = project_weighted_ball(M, x, 1.0, tol=1e-12)
        assert_allclose(project_weighted_ball(M, w, 1.0, tol=1e-12), w, atol=1e-10)


def test_projection_is_non_expansive_in_weighted_norm():
    rng = np.random.default_rng(12)
    for _ in range(200):
        M = random_spd(rng, 4, 1e3)
        x, y = 4.0 * rng.standard_normal(4), 4.0 * rng.standard_normal(4)
        wx = project_weighted_ball(M, x, 1.5, tol=1e-12)
        wy = project_weighted_ball(M, y, 1.5, tol=1e-12)
        assert weighted_objective(M, wx, wy) <= weighted_objective(M, x, y) * (1 + 1e-8) + 1e-12
