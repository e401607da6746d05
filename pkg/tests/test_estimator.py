import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from pnest.common.errors import SimulationError
from pnest.estimator import (
    EstimatorState,
    inverse_consistency_check,
    load_state,
    new_estimator,
    predict,
    save_state,
    solve_step_size,
    step_size_iterates,
    update,
)
from pnest.models import Dimensions, SystemModel
from pnest.simulation import Controller, NoiseSpec, dare_solve, rollout

PLANT_A = np.array([[0.5, 1.0], [1.5, 0.3]])
PLANT_B = np.array([[1.0], [0.0]])


def test_new_estimator_defaults(rnn_model):
    state = new_estimator(rnn_model)
    assert_array_equal(state.theta_hat, np.zeros(6))
    assert_array_equal(state.P, np.eye(6))
    assert_array_equal(state.P_inv, np.eye(6))
    assert state.t == 0
    assert state.beta == 1.0


def test_new_estimator_projects_initial_guess(rnn_model):
    state = new_estimator(rnn_model, theta0=np.full(6, 3.0), D=2.0)
    assert np.linalg.norm(state.theta_hat) == pytest.approx(2.0, rel=1e-9)


def test_new_estimator_rejects_bad_arguments(rnn_model):
    with pytest.raises(ValueError):
        new_estimator(rnn_model, D=0.0)
    with pytest.raises(ValueError):
        new_estimator(rnn_model, step_mode="newton")


@pytest.mark.parametrize("mode", ["implicit_fixed_point", "explicit_conservative"])
def test_step_size_bounds(mode):
    rng = np.random.default_rng(0)
    for _ in range(200):
        phi = rng.standard_normal((6, 2)) * rng.uniform(0.01, 10.0)
        G = rng.standard_normal((6, 6))
        P = G @ G.T + 0.1 * np.eye(6)
        alpha_t = rng.uniform(0.01, 2.0)
        beta = rng.uniform(1.0, 3.0)
        step = solve_step_size(phi, P, alpha_t, beta, mode)
        assert 0 < step.eta <= alpha_t
        assert beta * step.eta * step.gain_norm <= 0.5 + 1e-9
        # the gain norm is the one of phi^T P_{t+1} phi
        assert step.gain_norm == pytest.approx(np.linalg.norm(phi.T @ step.P_next @ phi, 2), rel=1e-6)
        # the inverse recursion agrees with the covariance recursion
        P_inv_next = np.linalg.inv(P) + step.eta ** 2 * phi @ phi.T
        assert_allclose(step.P_next @ P_inv_next, np.eye(6), atol=1e-7)


def test_fixed_point_iterates_are_non_decreasing():
    S_eigs = np.array([0.5, 4.0])
    iterates = list(step_size_iterates(S_eigs, alpha_t=1.0, beta=1.0, fp_tol=1e-12, fp_max_iter=100))
    assert iterates[0] == pytest.approx(1.0 / (1.0 + 2.0 * 4.0))
    assert all(a <= b + 1e-15 for a, b in zip(iterates, iterates[1:]))


def test_explicit_step_is_conservative():
    rng = np.random.default_rng(1)
    phi = rng.standard_normal((6, 2))
    P = np.eye(6)
    implicit = solve_step_size(phi, P, 1.0, 1.0, "implicit_fixed_point")
    explicit = solve_step_size(phi, P, 1.0, 1.0, "explicit_conservative")
    assert explicit.eta <= implicit.eta
    assert explicit.fp_iters == 0


def test_zero_jacobian_step():
    step = solve_step_size(np.zeros((6, 2)), np.eye(6), 0.7, 1.0)
    assert step.eta == pytest.approx(0.7)
    assert_array_equal(step.P_next, np.eye(6))


def test_true_parameter_is_a_fixed_point(rnn_model, plant_theta):
    state = new_estimator(rnn_model, theta0=plant_theta, D=3.0)
    rng = np.random.default_rng(2)
    for _ in range(50):
        y, u = rng.standard_normal(2), rng.standard_normal(1)
        y_next = rnn_model.h(plant_theta, y, u)
        state, diag = update(state, rnn_model, y, u, y_next)
        assert_allclose(diag.innovation, 0.0, atol=1e-15)
    assert_allclose(state.theta_hat, plant_theta, atol=1e-14)
    assert state.t == 50


def test_invariants_along_closed_loop(plant_theta):
    model = SystemModel(Dimensions(2, 1), "rnn_sigmoid", alpha_form="activation")
    K, _ = dare_solve(PLANT_A, PLANT_B)
    controller = Controller(K, excitation="iid_sphere")
    samples = rollout(model, plant_theta, controller, NoiseSpec(), None, 1500, rng_seed=0)
    state = new_estimator(model, D=2.0, consistency_every=0)
    lam_prev = 1.0
    for sample in samples:
        P_inv_prev = state.P_inv.copy()
        state, diag = update(state, model, sample.x, sample.u, sample.y_next)
        assert diag.eta <= diag.alpha_t
        assert state.beta * diag.eta * diag.gain_norm <= 0.5 + 1e-9
        assert np.linalg.norm(state.theta_hat) <= 2.0 * (1 + 1e-10)
        lam = np.linalg.eigvalsh(state.P_inv)[0]
        assert lam >= lam_prev * (1 - 1e-9)
        lam_prev = lam
        assert np.all(np.linalg.eigvalsh(state.P_inv - P_inv_prev) >= -1e-9 * np.abs(state.P_inv).max())
    assert_allclose(state.P @ state.P_inv, np.eye(6), atol=1e-6)


def test_update_rejects_non_finite_observation(rnn_model):
    state = new_estimator(rnn_model)
    with pytest.raises(SimulationError) as info:
        update(state, rnn_model, [0.0, np.nan], [0.0], [0.0, 0.0])
    assert info.value.step == 0


def test_predict_does_not_change_state(rnn_model, plant_theta):
    state = new_estimator(rnn_model, theta0=plant_theta, D=3.0)
    before = state.copy()
    assert_allclose(predict(state, rnn_model, [0.1, 0.2], [0.3]), rnn_model.h(plant_theta, [0.1, 0.2], [0.3]))
    assert_array_equal(state.theta_hat, before.theta_hat)
    assert state.t == before.t


def test_inverse_consistency_check_repairs(rnn_model):
    state = new_estimator(rnn_model)
    rng = np.random.default_rng(3)
    for _ in range(20):
        state, _ = update(state, rnn_model, rng.standard_normal(2), rng.standard_normal(1), rng.random(2))
    assert inverse_consistency_check(state) <= 1e-6
    state.P_inv = state.P_inv * 1.1
    residual = inverse_consistency_check(state)
    assert residual > 1e-6
    assert state.refactorizations == 1
    assert_allclose(state.P @ state.P_inv, np.eye(6), atol=1e-9)


def test_snapshot_round_trip(tmp_path, rnn_model):
    state = new_estimator(rnn_model, step_mode="explicit_conservative")
    rng = np.random.default_rng(4)
    for _ in range(10):
        state, _ = update(state, rnn_model, rng.standard_normal(2), rng.standard_normal(1), rng.random(2))
    path = tmp_path / "state.json"
    save_state(state, str(path))
    loaded = load_state(str(path))
    assert isinstance(loaded, EstimatorState)
    assert_array_equal(loaded.theta_hat, state.theta_hat)
    assert_array_equal(loaded.P, state.P)
    assert_array_equal(loaded.P_inv, state.P_inv)
    assert loaded.t == 10
    assert loaded.step_mode == "explicit_conservative"
    # continuing from the snapshot gives the same trajectory
    y, u, y_next = rng.standard_normal(2), rng.standard_normal(1), rng.random(2)
    a, _ = update(state.copy(), rnn_model, y, u, y_next)
    b, _ = update(loaded, rnn_model, y, u, y_next)
    assert_array_equal(a.theta_hat, b.theta_hat)


def test_scalar_step_size_solves_cubic():
    step = solve_step_size(np.ones((1, 1)), np.eye(1), 1.0, 1.0, fp_tol=1e-14)
    roots = np.roots([1.0, -1.0, 3.0, -1.0])
    root = float(np.real(roots[np.abs(np.imag(roots)) < 1e-12][0]))
    assert 0 < root < 1
    assert step.eta == pytest.approx(root, abs=1e-8)
    assert step.eta ** 3 - step.eta ** 2 + 3 * step.eta - 1 == pytest.approx(0.0, abs=1e-8)


def test_fixed_point_cap_warning(caplog):
    iterates = list(step_size_iterates(np.ones(1), 1.0, 1.0, fp_tol=1e-14, fp_max_iter=100))
    needed = len(iterates) - 1
    assert needed >= 2
    with caplog.at_level("WARNING"):
        step = solve_step_size(np.ones((1, 1)), np.eye(1), 1.0, 1.0, fp_tol=1e-14, fp_max_iter=needed)
    assert step.fp_iters == needed
    assert "fp_max_iter" not in caplog.text
    with caplog.at_level("WARNING"):
        solve_step_size(np.ones((1, 1)), np.eye(1), 1.0, 1.0, fp_tol=1e-14, fp_max_iter=needed - 1)
    assert "fp_max_iter" in caplog.text


def test_scalar_linear_update():
    model = SystemModel(Dimensions(1, 1), "linear")
    state = new_estimator(model, D=2.0, step_mode="explicit_conservative")
    state, diag = update(state, model, [1.0], [0.0], [1.0])
    assert diag.eta == pytest.approx(1.0 / 3.0)
    assert state.P[0, 0] == pytest.approx(0.9)
    assert state.P[1, 1] == pytest.approx(1.0)
    assert_allclose(state.theta_hat, [0.3, 0.0], atol=1e-12)


def test_long_run_inverse_consistency(plant_theta):
    model = SystemModel(Dimensions(2, 1), "rnn_sigmoid", alpha_form="activation")
    K, _ = dare_solve(PLANT_A, PLANT_B)
    samples = rollout(model, plant_theta, Controller(K, excitation="iid_sphere"), NoiseSpec(), None, 20000,
                      rng_seed=5)
    state = new_estimator(model, D=2.0, consistency_every=1000)
    for sample in samples:
        state, _ = update(state, model, sample.x, sample.u, sample.y_next)
    assert state.refactorizations <= 10
    assert np.linalg.norm(state.P @ state.P_inv - np.eye(6), np.inf) <= 1e-6
