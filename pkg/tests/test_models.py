import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.special import expit, ndtr
from scipy.stats import norm

from pnest.common.errors import ConfigError, DimensionError
from pnest.models import (
    ConstantThreshold,
    CyclicThreshold,
    Dimensions,
    SystemModel,
    ThresholdPolicy,
    alpha_bound,
    check_assumption4,
    check_gradient_lipschitz,
    check_jacobian_fd,
    eval_h,
    eval_jacobian,
    make_binary_probit,
    make_linear,
    pack_params,
    unpack_params,
)
from pnest.common.utils import sample_ball


def test_pack_params_row_major():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    B = np.array([[5.0], [6.0]])
    theta = pack_params(A, B)
    assert_array_equal(theta, [1, 2, 3, 4, 5, 6])
    A2, B2 = unpack_params(theta, Dimensions(2, 1))
    assert_array_equal(A2, A)
    assert_array_equal(B2, B)


def test_dimensions():
    assert Dimensions(2, 1).p == 6
    assert Dimensions(3, 2).p == 15
    with pytest.raises(DimensionError):
        Dimensions(0, 1)
    with pytest.raises(DimensionError):
        SystemModel(Dimensions(2, 1, p=5), "linear")


def test_unknown_kind():
    with pytest.raises(ConfigError):
        SystemModel(Dimensions(2, 1), "tanh")


def test_rnn_at_zero_parameter(rnn_model):
    h = eval_h(rnn_model, np.zeros(6), [3.0, -1.0], [2.0])
    assert_allclose(h, [0.5, 0.5])


def test_linear_is_affine(linear_model, plant_theta):
    x, u = np.array([0.3, -0.7]), np.array([1.5])
    A, B = unpack_params(plant_theta, linear_model.dims)
    assert_allclose(eval_h(linear_model, plant_theta, x, u), A @ x + B @ u)


def test_probit_mean(probit_model, plant_theta):
    x, u = np.array([0.3, -0.7]), np.array([0.2])
    A, B = unpack_params(plant_theta, probit_model.dims)
    assert_allclose(eval_h(probit_model, plant_theta, x, u), ndtr(A @ x + B @ u))


def test_jacobian_shape_and_linear_case(linear_model):
    x, u = np.array([2.0, 3.0]), np.array([5.0])
    phi = eval_jacobian(linear_model, np.zeros(6), x, u)
    assert phi.shape == (6, 2)
    # column i is the gradient of h_i: [x; u] in the slots of row i of A and B
    expected = np.array([[2, 0], [3, 0], [0, 2], [0, 3], [5, 0], [0, 5]], dtype=float)
    assert_array_equal(phi, expected)


def test_jacobian_matches_finite_differences(any_model, plant_theta):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        theta = plant_theta + sample_ball(rng, 6, 1.0)
        x = sample_ball(rng, 2, 2.0)
        u = sample_ball(rng, 1, 2.0)
        worst = max(worst, check_jacobian_fd(any_model, theta, x, u))
    assert worst <= 1e-5


def test_jacobian_fd_rejects_bad_step(rnn_model):
    with pytest.raises(ValueError):
        check_jacobian_fd(rnn_model, np.zeros(6), [0.0, 0.0], [0.0], step=0.0)


@pytest.mark.parametrize("r", [0.0, 0.5, 1.0, 2.0])
def test_alpha_values(rnn_model, probit_model, linear_model, r):
    s = expit(2 * r * r)
    assert alpha_bound(linear_model, r) == 1.0
    assert alpha_bound(rnn_model, r) == pytest.approx(2 * s * (1 - s), rel=1e-12)
    assert alpha_bound(probit_model, r) == pytest.approx(max(2 * norm.pdf(2 * r * r), np.finfo(float).tiny))


def test_alpha_activation_form():
    model = SystemModel(Dimensions(2, 1), "rnn_sigmoid", alpha_form="activation")
    assert model.alpha(0.0) == pytest.approx(1.0)
    assert model.alpha(2.0) == pytest.approx(2 * expit(8.0))


def test_alpha_derivative_form_is_non_increasing(rnn_model, probit_model):
    radii = np.linspace(0, 3, 61)
    for model in (rnn_model, probit_model):
        values = [model.alpha(r) for r in radii]
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert all(v > 0 for v in values)


def test_alpha_rejects_bad_radius(rnn_model):
    with pytest.raises(ValueError):
        rnn_model.alpha(-1.0)
    with pytest.raises(ValueError):
        rnn_model.alpha(np.inf)


def test_threshold_policies():
    const = ConstantThreshold(0.3, 2)
    assert const.bound == pytest.approx(0.3)
    assert_array_equal(const(7), [0.3, 0.3])
    cyclic = CyclicThreshold([[0.1, 0.2], [-0.5, 0.0]], 2)
    assert cyclic.bound == pytest.approx(0.5)
    assert_array_equal(cyclic(0), [0.1, 0.2])
    assert_array_equal(cyclic(3), [-0.5, 0.0])


def test_probit_threshold_shifts_mean(plant_theta):
    model = make_binary_probit(Dimensions(2, 1), ConstantThreshold([0.5, -0.5], 2))
    x, u = np.array([0.1, 0.2]), np.array([0.0])
    A, B = unpack_params(plant_theta, model.dims)
    assert_allclose(model.h(plant_theta, x, u), ndtr(A @ x - np.array([0.5, -0.5])))


def test_probit_rejects_unbounded_threshold():
    with pytest.raises(ConfigError):
        make_binary_probit(Dimensions(2, 1), ThresholdPolicy())


def test_make_linear_shapes():
    with pytest.raises(DimensionError):
        make_linear(np.eye(2), np.ones((3, 1)))


@pytest.mark.parametrize("kind", ["rnn_sigmoid", "binary_probit"])
def test_assumption4_secant_holds_at_radius_two(kind, plant_theta):
    model = SystemModel(Dimensions(2, 1), kind) if kind == "rnn_sigmoid" else make_binary_probit(Dimensions(2, 1))
    report = check_assumption4(model, plant_theta, sample_count=10000, radius=2.0, rng_seed=1)
    assert report.num_secant_violations == 0
    assert report.sample_count == 10000


@pytest.mark.parametrize("kind", ["rnn_sigmoid", "binary_probit"])
def test_assumption4_both_hold_at_small_radius(kind, plant_theta):
    model = SystemModel(Dimensions(2, 1), kind) if kind == "rnn_sigmoid" else make_binary_probit(Dimensions(2, 1))
    report = check_assumption4(model, plant_theta, sample_count=2000, radius=0.4, rng_seed=2)
    assert report.ok
    assert report.required_beta <= 1.0


def test_assumption4_reports_required_beta(rnn_model, plant_theta):
    report = check_assumption4(rnn_model, plant_theta, sample_count=2000, radius=2.0, rng_seed=3)
    assert report.required_beta > 1.0
    assert report.num_self_bound_violations > 0
    assert len(report.self_bound_violations) <= 20
    record = report.to_dict()
    assert record["num_secant_violations"] == 0


def test_assumption4_linear_is_tight(linear_model, plant_theta):
    report = check_assumption4(linear_model, plant_theta, sample_count=500, radius=2.0)
    assert report.ok
    # L = ||phi^T delta||^2 is exactly half of <delta, grad L>
    assert report.required_beta == pytest.approx(0.5)


def test_gradient_lipschitz(linear_model, rnn_model, probit_model, plant_theta):
    # the linear Jacobian moves exactly with the regressor
    assert check_gradient_lipschitz(linear_model, plant_theta, 200, 2.0) <= 1.0 + 1e-9
    for model in (rnn_model, probit_model):
        ratio = check_gradient_lipschitz(model, plant_theta, 500, 0.5, rng_seed=4)
        assert 0 < ratio <= model.lipschitz_M * (1.0 + 1e-9)


def test_bounded_families_stay_in_open_unit_box(rnn_model, probit_model):
    rng = np.random.default_rng(9)
    for model in (rnn_model, probit_model):
        for _ in range(500):
            theta = sample_ball(rng, 6, 2.0)
            x = sample_ball(rng, 2, 2.0)
            u = sample_ball(rng, 1, 2.0)
            out = model.h(theta, x, u)
            assert np.all(out > 0) and np.all(out < 1)
