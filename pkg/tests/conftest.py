import numpy as np
import pytest

from pnest.models import Dimensions, make_binary_probit, make_linear, make_rnn_sigmoid, pack_params

PLANT_A = np.array([[0.5, 1.0], [1.5, 0.3]])
PLANT_B = np.array([[1.0], [0.0]])


@pytest.fixture
def plant_theta():
    return pack_params(PLANT_A, PLANT_B)


@pytest.fixture
def rnn_model():
    return make_rnn_sigmoid(Dimensions(2, 1))


@pytest.fixture
def probit_model():
    return make_binary_probit(Dimensions(2, 1))


@pytest.fixture
def linear_model():
    return make_linear(PLANT_A, PLANT_B)


@pytest.fixture(params=["linear", "rnn_sigmoid", "binary_probit"])
def any_model(request):
    dims = Dimensions(2, 1)
    if request.param == "linear":
        return make_linear(PLANT_A, PLANT_B)
    if request.param == "rnn_sigmoid":
        return make_rnn_sigmoid(dims)
    return make_binary_probit(dims)
