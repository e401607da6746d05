"""
This file contains the system families h(theta, x, u) and their parameter Jacobians.
Add your own family here by registering an activation with `family_register`.

Every family shares the structure h_i(theta, x, u; t) = act(A_i x + B_i u - c_{t,i}),
where theta stacks the rows of A and then the rows of B.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, ndtr
from scipy.stats import norm

from ..common.errors import ConfigError, DimensionError
from ..common.utils import as_vector

FAMILY_MAP = {}
ALPHA_FORMS = ("derivative", "activation")
_TINY = np.finfo(float).tiny


# the decorator for registering a system family


def family_register(name=None):
    def register_cls(cls, name=name):
        if not name:
            # default name is the class name without the suffix "Family", lower case
            name = cls.__name__.replace("Family", "").lower()
        FAMILY_MAP[name] = cls()
        logging.debug(f"Register system family: {name}")
        return cls
    return register_cls


@family_register(name="linear")
class LinearFamily:
    bounded_output = False

    def activation(self, z):
        return z

    def slope(self, z):
        return np.ones_like(z)

    def alpha(self, r, form, threshold_bound):
        return 1.0


@family_register(name="rnn_sigmoid")
class SigmoidFamily:
    bounded_output = True

    def activation(self, z):
        return expit(z)

    def slope(self, z):
        # exp(-|z|) / (1 + exp(-|z|))^2 does not lose precision in the tails
        e = np.exp(-np.abs(z))
        return e / (1.0 + e) ** 2

    def alpha(self, r, form, threshold_bound):
        arg = 2.0 * r * r
        if form == "activation":
            return 2.0 * float(expit(arg))
        return max(2.0 * float(self.slope(arg)), _TINY)


@family_register(name="binary_probit")
class ProbitFamily:
    bounded_output = True

    def activation(self, z):
        return ndtr(z)

    def slope(self, z):
        return norm.pdf(z)

    def alpha(self, r, form, threshold_bound):
        arg = 2.0 * r * r
        if form == "activation":
            return 2.0 * float(ndtr(arg - threshold_bound))
        return max(2.0 * float(norm.pdf(arg + threshold_bound)), _TINY)


class ThresholdPolicy:
    """A bounded deterministic threshold sequence t -> c_t in R^n."""

    bound = np.inf

    def __call__(self, t: int) -> np.ndarray:
        raise NotImplementedError


class ConstantThreshold(ThresholdPolicy):
    def __init__(self, level, n: int):
        self.level = as_vector(np.broadcast_to(np.asarray(level, dtype=float), (n,)), n, "threshold")
        self.bound = float(np.max(np.abs(self.level)))

    def __call__(self, t):
        return self.level


class CyclicThreshold(ThresholdPolicy):
    """Cycles through a fixed list of threshold vectors, c_t = levels[t mod len(levels)]."""

    def __init__(self, levels: Sequence, n: int):
        assert len(levels) > 0, "CyclicThreshold needs at least one level"
        self.levels = np.stack([
            as_vector(np.broadcast_to(np.asarray(level, dtype=float), (n,)), n, "threshold")
            for level in levels])
        self.bound = float(np.max(np.abs(self.levels)))

    def __call__(self, t):
        return self.levels[int(t) % len(self.levels)]


@dataclass(frozen=True)
class Dimensions:
    n: int
    m: int
    p: Optional[int] = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise DimensionError(f"Need n >= 1 and m >= 1, got n={self.n}, m={self.m}")
        if self.p is None:
            object.__setattr__(self, "p", self.n * (self.n + self.m))
        if self.p < 1:
            raise DimensionError(f"Need p >= 1, got p={self.p}")


@dataclass(frozen=True)
class SystemModel:
    """A family h(theta, x, u) with its Assumption-4 constants.

    Immutable after construction; every method is a pure function of its arguments.
    """
    dims: Dimensions
    kind: str
    beta: float = 1.0
    alpha_form: str = "derivative"
    threshold_policy: Optional[ThresholdPolicy] = field(default=None, compare=False)
    lipschitz_M: float = 1.0

    def __post_init__(self):
        if self.kind not in FAMILY_MAP:
            raise ConfigError(f"Unknown model kind {self.kind!r}, choose from {sorted(FAMILY_MAP)}")
        if self.beta < 1:
            raise ConfigError(f"beta must be >= 1, got {self.beta}")
        if self.alpha_form not in ALPHA_FORMS:
            raise ConfigError(f"alpha_form must be one of {ALPHA_FORMS}, got {self.alpha_form!r}")
        if self.dims.p != self.dims.n * (self.dims.n + self.dims.m):
            raise DimensionError(
                f"Built-in families need p = n(n+m) = {self.dims.n * (self.dims.n + self.dims.m)}, got {self.dims.p}")

    @property
    def family(self):
        return FAMILY_MAP[self.kind]

    @property
    def bounded_output(self) -> bool:
        return self.family.bounded_output

    @property
    def threshold_bound(self) -> float:
        return 0.0 if self.threshold_policy is None else self.threshold_policy.bound

    def threshold(self, t) -> np.ndarray:
        if self.threshold_policy is None:
            return np.zeros(self.dims.n)
        return self.threshold_policy(t)

    def pre_activation(self, theta, x, u, t=0):
        A, B = unpack_params(theta, self.dims)
        x = as_vector(x, self.dims.n, "x")
        u = as_vector(u, self.dims.m, "u")
        return A @ x + B @ u - self.threshold(t), x, u

    def h(self, theta, x, u, t=0):
        z, _, _ = self.pre_activation(theta, x, u, t)
        return self.family.activation(z)

    def jacobian(self, theta, x, u, t=0):
        z, x, u = self.pre_activation(theta, x, u, t)
        s = self.family.slope(z)
        # column i holds s_i * [x; u] in the blocks of row i of A and of B
        return np.vstack([np.kron(np.diag(s), x[:, None]), np.kron(np.diag(s), u[:, None])])

    def alpha(self, r):
        if r < 0 or not np.isfinite(r):
            raise ValueError(f"alpha_bound needs a finite radius r >= 0, got {r}")
        return self.family.alpha(float(r), self.alpha_form, self.threshold_bound)


def pack_params(A, B) -> np.ndarray:
    """Stack the rows of A and then the rows of B into theta.

    Args:
        A: n x n matrix
        B: n x m matrix
    Returns:
        theta (np.ndarray): vector of length n(n+m)
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise DimensionError(f"Inconsistent shapes A {A.shape}, B {B.shape}")
    return np.concatenate([A.reshape(-1), B.reshape(-1)])


def unpack_params(theta, dims: Dimensions) -> Tuple[np.ndarray, np.ndarray]:
    theta = as_vector(theta, dims.p, "theta")
    n, m = dims.n, dims.m
    return theta[: n * n].reshape(n, n), theta[n * n:].reshape(n, m)


def make_linear(A, B, beta: float = 1.0) -> SystemModel:
    """h(theta, x, u) = A x + B u; the given (A, B) only fixes the dimensions."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
        raise DimensionError(f"Inconsistent shapes A {A.shape}, B {B.shape}")
    return SystemModel(Dimensions(A.shape[0], B.shape[1]), "linear", beta=beta)


def make_rnn_sigmoid(dims: Dimensions, alpha_form: str = "derivative", beta: float = 1.0) -> SystemModel:
    return SystemModel(dims, "rnn_sigmoid", beta=beta, alpha_form=alpha_form)


def make_binary_probit(dims: Dimensions, threshold_policy: Optional[ThresholdPolicy] = None,
                       alpha_form: str = "derivative", beta: float = 1.0) -> SystemModel:
    """h_i(theta, x, u; t) = Phi((A x + B u)_i - c_{t,i}).

    Args:
        dims: dimensions
        threshold_policy: bounded rule t -> c_t, defaults to c_t = 0
    """
    if threshold_policy is None:
        threshold_policy = ConstantThreshold(0.0, dims.n)
    bound = getattr(threshold_policy, "bound", np.inf)
    if not np.isfinite(bound):
        raise ConfigError("binary_probit needs a threshold policy with a finite bound")
    return SystemModel(dims, "binary_probit", beta=beta, alpha_form=alpha_form,
                       threshold_policy=threshold_policy)


def eval_h(model: SystemModel, theta, x, u, t: int = 0) -> np.ndarray:
    return model.h(theta, x, u, t)


def eval_jacobian(model: SystemModel, theta, x, u, t: int = 0) -> np.ndarray:
    """Closed-form parameter Jacobian phi, shape (p, n); column j is the gradient of h_j."""
    return model.jacobian(theta, x, u, t)


def alpha_bound(model: SystemModel, r: float) -> float:
    return model.alpha(r)


__all__ = [
    "FAMILY_MAP", "ALPHA_FORMS", "Dimensions", "SystemModel", "ThresholdPolicy",
    "ConstantThreshold", "CyclicThreshold", "pack_params", "unpack_params",
    "make_linear", "make_rnn_sigmoid", "make_binary_probit", "eval_h", "eval_jacobian",
    "alpha_bound",
]
