"""
JSON configuration files, converted to dataclasses with dacite in strict mode.

Every file carries "schema_version"; the current version is SCHEMA_VERSION.
"""
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from dacite import Config, DaciteError, from_dict

from .common.errors import ConfigError, PnestError
from .estimator.algorithm import STEP_MODES, EstimatorState, new_estimator
from .models.dynamics import (
    ALPHA_FORMS,
    FAMILY_MAP,
    ConstantThreshold,
    CyclicThreshold,
    Dimensions,
    SystemModel,
    make_binary_probit,
    pack_params,
)
from .simulation.control import EXCITATION_KINDS, FEEDBACK_SIGNS, Controller, dare_solve
from .simulation.noise import NoiseSpec

SCHEMA_VERSION = 1
CONFIG_DIR = os.path.join(os.path.dirname(__file__), "configs")
# JSON integers are accepted wherever a float is expected
_DACITE_CONFIG = Config(strict=True, type_hooks={float: float})


@dataclass
class ModelSpec:
    kind: str = field(default="rnn_sigmoid", metadata={
        "help": "linear, rnn_sigmoid or binary_probit"})
    n: int = field(default=2, metadata={"help": "state dimension"})
    m: int = field(default=1, metadata={"help": "input dimension"})
    A: Optional[List[List[float]]] = field(default=None, metadata={
        "help": "true A (n x n); required for simulation and checks, optional for identify"})
    B: Optional[List[List[float]]] = field(default=None, metadata={
        "help": "true B (n x m)"})
    threshold: Optional[List[float]] = field(default=None, metadata={
        "help": "binary_probit: constant threshold c (length n)"})
    threshold_levels: Optional[List[List[float]]] = field(default=None, metadata={
        "help": "binary_probit: thresholds cycled through as c_t = levels[t mod L]"})
    alpha_form: str = field(default="derivative", metadata={
        "help": "derivative (2 act'(.)) or activation (2 act(2r^2))"})
    beta: float = field(default=1.0, metadata={"help": "self-bounding constant beta >= 1"})


@dataclass
class EstimatorSpec:
    theta0: Optional[List[float]] = field(default=None, metadata={
        "help": "initial estimate of length n(n+m), zeros by default"})
    D: float = field(default=2.0, metadata={"help": "radius of the feasible parameter ball"})
    beta: Optional[float] = field(default=None, metadata={"help": "overrides the model's beta"})
    step_mode: str = field(default="implicit_fixed_point", metadata={
        "help": "implicit_fixed_point or explicit_conservative"})
    fp_tol: float = field(default=1e-10, metadata={"help": "fixed-point tolerance relative to alpha_t"})
    fp_max_iter: int = field(default=50, metadata={"help": "fixed-point iteration cap"})
    projection_tol: float = field(default=1e-10, metadata={"help": "secular equation tolerance"})
    consistency_every: int = field(default=1000, metadata={
        "help": "check P P_inv = I every this many steps, 0 disables"})


@dataclass
class ControllerSpec:
    K: Optional[List[List[float]]] = field(default=None, metadata={
        "help": "explicit m x n gain; solved from the Riccati equation on (A, B, Q, R) if omitted"})
    Q: Optional[List[List[float]]] = field(default=None, metadata={"help": "state weight, identity by default"})
    R: Optional[List[List[float]]] = field(default=None, metadata={"help": "input weight, identity by default"})
    feedback_sign: str = field(default="negative", metadata={
        "help": "negative applies u = -K x + eps, positive applies u = K x + eps"})
    excitation: str = field(default="zero", metadata={
        "help": "zero, iid_sphere or decaying_sphere; experiment cases override it"})


@dataclass
class ExperimentConfig:
    model: ModelSpec
    schema_version: int = SCHEMA_VERSION
    name: str = "experiment"
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    horizon: int = field(default=100000, metadata={"help": "number of closed-loop steps T"})
    seeds: List[int] = field(default_factory=lambda: list(range(10)))
    cases: Optional[List[str]] = field(default=None, metadata={
        "help": "excitation kinds, one case each; the controller's excitation if omitted"})
    x0: Optional[List[float]] = field(default=None, metadata={"help": "initial state, zeros by default"})
    output_dir: str = "outputs"
    emit_svg: bool = True
    workers: int = 1
    save_trajectory: bool = False
    full_series_limit: int = 100000


@dataclass
class CheckSettings:
    seed: int = 0
    jacobian_points: int = 100
    fd_step: float = 1e-5
    jacobian_tol: float = 1e-5
    assumption4_samples: int = 10000
    assumption4_radius: float = 2.0
    lipschitz_samples: int = 1000
    lipschitz_radius: float = 0.5
    rho_samples: int = 10000
    rho_radius: float = 10.0
    rho_norm: str = "l1"


@dataclass
class CheckConfig:
    model: ModelSpec
    schema_version: int = SCHEMA_VERSION
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    checks: CheckSettings = field(default_factory=CheckSettings)


@dataclass
class ModelFile:
    model: ModelSpec
    schema_version: int = SCHEMA_VERSION


@dataclass
class EstimatorFile:
    schema_version: int = SCHEMA_VERSION
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)


def _read_json(path) -> dict:
    if not os.path.exists(path):
        bundled = os.path.join(CONFIG_DIR, os.path.basename(str(path)))
        if not os.path.exists(bundled):
            raise ConfigError(f"Config file {path} does not exist")
        logging.info(f"Using bundled config {bundled}")
        path = bundled
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Malformed JSON in {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def _from_dict(data_class, data: dict, source):
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{source}: unsupported schema_version {version}, expected {SCHEMA_VERSION}")
    try:
        return from_dict(data_class=data_class, data=data, config=_DACITE_CONFIG)
    except DaciteError as e:
        raise ConfigError(f"{source}: {e}")
    except (ValueError, PnestError) as e:
        # raised by __post_init__ of nested specs such as NoiseSpec
        raise ConfigError(f"{source}: {e}")


def _check_choice(value, choices, path):
    if value not in choices:
        raise ConfigError(f"{path}: {value!r} is not one of {sorted(choices)}")


def validate_model_spec(spec: ModelSpec, path="model", require_truth=True):
    _check_choice(spec.kind, FAMILY_MAP, f"{path}.kind")
    _check_choice(spec.alpha_form, ALPHA_FORMS, f"{path}.alpha_form")
    if spec.n < 1 or spec.m < 1:
        raise ConfigError(f"{path}: n and m must be >= 1, got n={spec.n}, m={spec.m}")
    if spec.beta < 1:
        raise ConfigError(f"{path}.beta: must be >= 1, got {spec.beta}")
    if require_truth and (spec.A is None or spec.B is None):
        raise ConfigError(f"{path}: A and B are required")
    for name, value, shape in (("A", spec.A, (spec.n, spec.n)), ("B", spec.B, (spec.n, spec.m))):
        if value is None:
            continue
        try:
            arr = np.asarray(value, dtype=float)
        except ValueError:
            raise ConfigError(f"{path}.{name}: rows have different lengths")
        if arr.shape != shape:
            raise ConfigError(f"{path}.{name}: shape {arr.shape}, expected {shape}")
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"{path}.{name}: non-finite entries")
    if spec.kind != "binary_probit" and (spec.threshold is not None or spec.threshold_levels is not None):
        raise ConfigError(f"{path}: thresholds only apply to binary_probit")
    if spec.threshold is not None and spec.threshold_levels is not None:
        raise ConfigError(f"{path}: give either threshold or threshold_levels, not both")


def validate_estimator_spec(spec: EstimatorSpec, p: int, path="estimator"):
    if not spec.D > 0:
        raise ConfigError(f"{path}.D: must be positive, got {spec.D}")
    _check_choice(spec.step_mode, STEP_MODES, f"{path}.step_mode")
    if spec.theta0 is not None and len(spec.theta0) != p:
        raise ConfigError(f"{path}.theta0: length {len(spec.theta0)}, expected p = {p}")
    if spec.beta is not None and spec.beta < 1:
        raise ConfigError(f"{path}.beta: must be >= 1, got {spec.beta}")
    if not 0 < spec.projection_tol <= 1e-4:
        raise ConfigError(f"{path}.projection_tol: must be in (0, 1e-4], got {spec.projection_tol}")
    if spec.fp_max_iter < 1 or not spec.fp_tol > 0:
        raise ConfigError(f"{path}: fp_tol must be positive and fp_max_iter >= 1")


def validate_controller_spec(spec: ControllerSpec, n: int, m: int, path="controller"):
    _check_choice(spec.feedback_sign, FEEDBACK_SIGNS, f"{path}.feedback_sign")
    _check_choice(spec.excitation, EXCITATION_KINDS, f"{path}.excitation")
    for name, value, shape in (("K", spec.K, (m, n)), ("Q", spec.Q, (n, n)), ("R", spec.R, (m, m))):
        if value is not None and np.asarray(value, dtype=float).shape != shape:
            raise ConfigError(f"{path}.{name}: shape {np.asarray(value).shape}, expected {shape}")


def validate_experiment(config: ExperimentConfig):
    validate_model_spec(config.model)
    n, m = config.model.n, config.model.m
    validate_estimator_spec(config.estimator, n * (n + m))
    validate_controller_spec(config.controller, n, m)
    if config.horizon < 1:
        raise ConfigError(f"horizon: must be >= 1, got {config.horizon}")
    if not config.seeds:
        raise ConfigError("seeds: at least one seed is required")
    if len(set(config.seeds)) != len(config.seeds):
        raise ConfigError(f"seeds: duplicates in {config.seeds}")
    for i, case in enumerate(config.cases or []):
        _check_choice(case, EXCITATION_KINDS, f"cases[{i}]")
    if config.cases is not None and len(set(config.cases)) != len(config.cases):
        raise ConfigError(f"cases: duplicates in {config.cases}")
    if config.x0 is not None and len(config.x0) != n:
        raise ConfigError(f"x0: length {len(config.x0)}, expected n = {n}")
    if config.workers < 1:
        raise ConfigError(f"workers: must be >= 1, got {config.workers}")
    if config.full_series_limit < 1:
        raise ConfigError(f"full_series_limit: must be >= 1, got {config.full_series_limit}")
    if config.noise.kind == "bernoulli_residual" and config.model.kind != "binary_probit":
        raise ConfigError("noise.kind: bernoulli_residual needs model.kind binary_probit")


def load_experiment_config(path) -> ExperimentConfig:
    """Load an experiment config, or the "config" block of a run manifest."""
    data = _read_json(path)
    if "config" in data and "model" not in data:
        data = data["config"]
    config = _from_dict(ExperimentConfig, data, path)
    validate_experiment(config)
    return config


def load_check_config(path) -> CheckConfig:
    config = _from_dict(CheckConfig, _read_json(path), path)
    validate_model_spec(config.model)
    validate_controller_spec(config.controller, config.model.n, config.model.m)
    if config.checks.rho_norm not in ("l1", "l2", "linf"):
        raise ConfigError(f"checks.rho_norm: {config.checks.rho_norm!r} is not one of l1, l2, linf")
    return config


def load_model_file(path) -> ModelFile:
    config = _from_dict(ModelFile, _read_json(path), path)
    validate_model_spec(config.model, require_truth=False)
    return config


def load_estimator_file(path, p: int) -> EstimatorSpec:
    config = _from_dict(EstimatorFile, _read_json(path), path)
    validate_estimator_spec(config.estimator, p)
    return config.estimator


def config_to_dict(config) -> dict:
    return dataclasses.asdict(config)


def build_model(spec: ModelSpec) -> SystemModel:
    dims = Dimensions(spec.n, spec.m)
    if spec.kind == "binary_probit":
        policy = None
        if spec.threshold is not None:
            policy = ConstantThreshold(spec.threshold, spec.n)
        elif spec.threshold_levels is not None:
            policy = CyclicThreshold(spec.threshold_levels, spec.n)
        return make_binary_probit(dims, policy, alpha_form=spec.alpha_form, beta=spec.beta)
    return SystemModel(dims, spec.kind, beta=spec.beta, alpha_form=spec.alpha_form)


def build_theta_star(spec: ModelSpec) -> Optional[np.ndarray]:
    if spec.A is None or spec.B is None:
        return None
    return pack_params(spec.A, spec.B)


def build_estimator(spec: EstimatorSpec, model: SystemModel) -> EstimatorState:
    return new_estimator(
        model, theta0=spec.theta0, D=spec.D, step_mode=spec.step_mode, fp_tol=spec.fp_tol,
        fp_max_iter=spec.fp_max_iter, beta=spec.beta, projection_tol=spec.projection_tol,
        consistency_every=spec.consistency_every)


def resolve_gain(spec: ControllerSpec, model_spec: ModelSpec) -> np.ndarray:
    """The explicit gain if given, otherwise the Riccati gain of the true (A, B)."""
    if spec.K is not None:
        return np.asarray(spec.K, dtype=float).reshape(model_spec.m, model_spec.n)
    K, _ = dare_solve(model_spec.A, model_spec.B, spec.Q, spec.R)
    return K


def build_controller(spec: ControllerSpec, model_spec: ModelSpec, excitation: Optional[str] = None,
                     K: Optional[np.ndarray] = None) -> Controller:
    if K is None:
        K = resolve_gain(spec, model_spec)
    return Controller(K=K, excitation=excitation or spec.excitation, feedback_sign=spec.feedback_sign)
