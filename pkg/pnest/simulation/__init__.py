from .control import (
    EXCITATION_KINDS,
    Controller,
    dare_solve,
    decay_schedule,
    excitation_bound,
    make_excitation,
    sample_unit_sphere,
    spectral_radius,
)
from .noise import NOISE_KINDS, NoiseSpec
from .rollout import (
    RhoProbeReport,
    TrajectorySample,
    closed_loop_identify,
    iter_rollout,
    load_trajectory,
    rho_probe,
    rollout,
    save_trajectory,
    step_system,
)
