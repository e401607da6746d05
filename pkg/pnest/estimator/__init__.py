from .projection import project_weighted_ball, secular_root, weighted_objective
from .algorithm import (
    STEP_MODES,
    EstimatorState,
    StepDiagnostics,
    StepSize,
    inverse_consistency_check,
    load_state,
    new_estimator,
    predict,
    save_state,
    solve_step_size,
    step_size_iterates,
    update,
)
