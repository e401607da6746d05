class PnestError(Exception):
    """Base class of every error raised by pnest."""


class DimensionError(PnestError, ValueError):
    pass


class NonFiniteError(PnestError, ValueError):
    pass


class NotPositiveDefiniteError(PnestError, ValueError):
    pass


class ConfigError(PnestError, ValueError):
    """Invalid configuration or usage. The command line exits with status 2."""


class SimulationError(PnestError, RuntimeError):
    """Runtime failure during a rollout or an update.

    Args:
        message: what went wrong
        step: the time index at which it happened, if known
    """

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class DareConvergenceError(SimulationError):
    pass
