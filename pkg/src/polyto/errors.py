"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inputs or configuration violate a documented contract."""


class SolverError(RuntimeError):
    """A linear solve or optimizer subproblem failed to meet its tolerance."""


class RunAborted(RuntimeError):
    """An optimization run stopped early; partial history was persisted."""

    def __init__(self, iteration: int, cause: BaseException):
        super().__init__(f"run aborted at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause
