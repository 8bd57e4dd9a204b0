"""Exception types shared across the package."""


class SolverNumericError(RuntimeError):
    """A reweighted linear system could not be factorized.

    Carries the 1-based iteration index at which factorization failed
    (0 means the initialization solve).
    """

    def __init__(self, iteration: int, detail: str = ""):
        self.iteration = iteration
        msg = f"linear system not positive definite at iteration {iteration}"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class InvalidModelError(ValueError):
    """An MDP or trained model violates its structural invariants."""


class ModelFormatError(ValueError):
    """A model file is unreadable: wrong magic, version, or truncated data."""


class NoPathError(RuntimeError):
    """The scripted expert found no route from the robot to the victim."""
