"""Exception types raised across the package."""


class LeaError(Exception):
    """Base class for all package errors."""


class ShapeError(LeaError, ValueError):
    pass


class DegenerateInputError(LeaError, ValueError):
    pass


class DataError(LeaError):
    """Malformed, missing or inconsistent dataset input."""


class ConfigError(LeaError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class StaleCacheError(LeaError, RuntimeError):
    pass


class TrainingDivergedError(LeaError, RuntimeError):
    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")


class GuardError(LeaError, ValueError):
    """A request exceeds what an algorithm is allowed to enumerate."""
