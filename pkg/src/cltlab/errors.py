"""Exception types shared across the package."""


class ParamsError(ValueError):
    """Raised when a parameter set is structurally invalid.

    Carries optional context (e.g. the mass accumulated before a block
    construction ran out of indices) in ``details``.
    """

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class WorkBudgetError(RuntimeError):
    """A requested computation exceeds the configured operation budget."""

    def __init__(self, message, estimated_ops=None, budget=None):
        super().__init__(message)
        self.estimated_ops = estimated_ops
        self.budget = budget


class MemoryBudgetError(RuntimeError):
    """A requested computation exceeds the configured memory budget."""

    def __init__(self, message, estimated_bytes=None, budget=None):
        super().__init__(message)
        self.estimated_bytes = estimated_bytes
        self.budget = budget


class TruncationError(RuntimeError):
    """A law construction could not reach the target probability mass."""

    def __init__(self, message, achieved_mass=None, target_mass=None):
        super().__init__(message)
        self.achieved_mass = achieved_mass
        self.target_mass = target_mass
