"""Exception hierarchy shared by all modules."""


class RbsError(Exception):
    """Base class for every error raised by the toolkit."""


class ParameterError(RbsError, ValueError):
    """An argument has the wrong length, range or type."""


class InfeasiblePlanError(RbsError):
    """The requested parameters cannot produce a single usable block."""


class DegeneratePlanError(RbsError):
    """The plan is well-formed but its per-block error is not below 1."""


class DivergentPlanError(RbsError):
    """The incremental-block error series does not converge (Delta <= 0)."""


class StateError(RbsError):
    """An extractor was used after it reached its terminal state."""


class UnsupportedError(RbsError):
    """The operation is not defined for this plan or gadget."""


class NoSolutionError(RbsError):
    """A root finder could not bracket a solution."""


class ModelError(RbsError, ValueError):
    """A source model violates its invariants."""


class RefusalError(RbsError):
    """An oracle or test declined to run on the given input size."""


class CertifiedEntropyWarning(UserWarning):
    """The certified min-entropy bound is zero or had to be clamped."""
