"""Exception hierarchy shared by every module of the package."""


class NearInclusionError(Exception):
    """Base class for all errors raised by :mod:`nearincl`."""


class InvalidInputError(NearInclusionError, ValueError):
    """An argument violates a documented precondition."""


class RankDeficientError(NearInclusionError):
    """A matrix that must be invertible is singular or nearly so."""

    def __init__(self, message, smallest_singular_value):
        super().__init__(f"{message} (smallest singular value {smallest_singular_value:.3e})")
        self.smallest_singular_value = float(smallest_singular_value)


class PremiseNotCertifiedError(NearInclusionError):
    """A theorem premise could not be certified from the available brackets.

    ``payload`` carries whatever was computed before the check failed, so
    callers can still inspect the (uncertified) construction.
    """

    def __init__(self, message, bracket=None, payload=None):
        super().__init__(message)
        self.bracket = bracket
        self.payload = payload


class ConvergenceError(NearInclusionError):
    """An iteration hit its cap before meeting its stopping criterion."""

    def __init__(self, message, trajectory=()):
        super().__init__(message)
        self.trajectory = list(trajectory)


class ThresholdError(NearInclusionError):
    """The near-inclusion constant is too large for the theorem to apply."""

    def __init__(self, message, margin, payload=None):
        super().__init__(message)
        self.margin = float(margin)
        self.payload = payload


class StageError(NearInclusionError):
    """Wraps an error raised inside one stage of the near-inclusion pipeline."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
