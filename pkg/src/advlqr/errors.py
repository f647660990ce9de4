"""Exception hierarchy shared by the solver, synthesis and evaluation layers."""


class AdvLQRError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(AdvLQRError, ValueError):
    pass


class NumericalFailure(AdvLQRError):
    """Base for failures of numerical routines (CLI exit code 4)."""


class UnstableMatrix(NumericalFailure):
    pass


class UnstableController(UnstableMatrix):
    pass


class RhoTooSmall(AdvLQRError, ValueError):
    pass


class NoConvergence(NumericalFailure):
    pass


class NotStabilizable(AdvLQRError, ValueError):
    pass


class NotDetectable(AdvLQRError, ValueError):
    pass


class Infeasible(AdvLQRError):
    """The adversarial Riccati equation has no admissible solution at ``gamma``."""

    def __init__(self, gamma, reason=""):
        self.gamma = gamma
        self.reason = reason
        msg = f"adversarial Riccati equation infeasible at gamma={gamma!r}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class BracketFailure(AdvLQRError):
    pass


class BadBracket(AdvLQRError):
    pass


class OrderingViolated(AdvLQRError, ValueError):
    pass


class PreconditionFailed(AdvLQRError):
    """A bound was requested at a level where its hypothesis does not hold.

    ``threshold`` is the required lower bound on gamma**2 evaluated at the
    requested gamma.
    """

    def __init__(self, threshold, message=""):
        self.threshold = threshold
        super().__init__(message or f"precondition failed: need gamma^2 >= {threshold!r}")
