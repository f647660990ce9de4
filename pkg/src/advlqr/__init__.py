"""Adversarially robust LQR: synthesis, evaluation and performance-robustness bounds."""

from advlqr.errors import (
    AdvLQRError,
    BadBracket,
    BracketFailure,
    DimensionMismatch,
    Infeasible,
    NoConvergence,
    NotDetectable,
    NotStabilizable,
    NumericalFailure,
    OrderingViolated,
    PreconditionFailed,
    RhoTooSmall,
    UnstableController,
    UnstableMatrix,
)
from advlqr.riccati import LtiSystem, gamma_inf, solve_adversarial_dare, solve_nominal_dare
from advlqr.synthesis import adv_controller, adv_lqr, h_inf_controller, lqr_gain

__version__ = "0.1.0"
