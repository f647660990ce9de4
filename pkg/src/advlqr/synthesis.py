"""Controller and adversary synthesis.

``adv_controller`` builds the soft-constrained (penalty ``gamma``) saddle
point; ``adv_lqr`` bisects on ``gamma`` until the worst-case adversary's
stationary power matches a hard budget ``epsilon``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from advlqr import matops
from advlqr.errors import BadBracket, NoConvergence, UnstableMatrix
from advlqr.riccati import (
    LtiSystem,
    RiccatiSolution,
    gains,
    gamma_inf,
    solve_adversarial_dare,
    solve_nominal_dare,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdvController:
    """Saddle point at penalty level ``gamma``.

    ``K`` is the feedback gain and ``Delta`` maps ``(A + BK) x_t + w_t`` to
    the worst-case perturbation.  ``gamma = inf`` is the nominal LQR
    controller with ``Delta = 0``.
    """

    gamma: float
    P: np.ndarray
    M: np.ndarray
    K: np.ndarray
    Delta: np.ndarray
    solution: RiccatiSolution = field(default=None, repr=False)


@dataclass(frozen=True)
class HardBudgetSolution:
    controller: AdvController
    epsilon: float
    gamma_star: float
    adversary_power: float
    optimal_cost: float
    gamma_lb: float
    gamma_ub: float
    bisection_steps: int


def lqr_gain(sys: LtiSystem):
    """Nominal LQR gain ``K* = -(R + B^T P B)^{-1} B^T P A`` and its Riccati solution."""
    sol = solve_nominal_dare(sys)
    _, K, _ = gains(sys.A, sys.B, sys.R, sol.P, math.inf)
    return K, sol


def _controller(sys: LtiSystem, sol: RiccatiSolution) -> AdvController:
    M, K, Delta = gains(sys.A, sys.B, sys.R, sol.P, sol.gamma)
    return AdvController(gamma=sol.gamma, P=sol.P, M=M, K=K, Delta=Delta, solution=sol)


def nominal_controller(sys: LtiSystem) -> AdvController:
    return _controller(sys, solve_nominal_dare(sys))


def adv_controller(sys: LtiSystem, gamma: float) -> AdvController:
    """Soft-constrained adversarially robust controller at penalty ``gamma``.

    Its soft-constrained average cost against the worst-case adversary is
    ``trace(M Sigma_w)``.
    """
    if math.isinf(gamma):
        return nominal_controller(sys)
    return _controller(sys, solve_adversarial_dare(sys, gamma))


def stationary_power(Acl, Delta, Sigma_w) -> float:
    """``lim E[delta_t^T delta_t]`` for ``delta_t = Delta (Acl x_t + w_t)``.

    Under this adversary ``x_{t+1} = (I + Delta)(Acl x_t + w_t)``, so the
    stationary state covariance is ``X = dlyap(F, (I+Delta) Sigma_w (I+Delta)^T)``
    with ``F = (I + Delta) Acl`` and the power is
    ``trace(Delta (Acl X Acl^T + Sigma_w) Delta^T)``.
    """
    Acl = np.asarray(Acl, dtype=float)
    Delta = np.asarray(Delta, dtype=float)
    n = Acl.shape[0]
    if not np.any(Delta):
        return 0.0
    IpD = np.eye(n) + Delta
    F = IpD @ Acl
    if matops.spectral_radius(F) >= 1.0:
        raise UnstableMatrix("closed loop under the adversary is unstable")
    X = matops.dlyap(F, IpD @ Sigma_w @ IpD.T)
    V = Acl @ X @ Acl.T + Sigma_w
    return float(np.trace(Delta @ V @ Delta.T))


def stationary_power_literal(Acl, Delta, Sigma_w) -> float:
    """Alternative power expression built from a Lyapunov solve on ``Acl^T Delta``.

    ``G = dlyap(Acl^T Delta, Delta Sigma_w Delta)`` then
    ``trace(G Acl^T (I+Delta)^2 Acl + Delta Sigma_w Delta)``.  Kept for
    comparison only; it does not match simulated adversary power in general.
    """
    Acl = np.asarray(Acl, dtype=float)
    Delta = np.asarray(Delta, dtype=float)
    n = Acl.shape[0]
    IpD = np.eye(n) + Delta
    DSD = Delta @ Sigma_w @ Delta
    G = matops.dlyap(Acl.T @ Delta, DSD)
    return float(np.trace(G @ Acl.T @ IpD @ IpD @ Acl + DSD))


def adversary_power(sys: LtiSystem, ctrl: AdvController, literal: bool = False) -> float:
    Acl = sys.closed_loop(ctrl.K)
    if literal:
        return stationary_power_literal(Acl, ctrl.Delta, sys.Sigma_w)
    return stationary_power(Acl, ctrl.Delta, sys.Sigma_w)


def bisect_budget(make, power, epsilon, gamma_lb, gamma_ub, tol, power_tol, max_steps=500):
    """Bisection on gamma for ``power(make(gamma)) == epsilon``.

    ``make(gamma)`` builds a candidate and ``power(candidate)`` must be
    decreasing in gamma.  Bisection runs until the bracket is narrower than
    ``tol`` and the midpoint's power is within ``power_tol`` of ``epsilon``.
    Returns ``(gamma, candidate, power, steps)``.
    """
    p_lb = power(make(gamma_lb))
    if p_lb <= epsilon:
        raise BadBracket(f"power at gamma_lb={gamma_lb!r} is {p_lb!r} <= epsilon={epsilon!r}")
    c_ub = make(gamma_ub)
    p_ub = power(c_ub)
    if p_ub >= epsilon:
        raise BadBracket(f"power at gamma_ub={gamma_ub!r} is {p_ub!r} >= epsilon={epsilon!r}")
    lo, hi = gamma_lb, gamma_ub
    best = (abs(p_ub - epsilon), gamma_ub, c_ub, p_ub)
    for step in range(1, max_steps + 1):
        mid = 0.5 * (lo + hi)
        cand = make(mid)
        p = power(cand)
        if abs(p - epsilon) < best[0]:
            best = (abs(p - epsilon), mid, cand, p)
        if p < epsilon:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol and abs(p - epsilon) <= power_tol:
            return mid, cand, p, step
        if mid in (lo, hi) and hi - lo <= 4 * math.ulp(mid):
            break
    _, g, cand, p = best
    if abs(p - epsilon) > power_tol:
        raise NoConvergence(f"bisection stalled with |power - epsilon| = {abs(p - epsilon):.3g}")
    return g, cand, p, max_steps


def find_upper_gamma(power_at, epsilon, start, ceiling=1e12):
    """Double ``start`` until ``power_at(gamma) < epsilon``."""
    g = start
    while power_at(g) >= epsilon:
        g *= 2.0
        if g > ceiling:
            raise BadBracket(f"adversary power stays above epsilon={epsilon!r} up to gamma={ceiling:g}")
    return g


def adv_lqr(
    sys: LtiSystem,
    epsilon: float,
    gamma_lb: float = None,
    gamma_ub: float = None,
    tol: float = None,
    power_tol: float = None,
) -> HardBudgetSolution:
    """Adversarially robust controller for a hard adversary budget ``epsilon``.

    Bisection on the penalty level: adversary power decreases as gamma grows,
    and the optimal level is where the stationary power equals ``epsilon``.
    The optimal adversarial cost is ``trace(M Sigma_w) + gamma^2 epsilon``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if gamma_lb is None:
        gamma_lb = gamma_inf(sys) * (1.0 + 1e-6)

    def power(ctrl):
        return adversary_power(sys, ctrl)

    if gamma_ub is None:
        gamma_ub = find_upper_gamma(lambda g: power(adv_controller(sys, g)), epsilon, 2.0 * gamma_lb)
    if tol is None:
        tol = 1e-8 * gamma_ub
    if power_tol is None:
        power_tol = 1e-6 * epsilon
    g, ctrl, p, steps = bisect_budget(
        lambda g: adv_controller(sys, g), power, epsilon, gamma_lb, gamma_ub, tol, power_tol
    )
    cost = float(np.trace(ctrl.M @ sys.Sigma_w)) + g * g * epsilon
    log.debug("adv_lqr: epsilon=%g gamma*=%.12g power=%.12g steps=%d", epsilon, g, p, steps)
    return HardBudgetSolution(
        controller=ctrl,
        epsilon=float(epsilon),
        gamma_star=float(g),
        adversary_power=float(p),
        optimal_cost=cost,
        gamma_lb=float(gamma_lb),
        gamma_ub=float(gamma_ub),
        bisection_steps=steps,
    )


def h_inf_controller(sys: LtiSystem, margin: float = 1e-3) -> AdvController:
    """Central suboptimal H-infinity controller at ``gamma_inf * (1 + margin)``."""
    if not margin > 0:
        raise ValueError("margin must be positive")
    return adv_controller(sys, gamma_inf(sys) * (1.0 + margin))
