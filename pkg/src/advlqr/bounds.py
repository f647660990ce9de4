"""Nominal-cost gap of the gamma-adversarial controller and its bounds.

All bounds concern ``NC(K_gamma) - NC(K*)``.  Upper bounds compose the
cost-gap identity, the optimizer-gap inequality and a DARE perturbation bound;
lower bounds go through the adversarial cost-to-go of the LQR gain,
``P~_gamma``.  Every bound is returned together with the hypothesis it needs
so sweeps can keep only admissible instances.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from advlqr import matops
from advlqr.errors import OrderingViolated, PreconditionFailed, UnstableController
from advlqr.riccati import (
    LtiSystem,
    closed_loop_gamma_inf,
    gains,
    gamma_inf,
    lqr_closed_loop_weight,
    p_tilde,
    solve_nominal_dare,
)
from advlqr.synthesis import adv_controller


class TradeoffContext:
    """Quantities shared by every bound for one system (computed lazily, cached)."""

    def __init__(self, sys: LtiSystem, weight: str = "closed_loop"):
        self.sys = sys
        self.weight = weight

    @cached_property
    def P_star(self) -> np.ndarray:
        return solve_nominal_dare(self.sys).P

    @cached_property
    def K_star(self) -> np.ndarray:
        return gains(self.sys.A, self.sys.B, self.sys.R, self.P_star, math.inf)[1]

    @cached_property
    def Acl_star(self) -> np.ndarray:
        return self.sys.closed_loop(self.K_star)

    @cached_property
    def H_star(self) -> np.ndarray:
        """``R + B^T P* B``, the Hessian of the one-step LQR objective."""
        B = self.sys.B
        return matops.symmetrize(self.sys.R + B.T @ self.P_star @ B)

    @cached_property
    def gamma_inf(self) -> float:
        return gamma_inf(self.sys)

    @cached_property
    def gamma_tilde_inf(self) -> float:
        Q_tilde = lqr_closed_loop_weight(self.sys, self.K_star, self.weight)
        return closed_loop_gamma_inf(self.Acl_star, Q_tilde)

    @cached_property
    def disturbability(self) -> np.ndarray:
        return disturbability_gramian(self.Acl_star)

    def controller(self, gamma: float):
        return adv_controller(self.sys, gamma)

    def default_rho(self) -> float:
        r = matops.spectral_radius(self.sys.A)
        return r + 0.5 * (1.0 - r) if r < 1.0 else 1.05 * r

    def kappa(self) -> float:
        Q, R = self.sys.Q, self.sys.R
        lo = min(matops.min_singular_value(Q), matops.min_singular_value(R))
        hi = max(matops.spectral_norm(Q), matops.spectral_norm(R))
        return math.inf if lo <= 0 else hi / lo


def disturbability_gramian(Acl) -> np.ndarray:
    """``sum_t (Acl^t)^T Acl^t``: the sum that appears in the cost-to-go comparison."""
    return matops.dlyap(np.asarray(Acl).T, np.eye(np.asarray(Acl).shape[0]))


def _ctx(sys, ctx):
    return ctx if ctx is not None else TradeoffContext(sys)


# ------------------------------------------------------------ exact gap


def exact_gap(sys: LtiSystem, K, ctx: TradeoffContext = None) -> float:
    """``trace(Sigma(K) (K - K*)^T (R + B^T P* B) (K - K*))`` with ``Sigma(K) = dlyap(A+BK, Sigma_w)``."""
    ctx = _ctx(sys, ctx)
    K = np.asarray(K, dtype=float)
    Acl = sys.closed_loop(K)
    if matops.spectral_radius(Acl) >= 1.0:
        raise UnstableController("exact_gap needs a stabilizing K")
    Sigma = matops.dlyap(Acl, sys.Sigma_w)
    D = K - ctx.K_star
    return float(np.trace(Sigma @ D.T @ ctx.H_star @ D))


def sandwich_bounds(sys: LtiSystem, K, ctx: TradeoffContext = None, floor: str = "closed_loop"):
    """Lower and upper bounds on the gap from the extreme eigenvalues of each factor.

    The lower bound scales with ``lambda_min(Sigma(K))`` by default; with
    ``floor="noise"`` it uses the looser ``lambda_min(Sigma_w)``
    (``Sigma(K) >= Sigma_w``).  Only the default collapses onto the exact gap
    for scalar systems.
    """
    ctx = _ctx(sys, ctx)
    K = np.asarray(K, dtype=float)
    Acl = sys.closed_loop(K)
    if matops.spectral_radius(Acl) >= 1.0:
        raise UnstableController("sandwich_bounds needs a stabilizing K")
    Sigma = matops.dlyap(Acl, sys.Sigma_w)
    d2 = matops.frobenius_norm(K - ctx.K_star) ** 2
    if floor == "closed_loop":
        s_min = matops.min_eig(Sigma)
    elif floor == "noise":
        s_min = matops.min_eig(sys.Sigma_w)
    else:
        raise ValueError(f"unknown floor {floor!r}")
    lower = s_min * matops.min_eig(ctx.H_star) * d2
    upper = matops.spectral_norm(Sigma) * matops.spectral_norm(ctx.H_star) * d2
    return max(lower, 0.0), upper


def controller_gap_bounds(M, P, A, B, R, K2):
    """Interval for ``||K1 - K2||`` where ``K_i`` minimize the one-step costs with weights M and P.

    ``K2`` is the minimizer for ``P``; requires ``M >= P``.
    """
    M, P = np.asarray(M, dtype=float), np.asarray(P, dtype=float)
    A, B, R, K2 = (np.asarray(X, dtype=float) for X in (A, B, R, K2))
    if matops.min_eig(M - P) < -1e-9:
        raise OrderingViolated("controller_gap_bounds needs M >= P")
    g = matops.spectral_norm(B.T @ (M - P) @ (A + B @ K2))
    lower = g / matops.spectral_norm(R + B.T @ M @ B)
    upper = g / matops.min_eig(R + B.T @ P @ B)
    return lower, upper


# ------------------------------------------------------------ upper bound chain


@dataclass(frozen=True)
class PerturbationGap:
    dA: float
    dB: float
    A_tilde: np.ndarray
    B_tilde: np.ndarray
    bound_A: float
    bound_B: float

    @property
    def holds(self) -> bool:
        slack = 1e-9
        return self.dA <= self.bound_A * (1 + slack) + slack and self.dB <= self.bound_B * (1 + slack) + slack


def perturbation_gap(sys: LtiSystem, gamma: float, ctx: TradeoffContext = None) -> PerturbationGap:
    """System matrices seen under the noiseless worst-case adversary at level ``gamma``.

    ``A~ = (I + (gamma^2 I - P_gamma)^{-1} P_gamma) A`` and likewise ``B~``;
    their distance to ``(A, B)`` is at most ``g^2/(gamma^2 - g^2)`` times
    ``||A||`` (resp. ``||B||``) with ``g = gamma_inf``.
    """
    ctx = _ctx(sys, ctx)
    ctrl = ctx.controller(gamma)
    E = np.eye(sys.n) + ctrl.Delta
    At, Bt = E @ sys.A, E @ sys.B
    gi2 = ctx.gamma_inf**2
    factor = gi2 / (gamma * gamma - gi2)
    return PerturbationGap(
        dA=matops.spectral_norm(At - sys.A),
        dB=matops.spectral_norm(Bt - sys.B),
        A_tilde=At,
        B_tilde=Bt,
        bound_A=factor * matops.spectral_norm(sys.A),
        bound_B=factor * matops.spectral_norm(sys.B),
    )


def _upper_constants(ctx: TradeoffContext, gamma: float, l: int, rho: float) -> dict:
    sys = ctx.sys
    if not 1 <= l <= sys.n:
        raise ValueError(f"l must lie in 1..{sys.n}")
    gi = ctx.gamma_inf
    if not gamma > gi:
        raise PreconditionFailed(math.inf, f"gamma={gamma!r} must exceed gamma_inf={gi!r}")
    t = matops.tau(sys.A, rho)
    ratio = gi**2 / (gamma * gamma - gi**2)
    beta = max(1.0, ratio * t + rho)
    nu = matops.min_eig(matops.controllability_gramian_l(sys.A, sys.B, l))
    nA, nB = matops.spectral_norm(sys.A), matops.spectral_norm(sys.B)
    if nu > 1e-14:
        threshold = gi**2 + 1.5 * l**1.5 * beta ** (l - 1) * nu**-0.5 * t**2 * (nB + 1) * max(nA, nB) * gi**2
    else:
        threshold = math.inf
    return dict(l=l, rho=rho, tau=t, beta=beta, nu=nu, ratio=ratio, threshold=threshold, norm_A=nA, norm_B=nB)


def riccati_gap_bound(sys: LtiSystem, gamma: float, l: int, rho: float = None, ctx: TradeoffContext = None) -> float:
    """Upper bound on ``||P_gamma - P*||`` in terms of controllability of ``(A, B)``.

    Raises :class:`PreconditionFailed` carrying the gamma**2 threshold when
    ``gamma`` is not large enough.
    """
    ctx = _ctx(sys, ctx)
    rho = ctx.default_rho() if rho is None else rho
    c = _upper_constants(ctx, gamma, l, rho)
    if not gamma * gamma >= c["threshold"]:
        raise PreconditionFailed(c["threshold"])
    return _riccati_gap_value(ctx, c)


def _riccati_gap_value(ctx: TradeoffContext, c: dict) -> float:
    gi = ctx.gamma_inf
    l = c["l"]
    return (
        16.0
        * gi**2 * c["ratio"]
        * l**2.5
        * c["beta"] ** (2 * (l - 1))
        * (1.0 + c["nu"] ** -0.5)
        * c["tau"] ** 3
        * (c["norm_B"] + 1.0) ** 2
        * ctx.kappa()
        * matops.spectral_norm(ctx.P_star)
    )


def _upper_value(ctx: TradeoffContext, gamma: float, c: dict, W_gamma_norm: float) -> float:
    # gap <= ||Sigma_w|| ||W(A+BK_g)|| ||H*|| m ||K_g - K*||^2
    # ||K_g - K*|| <= ||B|| ||M_g - P*|| ||A+BK*|| / sigma_min(H*)
    # ||M_g - P*|| <= riccati gap bound + gamma_inf^2 * ratio
    sys = ctx.sys
    dM = _riccati_gap_value(ctx, c) + ctx.gamma_inf**2 * c["ratio"]
    dK = c["norm_B"] * dM * matops.spectral_norm(ctx.Acl_star) / matops.min_eig(ctx.H_star)
    return matops.spectral_norm(sys.Sigma_w) * W_gamma_norm * matops.spectral_norm(ctx.H_star) * sys.m * dK**2


def gap_upper_bound(
    sys: LtiSystem, gamma: float, l: int = None, rho: float = None, ctx: TradeoffContext = None
) -> float:
    """Upper bound on ``NC(K_gamma) - NC(K*)``, decaying like ``gamma^-4``.

    With ``l=None`` the smallest admissible bound over ``l = 1..n`` is used.
    """
    ctx = _ctx(sys, ctx)
    rho = ctx.default_rho() if rho is None else rho
    W_norm = matops.spectral_norm(matops.dlyap(sys.closed_loop(ctx.controller(gamma).K), np.eye(sys.n)))
    ls = range(1, sys.n + 1) if l is None else [l]
    best, thresholds = math.inf, []
    for li in ls:
        c = _upper_constants(ctx, gamma, li, rho)
        thresholds.append(c["threshold"])
        if gamma * gamma >= c["threshold"]:
            best = min(best, _upper_value(ctx, gamma, c, W_norm))
    if math.isinf(best) and all(gamma * gamma < t for t in thresholds):
        raise PreconditionFailed(min(thresholds))
    return best


def upper_bound_gamma_threshold(sys: LtiSystem, l: int, rho: float = None, ctx: TradeoffContext = None) -> float:
    """Smallest gamma meeting the upper-bound hypothesis for this ``l``.

    The required gamma**2 falls as gamma grows (through ``beta``), so the
    admissible set is an interval ``[g_min, inf)`` found by bisection.
    """
    ctx = _ctx(sys, ctx)
    rho = ctx.default_rho() if rho is None else rho
    gi = ctx.gamma_inf

    def ok(g):
        return g * g >= _upper_constants(ctx, g, l, rho)["threshold"]

    lo = gi * (1 + 1e-9)
    if ok(lo):
        return lo
    hi = 2 * gi if gi > 0 else 1.0
    while not ok(hi):
        lo, hi = hi, 2 * hi
        if hi > 1e15:
            return math.inf
    while hi - lo > 1e-10 * hi:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


# ------------------------------------------------------------ lower bound chain


@dataclass(frozen=True)
class LowerBoundTerms:
    gamma: float
    s: float
    H_gamma_norm: float
    BW: float
    BW_tilde: float
    sigma_min_cl: float
    threshold: float
    controller_gap_lb: float
    value: float
    degenerate: bool


def _lower_terms(ctx: TradeoffContext, gamma: float) -> LowerBoundTerms:
    sys = ctx.sys
    g_tilde = ctx.gamma_tilde_inf
    if not gamma > max(ctx.gamma_inf, g_tilde):
        raise PreconditionFailed(
            math.inf, f"gamma={gamma!r} must exceed gamma_inf={ctx.gamma_inf!r} and gamma~_inf={g_tilde!r}"
        )
    ctrl = ctx.controller(gamma)
    Pt = p_tilde(sys, gamma, ctx.K_star, ctx.weight).P
    g2 = gamma * gamma
    E = np.linalg.solve(g2 * np.eye(sys.n) - Pt, Pt)
    F = (np.eye(sys.n) + E) @ ctx.Acl_star
    s = matops.min_eig(ctx.P_star)
    H_gamma_norm = matops.spectral_norm(sys.R + sys.B.T @ ctrl.M @ sys.B)
    BW = matops.spectral_norm(sys.B.T @ ctx.disturbability)
    BW_tilde = matops.spectral_norm(sys.B.T @ disturbability_gramian(F))
    smin = matops.min_singular_value(ctx.Acl_star)
    threshold = s + 0.5 * s * s * BW / H_gamma_norm * BW_tilde * smin**2
    c = s * s / (g2 - s) * BW / H_gamma_norm * smin
    degenerate = smin < 1e-12
    value = (
        0.5 * matops.min_eig(sys.Sigma_w) * (s * s / (g2 - s)) ** 2
        * matops.min_eig(ctx.H_star) / H_gamma_norm**2 * BW**2 * smin**2
    )
    if degenerate:
        value = 0.0
    return LowerBoundTerms(gamma, s, H_gamma_norm, BW, BW_tilde, smin, threshold, 0.5 * c, value, degenerate)


def controller_gap_lower_bound(sys: LtiSystem, gamma: float, ctx: TradeoffContext = None) -> float:
    """Lower bound on ``||K_gamma - K*||`` valid once gamma**2 clears its threshold."""
    t = _lower_terms(_ctx(sys, ctx), gamma)
    if not gamma * gamma >= t.threshold:
        raise PreconditionFailed(t.threshold)
    return t.controller_gap_lb


def gap_lower_bound(sys: LtiSystem, gamma: float, ctx: TradeoffContext = None) -> float:
    """Lower bound on ``NC(K_gamma) - NC(K*)``, decaying like ``gamma^-4``.

    Returns 0 when ``A + BK*`` is singular (the bound degenerates).
    """
    t = _lower_terms(_ctx(sys, ctx), gamma)
    if not gamma * gamma >= t.threshold:
        raise PreconditionFailed(t.threshold)
    return t.value


def cost_to_go_margins(sys: LtiSystem, gamma: float, ctx: TradeoffContext = None):
    """Margins (smallest eigenvalues) of the two matrix inequalities behind the lower bound.

    upper: ``||K_g - K*||^2 ||R + B^T M_g B|| W~ - (P~_g - P_g) >= 0``
    lower: ``P_g (g^2 I - P_g)^{-1} P_g + P~_g - P* - s^2/(g^2 - s) W >= 0``

    with ``W~`` the gramian sum of ``(I + (g^2 I - P~_g)^{-1} P~_g)(A + BK*)``,
    ``W`` that of ``A + BK*`` and ``s = sigma_min(P*)``.
    """
    ctx = _ctx(sys, ctx)
    if not gamma > max(ctx.gamma_inf, ctx.gamma_tilde_inf):
        raise PreconditionFailed(math.inf)
    ctrl = ctx.controller(gamma)
    Pg = ctrl.P
    Pt = p_tilde(sys, gamma, ctx.K_star, ctx.weight).P
    g2 = gamma * gamma
    n = sys.n
    E = np.linalg.solve(g2 * np.eye(n) - Pt, Pt)
    W_tilde = disturbability_gramian((np.eye(n) + E) @ ctx.Acl_star)
    dK = matops.spectral_norm(ctrl.K - ctx.K_star)
    Hg = matops.spectral_norm(sys.R + sys.B.T @ ctrl.M @ sys.B)
    ub = dK**2 * Hg * W_tilde - (Pt - Pg)
    s = matops.min_eig(ctx.P_star)
    lhs = Pg @ np.linalg.solve(g2 * np.eye(n) - Pg, Pg) + Pt - ctx.P_star
    lb = lhs - s * s / (g2 - s) * ctx.disturbability
    return matops.min_eig(ub), matops.min_eig(lb)


# ------------------------------------------------------------ report


@dataclass
class TradeoffBoundReport:
    gamma: float
    exact_gap: float
    sandwich_lower: float
    sandwich_upper: float
    upper_bound: float | None
    upper_status: str
    upper_threshold: float
    lower_bound: float | None
    lower_status: str
    lower_threshold: float
    constants: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(_jsonable(self.to_dict()), **kw)

    def flat(self) -> dict:
        d = self.to_dict()
        consts = d.pop("constants")
        d.update({f"c_{k}": v for k, v in consts.items()})
        return d


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def tradeoff_report(
    sys: LtiSystem, gamma: float, l: int = None, rho: float = None, ctx: TradeoffContext = None
) -> TradeoffBoundReport:
    ctx = _ctx(sys, ctx)
    rho = ctx.default_rho() if rho is None else rho
    ctrl = ctx.controller(gamma)
    gap = exact_gap(sys, ctrl.K, ctx)
    lo, hi = sandwich_bounds(sys, ctrl.K, ctx)

    # pick l: smallest admissible bound, else the smallest threshold
    best = None
    for li in range(1, sys.n + 1) if l is None else [l]:
        c = _upper_constants(ctx, gamma, li, rho)
        passes = gamma * gamma >= c["threshold"]
        key = (0, 0.0) if passes else (1, c["threshold"])
        if passes:
            W_norm = matops.spectral_norm(matops.dlyap(sys.closed_loop(ctrl.K), np.eye(sys.n)))
            key = (0, _upper_value(ctx, gamma, c, W_norm))
        if best is None or key < best[0]:
            best = (key, c, passes)
    (_, up_val), c, passes = best
    lt = _lower_terms(ctx, gamma) if gamma > ctx.gamma_tilde_inf else None
    if lt is None:
        lower, status_lo, thr_lo = None, "precondition_failed", math.inf
    elif gamma * gamma >= lt.threshold:
        lower, status_lo, thr_lo = lt.value, ("degenerate" if lt.degenerate else "ok"), lt.threshold
    else:
        lower, status_lo, thr_lo = None, "precondition_failed", lt.threshold
    constants = {
        "l": c["l"],
        "rho": rho,
        "tau": c["tau"],
        "beta": c["beta"],
        "kappa": ctx.kappa(),
        "gamma_inf": ctx.gamma_inf,
        "gamma_tilde_inf": ctx.gamma_tilde_inf,
        "sigma_min_W_l": c["nu"],
        "norm_W_inf_K_gamma": matops.spectral_norm(matops.dlyap(sys.closed_loop(ctrl.K), np.eye(sys.n))),
        "norm_Bt_W_inf_K_star": matops.spectral_norm(sys.B.T @ ctx.disturbability),
        "sigma_min_A_BK_star": matops.min_singular_value(ctx.Acl_star),
        "sigma_w2": matops.spectral_norm(sys.Sigma_w),
        "m": sys.m,
    }
    return TradeoffBoundReport(
        gamma=float(gamma),
        exact_gap=gap,
        sandwich_lower=lo,
        sandwich_upper=hi,
        upper_bound=up_val if passes else None,
        upper_status="ok" if passes else "precondition_failed",
        upper_threshold=c["threshold"],
        lower_bound=lower,
        lower_status=status_lo,
        lower_threshold=thr_lo,
        constants=constants,
    )
