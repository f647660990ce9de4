"""Nominal and gamma-adversarial discrete algebraic Riccati equations.

Both equations are solved through one kernel, the value-iteration map

    M = P + P (gamma^2 I - P)^{-1} P
    P <- Q + A^T M A - A^T M B (R + B^T M B)^{-1} B^T M A

started from ``P_0 = Q`` (``M = P`` when ``gamma`` is infinite).  The
iterates are monotone nondecreasing and converge to the stabilizing
solution whenever one with ``P < gamma^2 I`` exists.  By default the
sequence is advanced by doubling: the k-th doubled iterate equals the
``2**k``-th value-iteration iterate, so feasibility checks are applied
along the same sequence at a logarithmic cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from advlqr import matops
from advlqr.errors import (
    BracketFailure,
    DimensionMismatch,
    Infeasible,
    NoConvergence,
    NotDetectable,
    NotStabilizable,
    UnstableMatrix,
)

RANK_TOL = 1e-8
CONV_TOL = 1e-11
RESID_TOL = 1e-8
DIVERGE_NORM = 1e12
GAMMA_MARGIN = 1e-9


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """Plant ``x_{t+1} = A x_t + B u_t + w_t + delta_t`` with quadratic cost weights.

    ``Sigma_w`` defaults to the identity and ``Sigma_0`` to zero.
    Construction validates weights and runs PBH stabilizability and
    detectability tests; pass ``validate=False`` to skip the PBH tests.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Sigma_w: np.ndarray = None
    Sigma_0: np.ndarray = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        A = matops.as_square(self.A, "A")
        n = A.shape[0]
        B = matops.as_matrix(self.B, "B")
        if B.shape[0] != n:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
        m = B.shape[1]
        Q = matops.as_symmetric(self.Q, "Q")
        R = matops.as_symmetric(self.R, "R")
        Sw = np.eye(n) if self.Sigma_w is None else matops.as_symmetric(self.Sigma_w, "Sigma_w")
        S0 = np.zeros((n, n)) if self.Sigma_0 is None else matops.as_symmetric(self.Sigma_0, "Sigma_0")
        for name, X, k in (("Q", Q, n), ("R", R, m), ("Sigma_w", Sw, n), ("Sigma_0", S0, n)):
            if X.shape != (k, k):
                raise DimensionMismatch(f"{name} must be {k}x{k}, got {X.shape}")
        for name, X in (("Q", Q), ("Sigma_w", Sw), ("Sigma_0", S0)):
            if not matops.is_psd(X):
                raise ValueError(f"{name} must be positive semidefinite")
        if not matops.is_pd(R):
            raise ValueError("R must be positive definite")
        for name, X in (("A", A), ("B", B), ("Q", Q), ("R", R), ("Sigma_w", Sw), ("Sigma_0", S0)):
            X.setflags(write=False)
            object.__setattr__(self, name, X)
        if self.validate:
            if not is_stabilizable(A, B):
                raise NotStabilizable("(A, B) fails the PBH stabilizability test")
            if not is_detectable(A, matops.psd_sqrt(Q)):
                raise NotDetectable("(Q^{1/2}, A) fails the PBH detectability test")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def closed_loop(self, K) -> np.ndarray:
        return self.A + self.B @ np.asarray(K, dtype=float)

    def closed_loop_weight(self, K) -> np.ndarray:
        K = np.asarray(K, dtype=float)
        return matops.symmetrize(self.Q + K.T @ self.R @ K)


def _full_rank(M: np.ndarray, n: int) -> bool:
    s = np.linalg.svd(M, compute_uv=False)
    return s.size >= n and s[n - 1] > RANK_TOL * max(1.0, s[0])


def is_stabilizable(A, B) -> bool:
    """PBH test: ``[A - lam I, B]`` has full row rank for every ``|lam| >= 1``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1.0 - RANK_TOL:
            if not _full_rank(np.hstack([A - lam * np.eye(n), B.astype(complex)]), n):
                return False
    return True


def is_detectable(A, C) -> bool:
    """PBH test: ``[A - lam I; C]`` has full column rank for every ``|lam| >= 1``."""
    return is_stabilizable(np.asarray(A).T, np.asarray(C).T)


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    residual: float
    gamma: float = math.inf
    iterations: int = 0

    @property
    def is_nominal(self) -> bool:
        return math.isinf(self.gamma)


def _m_of(P: np.ndarray, gamma: float) -> np.ndarray:
    if math.isinf(gamma):
        return P
    g2 = gamma * gamma
    return matops.symmetrize(P + P @ np.linalg.solve(g2 * np.eye(P.shape[0]) - P, P))


def _riccati_step(A, B, Q, R, P, gamma):
    M = _m_of(P, gamma)
    nxt = Q + A.T @ M @ A
    if B.shape[1]:
        BtMA = B.T @ M @ A
        nxt = nxt - BtMA.T @ np.linalg.solve(R + B.T @ M @ B, BtMA)
    return matops.symmetrize(nxt)


def _check_iterate(P: np.ndarray, gamma: float) -> None:
    if not np.all(np.isfinite(P)):
        raise Infeasible(gamma, "iterate became non-finite")
    top = matops.max_eig(P)
    if top > DIVERGE_NORM:
        raise Infeasible(gamma, "iterates diverge")
    if not math.isinf(gamma) and top >= gamma * gamma * (1.0 - GAMMA_MARGIN):
        raise Infeasible(gamma, f"lambda_max(P_k)={top:.6g} reached gamma^2={gamma * gamma:.6g}")


def _iterate(A, B, Q, R, gamma, max_iter):
    P = Q.copy()
    for k in range(1, max_iter + 1):
        nxt = _riccati_step(A, B, Q, R, P, gamma)
        _check_iterate(nxt, gamma)
        if np.linalg.norm(nxt - P, 2) <= CONV_TOL * (1.0 + np.linalg.norm(P, 2)):
            return nxt, k
        P = nxt
    raise NoConvergence(f"Riccati iteration did not converge in {max_iter} steps (gamma={gamma})")


def _doubling(A, B, Q, R, gamma, max_doublings=80):
    n = A.shape[0]
    eye = np.eye(n)
    G = B @ np.linalg.solve(R, B.T) if B.shape[1] else np.zeros((n, n))
    if not math.isinf(gamma):
        G = G - eye / (gamma * gamma)
    Ak, Gk, Hk = A.copy(), matops.symmetrize(G), Q.copy()
    for k in range(max_doublings):
        try:
            W = eye + Gk @ Hk
            WA = np.linalg.solve(W, Ak)
            WG = np.linalg.solve(W, Gk)
        except np.linalg.LinAlgError:
            raise Infeasible(gamma, "singular doubling step") from None
        H_next = matops.symmetrize(Hk + Ak.T @ Hk @ WA)
        _check_iterate(H_next, gamma)
        if np.linalg.norm(H_next - Hk, 2) <= CONV_TOL * (1.0 + np.linalg.norm(Hk, 2)):
            return H_next, 2 ** (k + 1)
        Gk = matops.symmetrize(Gk + Ak @ WG @ Ak.T)
        Ak = Ak @ WA
        Hk = H_next
    if not math.isinf(gamma):
        # a monotone sequence that has not settled after 2**80 steps is unbounded
        raise Infeasible(gamma, "doubled iterates do not settle")
    raise NoConvergence("Riccati doubling did not converge")


def literal_residual(A, B, Q, R, P, gamma) -> float:
    """Residual of the stacked-input form ``dare(A, [B I], Q, diag(R, -gamma^2 I))``."""
    n = A.shape[0]
    if math.isinf(gamma):
        Bb, Rb = B, R
    else:
        Bb = np.hstack([B, np.eye(n)])
        m = B.shape[1]
        Rb = np.zeros((m + n, m + n))
        Rb[:m, :m] = R
        Rb[m:, m:] = -gamma * gamma * np.eye(n)
    rhs = Q + A.T @ P @ A
    if Bb.shape[1]:
        BtPA = Bb.T @ P @ A
        rhs = rhs - BtPA.T @ np.linalg.solve(Bb.T @ P @ Bb + Rb, BtPA)
    return float(np.linalg.norm(P - rhs, 2))


def gains(A, B, R, P, gamma):
    """Return ``(M, K, Delta)`` for a Riccati solution ``P`` at level ``gamma``."""
    n = A.shape[0]
    M = _m_of(P, gamma)
    if B.shape[1]:
        K = -np.linalg.solve(R + B.T @ M @ B, B.T @ M @ A)
    else:
        K = np.zeros((0, n))
    if math.isinf(gamma):
        Delta = np.zeros((n, n))
    else:
        Delta = matops.symmetrize(np.linalg.solve(gamma * gamma * np.eye(n) - P, P))
    return M, K, Delta


def _solve(A, B, Q, R, gamma, method, max_iter):
    if method == "doubling":
        P, iters = _doubling(A, B, Q, R, gamma)
        # a few plain steps: polishes rounding and confirms P is a fixed point
        for _ in range(3):
            P = _riccati_step(A, B, Q, R, P, gamma)
            _check_iterate(P, gamma)
    elif method == "iteration":
        P, iters = _iterate(A, B, Q, R, gamma, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    if matops.min_eig(P) < -matops.PSD_TOL * (1.0 + matops.spectral_norm(P)):
        raise Infeasible(gamma, "solution is not positive semidefinite")
    M, K, Delta = gains(A, B, R, P, gamma)
    Acl = A + B @ K
    if matops.spectral_radius(Acl) >= 1.0:
        raise Infeasible(gamma, "A + BK is not stable")
    if matops.spectral_radius((np.eye(A.shape[0]) + Delta) @ Acl) >= 1.0:
        raise Infeasible(gamma, "closed loop under the worst-case adversary is not stable")
    resid = literal_residual(A, B, Q, R, P, gamma)
    if resid > RESID_TOL * (1.0 + matops.spectral_norm(P)):
        raise NoConvergence(f"Riccati residual {resid:.3g} above tolerance (gamma={gamma})")
    return RiccatiSolution(P=P, residual=resid, gamma=float(gamma), iterations=iters)


def solve_nominal_dare(sys: LtiSystem, method: str = "doubling", max_iter: int = 10_000) -> RiccatiSolution:
    """Stabilizing solution of ``P = Q + A^T P A - A^T P B (R + B^T P B)^{-1} B^T P A``."""
    try:
        return _solve(sys.A, sys.B, sys.Q, sys.R, math.inf, method, max_iter)
    except Infeasible as exc:
        raise NoConvergence(f"nominal DARE failed: {exc.reason}") from exc


def solve_adversarial_dare(
    sys: LtiSystem, gamma: float, method: str = "doubling", max_iter: int = 10_000
) -> RiccatiSolution:
    """Solution of the gamma-adversarial DARE with ``0 <= P < gamma^2 I``.

    Raises :class:`Infeasible` when ``gamma`` is at or below the feasibility
    boundary (an iterate reaches ``gamma^2``, the iterates diverge, or the
    worst-case closed loop is unstable).
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return _solve(sys.A, sys.B, sys.Q, sys.R, float(gamma), method, max_iter)


def closed_loop_riccati(Acl, Qcl, gamma: float, method: str = "doubling", max_iter: int = 10_000) -> RiccatiSolution:
    """Solve ``P = Qcl + Acl^T (P + P (gamma^2 I - P)^{-1} P) Acl`` with ``P < gamma^2 I``.

    This is the adversarial equation with no control input; it scores a fixed
    stabilizing gain.  ``gamma = inf`` gives ``dlyap(Acl^T, Qcl)``.
    """
    Acl = matops.as_square(Acl, "Acl")
    Qcl = matops.as_symmetric(Qcl, "Qcl")
    if matops.spectral_radius(Acl) >= 1.0:
        raise UnstableMatrix("closed_loop_riccati requires a stable Acl")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    n = Acl.shape[0]
    if math.isinf(gamma):
        P = matops.dlyap(Acl.T, Qcl)
        resid = float(np.linalg.norm(P - Qcl - Acl.T @ P @ Acl, 2))
        return RiccatiSolution(P=P, residual=resid, gamma=math.inf, iterations=0)
    return _solve(Acl, np.zeros((n, 0)), Qcl, np.zeros((0, 0)), float(gamma), method, max_iter)


def feasibility_boundary(is_feasible, lower: float, start: float, rel_tol: float = 1e-6, ceiling: float = 1e9) -> float:
    """Smallest feasible level of a monotone predicate, to relative precision ``rel_tol``.

    ``lower`` must be infeasible.  The upper end is found by doubling from
    ``start``.  Returns the feasible end of the final bracket.
    """
    hi = max(start, lower * (1.0 + 2 * rel_tol), 1e-12)
    while not is_feasible(hi):
        lower = hi
        hi *= 2.0
        if hi > ceiling:
            raise BracketFailure(f"no feasible level found below {ceiling:g}")
    lo = lower
    while hi - lo > 0.5 * rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if is_feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _feasible(fn, *args) -> bool:
    try:
        fn(*args)
    except (Infeasible, NoConvergence, np.linalg.LinAlgError):
        return False
    return True


def gamma_inf(sys: LtiSystem, rel_tol: float = 1e-6) -> float:
    """Smallest gamma at which the adversarial DARE is feasible (optimal H-infinity gain).

    Feasibility is monotone in gamma, so bisection applies.  Since
    ``P_gamma >= P_star`` and ``P_gamma < gamma^2 I``, ``sqrt(lambda_max(P_star))``
    is an infeasible lower end.
    """
    P_star = solve_nominal_dare(sys).P
    floor = math.sqrt(max(matops.max_eig(P_star), 0.0))
    if floor == 0.0:
        return 0.0
    return feasibility_boundary(
        lambda g: _feasible(solve_adversarial_dare, sys, g), floor, floor * 1.01, rel_tol
    )


def closed_loop_gamma_inf(Acl, Qcl, rel_tol: float = 1e-6) -> float:
    """H-infinity norm of ``delta -> Qcl^{1/2} x`` for ``x_{t+1} = Acl x_t + delta_t``.

    Located as the feasibility boundary of :func:`closed_loop_riccati`
    (bounded-real characterization).
    """
    Acl = matops.as_square(Acl, "Acl")
    Qcl = matops.as_symmetric(Qcl, "Qcl")
    P0 = closed_loop_riccati(Acl, Qcl, math.inf).P
    floor = math.sqrt(max(matops.max_eig(P0), 0.0))
    if floor == 0.0:
        return 0.0
    return feasibility_boundary(
        lambda g: _feasible(closed_loop_riccati, Acl, Qcl, g), floor, floor * 1.01, rel_tol
    )


def lqr_closed_loop_weight(sys: LtiSystem, K_star, weight: str = "closed_loop") -> np.ndarray:
    """State weight used for the nominal-controller adversarial cost ``P~_gamma``.

    ``"closed_loop"`` uses ``Q + K*^T R K*`` (the cost of running ``K*``);
    ``"state"`` uses ``Q`` alone.
    """
    if weight == "closed_loop":
        return sys.closed_loop_weight(K_star)
    if weight == "state":
        return np.array(sys.Q)
    raise ValueError(f"unknown weight {weight!r}")


def p_tilde(sys: LtiSystem, gamma: float, K_star=None, weight: str = "closed_loop") -> RiccatiSolution:
    """``dare(A + B K*, I, W, -gamma^2 I)``: adversarial cost-to-go of the LQR gain."""
    if K_star is None:
        P = solve_nominal_dare(sys).P
        K_star = gains(sys.A, sys.B, sys.R, P, math.inf)[1]
    return closed_loop_riccati(sys.closed_loop(K_star), lqr_closed_loop_weight(sys, K_star, weight), gamma)
