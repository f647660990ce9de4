"""Cost evaluation for fixed gains and closed-loop Monte Carlo rollouts."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from advlqr import matops
from advlqr.errors import UnstableController
from advlqr.riccati import LtiSystem, closed_loop_gamma_inf, closed_loop_riccati, gains
from advlqr.synthesis import bisect_budget, find_upper_gamma, stationary_power

GAUSSIAN = "gaussian"
VARYING_MEAN = "varying_mean_gaussian"
ADVERSARIAL = "adversarial_plus_gaussian"
KINDS = (GAUSSIAN, VARYING_MEAN, ADVERSARIAL)


def _stable_closed_loop(sys: LtiSystem, K):
    K = np.asarray(K, dtype=float).reshape(sys.m, sys.n)
    Acl = sys.closed_loop(K)
    rho = matops.spectral_radius(Acl)
    if rho >= 1.0:
        raise UnstableController(f"rho(A + BK) = {rho:.6g} >= 1")
    return K, Acl


def nominal_cost(sys: LtiSystem, K) -> float:
    """``NC(K) = trace(dlyap((A+BK)^T, Q + K^T R K) Sigma_w)``."""
    K, Acl = _stable_closed_loop(sys, K)
    V = matops.dlyap(Acl.T, sys.closed_loop_weight(K))
    return float(np.trace(V @ sys.Sigma_w))


def closed_loop_hinf_norm(sys: LtiSystem, K) -> float:
    K, Acl = _stable_closed_loop(sys, K)
    return closed_loop_gamma_inf(Acl, sys.closed_loop_weight(K))


def robust_cost(sys: LtiSystem, K, epsilon: float) -> float:
    """Worst case average cost for deterministic disturbances of average power ``epsilon``.

    Equals ``epsilon * ||T||_inf^2`` where ``T`` maps the disturbance to the
    weighted state of the closed loop.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    g = closed_loop_hinf_norm(sys, K)
    return float(epsilon * g * g)


@dataclass(frozen=True)
class WorstCase:
    """Budget-matched worst-case adversary against a fixed gain."""

    cost: float
    gamma: float
    P: np.ndarray
    M: np.ndarray
    Delta: np.ndarray
    power: float


def worst_case_adversary(sys: LtiSystem, K, epsilon: float, power_tol: float = None) -> WorstCase:
    """Run the budget bisection on the closed loop ``(A + BK, 0, Q + K^T R K, 0)``."""
    K, Acl = _stable_closed_loop(sys, K)
    Qcl = sys.closed_loop_weight(K)
    n = sys.n
    if epsilon == 0:
        P = closed_loop_riccati(Acl, Qcl, math.inf).P
        return WorstCase(float(np.trace(P @ sys.Sigma_w)), math.inf, P, P, np.zeros((n, n)), 0.0)
    if not epsilon > 0:
        raise ValueError("epsilon must be nonnegative")

    def make(g):
        P = closed_loop_riccati(Acl, Qcl, g).P
        M, _, Delta = gains(Acl, np.zeros((n, 0)), np.zeros((0, 0)), P, g)
        return P, M, Delta

    def power(c):
        return stationary_power(Acl, c[2], sys.Sigma_w)

    lb = closed_loop_gamma_inf(Acl, Qcl) * (1.0 + 1e-6)
    if lb == 0.0:
        # zero weight: every adversary is free and the cost is zero
        z = np.zeros((n, n))
        return WorstCase(0.0, 0.0, z, z, z, 0.0)
    ub = find_upper_gamma(lambda g: power(make(g)), epsilon, 2.0 * lb)
    g, (P, M, Delta), p, _ = bisect_budget(
        make, power, epsilon, lb, ub, 1e-8 * ub, power_tol if power_tol is not None else 1e-6 * epsilon
    )
    cost = float(np.trace(M @ sys.Sigma_w)) + g * g * epsilon
    return WorstCase(cost, float(g), P, M, Delta, float(p))


def adversarial_cost(sys: LtiSystem, K, epsilon: float):
    """``AC(K)`` at budget ``epsilon``; returns ``(cost, gamma_star)``."""
    wc = worst_case_adversary(sys, K, epsilon)
    return wc.cost, wc.gamma


@dataclass(frozen=True)
class CostReport:
    nc: float
    rc: float
    ac: float
    gamma_star_ac: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"nc": self.nc, "rc": self.rc, "ac": self.ac, "gamma_star_ac": self.gamma_star_ac, **self.details}


def cost_report(sys: LtiSystem, K, epsilon: float) -> CostReport:
    nc = nominal_cost(sys, K)
    g_cl = closed_loop_hinf_norm(sys, K)
    wc = worst_case_adversary(sys, K, epsilon)
    if nc > wc.cost + 1e-9 * (1.0 + abs(nc)):
        raise AssertionError(f"NC={nc!r} exceeds AC={wc.cost!r}")
    return CostReport(
        nc=nc,
        rc=float(epsilon * g_cl * g_cl),
        ac=wc.cost,
        gamma_star_ac=wc.gamma,
        details={"epsilon": float(epsilon), "closed_loop_hinf": g_cl, "adversary_power": wc.power},
    )


# ---------------------------------------------------------------- simulation


@dataclass(frozen=True)
class DisturbanceModel:
    """Stochastic part of the disturbance plus an optional worst-case component.

    ``varying_mean_gaussian`` draws ``w_t ~ N(amplitude * sin(frequency t) 1, Sigma_w)``.
    ``adversarial_plus_gaussian`` adds the causal worst-case perturbation
    of average power ``epsilon`` against the simulated gain.
    """

    kind: str = GAUSSIAN
    covariance: np.ndarray = None
    seed: int = 0
    amplitude: float = 1.0
    frequency: float = 0.01
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown disturbance kind {self.kind!r}; expected one of {KINDS}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    def rng(self, trial: int = 0) -> np.random.Generator:
        return np.random.Generator(np.random.Philox((int(self.seed) + trial) % 2**64))

    def draw(self, n: int, horizon: int, Sigma_0=None, trial: int = 0):
        """Return ``(x0, W)`` with ``W`` of shape ``(horizon, n)``."""
        cov = np.eye(n) if self.covariance is None else np.asarray(self.covariance, dtype=float)
        rng = self.rng(trial)
        z0 = rng.standard_normal(n)
        Z = rng.standard_normal((horizon, n))
        x0 = np.zeros(n) if Sigma_0 is None else matops.psd_sqrt(Sigma_0) @ z0
        W = Z @ matops.psd_sqrt(cov).T
        if self.kind == VARYING_MEAN:
            W += (self.amplitude * np.sin(self.frequency * np.arange(horizon)))[:, None]
        return x0, W


@dataclass(frozen=True)
class SimulationTrace:
    horizon: int
    states: np.ndarray
    inputs: np.ndarray
    disturbances: np.ndarray
    adversarial: np.ndarray
    running_avg_cost: np.ndarray
    diverged: bool = False

    def stage_costs(self, Q, R) -> np.ndarray:
        X, U = self.states, self.inputs
        return np.einsum("ti,ij,tj->t", X, Q, X) + np.einsum("ti,ij,tj->t", U, R, U)

    def write_csv(self, path_or_file) -> None:
        """Write one row per step: ``t, x_*, u_*, w_*, [d_*], running_avg_cost``."""
        n, m = self.states.shape[1], self.inputs.shape[1]
        header = ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"u_{i + 1}" for i in range(m)]
        header += [f"w_{i + 1}" for i in range(n)]
        blocks = [self.states, self.inputs, self.disturbances]
        if self.adversarial is not None:
            header += [f"d_{i + 1}" for i in range(n)]
            blocks.append(self.adversarial)
        header.append("running_avg_cost")
        body = np.hstack(blocks + [self.running_avg_cost[:, None]])
        own = isinstance(path_or_file, (str, os.PathLike))
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t, row in enumerate(body):
                w.writerow([t] + [fmt(v) for v in row])
        finally:
            if own:
                fh.close()


def fmt(v: float) -> str:
    return format(float(v), ".17g")


@numba.njit(cache=True, nogil=True)
def _rollout(Acl, K, Q, R, Delta, x0, W, record):
    T, n = W.shape
    m = K.shape[0]
    X = np.empty((T if record else 1, n))
    U = np.empty((T if record else 1, m))
    D = np.empty((T if record else 1, n))
    avg = np.empty(T)
    x = x0.copy()
    total = 0.0
    diverged = False
    for t in range(T):
        u = K @ x
        total += x @ (Q @ x) + u @ (R @ u)
        avg[t] = total / (t + 1)
        pre = Acl @ x + W[t]
        d = Delta @ pre
        if record:
            X[t] = x
            U[t] = u
            D[t] = d
        x = pre + d
        if not diverged and np.sqrt(x @ x) > 1e9:
            diverged = True
    return X, U, D, avg, diverged


def _resolve_adversary(sys, K, model, adversary):
    if adversary is not None:
        return np.asarray(adversary, dtype=float)
    if model.kind == ADVERSARIAL and model.epsilon > 0:
        return worst_case_adversary(sys, K, model.epsilon).Delta
    return np.zeros((sys.n, sys.n))


def simulate(sys: LtiSystem, K, model: DisturbanceModel, horizon: int, adversary=None, trial: int = 0) -> SimulationTrace:
    """Roll out ``x_{t+1} = A x_t + B u_t + w_t + delta_t`` with ``u_t = K x_t``.

    The adversary, when present, plays ``delta_t = Delta((A + BK) x_t + w_t)``
    (it sees the current noise sample).  ``running_avg_cost[t]`` is the mean
    stage cost over steps ``0..t``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    K = np.ascontiguousarray(np.asarray(K, dtype=float).reshape(sys.m, sys.n))
    Delta = np.ascontiguousarray(_resolve_adversary(sys, K, model, adversary))
    cov = sys.Sigma_w if model.covariance is None else model.covariance
    model = DisturbanceModel(model.kind, cov, model.seed, model.amplitude, model.frequency, model.epsilon)
    x0, W = model.draw(sys.n, horizon, sys.Sigma_0, trial)
    X, U, D, avg, diverged = _rollout(
        np.ascontiguousarray(sys.closed_loop(K)), K, np.array(sys.Q), np.array(sys.R), Delta, x0, W, True
    )
    return SimulationTrace(
        horizon=horizon,
        states=X,
        inputs=U,
        disturbances=W,
        adversarial=D if np.any(Delta) else None,
        running_avg_cost=avg,
        diverged=bool(diverged),
    )


def max_workers() -> int:
    env = os.environ.get("ADVLQR_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def average_running_cost(
    sys: LtiSystem, K, model: DisturbanceModel, horizon: int, trials: int, adversary=None
) -> np.ndarray:
    """Running-average cost curve averaged over ``trials`` rollouts.

    Trial ``i`` uses seed ``model.seed + i`` so results do not depend on
    scheduling; the sum is taken in trial order.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    K = np.ascontiguousarray(np.asarray(K, dtype=float).reshape(sys.m, sys.n))
    Delta = np.ascontiguousarray(_resolve_adversary(sys, K, model, adversary))
    cov = sys.Sigma_w if model.covariance is None else model.covariance
    model = DisturbanceModel(model.kind, cov, model.seed, model.amplitude, model.frequency, model.epsilon)
    Acl = np.ascontiguousarray(sys.closed_loop(K))
    Q, R = np.array(sys.Q), np.array(sys.R)

    def one(i):
        x0, W = model.draw(sys.n, horizon, sys.Sigma_0, i)
        return _rollout(Acl, K, Q, R, Delta, x0, W, False)[3]

    with ThreadPoolExecutor(max_workers=min(max_workers(), trials)) as pool:
        curves = list(pool.map(one, range(trials)))
    total = np.zeros(horizon)
    for c in curves:
        total += c
    return total / trials
