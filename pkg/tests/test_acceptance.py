"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line in the summary."""

import filecmp
import functools
import math
import subprocess
import sys
import time

import numpy as np

from advlqr import bounds as bd
from advlqr import cli, matops
from advlqr.config import ScenarioConfig, boeing747, config_from_dict, integrator
from advlqr.evaluation import DisturbanceModel, nominal_cost, simulate
from advlqr.riccati import LtiSystem, gains, gamma_inf, literal_residual, solve_adversarial_dare, solve_nominal_dare
from advlqr.synthesis import adv_controller, adv_lqr
from conftest import ACCEPTANCE, random_system


def criterion(key):
    """Record ``(passed, detail)`` returned by the test body, then assert on it."""

    def wrap(fn):
        @functools.wraps(fn)
        def test(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                ok, detail = fn(*args, **kwargs)
            except Exception as e:
                ACCEPTANCE[key] = (False, f"raised {type(e).__name__}: {e}")
                raise
            detail = f"{detail} [{time.perf_counter() - t0:.1f} s]"
            ACCEPTANCE[key] = (ok, detail)
            print(f"{'PASS' if ok else 'FAIL'} criterion {key}: {detail}")
            assert ok, detail

        return test

    return wrap


def systems(seed, count, **kw):
    rng = np.random.default_rng(seed)
    return [random_system(rng, **kw) for _ in range(count)]


@criterion(1)
def test_riccati_correctness():
    t0 = time.perf_counter()
    worst, bad = 0.0, []
    rng = np.random.default_rng(101)
    for i, s in enumerate(systems(1, 50)):
        sol = solve_nominal_dare(s)
        worst = max(worst, sol.residual / (1 + np.linalg.norm(sol.P, 2)))
        g = rng.uniform(1.05, 3.0) * gamma_inf(s)
        P = solve_adversarial_dare(s, g).P
        _, K, Delta = gains(s.A, s.B, s.R, P, g)
        r = literal_residual(s.A, s.B, s.Q, s.R, P, g) / (1 + np.linalg.norm(P, 2))
        worst = max(worst, r)
        ok = (
            r <= 1e-8
            and matops.min_eig(P) >= -1e-9 * (1 + np.linalg.norm(P, 2))
            and matops.max_eig(P) < g * g
            and matops.spectral_radius((np.eye(s.n) + Delta) @ s.closed_loop(K)) < 1
        )
        if not ok:
            bad.append(i)
    elapsed = time.perf_counter() - t0
    return not bad and elapsed < 30, f"50 systems, max scaled residual {worst:.2e}, failures {bad}, {elapsed:.1f} s < 30 s"


def backward(A, B, Q, R, gamma, T=5000):
    n = A.shape[0]
    Bb = np.hstack([B, np.eye(n)])
    m = B.shape[1]
    Rb = np.zeros((m + n, m + n))
    Rb[:m, :m] = R
    Rb[m:, m:] = -gamma * gamma * np.eye(n)
    P = np.zeros((n, n))
    for _ in range(T):
        BtPA = Bb.T @ P @ A
        P = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(Bb.T @ P @ Bb + Rb, BtPA)
        P = 0.5 * (P + P.T)
    return P


@criterion(2)
def test_backward_recursion_oracle():
    rng = np.random.default_rng(2)
    cases = [random_system(rng, n=1, m=1, radius=r) for r in (0.5, 0.9, 1.1, 1.2, 0.3)]
    cases += [random_system(rng, n=2, m=1, radius=r) for r in (0.5, 0.9, 1.05)] + [integrator(1.0), integrator(0.3)]
    worst = 0.0
    for s in cases:
        g = 1.5 * gamma_inf(s)
        worst = max(worst, np.max(np.abs(solve_adversarial_dare(s, g).P - backward(s.A, s.B, s.Q, s.R, g))))
    return worst <= 1e-6, f"10 instances, max |P - P_T=5000| = {worst:.2e} <= 1e-6"


@criterion(3)
def test_gamma_ordering():
    worst = math.inf
    for s in systems(3, 20):
        gi = gamma_inf(s)
        Ps = [solve_adversarial_dare(s, gi * f).P for f in (1.01, 1.1, 1.5, 3.0, 10.0)]
        for hi, lo in zip(Ps, Ps[1:]):
            worst = min(worst, matops.min_eig(hi - lo))
    return worst >= -1e-7, f"20 systems x 5 gammas, min eig(P_g2 - P_g1) = {worst:.2e} >= -1e-7"


@criterion(4)
def test_algorithm_fixed_point():
    errs = [abs(adv_lqr(boeing747(), 0.5).adversary_power - 0.5) / 0.5]
    for s in systems(4, 10, radius=0.9):
        for eps in (0.01, 0.1, 1.0):
            errs.append(abs(adv_lqr(s, eps).adversary_power - eps) / eps)
    n = 3
    zero = LtiSystem(np.zeros((n, n)), np.ones((n, 1)), np.eye(n), np.eye(1))
    g_err = abs(adv_lqr(zero, n / 9).gamma_star - 2.0)
    ok = max(errs) <= 1e-4 and g_err <= 1e-6
    return ok, f"max |power - eps|/eps = {max(errs):.2e} <= 1e-4 over 31 runs; A=0 |gamma* - 2| = {g_err:.1e} <= 1e-6"


def mc_systems():
    rng = np.random.default_rng(7)
    out = [("integrator(1)", integrator(1.0)), ("integrator(0.5)", integrator(0.5))]
    for i in range(3):
        A = rng.normal(size=(3, 3))
        A *= 0.9 / max(abs(np.linalg.eigvals(A)))
        out.append((f"random{i}", LtiSystem(A, rng.normal(size=(3, 2)), np.eye(3), np.eye(2))))
    return out


@functools.lru_cache(maxsize=None)
def mc_runs():
    """(name, seed, closed-form power, simulated power, trace(M Sigma_w), simulated soft cost)."""
    rows = []
    for name, s in mc_systems():
        hb = adv_lqr(s, 0.5)
        c = hb.controller
        for seed in (0, 1000, 2000):
            tr = simulate(s, c.K, DisturbanceModel(seed=seed), 10**6, adversary=c.Delta)
            d2 = np.sum(tr.adversarial**2, axis=1)
            soft = np.mean(tr.stage_costs(s.Q, s.R) - hb.gamma_star**2 * d2)
            rows.append((name, seed, hb.adversary_power, float(np.mean(d2)), float(np.trace(c.M @ s.Sigma_w)), soft))
    return rows


@criterion(5)
def test_power_vs_monte_carlo():
    rel = [abs(sim / p - 1) for _, _, p, sim, _, _ in mc_runs()]
    return max(rel) <= 0.02, f"5 systems x 3 seeds at 1e6 steps, max relative error {max(rel):.4f} <= 0.02"


@criterion(6)
def test_ergodic_soft_cost():
    rel = [abs(soft / m - 1) for *_, m, soft in mc_runs()]
    return max(rel) <= 0.01, f"time-average soft cost vs trace(M Sigma_w), max relative error {max(rel):.4f} <= 0.01"


def gap_pairs():
    rng = np.random.default_rng(77)
    for s in systems(7, 50, noise=True):
        ctx = bd.TradeoffContext(s)
        yield s, ctx, adv_controller(s, rng.uniform(1.1, 10.0) * ctx.gamma_inf).K


@criterion(7)
def test_exact_gap_two_paths():
    worst = 0.0
    for s, ctx, K in gap_pairs():
        direct = nominal_cost(s, K) - nominal_cost(s, ctx.K_star)
        worst = max(worst, abs(bd.exact_gap(s, K, ctx) - direct) / max(abs(direct), 1e-300))
    return worst <= 1e-8, f"50 systems, max relative disagreement {worst:.2e} <= 1e-8"


@criterion(8)
def test_sandwich():
    bad = 0
    for s, ctx, K in gap_pairs():
        lo, hi = bd.sandwich_bounds(s, K, ctx)
        gap = bd.exact_gap(s, K, ctx)
        bad += not (lo <= gap * (1 + 1e-9) and gap <= hi * (1 + 1e-9))
    scalar = LtiSystem([[0.7]], [[0.5]], [[2.0]], [[1.0]], [[0.3]])
    K = adv_controller(scalar, 3 * gamma_inf(scalar)).K
    lo, hi = bd.sandwich_bounds(scalar, K)
    gap = bd.exact_gap(scalar, K)
    collapse = max(abs(lo / gap - 1), abs(hi / gap - 1))
    return bad == 0 and collapse <= 1e-9, f"{bad} violations on 50 pairs; scalar lower/upper vs exact {collapse:.1e}"


def log_slope(xs, ys):
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


@criterion(9)
def test_gap_bounds_sweep():
    up_checked = lo_checked = violations = 0
    for s in systems(9, 50, noise=True):
        ctx = bd.TradeoffContext(s)
        thr = min(bd.upper_bound_gamma_threshold(s, l, ctx=ctx) for l in range(1, s.n + 1))
        base = max(ctx.gamma_inf, ctx.gamma_tilde_inf, thr if math.isfinite(thr) else 0.0)
        for f in (1.5, 2, 5, 10, 100):
            r = bd.tradeoff_report(s, f * base, ctx=ctx)
            if r.upper_bound is not None:
                up_checked += 1
                violations += not r.exact_gap <= r.upper_bound
            if r.lower_bound is not None:
                lo_checked += 1
                violations += not r.lower_bound <= r.exact_gap
    slopes = []
    for s in (integrator(1.0), boeing747()):
        ctx = bd.TradeoffContext(s)
        thr = min(bd.upper_bound_gamma_threshold(s, l, ctx=ctx) for l in range(1, s.n + 1))
        gs = [f * max(ctx.gamma_inf, thr) for f in (1e2, 1e3, 1e4)]
        slopes.append(log_slope(gs, [bd.gap_upper_bound(s, g, ctx=ctx) for g in gs]))
        slopes.append(log_slope(gs, [bd.gap_lower_bound(s, g, ctx=ctx) for g in gs]))
    ok = violations == 0 and up_checked > 0 and lo_checked > 0 and all(abs(x + 4) <= 0.2 for x in slopes)
    return ok, (
        f"{violations} violations ({up_checked} upper, {lo_checked} lower admissible checks); "
        f"log-log slopes {', '.join(f'{x:.3f}' for x in slopes)} (target -4 +/- 0.2)"
    )


@criterion(10)
def test_tradeoff_trends():
    t0 = time.perf_counter()
    rhos = tuple(np.round(np.arange(0.3, 1.01, 0.1), 10).tolist())
    _, rows, extra = cli.cmd_tradeoff_curve(ScenarioConfig(rho_grid=rhos))
    widths = [nc[-1] - nc[0] for nc, _ in extra["curves"].values()]
    _, env, _ = cli.cmd_tradeoff_envelope(ScenarioConfig(rho_grid=rhos))
    nc_gap = [r[5] for r in env]
    dist = [r[6] for r in env]

    def strictly_down(v):
        return all(b < a for a, b in zip(v, v[1:]))

    elapsed = time.perf_counter() - t0
    ok = strictly_down(widths) and strictly_down(nc_gap) and strictly_down(dist) and elapsed < 120
    return ok, (
        f"rho 0.3..1.0: curve width {widths[0]:.4f} -> {widths[-1]:.4f}, envelope gap {dist[0]:.4f} -> {dist[-1]:.4f}, "
        f"strictly decreasing={ok}, {elapsed:.1f} s < 120 s"
    )


@criterion(11)
def test_benchmark_trends():
    t0 = time.perf_counter()
    res = cli.cmd_benchmark(config_from_dict({"system": "boeing747", "epsilon": 0.5, "horizon": 10_000, "trials": 100}))
    final = {regime: {k: v[-1] for k, v in cols.items()} for regime, (_, cols) in res.items()}
    g, a = final["gaussian"], final["adversarial"]
    h2_lowest = g["cost_h2"] <= min(g.values())
    within = g["cost_adv"] <= 1.10 * g["cost_h2"]
    adv_lowest = a["cost_adv"] < min(a["cost_h2"], a["cost_hinf"])
    elapsed = time.perf_counter() - t0
    ok = h2_lowest and within and adv_lowest and elapsed < 300
    return ok, (
        f"gaussian h2={g['cost_h2']:.2f} hinf={g['cost_hinf']:.2f} adv={g['cost_adv']:.2f} "
        f"(h2 lowest {h2_lowest}, adv/h2={g['cost_adv'] / g['cost_h2']:.3f} <= 1.10 {within}); "
        f"adversarial h2={a['cost_h2']:.1f} hinf={a['cost_hinf']:.1f} adv={a['cost_adv']:.1f} (adv lowest {adv_lowest}); "
        f"{elapsed:.0f} s < 300 s"
    )


COMMANDS = {
    "synth": ["--out", "out.json"],
    "eval": ["--trials", "3", "--horizon", "500", "--out", "out.json"],
    "tradeoff-curve": ["--config", "curve.toml", "--out", "out.csv"],
    "tradeoff-envelope": ["--config", "env.toml", "--out", "out.csv"],
    "benchmark": ["--trials", "4", "--horizon", "300", "--out", "bench"],
    "bounds": ["--out", "out.csv"],
}


@criterion(12)
def test_determinism(tmp_path):
    mismatched = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        (d / "curve.toml").write_text('rho_grid = [0.5, 1.0]\nepsilon_grid = {start = 0.02, stop = 0.1, num = 5}\n')
        (d / "env.toml").write_text("rho_grid = [0.3, 0.6, 0.9]\n")
        for cmd, args in COMMANDS.items():
            sub = d / cmd
            sub.mkdir()
            for f in ("curve.toml", "env.toml"):
                (sub / f).write_text((d / f).read_text())
            r = subprocess.run(
                [sys.executable, "-m", "advlqr.cli", cmd, "--seed", "11", *args], cwd=sub, capture_output=True
            )
            assert r.returncode == 0, r.stderr.decode()
    files = 0
    for cmd in COMMANDS:
        cmp = filecmp.dircmp(tmp_path / "a" / cmd, tmp_path / "b" / cmd)
        stack = [cmp]
        while stack:
            c = stack.pop()
            files += len(c.common_files)
            _, mismatch, errors = filecmp.cmpfiles(c.left, c.right, c.common_files, shallow=False)
            mismatched += mismatch + errors + c.left_only + c.right_only
            stack += c.subdirs.values()
    return not mismatched, f"6 commands run twice, {files} output files compared, mismatches {mismatched}"
