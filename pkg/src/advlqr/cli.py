"""Command-line experiments: synthesis, evaluation, tradeoff sweeps, benchmark, bounds.

Every command is deterministic for a fixed config and seed.  Tables go to
CSV (RFC 4180, 17 significant digits); with ``--out FILE.csv`` a PNG figure
is drawn next to the table unless ``--no-plot`` is given.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys as _sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from advlqr import bounds as bd
from advlqr import plotting
from advlqr.config import ConfigError, ScenarioConfig, boeing747, builtin_system, integrator, load_config
from advlqr.errors import (
    BadBracket,
    BracketFailure,
    DimensionMismatch,
    Infeasible,
    NotDetectable,
    NotStabilizable,
    NumericalFailure,
    PreconditionFailed,
)
from advlqr.evaluation import (
    ADVERSARIAL,
    GAUSSIAN,
    VARYING_MEAN,
    DisturbanceModel,
    average_running_cost,
    cost_report,
    fmt,
    max_workers,
    nominal_cost,
    worst_case_adversary,
)
from advlqr.riccati import LtiSystem
from advlqr.synthesis import adv_lqr, h_inf_controller, lqr_gain

log = logging.getLogger("advlqr")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4
CONTROLLER_FORMAT = "advlqr-controller"
MIXED_NOTE = "mixed H2/Hinf baseline omitted (needs an LMI/SDP solver)"


# ---------------------------------------------------------------- output helpers


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(float(v))
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False) + "\n"


def _emit(text: str, out, stdout) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="")
    else:
        stdout.write(text)


def _plot_target(cfg: ScenarioConfig, plot: bool):
    if not plot or not cfg.output_path:
        return None
    return plotting.png_path(cfg.output_path)


def _pmap(fn, items):
    items = list(items)
    if len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(max_workers(), len(items))) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- controller files


def system_dict(sys: LtiSystem) -> dict:
    return {"A": sys.A, "B": sys.B, "Q": sys.Q, "R": sys.R, "Sigma_w": sys.Sigma_w, "Sigma_0": sys.Sigma_0}


def read_controller(path) -> dict:
    """Load a controller file written by ``synth``; arrays come back as float64."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"controller: cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"controller: {path}: {e}") from None
    if data.get("format") != CONTROLLER_FORMAT:
        raise ConfigError(f"controller: {path} is not a controller file")
    for k in ("K", "Delta", "P", "M"):
        data[k] = np.array(data[k], dtype=float)
    data["system"] = {k: np.array(v, dtype=float) for k, v in data["system"].items()}
    if data.get("gamma_star") is None:
        data["gamma_star"] = math.inf
    return data


# ---------------------------------------------------------------- commands


def _system(cfg: ScenarioConfig, default: LtiSystem) -> LtiSystem:
    return cfg.system if cfg.system is not None else default


def cmd_synth(cfg: ScenarioConfig) -> dict:
    sys = _system(cfg, boeing747())
    eps = 0.5 if cfg.epsilon is None else cfg.epsilon
    K_star, sol_star = lqr_gain(sys)
    if eps == 0:
        out = {
            "gamma_star": math.inf,
            "K": K_star,
            "Delta": np.zeros((sys.n, sys.n)),
            "P": sol_star.P,
            "M": sol_star.P,
            "adversary_power": 0.0,
            "optimal_cost": float(np.trace(sol_star.P @ sys.Sigma_w)),
            "diagnostics": {"riccati_residual": sol_star.residual, "riccati_iterations": sol_star.iterations},
        }
    else:
        hb = adv_lqr(sys, eps)
        c = hb.controller
        out = {
            "gamma_star": hb.gamma_star,
            "K": c.K,
            "Delta": c.Delta,
            "P": c.P,
            "M": c.M,
            "adversary_power": hb.adversary_power,
            "optimal_cost": hb.optimal_cost,
            "diagnostics": {
                "gamma_lb": hb.gamma_lb,
                "gamma_ub": hb.gamma_ub,
                "bisection_steps": hb.bisection_steps,
                "riccati_residual": c.solution.residual,
                "riccati_iterations": c.solution.iterations,
            },
        }
    out["nominal_cost"] = nominal_cost(sys, out["K"])
    out["diagnostics"]["lqr_gain_distance"] = float(np.linalg.norm(out["K"] - K_star, 2))
    return {"format": CONTROLLER_FORMAT, "version": 1, "epsilon": eps, **out, "system": system_dict(sys)}


def _controller_gain(cfg: ScenarioConfig, sys: LtiSystem, eps: float):
    name = cfg.controller
    if name == "lqr":
        return lqr_gain(sys)[0], sys
    if name == "hinf":
        return h_inf_controller(sys).K, sys
    if name == "adv":
        return (adv_lqr(sys, eps).controller.K if eps > 0 else lqr_gain(sys)[0]), sys
    data = read_controller(name)
    if cfg.system is None:
        s = data["system"]
        sys = LtiSystem(s["A"], s["B"], s["Q"], s["R"], s.get("Sigma_w"), s.get("Sigma_0"))
    K = data["K"]
    if K.shape != (sys.m, sys.n):
        raise ConfigError(f"controller: gain has shape {K.shape}, system needs {(sys.m, sys.n)}")
    return K, sys


def cmd_eval(cfg: ScenarioConfig) -> dict:
    """Closed-form NC/RC/AC of one controller plus Monte Carlo estimates of NC and AC."""
    sys = _system(cfg, boeing747())
    eps = 0.5 if cfg.epsilon is None else cfg.epsilon
    K, sys = _controller_gain(cfg, sys, eps)
    rep = cost_report(sys, K, eps)
    gauss = DisturbanceModel(GAUSSIAN, seed=cfg.base_seed)
    adv = DisturbanceModel(ADVERSARIAL, seed=cfg.base_seed, epsilon=eps)
    sim_nc = average_running_cost(sys, K, gauss, cfg.horizon, cfg.trials)[-1]
    sim_ac = average_running_cost(sys, K, adv, cfg.horizon, cfg.trials)[-1]
    return {
        "controller": cfg.controller,
        "K": K,
        **rep.to_dict(),
        "simulated": {"nc": sim_nc, "ac": sim_ac, "horizon": cfg.horizon, "trials": cfg.trials, "seed": cfg.base_seed},
    }


def _named_systems(cfg: ScenarioConfig, default_rho: float):
    if cfg.rho_grid is not None:
        return [(f"integrator({r:g})", r, integrator(r)) for r in cfg.rho_grid]
    if cfg.system is not None:
        return [(cfg.system_name or "custom", None, cfg.system)]
    return [(f"integrator({default_rho:g})", default_rho, integrator(default_rho))]


def _check_frontier(label, ncs, acs, tol=1e-9):
    for i in range(1, len(ncs)):
        if ncs[i] < ncs[i - 1] - tol * (1 + abs(ncs[i - 1])) or acs[i] > acs[i - 1] + tol * (1 + abs(acs[i - 1])):
            warnings.warn(f"{label}: tradeoff curve is not monotone at point {i}", RuntimeWarning, stacklevel=2)
            return False
    return True


def cmd_tradeoff_curve(cfg: ScenarioConfig):
    """Rows ``(system, rho, epsilon_synth, nc, ac_at_eval_epsilon)`` in long format."""
    eval_eps = 0.1 if cfg.eval_epsilon is None else cfg.eval_epsilon
    grid = cfg.epsilon_grid or tuple(np.linspace(eval_eps / 21, eval_eps, 21).tolist())
    if grid[0] <= 0 or grid[-1] > eval_eps * (1 + 1e-12):
        raise ConfigError(f"epsilon_grid: entries must lie in (0, eval_epsilon={eval_eps!r}]")
    header = ("system", "rho", "epsilon_synth", "nc", "ac_at_eval_epsilon")
    rows, curves = [], {}
    for label, rho, sys in _named_systems(cfg, 1.0):

        def point(eps, sys=sys):
            K = adv_lqr(sys, eps).controller.K
            return nominal_cost(sys, K), worst_case_adversary(sys, K, eval_eps).cost

        pts = _pmap(point, grid)
        _check_frontier(label, [p[0] for p in pts], [p[1] for p in pts])
        curves[label] = ([p[0] for p in pts], [p[1] for p in pts])
        rows += [(label, rho, eps, nc, ac) for eps, (nc, ac) in zip(grid, pts)]
    return header, rows, {"curves": curves, "eval_epsilon": eval_eps}


def cmd_tradeoff_envelope(cfg: ScenarioConfig):
    """Per-rho (NC, AC) of the LQR gain and of the robust gain at ``epsilon``."""
    eps = 0.1 if cfg.epsilon is None else cfg.epsilon
    if not eps > 0:
        raise ConfigError("epsilon: must be positive for tradeoff-envelope")
    rhos = cfg.rho_grid or tuple(np.round(np.arange(0.3, 1.21, 0.1), 10).tolist())

    def point(rho):
        sys = integrator(rho)
        K_lqr = lqr_gain(sys)[0]
        K_adv = adv_lqr(sys, eps).controller.K
        a = (nominal_cost(sys, K_lqr), worst_case_adversary(sys, K_lqr, eps).cost)
        b = (nominal_cost(sys, K_adv), worst_case_adversary(sys, K_adv, eps).cost)
        return a, b

    pts = _pmap(point, rhos)
    header = ("rho", "nc_lqr", "ac_lqr", "nc_adv", "ac_adv", "nc_gap", "distance")
    rows = [(r, a[0], a[1], b[0], b[1], b[0] - a[0], math.hypot(b[0] - a[0], b[1] - a[1])) for r, (a, b) in zip(rhos, pts)]
    return header, rows, {"rho": rhos, "lqr": [p[0] for p in pts], "adv": [p[1] for p in pts]}


REGIMES = (GAUSSIAN, "varying_mean", "adversarial")


def cmd_benchmark(cfg: ScenarioConfig) -> dict:
    """Running-average cost of the H2, H-infinity and robust controllers in three regimes.

    In the adversarial regime each controller faces its own worst-case
    adversary at budget ``epsilon`` on top of Gaussian noise.  Returns
    ``{regime: (t, {column: curve})}``.
    """
    sys = _system(cfg, boeing747())
    eps = 0.5 if cfg.epsilon is None else cfg.epsilon
    gains = {
        "cost_h2": lqr_gain(sys)[0],
        "cost_hinf": h_inf_controller(sys).K,
        "cost_adv": adv_lqr(sys, eps).controller.K,
    }
    models = {
        GAUSSIAN: DisturbanceModel(GAUSSIAN, seed=cfg.base_seed),
        "varying_mean": DisturbanceModel(VARYING_MEAN, seed=cfg.base_seed),
        "adversarial": DisturbanceModel(ADVERSARIAL, seed=cfg.base_seed, epsilon=eps),
    }
    t = np.arange(1, cfg.horizon + 1)
    out = {}
    for regime in REGIMES:
        out[regime] = (
            t,
            {col: average_running_cost(sys, K, models[regime], cfg.horizon, cfg.trials) for col, K in gains.items()},
        )
    return out


def _bound_grid(cfg: ScenarioConfig, ctx: bd.TradeoffContext):
    if cfg.gamma_grid is not None:
        return cfg.gamma_grid
    mult = cfg.gamma_multipliers or (1.5, 2.0, 5.0, 10.0, 100.0, 1e3, 1e4)
    base = max(ctx.gamma_inf, ctx.gamma_tilde_inf)
    return tuple(m * base for m in mult)


def cmd_bounds(cfg: ScenarioConfig):
    """Flattened bound reports, one row per gamma."""
    sys = _system(cfg, integrator(1.0))
    ctx = bd.TradeoffContext(sys)
    grid = _bound_grid(cfg, ctx)
    bad = [g for g in grid if not g > ctx.gamma_inf]
    if bad:
        raise Infeasible(bad[0], f"gamma must exceed gamma_inf={ctx.gamma_inf!r}")
    reports = [bd.tradeoff_report(sys, g, l=cfg.l, rho=cfg.rho, ctx=ctx) for g in grid]
    flat = [r.flat() for r in reports]
    header = tuple(flat[0])
    rows = [tuple(f[k] for k in header) for f in flat]
    return header, rows, {"reports": reports}


# ---------------------------------------------------------------- driver


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="advlqr", description="Adversarially robust LQR experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "synthesize the robust controller for a hard budget (JSON)",
        "eval": "nominal, robust and adversarial cost of a controller (JSON)",
        "tradeoff-curve": "nominal vs adversarial cost as the synthesis budget varies (CSV)",
        "tradeoff-envelope": "LQR vs robust controller across integrator rho (CSV)",
        "benchmark": "running costs of H2, H-infinity and robust controllers (CSV per regime)",
        "bounds": "exact nominal-cost gap and its bounds over a gamma grid (CSV)",
    }
    for name, h in helps.items():
        s = sub.add_parser(name, help=h)
        s.add_argument("--config", metavar="PATH", help="TOML scenario file")
        s.add_argument("--system", help="builtin system, 'integrator(rho)' or 'boeing747'")
        s.add_argument("--out", metavar="PATH", help="output file (directory for benchmark); stdout if omitted")
        s.add_argument("--seed", type=int, metavar="U64")
        s.add_argument("--trials", type=int, metavar="N")
        s.add_argument("--horizon", type=int, metavar="N")
        s.add_argument("--epsilon", type=float)
        s.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    return p


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.system:
        cfg = replace(cfg, system=builtin_system(args.system), system_name=args.system)
    if args.epsilon is not None:
        if not (math.isfinite(args.epsilon) and args.epsilon >= 0):
            raise ConfigError(f"--epsilon: must be a finite number >= 0, got {args.epsilon!r}")
        cfg = replace(cfg, epsilon=args.epsilon)
    return cfg.with_overrides(seed=args.seed, trials=args.trials, horizon=args.horizon, out=args.out)


def _run_table(cmd, cfg, plot, stdout, draw):
    header, rows, extra = cmd(cfg)
    _emit(csv_text(header, rows), cfg.output_path, stdout)
    target = _plot_target(cfg, plot)
    if target is not None:
        draw(extra, target)


def run(args, stdout=None) -> None:
    stdout = stdout or _sys.stdout
    cfg = _config(args)
    plot = not args.no_plot

    if args.command == "synth":
        _emit(json_text(cmd_synth(cfg)), cfg.output_path, stdout)
    elif args.command == "eval":
        _emit(json_text(cmd_eval(cfg)), cfg.output_path, stdout)
    elif args.command == "tradeoff-curve":
        _run_table(
            cmd_tradeoff_curve, cfg, plot, stdout,
            lambda e, p: plotting.tradeoff_curves(e["curves"], p, e["eval_epsilon"]),
        )  # fmt: skip
    elif args.command == "tradeoff-envelope":
        _run_table(cmd_tradeoff_envelope, cfg, plot, stdout, lambda e, p: plotting.envelope(e["rho"], e["lqr"], e["adv"], p))
    elif args.command == "bounds":

        def draw(e, p):
            reps = e["reports"]
            series = {
                "exact gap": [r.exact_gap for r in reps],
                "upper bound": [r.upper_bound for r in reps],
                "lower bound": [r.lower_bound for r in reps],
            }
            plotting.bound_sweep([r.gamma for r in reps], series, p)

        _run_table(cmd_bounds, cfg, plot, stdout, draw)
    elif args.command == "benchmark":
        _write_benchmark(cfg, cmd_benchmark(cfg), plot, stdout)


def _write_benchmark(cfg, result, plot, stdout):
    header = ("t", "cost_h2", "cost_hinf", "cost_adv")
    if not cfg.output_path:
        rows = []
        for regime, (t, cols) in result.items():
            rows += [(regime, *r) for r in zip(t, *(cols[h] for h in header[1:]))]
        stdout.write(csv_text(("regime",) + header, rows))
        return
    out = Path(cfg.output_path)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "note": MIXED_NOTE,
        "epsilon": 0.5 if cfg.epsilon is None else cfg.epsilon,
        "horizon": cfg.horizon,
        "trials": cfg.trials,
        "seed": cfg.base_seed,
        "files": [],
    }
    for regime, (t, cols) in result.items():
        path = out / f"benchmark_{regime}.csv"
        rows = zip(t, *(cols[h] for h in header[1:]))
        path.write_text(csv_text(header, rows), encoding="utf-8", newline="")
        meta["files"].append(path.name)
        if plot:
            labels = {"cost_h2": "H2", "cost_hinf": "H-infinity", "cost_adv": "adversarially robust"}
            plotting.running_costs(t, {labels[k]: v for k, v in cols.items()}, regime, plotting.png_path(path))
    (out / "benchmark_meta.json").write_text(json_text(meta), encoding="utf-8", newline="")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        run(args)
    except (ConfigError, DimensionMismatch, NotStabilizable, NotDetectable) as e:
        print(f"advlqr: config error: {e}", file=_sys.stderr)
        return EXIT_CONFIG
    except (Infeasible, BracketFailure, BadBracket, PreconditionFailed) as e:
        print(f"advlqr: infeasible: {e}", file=_sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalFailure as e:
        print(f"advlqr: numerical failure: {e}", file=_sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
