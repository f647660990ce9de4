"""Scenario configuration: TOML files, builtin systems and field validation."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from advlqr.riccati import LtiSystem

BOEING747_A = [
    [0.99, 0.03, -0.02, -0.32],
    [0.01, 0.47, 4.7, 0.0],
    [0.02, -0.06, 0.4, 0.0],
    [0.01, -0.04, 0.72, 0.99],
]
BOEING747_B = [
    [0.01, 0.99],
    [-3.44, 1.66],
    [-0.83, 0.44],
    [-0.47, 0.25],
]


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending field."""


def integrator(rho: float) -> LtiSystem:
    """Double integrator ``x+ = [[1, rho], [0, 1]] x + [0, 1]^T u + w`` with unit weights."""
    A = np.array([[1.0, rho], [0.0, 1.0]])
    B = np.array([[0.0], [1.0]])
    return LtiSystem(A, B, np.eye(2), np.eye(1))


def boeing747() -> LtiSystem:
    """Linearized longitudinal dynamics of a Boeing 747 with unit weights."""
    return LtiSystem(np.array(BOEING747_A), np.array(BOEING747_B), np.eye(4), np.eye(2))


_INTEGRATOR = re.compile(r"^\s*integrator\s*\(\s*([^)]+?)\s*\)\s*$")


def builtin_system(name: str) -> LtiSystem:
    m = _INTEGRATOR.match(name)
    if m:
        try:
            rho = float(m.group(1))
        except ValueError:
            raise ConfigError(f"system: bad integrator parameter {m.group(1)!r}") from None
        return integrator(rho)
    if name.strip().lower() in ("boeing747", "boeing"):
        return boeing747()
    raise ConfigError(f"system: unknown builtin {name!r}; expected 'integrator(rho)' or 'boeing747'")


def parse_matrix(value, name: str) -> np.ndarray:
    """Nested row arrays (or a scalar) to a 2-D float array, rejecting ragged rows."""
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected a number or a matrix, got a boolean")
    if isinstance(value, (int, float)):
        return np.array([[float(value)]])
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{name}: expected a non-empty list of rows")
    rows = [r if isinstance(r, list) else [r] for r in value]
    width = len(rows[0])
    for i, r in enumerate(rows, 1):
        if len(r) != width:
            raise ConfigError(f"{name}: row {i} has {len(r)} entries, expected {width}")
        for x in r:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise ConfigError(f"{name}: row {i} has non-numeric entry {x!r}")
    M = np.array(rows, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ConfigError(f"{name}: non-finite entry")
    return M


def parse_system(value) -> LtiSystem:
    if isinstance(value, str):
        return builtin_system(value)
    if not isinstance(value, dict):
        raise ConfigError("system: expected a builtin name or a table with A, B, Q, R")
    if "builtin" in value:
        return builtin_system(str(value["builtin"]))
    missing = [k for k in ("A", "B", "Q", "R") if k not in value]
    if missing:
        raise ConfigError(f"system: missing field(s) {', '.join(missing)}")
    mats = {k: parse_matrix(value[k], f"system.{k}") for k in ("A", "B", "Q", "R", "Sigma_w", "Sigma_0") if k in value}
    unknown = set(value) - set(mats)
    if unknown:
        raise ConfigError(f"system: unknown field(s) {', '.join(sorted(unknown))}")
    try:
        return LtiSystem(**mats)
    except ValueError as e:
        raise ConfigError(f"system: {e}") from None


def parse_grid(value, name: str) -> tuple:
    """A list of numbers or a table ``{start, stop, num}`` (inclusive linspace)."""
    if isinstance(value, dict):
        try:
            start, stop, num = float(value["start"]), float(value["stop"]), int(value["num"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{name}: grid table needs numeric start, stop, num") from None
        if num < 1:
            raise ConfigError(f"{name}: num must be >= 1")
        grid = [start] if num == 1 else np.linspace(start, stop, num).tolist()
    elif isinstance(value, list):
        grid = []
        for x in value:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise ConfigError(f"{name}: non-numeric entry {x!r}")
            grid.append(float(x))
    else:
        raise ConfigError(f"{name}: expected a list or a {{start, stop, num}} table")
    if not grid:
        raise ConfigError(f"{name}: empty grid")
    if any(not math.isfinite(x) for x in grid):
        raise ConfigError(f"{name}: non-finite entry")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError(f"{name}: grid must be strictly increasing")
    return tuple(grid)


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters shared by every subcommand; each command reads what it needs."""

    system: LtiSystem = None
    system_name: str = ""
    epsilon: float = None
    eval_epsilon: float = None
    gamma: float = None
    epsilon_grid: tuple = None
    rho_grid: tuple = None
    gamma_grid: tuple = None
    gamma_multipliers: tuple = None
    l: int = None
    rho: float = None
    controller: str = "adv"
    horizon: int = 10_000
    trials: int = 100
    base_seed: int = 0
    output_path: str = None
    extra: dict = field(default_factory=dict)

    def with_overrides(self, seed=None, trials=None, horizon=None, out=None) -> "ScenarioConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, base_seed=_seed(seed, "--seed"))
        if trials is not None:
            cfg = replace(cfg, trials=_positive_int(trials, "--trials"))
        if horizon is not None:
            cfg = replace(cfg, horizon=_positive_int(horizon, "--horizon"))
        if out is not None:
            cfg = replace(cfg, output_path=out)
        return cfg


def _number(value, name, lo=None, strict=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name}: expected a finite number, got {value!r}")
    if lo is not None and (value <= lo if strict else value < lo):
        raise ConfigError(f"{name}: must be {'>' if strict else '>='} {lo}, got {value!r}")
    return float(value)


def _positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name}: expected an integer >= 1, got {value!r}")
    return value


def _seed(value, name):
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 2**64:
        raise ConfigError(f"{name}: expected an unsigned 64-bit integer, got {value!r}")
    return value


_KEYS = {
    "system", "epsilon", "eval_epsilon", "gamma", "epsilon_grid", "rho_grid", "gamma_grid",
    "gamma_multipliers", "l", "rho", "controller", "horizon", "trials", "seed", "base_seed",
    "output", "output_path",
}  # fmt: skip


def config_from_dict(d: dict) -> ScenarioConfig:
    unknown = set(d) - _KEYS
    if unknown:
        raise ConfigError(f"unknown field(s) {', '.join(sorted(unknown))}")
    kw = {}
    if "system" in d:
        kw["system"] = parse_system(d["system"])
        sv = d["system"]
        kw["system_name"] = sv if isinstance(sv, str) else str(sv.get("builtin", "custom"))
    for k in ("epsilon", "eval_epsilon"):
        if k in d:
            kw[k] = _number(d[k], k, lo=0.0)
    if "gamma" in d:
        kw["gamma"] = _number(d["gamma"], "gamma", lo=0.0, strict=True)
    if "rho" in d:
        kw["rho"] = _number(d["rho"], "rho", lo=0.0, strict=True)
    for k in ("epsilon_grid", "rho_grid", "gamma_grid", "gamma_multipliers"):
        if k in d:
            grid = parse_grid(d[k], k)
            if k != "rho_grid" and grid[0] <= 0:
                raise ConfigError(f"{k}: entries must be positive")
            kw[k] = grid
    if "l" in d:
        kw["l"] = _positive_int(d["l"], "l")
    if "controller" in d:
        if not isinstance(d["controller"], str):
            raise ConfigError("controller: expected 'lqr', 'hinf', 'adv' or a path to a controller JSON")
        kw["controller"] = d["controller"]
    for k in ("horizon", "trials"):
        if k in d:
            kw[k] = _positive_int(d[k], k)
    for k in ("seed", "base_seed"):
        if k in d:
            kw["base_seed"] = _seed(d[k], k)
    for k in ("output", "output_path"):
        if k in d:
            kw["output_path"] = str(d[k])
    return ScenarioConfig(**kw)


def load_config(path) -> ScenarioConfig:
    """Read a TOML scenario file; syntax errors carry the line number."""
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    try:
        return config_from_dict(data)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from None
