"""JSON run configuration: parsing, validation, ProblemSpec assembly.

Schema (all sections except "problem" optional; "note"/"notes" keys are
ignored everywhere so configs can carry commentary):

    {
      "problem": {
        "x_lo": 0.0, "x_hi": 1.0, "n_x": 40, "T": 10.0, "n_t": 200,
        "alpha1": -6e-3, "alpha2": 0.0, "u_min": 0.0, "u_max": 1.0,
        "b2":     {"type": "bump" | "sine" | "zero" | "custom_samples", ...},
        "psi0":   {"type": "ground_state" | "boosted_ground_state"
                           | "gaussian" | "custom", ...},
        "psi_d":  {"type": "tracked" | "static" | "none", ...},
        "psi_dT": {"type": "from_psi_d" | "custom" | "none", ...},
        "f":      {"type": "zero" | "static", ...}
      },
      "solver":   {... SolverOptions fields ..., "u_init": {...}, "n_starts": 1},
      "analysis": {"n_probes": 100, "seed": 0, "eps_u": null, "eps_lambda": null},
      "output":   {"out_dir": "out", "figures": true}
    }

Unknown keys anywhere are rejected.  "ground_state" takes the lowest
eigenvector of H(u_ref) = -lap + u_ref b2; "boosted_ground_state"
multiplies it by exp(i k x) (a momentum kick, leaves the modulus and the
boundary values untouched); "tracked" runs the forward solver at the
constant reference control, so the running target is the discretely
phase-rotating stationary state when psi0 matches it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .dynamics import SourceTerm, TimeGrid, cn_run
from .field import (
    Potential,
    SpatialGrid,
    bump_potential,
    l2_norm,
    sampled_potential,
    sine_potential,
    zero_potential,
)
from .objective import ProblemSpec
from .optimizer import SolverOptions

__all__ = ["ConfigError", "RunConfig", "load_config", "ground_state"]

_META_KEYS = {"note", "notes"}


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending key."""


def _check_keys(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    for k in d:
        if k not in allowed and k not in _META_KEYS:
            raise ConfigError(f"{where}: unknown key '{k}'")


def _num(d: dict, key: str, where: str, default=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}: missing required key '{key}'")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    return float(v)


def _int(d: dict, key: str, where: str, default=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}: missing required key '{key}'")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key}: expected an integer, got {v!r}")
    return v


def _vector(d: dict, key: str, where: str, n: int) -> np.ndarray:
    v = d.get(key)
    if not isinstance(v, list):
        raise ConfigError(f"{where}.{key}: expected a list of {n} numbers")
    arr = np.asarray(v, dtype=float)
    if arr.shape != (n,):
        raise ConfigError(f"{where}.{key}: expected length {n}, got {arr.shape[0]}")
    return arr


def ground_state(grid: SpatialGrid, pot: Potential, u_ref: float) -> np.ndarray:
    """Lowest eigenvector of H(u_ref) = -lap + u_ref b2, h-normalized,
    sign fixed so its largest component is positive."""
    h = grid.h
    d = 2.0 / h**2 + u_ref * pot.values
    e = np.full(grid.n_interior - 1, -1.0 / h**2)
    _, vec = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    phi = vec[:, 0]
    if phi[np.argmax(np.abs(phi))] < 0:
        phi = -phi
    return (phi / l2_norm(grid, phi)).astype(complex)


def _build_potential(grid: SpatialGrid, cfg: dict) -> Potential:
    _check_keys(cfg, {"type", "amplitude", "values", "grad", "lap"}, "problem.b2")
    kind = cfg.get("type")
    if kind == "bump":
        return bump_potential(grid, _num(cfg, "amplitude", "problem.b2", 1.0))
    if kind == "sine":
        print("[config] warning: sine b2 has nonzero boundary slope; "
              "outside the admissible potential class, experimentation only")
        return sine_potential(grid, _num(cfg, "amplitude", "problem.b2", 1.0))
    if kind == "zero":
        return zero_potential(grid)
    if kind == "custom_samples":
        vals = _vector(cfg, "values", "problem.b2", grid.n_interior)
        grad = _vector(cfg, "grad", "problem.b2", grid.n_interior) if "grad" in cfg else None
        lap = _vector(cfg, "lap", "problem.b2", grid.n_interior) if "lap" in cfg else None
        return sampled_potential(grid, vals, grad, lap)
    raise ConfigError(f"problem.b2.type: unknown selector {kind!r}")


def _build_field(grid: SpatialGrid, pot: Potential, cfg: dict, where: str) -> np.ndarray:
    _check_keys(cfg, {"type", "u_ref", "momentum", "center", "width", "re", "im"}, where)
    kind = cfg.get("type")
    if kind == "ground_state":
        return ground_state(grid, pot, _num(cfg, "u_ref", where, 0.0))
    if kind == "boosted_ground_state":
        phi = ground_state(grid, pot, _num(cfg, "u_ref", where, 0.0))
        k = _num(cfg, "momentum", where)
        return phi * np.exp(1j * k * grid.x)
    if kind == "gaussian":
        c = _num(cfg, "center", where)
        wdt = _num(cfg, "width", where)
        if wdt <= 0:
            raise ConfigError(f"{where}.width: must be positive")
        psi = np.exp(-((grid.x - c) ** 2) / (2.0 * wdt**2)).astype(complex)
        nrm = l2_norm(grid, psi)
        if nrm == 0:
            raise ConfigError(f"{where}: gaussian underflows to zero on this grid")
        return psi / nrm
    if kind == "custom":
        re = _vector(cfg, "re", where, grid.n_interior)
        im = (_vector(cfg, "im", where, grid.n_interior)
              if "im" in cfg else np.zeros(grid.n_interior))
        return re + 1j * im
    raise ConfigError(f"{where}.type: unknown selector {kind!r}")


@dataclass
class RunConfig:
    spec: ProblemSpec
    solver: SolverOptions
    n_starts: int
    n_probes: int
    seed: int
    eps_u: float | None
    eps_lambda: float | None
    out_dir: str
    figures: bool
    raw: dict


def _parse_problem(cfg: dict) -> ProblemSpec:
    where = "problem"
    _check_keys(
        cfg,
        {"x_lo", "x_hi", "n_x", "T", "n_t", "alpha1", "alpha2", "u_min", "u_max",
         "b2", "psi0", "psi_d", "psi_dT", "f"},
        where,
    )
    grid = SpatialGrid(
        _num(cfg, "x_lo", where, 0.0),
        _num(cfg, "x_hi", where, 1.0),
        _int(cfg, "n_x", where, 40),
    )
    tgrid = TimeGrid(_num(cfg, "T", where, 10.0), _int(cfg, "n_t", where, 200))
    alpha1 = _num(cfg, "alpha1", where, 0.0)
    alpha2 = _num(cfg, "alpha2", where, 0.0)
    u_min = _num(cfg, "u_min", where)
    u_max = _num(cfg, "u_max", where)
    if not u_min < u_max:
        raise ConfigError(f"{where}: need u_min < u_max, got ({u_min}, {u_max})")

    pot = _build_potential(grid, cfg.get("b2", {"type": "zero"}))
    psi0 = _build_field(grid, pot, cfg.get("psi0", {"type": "ground_state"}), "problem.psi0")

    f_cfg = cfg.get("f", {"type": "zero"})
    _check_keys(f_cfg, {"type", "re", "im"}, "problem.f")
    f_kind = f_cfg.get("type")
    if f_kind == "zero":
        f = None
    elif f_kind == "static":
        re = _vector(f_cfg, "re", "problem.f", grid.n_interior)
        im = (_vector(f_cfg, "im", "problem.f", grid.n_interior)
              if "im" in f_cfg else np.zeros(grid.n_interior))
        f = SourceTerm.from_static(re + 1j * im, tgrid.n_t)
    else:
        raise ConfigError(f"problem.f.type: unknown selector {f_kind!r}")

    d_cfg = cfg.get("psi_d", {"type": "none"})
    _check_keys(d_cfg, {"type", "u_ref", "field"}, "problem.psi_d")
    d_kind = d_cfg.get("type")
    if d_kind == "none":
        psi_d = None
    elif d_kind == "tracked":
        u_ref = _num(d_cfg, "u_ref", "problem.psi_d", 0.0)
        if not u_min <= u_ref <= u_max:
            raise ConfigError(
                f"problem.psi_d.u_ref: {u_ref} outside [{u_min}, {u_max}]"
            )
        src = SourceTerm.zero() if f is None else f
        psi_d = cn_run(grid, pot, tgrid, np.full(tgrid.n_t, u_ref), psi0, src).states
    elif d_kind == "static":
        if "field" not in d_cfg:
            raise ConfigError("problem.psi_d: static target needs a 'field' object")
        psi_d = _build_field(grid, pot, d_cfg["field"], "problem.psi_d.field")
    else:
        raise ConfigError(f"problem.psi_d.type: unknown selector {d_kind!r}")

    dT_cfg = cfg.get("psi_dT", {"type": "from_psi_d"})
    _check_keys(dT_cfg, {"type", "re", "im"}, "problem.psi_dT")
    dT_kind = dT_cfg.get("type")
    if dT_kind == "none":
        psi_dT = None
    elif dT_kind == "from_psi_d":
        if psi_d is None:
            psi_dT = None
        else:
            psi_dT = np.asarray(psi_d)[-1] if np.asarray(psi_d).ndim == 2 else psi_d
    elif dT_kind == "custom":
        re = _vector(dT_cfg, "re", "problem.psi_dT", grid.n_interior)
        im = (_vector(dT_cfg, "im", "problem.psi_dT", grid.n_interior)
              if "im" in dT_cfg else np.zeros(grid.n_interior))
        psi_dT = re + 1j * im
    else:
        raise ConfigError(f"problem.psi_dT.type: unknown selector {dT_kind!r}")

    return ProblemSpec(
        grid=grid,
        tgrid=tgrid,
        alpha1=alpha1,
        alpha2=alpha2,
        bounds=(u_min, u_max),
        pot=pot,
        psi0=psi0,
        psi_d=psi_d,
        psi_dT=psi_dT,
        f=f,
    )


def _parse_solver(cfg: dict, spec: ProblemSpec) -> tuple[SolverOptions, int]:
    where = "solver"
    _check_keys(
        cfg,
        {"max_iters", "grad_tol", "armijo_c", "backtrack_factor", "initial_step",
         "max_backtracks", "bb_steps", "u_init", "n_starts", "verbose"},
        where,
    )
    opts = SolverOptions()
    opts.max_iters = _int(cfg, "max_iters", where, opts.max_iters)
    if "grad_tol" in cfg and cfg["grad_tol"] is not None:
        opts.grad_tol = _num(cfg, "grad_tol", where)
    opts.armijo_c = _num(cfg, "armijo_c", where, opts.armijo_c)
    opts.backtrack_factor = _num(cfg, "backtrack_factor", where, opts.backtrack_factor)
    opts.initial_step = _num(cfg, "initial_step", where, opts.initial_step)
    opts.max_backtracks = _int(cfg, "max_backtracks", where, opts.max_backtracks)
    if "bb_steps" in cfg:
        if not isinstance(cfg["bb_steps"], bool):
            raise ConfigError(f"{where}.bb_steps: expected true/false")
        opts.bb_steps = cfg["bb_steps"]
    if "verbose" in cfg:
        if not isinstance(cfg["verbose"], bool):
            raise ConfigError(f"{where}.verbose: expected true/false")
        opts.verbose = cfg["verbose"]

    u_cfg = cfg.get("u_init")
    if u_cfg is not None:
        _check_keys(u_cfg, {"type", "value", "values"}, "solver.u_init")
        kind = u_cfg.get("type")
        if kind == "constant":
            opts.u_init = np.full(spec.tgrid.n_t, _num(u_cfg, "value", "solver.u_init"))
        elif kind == "box_midpoint":
            opts.u_init = None
        elif kind == "values":
            opts.u_init = _vector(u_cfg, "values", "solver.u_init", spec.tgrid.n_t)
        else:
            raise ConfigError(f"solver.u_init.type: unknown selector {kind!r}")

    n_starts = _int(cfg, "n_starts", where, 1)
    if n_starts < 1:
        raise ConfigError(f"{where}.n_starts: must be >= 1, got {n_starts}")
    # validate the numeric ranges SolverOptions enforces
    try:
        SolverOptions(**{k: getattr(opts, k) for k in opts.__dataclass_fields__})
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return opts, n_starts


def parse_config(raw: dict, path: str = "<config>") -> RunConfig:
    _check_keys(raw, {"problem", "solver", "analysis", "output"}, "top level")
    if "problem" not in raw:
        raise ConfigError("top level: missing required section 'problem'")
    spec = _parse_problem(raw["problem"])
    solver, n_starts = _parse_solver(raw.get("solver", {}), spec)

    a_cfg = raw.get("analysis", {})
    _check_keys(a_cfg, {"n_probes", "seed", "eps_u", "eps_lambda"}, "analysis")
    n_probes = _int(a_cfg, "n_probes", "analysis", 100)
    seed = _int(a_cfg, "seed", "analysis", 0)
    eps_u = None
    if a_cfg.get("eps_u") is not None:
        eps_u = _num(a_cfg, "eps_u", "analysis")
    eps_lambda = None
    if a_cfg.get("eps_lambda") is not None:
        eps_lambda = _num(a_cfg, "eps_lambda", "analysis")

    o_cfg = raw.get("output", {})
    _check_keys(o_cfg, {"out_dir", "figures"}, "output")
    out_dir = o_cfg.get("out_dir", "out")
    if not isinstance(out_dir, str):
        raise ConfigError("output.out_dir: expected a string")
    figures = o_cfg.get("figures", True)
    if not isinstance(figures, bool):
        raise ConfigError("output.figures: expected true/false")

    return RunConfig(
        spec=spec,
        solver=solver,
        n_starts=n_starts,
        n_probes=n_probes,
        seed=seed,
        eps_u=eps_u,
        eps_lambda=eps_lambda,
        out_dir=out_dir,
        figures=figures,
        raw=raw,
    )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, path)
