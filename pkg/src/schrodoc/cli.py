"""Command-line surface: solve / verify / check.

    schrodoc solve  <config.json> [--out-dir D] [--seed S]
    schrodoc verify <config.json> <control.csv> [--out-dir D] [--seed S]
    schrodoc check  <config.json> [--which grad|goh|ibp|unitary|all]
                    [--refine K] [--seed S]

solve writes u_opt.csv, lambda.csv, psi_final.csv, cost_history.csv,
result.json, arcs.json and (unless disabled) PNG figures to the output
directory.  verify evaluates the optimality report of a stored control
and writes report.json.  check runs the discrete-identity suites at the
config's grids plus --refine extra doubling levels.

Exit codes: 0 ok; 1 verify/check failure; 2 solver hit max_iters;
64 config error; 65 control length mismatch; 70 numerical divergence.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from .adjoint import cn_run_backward, ibp_terms, propagate_costate
from .analysis import StructureError, full_report
from .config import ConfigError, RunConfig, load_config, parse_config
from .dynamics import (
    Control,
    DivergenceError,
    NumericalError,
    SourceTerm,
    cn_run,
    propagate_forward,
)
from .field import l2_norm
from .objective import evaluate_cost, reduced_gradient, switching_function
from .optimizer import multistart, solve
from .second_order import goh_identity_check

EXIT_OK = 0
EXIT_CHECK_FAIL = 1
EXIT_MAX_ITERS = 2
EXIT_CONFIG = 64
EXIT_LENGTH = 65
EXIT_DIVERGED = 70

__all__ = ["main", "cmd_solve", "cmd_verify", "cmd_check"]


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def _write_csv(path, header, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([repr(float(v)) for v in row])


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2)
        fh.write("\n")


def _report_payload(report, seed):
    arcs = report.arc_structure
    return {
        "first_order_violation": report.first_order_violation,
        "strict_complementarity_margin": report.strict_complementarity_margin,
        "R_on_singular_min": report.R_on_singular_min,
        "R_at_bb_junctions_min": report.R_at_bb_junctions_min,
        "pc2_probe_min_ratio": report.pc2_probe_min_ratio,
        "verdicts": report.verdicts,
        "passed": report.passed,
        "note": report.note,
        "seed": seed,
        "arcs": [
            {"t_start": a.t_start, "t_end": a.t_end, "kind": a.kind}
            for a in arcs.arcs
        ],
        "junction_times": arcs.junction_times,
    }


def cmd_solve(config_path, out_dir=None, seed=None) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"[solve] config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if out_dir is not None:
        cfg.out_dir = out_dir
    if seed is not None:
        cfg.seed = seed
    spec = cfg.spec

    try:
        if cfg.n_starts > 1:
            res = multistart(spec, cfg.solver, cfg.n_starts, seed=cfg.seed)
        else:
            res = solve(spec, cfg.solver)
    except (DivergenceError, NumericalError) as exc:
        print(f"[solve] diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    u = res.u_opt
    psi = propagate_forward(spec, u)
    p = propagate_costate(spec, u, psi)
    lam = switching_function(spec, u, psi, p)
    breakdown = evaluate_cost(spec, u, psi)
    # a stalled iterate may be interior everywhere with |Lambda| large;
    # report that instead of failing the whole run
    try:
        report = full_report(
            spec, u, n_probes=cfg.n_probes, seed=cfg.seed,
            eps_u=cfg.eps_u, eps_lambda=cfg.eps_lambda,
        )
        structure_error = None
        arc_list = report.arc_structure.arcs
        junctions = report.arc_structure.junction_times
    except StructureError as exc:
        report = None
        structure_error = str(exc)
        arc_list = ()
        junctions = np.array([])

    os.makedirs(cfg.out_dir, exist_ok=True)
    t_mid, t = spec.tgrid.t_mid, spec.tgrid.t
    _write_csv(os.path.join(cfg.out_dir, "u_opt.csv"),
               ["t_mid", "u"], [t_mid, u.values])
    _write_csv(os.path.join(cfg.out_dir, "lambda.csv"),
               ["t_mid", "lambda"], [t_mid, lam])
    _write_csv(
        os.path.join(cfg.out_dir, "psi_final.csv"),
        ["x", "re_psi", "im_psi", "abs2_psi"],
        [spec.grid.x, psi.final.real, psi.final.imag, np.abs(psi.final) ** 2],
    )
    _write_csv(os.path.join(cfg.out_dir, "cost_history.csv"),
               ["iter", "cost"],
               [np.arange(len(res.cost_history)), res.cost_history])

    result = {
        "schema": 1,
        "converged": res.converged,
        "iterations": res.iterations,
        "cost": res.cost,
        "cost_breakdown": {
            "total": breakdown.total,
            "tracking_running": breakdown.tracking_running,
            "tracking_final": breakdown.tracking_final,
            "control_linear": breakdown.control_linear,
            "control_quadratic": breakdown.control_quadratic,
        },
        "stationarity": float(res.projected_grad_norms[-1]),
        "message": res.message,
        "n_singular_arcs": sum(a.kind == "singular" for a in arc_list),
        "report": (_report_payload(report, cfg.seed) if report is not None
                   else {"structure_error": structure_error}),
    }
    if res.multistart_costs is not None:
        result["multistart_costs"] = res.multistart_costs
    _write_json(os.path.join(cfg.out_dir, "result.json"), result)
    _write_json(
        os.path.join(cfg.out_dir, "arcs.json"),
        {
            "arcs": [
                {"t_start": a.t_start, "t_end": a.t_end, "kind": a.kind}
                for a in arc_list
            ],
            "junction_times": junctions,
            "structure_error": structure_error,
            "T": spec.tgrid.T,
            "n_t": spec.tgrid.n_t,
        },
    )

    if cfg.figures:
        from . import figures
        from .second_order import singular_residual_R

        figures.fig_control_and_switching(
            t_mid, u.values, lam,
            os.path.join(cfg.out_dir, "control_and_switching.png"),
            arcs=arc_list, bounds=spec.bounds,
        )
        figures.fig_final_state(
            spec.grid.x, psi.final,
            os.path.join(cfg.out_dir, "final_state.png"),
            psi_target=spec.psi_dT,
        )
        figures.fig_cost_history(
            res.cost_history, os.path.join(cfg.out_dir, "cost_history.png")
        )
        figures.fig_singular_residual(
            t, singular_residual_R(spec, u, psi, p),
            os.path.join(cfg.out_dir, "singular_residual.png"),
            arcs=arc_list,
        )

    print(f"[solve] converged={res.converged} iters={res.iterations} "
          f"cost={res.cost:.9e} stationarity={res.projected_grad_norms[-1]:.3e}")
    if structure_error is None:
        print("[solve] arcs: " + ", ".join(
            f"{a.kind}[{a.t_start:.3f},{a.t_end:.3f}]" for a in arc_list))
    else:
        print(f"[solve] no arc structure: {structure_error}")
    print(f"[solve] outputs written to {cfg.out_dir}")
    if not res.converged:
        print(f"[solve] not converged: {res.message}", file=sys.stderr)
        return EXIT_MAX_ITERS
    return EXIT_OK


def _read_control_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty control file")
    header = [c.strip().lower() for c in rows[0]]
    try:
        col = header.index("u")
        body = rows[1:]
    except ValueError:
        # headerless single- or two-column file: control in the last column
        col = len(rows[0]) - 1
        body = rows
    try:
        return np.array([float(r[col]) for r in body if r])
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: cannot parse control column: {exc}") from exc


def cmd_verify(config_path, control_csv, out_dir=None, seed=None) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"[verify] config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if out_dir is not None:
        cfg.out_dir = out_dir
    if seed is not None:
        cfg.seed = seed
    spec = cfg.spec

    try:
        u_vals = _read_control_csv(control_csv)
    except (OSError, ValueError) as exc:
        print(f"[verify] {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if u_vals.shape[0] != spec.tgrid.n_t:
        print(
            f"[verify] control length {u_vals.shape[0]} does not match "
            f"n_t={spec.tgrid.n_t}", file=sys.stderr,
        )
        return EXIT_LENGTH

    # no bounds on the Control: verify reports on whatever it is given
    u = Control(u_vals)
    try:
        report = full_report(
            spec, u, n_probes=cfg.n_probes, seed=cfg.seed,
            eps_u=cfg.eps_u, eps_lambda=cfg.eps_lambda,
        )
    except (DivergenceError, NumericalError) as exc:
        print(f"[verify] diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except StructureError as exc:
        # nothing classifiable: that is itself a failed verification
        os.makedirs(cfg.out_dir, exist_ok=True)
        _write_json(os.path.join(cfg.out_dir, "report.json"),
                    {"schema": 1, "passed": False, "structure_error": str(exc),
                     "control_csv": os.path.abspath(control_csv), "seed": cfg.seed})
        print(f"[verify] no arc structure: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAIL

    os.makedirs(cfg.out_dir, exist_ok=True)
    payload = _report_payload(report, cfg.seed)
    payload["schema"] = 1
    payload["control_csv"] = os.path.abspath(control_csv)
    payload["lambda"] = report.lam
    _write_json(os.path.join(cfg.out_dir, "report.json"), payload)

    if cfg.figures:
        from . import figures

        figures.fig_control_and_switching(
            spec.tgrid.t_mid, u_vals, report.lam,
            os.path.join(cfg.out_dir, "verify_control_and_switching.png"),
            arcs=report.arc_structure.arcs, bounds=spec.bounds,
        )

    for name, v in report.verdicts.items():
        gate = "checked" if v["checked"] else "info"
        print(f"[verify] {name}: value={v['value']:.6e} tol={v['tol']:.1e} "
              f"pass={v['pass']} ({gate})")
    print(f"[verify] overall pass={report.passed}, report in {cfg.out_dir}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAIL


def _spec_at_nt(cfg: RunConfig, n_t: int):
    raw = copy.deepcopy(cfg.raw)
    raw.setdefault("problem", {})["n_t"] = int(n_t)
    return parse_config(raw).spec


def _check_unitary(cfg, rng, refine):
    rows = []
    base = cfg.spec.tgrid.n_t
    for level in range(refine + 1):
        spec = _spec_at_nt(cfg, base * 2**level)
        spec = dataclasses.replace(spec, f=None, psi_d=None, psi_dT=None)
        u_m, u_M = spec.bounds
        u = Control(u_m + (u_M - u_m) * rng.random(spec.tgrid.n_t), spec.bounds)
        psi = propagate_forward(spec, u)
        norms = np.array([l2_norm(spec.grid, s) for s in psi.states])
        drift = float(np.max(np.abs(norms - norms[0])) / norms[0])
        rows.append((f"drift_nt{spec.tgrid.n_t}", drift, 1e-10, drift < 1e-10))
    return rows


def _check_ibp(cfg, rng, refine):
    rows = []
    base = cfg.spec.tgrid.n_t
    for level in range(refine + 1):
        spec = _spec_at_nt(cfg, base * 2**level)
        g_sp, tg = spec.grid, spec.tgrid
        n_m, n_t = g_sp.n_interior, tg.n_t
        u_m, u_M = spec.bounds
        worst = 0.0
        for _ in range(10):
            u_vals = u_m + (u_M - u_m) * rng.random(n_t)
            b = rng.standard_normal((n_t, n_m)) + 1j * rng.standard_normal((n_t, n_m))
            g = rng.standard_normal((n_t, n_m)) + 1j * rng.standard_normal((n_t, n_m))
            z0 = rng.standard_normal(n_m) + 1j * rng.standard_normal(n_m)
            pT = rng.standard_normal(n_m) + 1j * rng.standard_normal(n_m)
            z = cn_run(g_sp, spec.pot, tg, u_vals, z0, SourceTerm.from_midpoints(b))
            p = cn_run_backward(g_sp, spec.pot, tg, u_vals, pT,
                                SourceTerm.from_midpoints(g))
            terms = ibp_terms(p, z, SourceTerm.from_midpoints(b),
                              SourceTerm.from_midpoints(g), g_sp)
            scale = sum(abs(t) for t in terms)
            resid = abs((terms[0] + terms[1]) - (terms[2] + terms[3]))
            worst = max(worst, resid / scale)
        rows.append((f"residual_nt{n_t}", worst, 1e-11, worst < 1e-11))
    return rows


def _random_check_spec(rng, n_x, n_t):
    """Small randomized instance for gradient checks."""
    raw = {
        "problem": {
            "x_lo": 0.0, "x_hi": 1.0, "n_x": n_x,
            "T": float(1.0 + 2.0 * rng.random()), "n_t": n_t,
            "alpha1": float(rng.normal(scale=0.1)),
            "alpha2": float(0.1 * rng.random()),
            "u_min": 0.0, "u_max": 1.0,
            "b2": {"type": "bump", "amplitude": float(20.0 + 30.0 * rng.random())},
            "psi0": {"type": "ground_state", "u_ref": float(rng.random())},
            "psi_d": {"type": "tracked", "u_ref": float(rng.random())},
            "psi_dT": {"type": "from_psi_d"},
        }
    }
    return parse_config(raw).spec


def _check_grad(cfg, rng, refine):
    del cfg, refine  # the gradient identity is grid-independent
    rows = []
    for case in range(3):
        spec = _random_check_spec(rng, n_x=24 + 8 * case, n_t=32 + 8 * case)
        n_t, dt = spec.tgrid.n_t, spec.tgrid.dt
        u_m, u_M = spec.bounds
        u_vals = u_m + (u_M - u_m) * rng.random(n_t)
        u = Control(u_vals, spec.bounds)
        g = reduced_gradient(spec, u)

        step = 1e-5
        fd = np.empty(n_t)
        for k in range(n_t):
            up = u_vals.copy(); up[k] += step
            dn = u_vals.copy(); dn[k] -= step
            J_up = evaluate_cost(spec, Control(up), propagate_forward(spec, Control(up))).total
            J_dn = evaluate_cost(spec, Control(dn), propagate_forward(spec, Control(dn))).total
            fd[k] = (J_up - J_dn) / (2.0 * step)
        rel = float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-12)))

        psi = propagate_forward(spec, u)
        p = propagate_costate(spec, u, psi)
        lam = switching_function(spec, u, psi, p)
        exact = float(np.max(np.abs(g - dt * lam) / np.maximum(1.0, np.abs(g))))
        rows.append((f"fd_rel_case{case}", rel, 1e-6, rel < 1e-6))
        rows.append((f"dtLambda_case{case}", exact, 1e-12, exact < 1e-12))
    return rows


def _check_goh(cfg, rng, refine):
    base = cfg.spec.tgrid.n_t
    levels = [base * 2**j for j in range(max(2, refine + 1))]
    coef = rng.standard_normal(6)
    gaps = []
    for n_t in levels:
        spec = _spec_at_nt(cfg, n_t)
        tg = spec.tgrid
        v = np.zeros(tg.n_t)
        for m in range(1, 4):
            v += coef[2 * m - 2] / m * np.sin(np.pi * m * tg.t_mid / tg.T)
            v += coef[2 * m - 1] / m * np.cos(np.pi * m * tg.t_mid / tg.T)
        u_m, u_M = spec.bounds
        u = Control.constant(tg.n_t, 0.5 * (u_m + u_M), spec.bounds)
        gaps.append(goh_identity_check(spec, u, Control(v)))
    orders = [np.log2(gaps[i] / gaps[i + 1]) for i in range(len(gaps) - 1)]
    rows = [
        (f"gap_nt{n}", gap, float("nan"), True) for n, gap in zip(levels, gaps)
    ]
    order = float(min(orders))
    rows.append(("min_order", order, 0.9, order >= 0.9))
    return rows


def cmd_check(config_path, which="all", refine=1, seed=None) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"[check] config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rng = np.random.default_rng(cfg.seed if seed is None else seed)

    suites = {
        "unitary": _check_unitary,
        "ibp": _check_ibp,
        "grad": _check_grad,
        "goh": _check_goh,
    }
    selected = list(suites) if which == "all" else [which]
    all_ok = True
    for name in selected:
        try:
            rows = suites[name](cfg, rng, refine)
        except (DivergenceError, NumericalError) as exc:
            print(f"[check:{name}] diverged: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        for label, value, tol, ok in rows:
            all_ok &= ok
            tol_s = f"{tol:.1e}" if np.isfinite(tol) else "-"
            print(f"[check:{name}] {label}={value:.6e} tol={tol_s} "
                  f"{'ok' if ok else 'FAIL'}")
    return EXIT_OK if all_ok else EXIT_CHECK_FAIL


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="schrodoc",
        description="Optimal control of a bilinear 1-d Schrodinger equation: "
                    "solve, verify optimality conditions, run discrete checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="minimize the configured cost")
    p_solve.add_argument("config")
    p_solve.add_argument("--out-dir", default=None)
    p_solve.add_argument("--seed", type=int, default=None)

    p_verify = sub.add_parser("verify", help="optimality report for a stored control")
    p_verify.add_argument("config")
    p_verify.add_argument("control_csv")
    p_verify.add_argument("--out-dir", default=None)
    p_verify.add_argument("--seed", type=int, default=None)

    p_check = sub.add_parser("check", help="discrete-identity verification suites")
    p_check.add_argument("config")
    p_check.add_argument("--which", default="all",
                         choices=["grad", "goh", "ibp", "unitary", "all"])
    p_check.add_argument("--refine", type=int, default=1,
                         help="extra grid-doubling levels for convergence studies")
    p_check.add_argument("--seed", type=int, default=None)

    args = parser.parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args.config, args.out_dir, args.seed)
    if args.command == "verify":
        return cmd_verify(args.config, args.control_csv, args.out_dir, args.seed)
    return cmd_check(args.config, args.which, args.refine, args.seed)


if __name__ == "__main__":
    sys.exit(main())
