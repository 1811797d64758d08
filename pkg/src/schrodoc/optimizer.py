"""Projected-gradient solver for the box-constrained reduced problem.

Iteration: u <- project_box(u - s g) with Armijo backtracking on the
reduced cost along the projection arc,

    J(u_s) <= J(u) + c <g, u_s - u>,    u_s = P(u - s g),

so accepted steps strictly decrease the cost.  The trial step is the
safeguarded Barzilai-Borwein quotient from the previous accepted step,
which is what makes plain projected gradient usable on the weakly
determined (singular-arc) modes of the reduced Hessian.

Stationarity measure: || u - P(u - g) ||_2 on the coefficient vector;
default tolerance 1e-8 sqrt(n_t) dt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import propagate_costate
from .dynamics import Control, DivergenceError, propagate_forward
from .objective import ProblemSpec, evaluate_cost, switching_function

__all__ = ["SolverOptions", "SolveResult", "project_box", "solve", "multistart"]


@dataclass
class SolverOptions:
    max_iters: int = 500
    grad_tol: float | None = None  # None: 1e-8 sqrt(n_t) dt
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    initial_step: float = 1.0
    u_init: np.ndarray | None = None  # None: midpoint of the box
    max_backtracks: int = 40
    bb_steps: bool = True
    step_min: float = 1e-12
    step_max: float = 1e8
    verbose: bool = False

    def __post_init__(self):
        if not 0 < self.armijo_c < 1:
            raise ValueError(f"armijo_c must lie in (0,1), got {self.armijo_c}")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError(
                f"backtrack_factor must lie in (0,1), got {self.backtrack_factor}"
            )
        if self.initial_step <= 0:
            raise ValueError(f"initial_step must be positive, got {self.initial_step}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")

    def resolved_grad_tol(self, spec: ProblemSpec) -> float:
        if self.grad_tol is not None:
            return self.grad_tol
        return 1e-8 * np.sqrt(spec.tgrid.n_t) * spec.tgrid.dt


@dataclass
class SolveResult:
    u_opt: Control
    cost_history: np.ndarray
    projected_grad_norms: np.ndarray
    iterations: int
    converged: bool
    cost: float
    lambda_final: np.ndarray
    first_order_violation: float
    message: str = ""
    multistart_costs: np.ndarray | None = None


def project_box(u: np.ndarray, bounds: tuple[float, float]) -> np.ndarray:
    """Componentwise clamp onto [u_m, u_M]."""
    u_m, u_M = bounds
    if not u_m < u_M:
        raise ValueError(f"need u_m < u_M, got ({u_m}, {u_M})")
    return np.clip(np.asarray(u, dtype=float), u_m, u_M)


def _first_order_violation(spec, u_vals, lam, tol_lambda, tol_u):
    u_m, u_M = spec.bounds
    dt = spec.tgrid.dt
    bad = ((lam > tol_lambda) & (u_vals > u_m + tol_u)) | (
        (lam < -tol_lambda) & (u_vals < u_M - tol_u)
    )
    return dt * int(np.count_nonzero(bad))


def _evaluate(spec: ProblemSpec, u_vals: np.ndarray):
    u = Control(u_vals, spec.bounds)
    psi = propagate_forward(spec, u)
    cost = evaluate_cost(spec, u, psi).total
    return u, psi, cost


def solve(spec: ProblemSpec, opts: SolverOptions | None = None) -> SolveResult:
    """Minimize the reduced cost over the box by projected gradient."""
    opts = opts or SolverOptions()
    u_m, u_M = spec.bounds
    dt = spec.tgrid.dt
    grad_tol = opts.resolved_grad_tol(spec)

    if opts.u_init is None:
        u_vals = np.full(spec.tgrid.n_t, 0.5 * (u_m + u_M))
    else:
        u_vals = project_box(opts.u_init, spec.bounds)
    if u_vals.shape[0] != spec.tgrid.n_t:
        raise ValueError(
            f"initial control length {u_vals.shape[0]} != n_t {spec.tgrid.n_t}"
        )

    u, psi, cost = _evaluate(spec, u_vals)
    if not np.isfinite(cost):
        raise DivergenceError("non-finite cost at the initial control")
    p = propagate_costate(spec, u, psi)
    lam = switching_function(spec, u, psi, p)
    g = dt * lam

    costs = [cost]
    stations = []
    step = opts.initial_step
    prev_u = None
    prev_g = None
    converged = False
    message = ""
    it = 0

    for it in range(1, opts.max_iters + 1):
        station = float(np.linalg.norm(u_vals - project_box(u_vals - g, spec.bounds)))
        stations.append(station)
        if station <= grad_tol:
            converged = True
            message = f"stationarity {station:.3e} <= {grad_tol:.3e}"
            break

        if opts.bb_steps and prev_u is not None:
            du = u_vals - prev_u
            dg = g - prev_g
            denom = float(np.dot(du, dg))
            if denom > 0:
                step = float(np.dot(du, du)) / denom
            step = min(max(step, opts.step_min), opts.step_max)

        accepted = False
        s = step
        for _ in range(opts.max_backtracks):
            trial = project_box(u_vals - s * g, spec.bounds)
            decrease = float(np.dot(g, trial - u_vals))
            _, psi_t, cost_t = _evaluate(spec, trial)
            if not np.isfinite(cost_t):
                raise DivergenceError(f"non-finite cost at iteration {it}")
            if cost_t <= cost + opts.armijo_c * decrease:
                accepted = True
                break
            s *= opts.backtrack_factor
        if not accepted:
            message = f"line search failed at iteration {it} (step {s:.3e})"
            break

        prev_u, prev_g = u_vals, g
        u_vals, psi, cost = trial, psi_t, cost_t
        u = Control(u_vals, spec.bounds)
        p = propagate_costate(spec, u, psi)
        lam = switching_function(spec, u, psi, p)
        g = dt * lam
        costs.append(cost)
        step = s
        if opts.verbose:
            print(
                f"[solve] iter={it} cost={cost:.9e} station={station:.3e} step={s:.3e}"
            )

    if not converged and not message:
        station = float(np.linalg.norm(u_vals - project_box(u_vals - g, spec.bounds)))
        stations.append(station)
        message = f"max_iters reached, stationarity {station:.3e}"

    violation = _first_order_violation(
        spec, u_vals, lam, 1e-4 * max(1.0, float(np.max(np.abs(lam)))), 1e-6 * (u_M - u_m)
    )
    return SolveResult(
        u_opt=Control(u_vals, spec.bounds),
        cost_history=np.asarray(costs),
        projected_grad_norms=np.asarray(stations),
        iterations=it,
        converged=converged,
        cost=cost,
        lambda_final=lam,
        first_order_violation=violation,
        message=message,
    )


def _lcg_uniform(state: int, n: int):
    """Deterministic uniform(0,1) draws from a fixed LCG stream."""
    out = np.empty(n)
    for i in range(n):
        state = (1664525 * state + 1013904223) % 2**32
        out[i] = state / 2**32
    return out, state


def multistart(spec: ProblemSpec, opts: SolverOptions | None = None, n_starts: int = 1,
               seed: int = 0) -> SolveResult:
    """Best of n_starts deterministic runs; start 0 is opts.u_init (or the
    box midpoint), later starts draw uniform controls from an LCG stream."""
    if n_starts < 1:
        raise ValueError(f"n_starts must be >= 1, got {n_starts}")
    opts = opts or SolverOptions()
    u_m, u_M = spec.bounds
    state = (seed * 2654435761) % 2**32
    best = None
    finals = []
    failures = []
    for r in range(n_starts):
        run_opts = SolverOptions(**{**opts.__dict__})
        if r > 0:
            draws, state = _lcg_uniform(state, spec.tgrid.n_t)
            run_opts.u_init = u_m + (u_M - u_m) * draws
        try:
            res = solve(spec, run_opts)
        except (DivergenceError, RuntimeError) as exc:
            failures.append(f"start {r}: {exc}")
            continue
        finals.append(res.cost)
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise DivergenceError(
            f"all {n_starts} starts failed: " + "; ".join(failures)
        )
    best.multistart_costs = np.asarray(finals)
    return best
