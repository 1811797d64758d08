"""Backward costate propagation and the discrete integration-by-parts check.

The costate is defined as the algebraic transpose of the discrete forward
map, not a separate discretization of the continuous adjoint PDE:

    p^{n_t} = psi^{n_t} - psi_dT
    B_k p^k = A_k p^{k+1} + dt g_k,    g_k = m_k(psi) - psi_d^{k+1/2}

with A_k, B_k the forward CN factors and m_k the interval average.  With
that pairing the discrete counterpart of

    <p(T), z(T)> + int <g, z> = <p(0), z(0)> + int <p, b>

holds to round-off for any source pair (b, g): node pairings at the ends,
midpoint quadrature for the sources.  ibp_residual measures exactly that.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .dynamics import (
    DivergenceError,
    SourceTerm,
    TimeGrid,
    Trajectory,
    apply_tridiag,
    cn_step_factors,
    _solve_cn,
)
from .field import SpatialGrid, Potential

if TYPE_CHECKING:
    from .dynamics import Control
    from .objective import ProblemSpec

__all__ = [
    "CostateTrajectory",
    "propagate_costate",
    "cn_run_backward",
    "ibp_residual",
    "ibp_terms",
]


@dataclass(frozen=True)
class CostateTrajectory:
    """Costate p on the n_t + 1 time nodes (same layout as Trajectory)."""

    states: np.ndarray
    tgrid: TimeGrid

    def __post_init__(self):
        if self.states.shape[0] != self.tgrid.n_t + 1:
            raise ValueError(
                f"expected {self.tgrid.n_t + 1} states, got {self.states.shape[0]}"
            )

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    def midpoint(self, k: int) -> np.ndarray:
        return 0.5 * (self.states[k] + self.states[k + 1])

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.states[:-1] + self.states[1:])


def cn_run_backward(
    grid: SpatialGrid,
    pot: Potential,
    tgrid: TimeGrid,
    u_values: np.ndarray,
    terminal: np.ndarray,
    source: SourceTerm,
) -> CostateTrajectory:
    """Solve B_k p^k = A_k p^{k+1} + dt source_k from p^{n_t} = terminal.

    B_k = conj(A_k), so the step reuses the forward factors with conjugated
    diagonals; solving with B_k is the transpose (A_k^H) solve.
    """
    n_t, dt = tgrid.n_t, tgrid.dt
    if u_values.shape[0] != n_t:
        raise ValueError(f"control length {u_values.shape[0]} != n_t {n_t}")
    states = np.empty((n_t + 1, grid.n_interior), dtype=complex)
    states[n_t] = terminal
    for k in range(n_t - 1, -1, -1):
        diag_A, off_A = cn_step_factors(grid, pot, dt, u_values[k])
        rhs = apply_tridiag(diag_A, off_A, states[k + 1])
        s_k = source.midpoint(k)
        if s_k is not None:
            rhs = rhs + dt * s_k
        p_k = _solve_cn(np.conj(diag_A), np.conj(off_A), rhs)
        if not np.all(np.isfinite(p_k.view(float))):
            raise DivergenceError(f"non-finite costate at step {k}")
        states[k] = p_k
    return CostateTrajectory(states, tgrid)


def propagate_costate(spec: ProblemSpec, u: Control, psi: Trajectory) -> CostateTrajectory:
    """Costate of the tracking cost at (u, psi): terminal value
    psi(T) - psi_dT, running source m_k(psi) - psi_d at midpoints."""
    if spec.psi_dT is None:
        terminal = np.zeros(spec.grid.n_interior, dtype=complex)
    else:
        terminal = psi.final - spec.psi_dT
    if spec.psi_d_mid is None:
        source = SourceTerm.zero()
    else:
        source = SourceTerm.from_midpoints(psi.midpoints - spec.psi_d_mid)
    return cn_run_backward(spec.grid, spec.pot, spec.tgrid, u.values, terminal, source)


def _pair(h: float, x: np.ndarray, y: np.ndarray) -> complex:
    return h * complex(np.dot(x, np.conj(y)))


def ibp_terms(
    p: CostateTrajectory,
    z: Trajectory,
    source_b: SourceTerm,
    source_g: SourceTerm,
    grid: SpatialGrid | None = None,
):
    """The four pairings of the discrete duality identity.

    Returns (terminal, running_g, initial, running_b) with the identity
    terminal + running_g = initial + running_b.
    """
    if p.tgrid != z.tgrid:
        raise ValueError("costate and state live on different time grids")
    h = 1.0 if grid is None else grid.h
    dt, n_t = p.tgrid.dt, p.tgrid.n_t
    zm, pm = z.midpoints, p.midpoints
    run_g = 0.0 + 0.0j
    run_b = 0.0 + 0.0j
    for k in range(n_t):
        g_k = source_g.midpoint(k)
        if g_k is not None:
            run_g += dt * _pair(h, g_k, zm[k])
        b_k = source_b.midpoint(k)
        if b_k is not None:
            run_b += dt * _pair(h, pm[k], b_k)
    terminal = _pair(h, p.states[-1], z.states[-1])
    initial = _pair(h, p.states[0], z.states[0])
    return terminal, run_g, initial, run_b


def ibp_residual(
    p: CostateTrajectory,
    z: Trajectory,
    source_b: SourceTerm,
    source_g: SourceTerm,
    grid: SpatialGrid | None = None,
) -> float:
    """|LHS - RHS| of the discrete duality identity; round-off for a
    matching discrete forward/adjoint pair, O(dt^2) otherwise."""
    terminal, run_g, initial, run_b = ibp_terms(p, z, source_b, source_g, grid)
    return abs((terminal + run_g) - (initial + run_b))
