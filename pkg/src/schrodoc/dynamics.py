"""Crank-Nicolson time propagation for the controlled Schrodinger equation.

Canonical form (interior nodes, homogeneous Dirichlet):

    psi_dot = i lap(psi) - i u(t) b2 psi + f
            = -i H(u) psi + f,       H(u) = -lap + u diag(b2)  (real symmetric)

One CN step with the control frozen on the interval (t_k, t_{k+1}):

    A_k psi^{k+1} = B_k psi^k + dt f^{k+1/2}
    A_k = I + i (dt/2) H_k,   B_k = I - i (dt/2) H_k = conj(A_k)

A_k is complex symmetric tridiagonal; each step is one banded solve.
For f = 0 the step is exactly unitary (Cayley transform of a Hermitian
matrix), which the tests pin down to round-off.

The linearized state z[v] and the transformed state xi[w] reuse the same
step with the reference control and per-interval midpoint sources.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import solve_banded

from .field import SpatialGrid, Potential, apply_M1_discrete

if TYPE_CHECKING:
    from .objective import ProblemSpec

__all__ = [
    "TimeGrid",
    "Control",
    "Trajectory",
    "SourceTerm",
    "NumericalError",
    "DivergenceError",
    "propagate_forward",
    "propagate_linearized",
    "propagate_goh_xi",
    "cn_step_factors",
    "apply_tridiag",
    "apply_cn_B",
]


class NumericalError(RuntimeError):
    """Tridiagonal solve failed or left a residual it should not."""


class DivergenceError(RuntimeError):
    """Non-finite values appeared during propagation."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [0, T]: states at nodes t_k = k dt, controls
    piecewise constant on the n_t intervals."""

    T: float
    n_t: int

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.n_t < 1:
            raise ValueError(f"n_t must be >= 1, got {self.n_t}")

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def t(self) -> np.ndarray:
        """Node times, length n_t + 1."""
        return self.dt * np.arange(self.n_t + 1)

    @property
    def t_mid(self) -> np.ndarray:
        """Interval midpoint times, length n_t."""
        return self.dt * (np.arange(self.n_t) + 0.5)

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.T, self.n_t * factor)


@dataclass(frozen=True)
class Control:
    """Piecewise-constant control: values_k on the interval (t_k, t_{k+1})."""

    values: np.ndarray
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1:
            raise ValueError("control values must be a 1-d real vector")
        if self.bounds is not None:
            u_m, u_M = self.bounds
            if not u_m < u_M:
                raise ValueError(f"need u_m < u_M, got ({u_m}, {u_M})")
            lo, hi = self.values.min(initial=u_m), self.values.max(initial=u_M)
            # projection produces exact bound values; allow round-off slack
            slack = 1e-12 * max(1.0, abs(u_m), abs(u_M))
            if lo < u_m - slack or hi > u_M + slack:
                raise ValueError(
                    f"control leaves bounds [{u_m}, {u_M}]: range [{lo}, {hi}]"
                )

    def __len__(self) -> int:
        return self.values.shape[0]

    @staticmethod
    def constant(n_t: int, value: float, bounds=None) -> "Control":
        return Control(np.full(n_t, float(value)), bounds)


@dataclass(frozen=True)
class Trajectory:
    """States on the n_t + 1 time nodes; row k is the field at t_k."""

    states: np.ndarray
    tgrid: TimeGrid

    def __post_init__(self):
        if self.states.shape[0] != self.tgrid.n_t + 1:
            raise ValueError(
                f"expected {self.tgrid.n_t + 1} states, got {self.states.shape[0]}"
            )

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def midpoint(self, k: int) -> np.ndarray:
        return 0.5 * (self.states[k] + self.states[k + 1])

    @property
    def midpoints(self) -> np.ndarray:
        """Interval averages (psi^k + psi^{k+1})/2, shape (n_t, n_m)."""
        return 0.5 * (self.states[:-1] + self.states[1:])


@dataclass(frozen=True)
class SourceTerm:
    """Right-hand-side samples at interval midpoints; None means zero."""

    midpoints: np.ndarray | None = None

    @staticmethod
    def zero() -> "SourceTerm":
        return SourceTerm(None)

    @staticmethod
    def from_static(field: np.ndarray, n_t: int) -> "SourceTerm":
        return SourceTerm(np.tile(np.asarray(field, complex), (n_t, 1)))

    @staticmethod
    def from_midpoints(values: np.ndarray) -> "SourceTerm":
        return SourceTerm(np.asarray(values, complex))

    @staticmethod
    def from_nodes(values: np.ndarray) -> "SourceTerm":
        values = np.asarray(values, complex)
        return SourceTerm(0.5 * (values[:-1] + values[1:]))

    @property
    def is_zero(self) -> bool:
        return self.midpoints is None

    def midpoint(self, k: int):
        return None if self.midpoints is None else self.midpoints[k]


def cn_step_factors(grid: SpatialGrid, pot: Potential, dt: float, u_k: float):
    """Diagonals of A_k = I + i (dt/2) H_k.

    Returns (diag, off): the complex main diagonal and the constant
    off-diagonal entry.  B_k entries are their conjugates.
    """
    tau = 0.5 * dt
    diag = 1.0 + 1j * tau * (2.0 / grid.h**2 + u_k * pot.values)
    off = -1j * tau / grid.h**2
    return diag, off


def apply_tridiag(diag: np.ndarray, off: complex, x: np.ndarray) -> np.ndarray:
    """y = T x for the symmetric tridiagonal T with constant off-diagonal."""
    y = diag * x
    y[:-1] += off * x[1:]
    y[1:] += off * x[:-1]
    return y


def apply_cn_B(diag_A: np.ndarray, off_A: complex, x: np.ndarray) -> np.ndarray:
    """Apply B = conj(A) given the diagonals of A (real H only)."""
    return apply_tridiag(np.conj(diag_A), np.conj(off_A), x)


def _solve_cn(diag_A: np.ndarray, off_A: complex, rhs: np.ndarray) -> np.ndarray:
    n = diag_A.shape[0]
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = off_A
    ab[1, :] = diag_A
    ab[2, :-1] = off_A
    try:
        return solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - cannot occur for real dt
        raise NumericalError(f"singular CN system: {exc}") from exc


def cn_run(
    grid: SpatialGrid,
    pot: Potential,
    tgrid: TimeGrid,
    u_values: np.ndarray,
    psi0: np.ndarray,
    source: SourceTerm,
    residual_check: bool = False,
) -> Trajectory:
    """Run the CN recursion A_k psi^{k+1} = B_k psi^k + dt source_k."""
    n_t, dt = tgrid.n_t, tgrid.dt
    if u_values.shape[0] != n_t:
        raise ValueError(f"control length {u_values.shape[0]} != n_t {n_t}")
    states = np.empty((n_t + 1, grid.n_interior), dtype=complex)
    states[0] = psi0
    for k in range(n_t):
        diag_A, off_A = cn_step_factors(grid, pot, dt, u_values[k])
        rhs = apply_cn_B(diag_A, off_A, states[k])
        s_k = source.midpoint(k)
        if s_k is not None:
            rhs = rhs + dt * s_k
        psi_next = _solve_cn(diag_A, off_A, rhs)
        if residual_check:
            res = apply_tridiag(diag_A, off_A, psi_next) - rhs
            scale = max(1.0, float(np.linalg.norm(rhs)))
            if float(np.linalg.norm(res)) > 1e-12 * scale:
                raise NumericalError(
                    f"CN step {k} residual {np.linalg.norm(res):.3e} above 1e-12 scale"
                )
        if not np.all(np.isfinite(psi_next.view(float))):
            raise DivergenceError(f"non-finite state at step {k + 1}")
        states[k + 1] = psi_next
    return Trajectory(states, tgrid)


def propagate_forward(spec: ProblemSpec, u: Control, residual_check: bool = False) -> Trajectory:
    """Forward solve of the controlled equation from spec.psi0."""
    return cn_run(
        spec.grid,
        spec.pot,
        spec.tgrid,
        u.values,
        spec.psi0,
        spec.f,
        residual_check=residual_check,
    )


def propagate_linearized(
    spec: ProblemSpec, u_ref: Control, psi_ref: Trajectory, v: Control
) -> Trajectory:
    """Linearized state z[v]: same CN operator as the reference control,
    per-interval source v_k * (-i b2 m_k(psi_ref)), z^0 = 0."""
    mids = psi_ref.midpoints
    src = SourceTerm.from_midpoints(
        v.values[:, None] * (-1j * spec.pot.values)[None, :] * mids
    )
    zero0 = np.zeros(spec.grid.n_interior, dtype=complex)
    return cn_run(spec.grid, spec.pot, spec.tgrid, u_ref.values, zero0, src)


def propagate_goh_xi(
    spec: ProblemSpec, u_ref: Control, psi_ref: Trajectory, w: Control
) -> Trajectory:
    """Transformed state xi[w] of the Goh change of variables.

    Source per interval: w_k * (i b2 f - M1 m_k(psi_ref)) at interval
    midpoints, with M1 in assembled-commutator form so that
    xi^k = z^k + i w_k b2 psi^k holds to O(dt^2) on any fixed spatial grid.
    xi^0 = 0.
    """
    g, tg = spec.grid, spec.tgrid
    mids = psi_ref.midpoints
    src = np.empty_like(mids)
    for k in range(tg.n_t):
        src[k] = -apply_M1_discrete(g, spec.pot, mids[k])
        f_k = spec.f.midpoint(k)
        if f_k is not None:
            src[k] += 1j * spec.pot.values * f_k
        src[k] *= w.values[k]
    zero0 = np.zeros(g.n_interior, dtype=complex)
    return cn_run(g, spec.pot, tg, u_ref.values, zero0, SourceTerm.from_midpoints(src))
