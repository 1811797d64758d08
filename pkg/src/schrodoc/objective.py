"""Problem data, cost evaluation, switching function, reduced gradient.

Discrete cost on the CN grid (h-weighted spatial norms, m_k = interval
average (y^k + y^{k+1})/2):

    J(u) = sum_k dt (alpha1 u_k + 1/2 alpha2 u_k^2)
         + 1/2 sum_k dt || m_k(psi) - psi_d^{k+1/2} ||^2
         + 1/2 || psi^{n_t} - psi_dT ||^2

The running tracking term is sampled at interval midpoints so that the
costate recursion of the adjoint module is the exact algebraic transpose
of the forward map; the reduced gradient then satisfies g_k = dt Lambda_k
to round-off, with Lambda the switching function

    Lambda_k = alpha1 + alpha2 u_k + Re< m_k(p), -i b2 m_k(psi) >.

psi_d = None or psi_dT = None drop the respective tracking term entirely
(tracking-free configurations).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import CostateTrajectory, propagate_costate
from .dynamics import Control, SourceTerm, TimeGrid, Trajectory, propagate_forward
from .field import Potential, SpatialGrid

__all__ = ["ProblemSpec", "CostBreakdown", "evaluate_cost", "switching_function", "reduced_gradient"]


@dataclass(frozen=True)
class ProblemSpec:
    """Everything defining one optimal-control instance.

    psi_d may be given as None (no running tracking), a single field
    (static target), or node samples of shape (n_t + 1, n_m); it is
    normalized to node samples, with interval averages cached in
    psi_d_mid.  f may be None, a static field, or a SourceTerm.
    """

    grid: SpatialGrid
    tgrid: TimeGrid
    alpha1: float
    alpha2: float
    bounds: tuple[float, float]
    pot: Potential
    psi0: np.ndarray
    psi_d: np.ndarray | None = None
    psi_dT: np.ndarray | None = None
    f: SourceTerm | None = None

    def __post_init__(self):
        n_m, n_t = self.grid.n_interior, self.tgrid.n_t
        u_m, u_M = self.bounds
        if not u_m < u_M:
            raise ValueError(f"need u_m < u_M, got ({u_m}, {u_M})")
        if self.alpha2 < 0:
            raise ValueError(f"alpha2 must be >= 0, got {self.alpha2}")
        if self.pot.values.shape != (n_m,):
            raise ValueError("potential does not match the spatial grid")

        psi0 = np.asarray(self.psi0, dtype=complex)
        if psi0.shape != (n_m,):
            raise ValueError(f"psi0 shape {psi0.shape}, expected ({n_m},)")
        if not np.linalg.norm(psi0) > 0:
            raise ValueError("psi0 must be nonzero")
        object.__setattr__(self, "psi0", psi0)

        f = self.f
        if f is None:
            f = SourceTerm.zero()
        elif isinstance(f, np.ndarray):
            f = SourceTerm.from_static(f, n_t)
        if f.midpoints is not None and f.midpoints.shape != (n_t, n_m):
            raise ValueError(f"source shape {f.midpoints.shape}, expected ({n_t}, {n_m})")
        object.__setattr__(self, "f", f)

        psi_d = self.psi_d
        if psi_d is not None:
            psi_d = np.asarray(psi_d, dtype=complex)
            if psi_d.shape == (n_m,):
                psi_d = np.tile(psi_d, (n_t + 1, 1))
            if psi_d.shape != (n_t + 1, n_m):
                raise ValueError(
                    f"psi_d shape {psi_d.shape}, expected ({n_m},) or ({n_t + 1}, {n_m})"
                )
            object.__setattr__(self, "psi_d", psi_d)
            object.__setattr__(self, "psi_d_mid", 0.5 * (psi_d[:-1] + psi_d[1:]))
        else:
            object.__setattr__(self, "psi_d_mid", None)

        if self.psi_dT is not None:
            psi_dT = np.asarray(self.psi_dT, dtype=complex)
            if psi_dT.shape != (n_m,):
                raise ValueError(f"psi_dT shape {psi_dT.shape}, expected ({n_m},)")
            object.__setattr__(self, "psi_dT", psi_dT)

    @property
    def n_t(self) -> int:
        return self.tgrid.n_t

    def control(self, values: np.ndarray) -> Control:
        return Control(np.asarray(values, float), self.bounds)


@dataclass(frozen=True)
class CostBreakdown:
    total: float
    tracking_running: float
    tracking_final: float
    control_linear: float
    control_quadratic: float


def _check_match(spec: ProblemSpec, u: Control, psi: Trajectory):
    if len(u) != spec.tgrid.n_t:
        raise ValueError(f"control length {len(u)} != n_t {spec.tgrid.n_t}")
    if psi.states.shape[1] != spec.grid.n_interior:
        raise ValueError("trajectory does not match the spatial grid")
    if psi.tgrid != spec.tgrid:
        raise ValueError("trajectory does not match the time grid")


def evaluate_cost(spec: ProblemSpec, u: Control, psi: Trajectory) -> CostBreakdown:
    """Cost of (u, psi); exact per-interval control quadrature, midpoint
    quadrature for the running tracking term."""
    _check_match(spec, u, psi)
    dt, h = spec.tgrid.dt, spec.grid.h
    uv = u.values
    lin = spec.alpha1 * dt * float(np.sum(uv))
    quad = 0.5 * spec.alpha2 * dt * float(np.sum(uv**2))
    run = 0.0
    if spec.psi_d_mid is not None:
        diff = psi.midpoints - spec.psi_d_mid
        run = 0.5 * dt * h * float(np.sum(np.abs(diff) ** 2))
    fin = 0.0
    if spec.psi_dT is not None:
        fin = 0.5 * h * float(np.sum(np.abs(psi.final - spec.psi_dT) ** 2))
    return CostBreakdown(
        total=lin + quad + run + fin,
        tracking_running=run,
        tracking_final=fin,
        control_linear=lin,
        control_quadratic=quad,
    )


def switching_function(
    spec: ProblemSpec, u: Control, psi: Trajectory, p: CostateTrajectory
) -> np.ndarray:
    """Lambda_k = alpha1 + alpha2 u_k + Re<m_k(p), -i b2 m_k(psi)>, length n_t."""
    _check_match(spec, u, psi)
    if p.tgrid != spec.tgrid:
        raise ValueError("costate does not match the time grid")
    h = spec.grid.h
    coupled = -1j * spec.pot.values[None, :] * psi.midpoints
    cross = h * np.real(np.sum(p.midpoints * np.conj(coupled), axis=1))
    return spec.alpha1 + spec.alpha2 * u.values + cross


def reduced_gradient(spec: ProblemSpec, u: Control) -> np.ndarray:
    """dJ/du_k via one forward and one costate solve; equals dt * Lambda_k
    to round-off by the discrete-adjoint construction."""
    psi = propagate_forward(spec, u)
    p = propagate_costate(spec, u, psi)
    return spec.tgrid.dt * switching_function(spec, u, psi, p)
