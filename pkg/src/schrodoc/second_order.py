"""Second-order machinery: quadratic form Q, Goh transform, residual R.

Q is the second variation of the reduced cost at (u, psi, p) in the
direction (z, v):

    Q(z, v) = sum_k dt ( ||m_k(z)||^2 + alpha2 v_k^2
                         + 2 v_k Re<m_k(p), -i b2 m_k(z)> )
            + ||z^{n_t}||^2

With z = psi[u+v] - psi[u] the expansion
F(u+v) = F(u) + DF(u)v + Q/2 is exact to round-off on the discrete
level; with z = z[v] from propagate_linearized the defect is cubic in v.

The Goh change of variables w = primitive of v, h = w(T) turns Q into

    Qhat = Qhat_T + Qhat_a + Qhat_b

whose integrand no longer differentiates w; Qhat_b = int w^2 R dt with
the pointwise residual R(t) whose nonnegativity on singular arcs is the
second-order necessary condition.  Both forms are evaluated with the
same midpoint quadrature as the propagators, making the identity
Q(z[v], v) = Qhat(xi[w], w, h) hold up to O(dt^2).

Running-tracking terms drop out of Qhat_a and R for tracking-free
problems (psi_d = None).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .adjoint import CostateTrajectory, propagate_costate
from .dynamics import (
    Control,
    Trajectory,
    propagate_forward,
    propagate_goh_xi,
    propagate_linearized,
)
from .field import apply_M1_B2_commutator_discrete, apply_M1_discrete

if TYPE_CHECKING:
    from .analysis import ArcStructure
    from .objective import ProblemSpec

__all__ = [
    "QuadFormReport",
    "GohDirection",
    "quad_form_Q",
    "goh_primitive",
    "quad_form_Qhat",
    "singular_residual_R",
    "goh_identity_check",
    "goh_identity_report",
    "sample_PC2_direction",
]


@dataclass
class QuadFormReport:
    Q_value: float
    Qhat_value: float
    Qhat_T: float
    Qhat_a: float
    Qhat_b: float
    goh_identity_gap: float
    R_samples: np.ndarray  # interval averages of the nodewise residual, length n_t


@dataclass(frozen=True)
class GohDirection:
    """Direction v, its exact discrete primitive w (left-node samples,
    w_0 = 0), and the free terminal value h = w(T)."""

    v: Control
    w: Control
    h: float


def quad_form_Q(
    spec: ProblemSpec,
    u: Control,
    psi: Trajectory,
    p: CostateTrajectory,
    v: Control,
    z: Trajectory,
) -> float:
    """Second variation in direction (z, v) at the point (u, psi, p).

    Tracking blocks enter only when the matching data is present: the
    running ||z||^2 needs psi_d, the terminal ||z(T)||^2 needs psi_dT.
    """
    dt, hsp = spec.tgrid.dt, spec.grid.h
    b2 = spec.pot.values
    zm = z.midpoints
    if spec.psi_d_mid is None:
        track = 0.0
    else:
        track = hsp * np.sum(np.abs(zm) ** 2, axis=1)
    coupled = -1j * b2[None, :] * zm
    cross = hsp * np.real(np.sum(p.midpoints * np.conj(coupled), axis=1))
    integrand = track + spec.alpha2 * v.values**2 + 2.0 * v.values * cross
    terminal = 0.0
    if spec.psi_dT is not None:
        terminal = hsp * float(np.sum(np.abs(z.final) ** 2))
    return dt * float(np.sum(integrand)) + terminal


def goh_primitive(v: Control, dt: float) -> GohDirection:
    """Exact discrete primitive: w_k = dt sum_{j<k} v_j (left-node values,
    w_0 = 0) and h = dt sum_j v_j.  Forward-differencing w (closed with h)
    recovers v exactly."""
    csum = dt * np.cumsum(v.values)
    w = np.concatenate(([0.0], csum[:-1]))
    return GohDirection(v=v, w=Control(w), h=float(csum[-1]))


def quad_form_Qhat(
    spec: ProblemSpec,
    u: Control,
    psi: Trajectory,
    p: CostateTrajectory,
    w: Control,
    h: float,
    xi: Trajectory,
) -> QuadFormReport:
    """Goh-transformed quadratic form, componentwise.

    Qhat_T pairs terminal fields; Qhat_a integrates the xi-quadratic part
    at interval midpoints; Qhat_b = sum_k dt w_k^2 R_k with R averaged
    onto intervals from its nodewise samples.
    """
    dt, hsp = spec.tgrid.dt, spec.grid.h
    b2 = spec.pot.values

    def pair(x, y):
        return hsp * complex(np.dot(x, np.conj(y)))

    psiT, xiT, pT = psi.final, xi.final, p.terminal
    qhat_T = (
        -(h**2) * float(np.real(pair(pT, b2**2 * psiT)))
        + 2.0 * h * float(np.real(pair(1j * pT, b2 * xiT)))
    )
    if spec.psi_dT is not None:
        qhat_T += hsp * float(np.sum(np.abs(xiT - 1j * h * b2 * psiT) ** 2))

    xim, psim, pm = xi.midpoints, psi.midpoints, p.midpoints
    wv = w.values
    if spec.psi_d_mid is None:
        quad = 0.0
        t1 = np.zeros(spec.tgrid.n_t, dtype=complex)
        t2 = np.zeros_like(t1)
    else:
        quad = hsp * np.sum(np.abs(xim) ** 2, axis=1)
        t1 = 1j * hsp * np.sum(xim * np.conj(b2[None, :] * psim), axis=1)
        t2 = 1j * hsp * np.sum(
            (psim - spec.psi_d_mid) * np.conj(b2[None, :] * xim), axis=1
        )
    # M1* = -M1 in assembled form (antisymmetric commutator matrix)
    m1p = np.empty_like(pm)
    for k in range(spec.tgrid.n_t):
        m1p[k] = -apply_M1_discrete(spec.grid, spec.pot, pm[k])
    t3 = hsp * np.sum(m1p * np.conj(xim), axis=1)
    qhat_a = dt * float(np.sum(quad + 2.0 * wv * np.real(t1 + t2 - t3)))

    r_nodes = singular_residual_R(spec, u, psi, p)
    r_mid = 0.5 * (r_nodes[:-1] + r_nodes[1:])
    qhat_b = dt * float(np.sum(wv**2 * r_mid))

    return QuadFormReport(
        Q_value=float("nan"),
        Qhat_value=qhat_T + qhat_a + qhat_b,
        Qhat_T=qhat_T,
        Qhat_a=qhat_a,
        Qhat_b=qhat_b,
        goh_identity_gap=float("nan"),
        R_samples=r_mid,
    )


def singular_residual_R(
    spec: ProblemSpec, u: Control, psi: Trajectory, p: CostateTrajectory
) -> np.ndarray:
    """Nodewise residual R(t_k), length n_t + 1:

        R = ||b2 psi||^2 - Re<psi - psi_d, b2^2 psi>
            + Re<p, -b2^2 f - [M1, B2hat] psi>

    The commutator term is 2i (b2')^2 psi up to O(h^2); it is evaluated in
    assembled form so that Qhat_b closes the Goh identity on the grid.  The
    first two (running-tracking) terms drop when psi_d is absent.  The
    source f is reconstructed at nodes from its midpoint samples.
    """
    hsp = spec.grid.h
    b2 = spec.pot.values
    st, ps = psi.states, p.states
    if spec.psi_d is not None:
        r = hsp * np.sum(np.abs(b2[None, :] * st) ** 2, axis=1)
        r -= hsp * np.real(
            np.sum((st - spec.psi_d) * np.conj(b2[None, :] ** 2 * st), axis=1)
        )
    else:
        r = np.zeros(st.shape[0])
    pairing = np.empty_like(st)
    for k in range(st.shape[0]):
        pairing[k] = -apply_M1_B2_commutator_discrete(spec.grid, spec.pot, st[k])
    if not spec.f.is_zero:
        fm = spec.f.midpoints
        f_nodes = np.empty_like(st)
        f_nodes[0] = fm[0]
        f_nodes[1:-1] = 0.5 * (fm[:-1] + fm[1:])
        f_nodes[-1] = fm[-1]
        pairing = pairing - b2[None, :] ** 2 * f_nodes
    r += hsp * np.real(np.sum(ps * np.conj(pairing), axis=1))
    return r


def goh_identity_report(spec: ProblemSpec, u: Control, v: Control) -> QuadFormReport:
    """Evaluate Q through the z-pipeline and Qhat through the xi-pipeline
    for the same direction v, and record the relative gap."""
    psi = propagate_forward(spec, u)
    p = propagate_costate(spec, u, psi)
    z = propagate_linearized(spec, u, psi, v)
    q = quad_form_Q(spec, u, psi, p, v, z)

    gd = goh_primitive(v, spec.tgrid.dt)
    # xi sees w as per-interval values: midpoints of the piecewise-linear
    # primitive, with the terminal value closing the last interval
    w_ext = np.append(gd.w.values, gd.h)
    w_mid = Control(0.5 * (w_ext[:-1] + w_ext[1:]))
    xi = propagate_goh_xi(spec, u, psi, w_mid)
    rep = quad_form_Qhat(spec, u, psi, p, w_mid, gd.h, xi)
    rep.Q_value = q
    rep.goh_identity_gap = abs(q - rep.Qhat_value) / (1.0 + abs(q))
    return rep


def goh_identity_check(spec: ProblemSpec, u: Control, v: Control) -> float:
    """Relative gap |Q - Qhat| / (1 + |Q|) between the two pipelines."""
    return goh_identity_report(spec, u, v).goh_identity_gap


def sample_PC2_direction(arcs: ArcStructure, seed: int) -> GohDirection:
    """Random admissible Goh direction for the arc structure:

    w constant on each boundary arc, zero on an initial boundary arc,
    equal to h on a terminal boundary arc, smooth random (low-order
    Fourier sum) on singular and unresolved stretches; h is the terminal
    arc's constant when one exists, otherwise free."""
    tg = arcs.tgrid
    n_t, dt, T = tg.n_t, tg.dt, tg.T
    rng = np.random.default_rng(seed)
    t_mid = tg.t_mid
    w = np.full(n_t, np.nan)

    boundary = [a for a in arcs.arcs if a.kind in ("lower_boundary", "upper_boundary")]
    initial_arc = next((a for a in boundary if a.t_start <= 0.5 * dt), None)
    terminal_arc = next((a for a in boundary if a.t_end >= T - 0.5 * dt), None)
    # the terminal boundary arc, when present, pins w = h on itself; if it
    # is also the initial arc the only admissible value is h = 0
    if terminal_arc is not None and terminal_arc is initial_arc:
        h = 0.0
    else:
        h = float(rng.normal())

    for a in boundary:
        mask = (t_mid >= a.t_start) & (t_mid <= a.t_end)
        if a is initial_arc:
            w[mask] = 0.0
        elif a is terminal_arc:
            w[mask] = h
        else:
            w[mask] = rng.normal()

    free = np.isnan(w)
    if np.any(free):
        # smooth profile over the whole horizon, used on the free stretches
        prof = np.zeros(n_t)
        for m in range(1, 5):
            prof += rng.normal() / m * np.sin(np.pi * m * t_mid / T)
            prof += rng.normal() / m * np.cos(np.pi * m * t_mid / T)
        w[free] = prof[free]
    w[0] = 0.0

    v = np.diff(np.append(w, h)) / dt
    return GohDirection(v=Control(v), w=Control(w), h=h)
