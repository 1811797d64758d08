import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal

from schrodoc.adjoint import propagate_costate
from schrodoc.dynamics import Control, SourceTerm, TimeGrid, cn_run, propagate_forward
from schrodoc.field import SpatialGrid, bump_potential, l2_norm, zero_potential
from schrodoc.objective import (
    CostBreakdown,
    ProblemSpec,
    evaluate_cost,
    reduced_gradient,
    switching_function,
)


def ground_state_of(g, pot, u_ref):
    d = 2.0 / g.h**2 + u_ref * pot.values
    e = np.full(g.n_interior - 1, -1.0 / g.h**2)
    _, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    phi = vecs[:, 0].astype(complex)
    return phi / l2_norm(g, phi)


def tracked_spec(n_x=20, n_t=30, T=1.2, amp=30.0, u_ref=0.4,
                 alpha1=-0.004, alpha2=0.0):
    g = SpatialGrid(0.0, 1.0, n_x)
    pot = bump_potential(g, amp)
    tg = TimeGrid(T, n_t)
    psi0 = ground_state_of(g, pot, u_ref)
    psi_d = cn_run(g, pot, tg, np.full(n_t, u_ref), psi0, SourceTerm.zero()).states
    return ProblemSpec(grid=g, tgrid=tg, alpha1=alpha1, alpha2=alpha2,
                       bounds=(0.0, 1.0), pot=pot, psi0=psi0,
                       psi_d=psi_d, psi_dT=psi_d[-1])


def test_constant_control_cost_terms():
    spec = tracked_spec(alpha1=0.3, alpha2=0.8)
    c = 0.25
    u = Control.constant(spec.tgrid.n_t, c, spec.bounds)
    bd = evaluate_cost(spec, u, propagate_forward(spec, u))
    T = spec.tgrid.T
    assert bd.control_linear == pytest.approx(0.3 * T * c, rel=1e-13)
    assert bd.control_quadratic == pytest.approx(0.5 * 0.8 * T * c * c, rel=1e-13)
    assert bd.total == pytest.approx(
        bd.control_linear + bd.control_quadratic
        + bd.tracking_running + bd.tracking_final, rel=1e-14)


def test_matched_tracking_costs_nothing():
    # running the reference control reproduces the target trajectory, so both
    # tracking terms vanish and the cost is the closed-form control part
    spec = tracked_spec(u_ref=0.37, alpha1=0.1, alpha2=0.2)
    u = Control.constant(spec.tgrid.n_t, 0.37, spec.bounds)
    bd = evaluate_cost(spec, u, propagate_forward(spec, u))
    assert bd.tracking_running < 1e-24
    assert bd.tracking_final < 1e-24
    T = spec.tgrid.T
    expect = 0.1 * T * 0.37 + 0.5 * 0.2 * T * 0.37**2
    assert bd.total == pytest.approx(expect, rel=1e-12)


def test_cost_matches_direct_summation():
    spec = tracked_spec(alpha1=-0.02, alpha2=0.05)
    rng = np.random.default_rng(6)
    u = Control(rng.random(spec.tgrid.n_t), spec.bounds)
    psi = propagate_forward(spec, u)
    bd = evaluate_cost(spec, u, psi)

    dt, h = spec.tgrid.dt, spec.grid.h
    total = 0.0
    for k in range(spec.tgrid.n_t):
        uk = u.values[k]
        total += dt * (spec.alpha1 * uk + 0.5 * spec.alpha2 * uk * uk)
        diff = 0.5 * (psi.states[k] + psi.states[k + 1]) \
            - 0.5 * (spec.psi_d[k] + spec.psi_d[k + 1])
        total += 0.5 * dt * h * float(np.sum(np.abs(diff) ** 2))
    total += 0.5 * h * float(np.sum(np.abs(psi.final - spec.psi_dT) ** 2))
    assert bd.total == pytest.approx(total, rel=1e-13)


def test_global_phase_invariance():
    spec = tracked_spec(alpha1=0.01, alpha2=0.03)
    rng = np.random.default_rng(12)
    u = Control(rng.random(spec.tgrid.n_t), spec.bounds)
    theta = np.exp(0.731j)
    spec_rot = ProblemSpec(
        grid=spec.grid, tgrid=spec.tgrid, alpha1=spec.alpha1, alpha2=spec.alpha2,
        bounds=spec.bounds, pot=spec.pot, psi0=theta * spec.psi0,
        psi_d=theta * spec.psi_d, psi_dT=theta * spec.psi_dT,
    )
    J = evaluate_cost(spec, u, propagate_forward(spec, u)).total
    J_rot = evaluate_cost(spec_rot, u, propagate_forward(spec_rot, u)).total
    assert J_rot == pytest.approx(J, rel=1e-13)


def test_gradient_equals_dt_lambda():
    spec = tracked_spec(n_t=24, alpha1=-0.05, alpha2=0.08)
    rng = np.random.default_rng(30)
    u = Control(rng.random(spec.tgrid.n_t), spec.bounds)
    g = reduced_gradient(spec, u)
    psi = propagate_forward(spec, u)
    p = propagate_costate(spec, u, psi)
    lam = switching_function(spec, u, psi, p)
    err = np.max(np.abs(g - spec.tgrid.dt * lam) / np.maximum(1.0, np.abs(g)))
    assert err < 1e-12, f"gradient vs dt*Lambda mismatch {err:.3e}"


def test_gradient_matches_central_differences():
    spec = tracked_spec(n_x=16, n_t=24, T=0.8, alpha1=-0.05, alpha2=0.08)
    rng = np.random.default_rng(31)
    u_vals = 0.2 + 0.6 * rng.random(spec.tgrid.n_t)
    g = reduced_gradient(spec, Control(u_vals, spec.bounds))
    step = 1e-5
    for k in range(spec.tgrid.n_t):
        up, dn = u_vals.copy(), u_vals.copy()
        up[k] += step
        dn[k] -= step
        J_up = evaluate_cost(spec, Control(up), propagate_forward(spec, Control(up))).total
        J_dn = evaluate_cost(spec, Control(dn), propagate_forward(spec, Control(dn))).total
        fd = (J_up - J_dn) / (2.0 * step)
        assert g[k] == pytest.approx(fd, rel=1e-6), f"component {k}"


def test_decoupled_potential_gives_closed_form_switching():
    g = SpatialGrid(0.0, 1.0, 12)
    tg = TimeGrid(1.0, 10)
    s = np.sin(np.pi * g.x).astype(complex)
    spec = ProblemSpec(grid=g, tgrid=tg, alpha1=0.7, alpha2=1.3,
                       bounds=(0.0, 1.0), pot=zero_potential(g), psi0=s,
                       psi_dT=np.zeros(g.n_interior, dtype=complex))
    rng = np.random.default_rng(1)
    u = Control(rng.random(tg.n_t), spec.bounds)
    psi = propagate_forward(spec, u)
    p = propagate_costate(spec, u, psi)
    lam = switching_function(spec, u, psi, p)
    assert np.allclose(lam, 0.7 + 1.3 * u.values, rtol=0.0, atol=1e-14)


def test_no_objective_terms_means_zero_cost_and_gradient():
    g = SpatialGrid(0.0, 1.0, 12)
    tg = TimeGrid(1.0, 10)
    s = np.sin(np.pi * g.x).astype(complex)
    spec = ProblemSpec(grid=g, tgrid=tg, alpha1=0.0, alpha2=0.0,
                       bounds=(0.0, 1.0), pot=bump_potential(g, 10.0), psi0=s)
    rng = np.random.default_rng(2)
    u = Control(rng.random(tg.n_t), spec.bounds)
    bd = evaluate_cost(spec, u, propagate_forward(spec, u))
    assert bd.total == 0.0
    assert np.max(np.abs(reduced_gradient(spec, u))) == 0.0


def test_spec_validation():
    g = SpatialGrid(0.0, 1.0, 12)
    tg = TimeGrid(1.0, 10)
    s = np.sin(np.pi * g.x).astype(complex)
    with pytest.raises(ValueError):
        ProblemSpec(grid=g, tgrid=tg, alpha1=0.0, alpha2=-1.0,
                    bounds=(0.0, 1.0), pot=zero_potential(g), psi0=s)
    with pytest.raises(ValueError):
        ProblemSpec(grid=g, tgrid=tg, alpha1=0.0, alpha2=0.0,
                    bounds=(1.0, 0.0), pot=zero_potential(g), psi0=s)
    with pytest.raises(ValueError):
        ProblemSpec(grid=g, tgrid=tg, alpha1=0.0, alpha2=0.0,
                    bounds=(0.0, 1.0), pot=zero_potential(g), psi0=s[:-1])
    spec = ProblemSpec(grid=g, tgrid=tg, alpha1=0.0, alpha2=0.0,
                       bounds=(0.0, 1.0), pot=zero_potential(g), psi0=s)
    with pytest.raises(ValueError):
        evaluate_cost(spec, Control(np.zeros(7)),
                      propagate_forward(spec, Control(np.zeros(tg.n_t))))


def test_static_target_is_broadcast():
    g = SpatialGrid(0.0, 1.0, 10)
    tg = TimeGrid(0.5, 6)
    s = np.sin(np.pi * g.x).astype(complex)
    spec = ProblemSpec(grid=g, tgrid=tg, alpha1=0.0, alpha2=0.0,
                       bounds=(0.0, 1.0), pot=zero_potential(g), psi0=s,
                       psi_d=s)
    assert spec.psi_d.shape == (tg.n_t + 1, g.n_interior)
    assert np.all(spec.psi_d[3] == s)


def test_breakdown_is_plain_record():
    bd = CostBreakdown(total=1.0, tracking_running=0.25, tracking_final=0.25,
                       control_linear=0.25, control_quadratic=0.25)
    assert bd.total == 1.0
