import copy
import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from schrodoc.cli import _read_control_csv
from schrodoc.config import ConfigError, ground_state, load_config, parse_config
from schrodoc.field import SpatialGrid, apply_laplacian, bump_potential, inner, l2_norm

REPO = Path(__file__).resolve().parent.parent

TINY = {
    "problem": {
        "x_lo": 0.0, "x_hi": 1.0, "n_x": 12, "T": 0.5, "n_t": 16,
        "alpha1": 0.0, "alpha2": 0.0, "u_min": 0.0, "u_max": 1.0,
        "b2": {"type": "bump", "amplitude": 30.0},
        "psi0": {"type": "ground_state", "u_ref": 0.4},
        "psi_d": {"type": "tracked", "u_ref": 0.4},
        "psi_dT": {"type": "from_psi_d"},
    },
    "solver": {"u_init": {"type": "constant", "value": 0.4}},
    "analysis": {"n_probes": 8},
}


def tiny_config(**problem_overrides):
    cfg = copy.deepcopy(TINY)
    cfg["problem"].update(problem_overrides)
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg), encoding="utf-8")
    return str(p)


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "schrodoc", *args],
        capture_output=True, text=True, cwd=cwd,
    )


# ---------------------------------------------------------------- parsing


def test_shipped_default_config_loads():
    cfg = load_config(str(REPO / "configs" / "default.json"))
    spec = cfg.spec
    assert spec.grid.n_interior == 40 - 1 or spec.grid.n_interior == 40
    assert spec.tgrid.n_t == 200
    assert spec.tgrid.T == 10.0
    assert spec.bounds == (0.0, 1.0)
    assert spec.alpha2 == 0.0
    assert spec.psi_d is not None and spec.psi_d.shape[0] == 201
    assert spec.psi_dT is None
    assert spec.alpha1 < 0
    assert cfg.eps_lambda == 0.005
    assert cfg.n_starts == 1
    assert cfg.figures


def test_minimal_config_gets_documented_defaults():
    cfg = parse_config({"problem": {"u_min": 0.0, "u_max": 1.0}})
    spec = cfg.spec
    assert spec.tgrid.n_t == 200 and spec.tgrid.T == 10.0
    assert np.all(spec.pot.values == 0.0)
    assert spec.psi_d is None and spec.psi_dT is None
    assert spec.f.midpoints is None  # normalized zero source
    assert cfg.solver.u_init is None
    assert cfg.n_probes == 100 and cfg.seed == 0
    assert cfg.out_dir == "out" and cfg.figures


@pytest.mark.parametrize(
    "mutate, key",
    [
        (lambda c: c.update({"extra": 1}), "extra"),
        (lambda c: c["problem"].update({"junk": 1}), "junk"),
        (lambda c: c["solver"].update({"stepsize": 0.1}), "stepsize"),
        (lambda c: c.update({"analysis": {"probes": 3}}), "probes"),
        (lambda c: c.update({"output": {"dir": "x"}}), "dir"),
        (lambda c: c["problem"]["b2"].update({"amp": 2.0}), "amp"),
        (lambda c: c["problem"]["psi0"].update({"refu": 0.1}), "refu"),
        (lambda c: c["solver"]["u_init"].update({"val": 0.2}), "val"),
    ],
)
def test_unknown_keys_rejected_with_key_named(mutate, key):
    cfg = tiny_config()
    mutate(cfg)
    with pytest.raises(ConfigError, match=key):
        parse_config(cfg)


def test_note_keys_are_ignored_everywhere():
    cfg = tiny_config()
    cfg["note"] = "top"
    cfg["problem"]["note"] = "p"
    cfg["problem"]["b2"]["notes"] = "b"
    cfg["solver"]["note"] = "s"
    cfg["analysis"] = {"note": "a"}
    cfg["output"] = {"notes": "o"}
    parse_config(cfg)


@pytest.mark.parametrize(
    "section, bad",
    [
        ("b2", {"type": "quartic"}),
        ("psi0", {"type": "plane_wave"}),
        ("psi_d", {"type": "moving"}),
        ("psi_dT", {"type": "fixed"}),
        ("f", {"type": "ramp"}),
    ],
)
def test_unknown_selectors_rejected(section, bad):
    cfg = tiny_config(**{section: bad})
    with pytest.raises(ConfigError, match="unknown selector"):
        parse_config(cfg)


def test_validation_errors():
    with pytest.raises(ConfigError, match="u_min"):
        parse_config({"problem": {"u_max": 1.0}})
    with pytest.raises(ConfigError, match="u_min < u_max"):
        parse_config(tiny_config(u_min=1.0, u_max=1.0))
    with pytest.raises(ConfigError, match="integer"):
        parse_config(tiny_config(n_x=True))
    with pytest.raises(ConfigError, match="width"):
        parse_config(tiny_config(psi0={"type": "gaussian", "center": 0.5, "width": 0.0}))
    with pytest.raises(ConfigError, match="length"):
        parse_config(tiny_config(psi0={"type": "custom", "re": [1.0, 2.0]}))
    with pytest.raises(ConfigError, match="outside"):
        parse_config(tiny_config(psi_d={"type": "tracked", "u_ref": 1.5}))
    bad_starts = tiny_config()
    bad_starts["solver"]["n_starts"] = 0
    with pytest.raises(ConfigError, match="n_starts"):
        parse_config(bad_starts)
    bad_init = tiny_config()
    bad_init["solver"]["u_init"] = {"type": "values", "values": [0.1, 0.2]}
    with pytest.raises(ConfigError, match="length"):
        parse_config(bad_init)


def test_load_config_io_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.json"))
    p = tmp_path / "broken.json"
    p.write_text("{nope", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(str(p))


def test_tracked_target_shapes_and_terminal_slice():
    cfg = parse_config(tiny_config())
    spec = cfg.spec
    n_m, n_t = spec.grid.n_interior, spec.tgrid.n_t
    assert spec.psi_d.shape == (n_t + 1, n_m)
    assert np.array_equal(spec.psi_dT, spec.psi_d[-1])
    # a static target is broadcast along time, terminal slice comes out static
    stat = tiny_config(psi_d={"type": "static",
                              "field": {"type": "ground_state", "u_ref": 0.2}})
    spec_s = parse_config(stat).spec
    assert spec_s.psi_d.shape == (n_t + 1, n_m)
    assert np.array_equal(spec_s.psi_d[0], spec_s.psi_d[-1])
    assert np.array_equal(spec_s.psi_dT, spec_s.psi_d[0])


def test_ground_state_is_normalized_eigenvector():
    g = SpatialGrid(0.0, 1.0, 48)
    pot = bump_potential(g, 25.0)
    phi = ground_state(g, pot, 0.7)
    assert l2_norm(g, phi) == pytest.approx(1.0, rel=1e-13)
    h_phi = -apply_laplacian(g, phi) + 0.7 * pot.values * phi
    theta = inner(g, phi, h_phi).real
    resid = l2_norm(g, h_phi - theta * phi)
    assert resid <= 1e-10 * l2_norm(g, h_phi)
    assert phi[np.argmax(np.abs(phi))].real > 0


def test_boosted_ground_state_field():
    cfg = tiny_config(psi0={"type": "boosted_ground_state",
                            "u_ref": 0.4, "momentum": 6.0},
                      psi_d={"type": "none"}, psi_dT={"type": "none"})
    spec = parse_config(cfg).spec
    g = SpatialGrid(0.0, 1.0, 12)
    pot = bump_potential(g, 30.0)
    plain = ground_state(g, pot, 0.4)
    # same modulus as the plain ground state, phase advances linearly in x
    assert np.allclose(np.abs(spec.psi0), plain)
    phase = np.unwrap(np.angle(spec.psi0))
    slopes = np.diff(phase) / g.h
    assert np.allclose(slopes, 6.0, atol=1e-9)
    with pytest.raises(ConfigError, match="momentum"):
        parse_config(tiny_config(psi0={"type": "boosted_ground_state"}))


def test_u_init_selectors():
    cfg = tiny_config()
    assert np.all(parse_config(cfg).solver.u_init == 0.4)
    cfg["solver"]["u_init"] = {"type": "box_midpoint"}
    assert parse_config(cfg).solver.u_init is None
    cfg["solver"]["u_init"] = {"type": "values",
                               "values": list(np.linspace(0, 1, 16))}
    got = parse_config(cfg).solver.u_init
    assert got.shape == (16,) and got[0] == 0.0 and got[-1] == 1.0


# ---------------------------------------------------------- control files


def test_read_control_csv_formats(tmp_path):
    vals = np.array([0.1, 0.2, 0.3])

    p = tmp_path / "with_header.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_mid", "u"])
        for t, v in zip([0.0, 0.1, 0.2], vals):
            w.writerow([t, v])
    assert np.array_equal(_read_control_csv(str(p)), vals)

    p2 = tmp_path / "bare.csv"
    np.savetxt(p2, vals)
    assert np.array_equal(_read_control_csv(str(p2)), vals)

    p3 = tmp_path / "two_col_headerless.csv"
    with open(p3, "w", newline="") as fh:
        w = csv.writer(fh)
        for t, v in zip([0.0, 0.1, 0.2], vals):
            w.writerow([t, v])
    assert np.array_equal(_read_control_csv(str(p3)), vals)

    p4 = tmp_path / "empty.csv"
    p4.write_text("")
    with pytest.raises(ValueError, match="empty"):
        _read_control_csv(str(p4))

    p5 = tmp_path / "garbage.csv"
    p5.write_text("u\nnot_a_number\n")
    with pytest.raises(ValueError, match="parse"):
        _read_control_csv(str(p5))


# ------------------------------------------------------------------- CLI


def test_cli_solve_writes_artifacts(tmp_path):
    cfgp = write_config(tmp_path, TINY)
    out = tmp_path / "out"
    proc = run_cli("solve", cfgp, "--out-dir", str(out))
    assert proc.returncode == 0, proc.stderr

    for name in ("u_opt.csv", "lambda.csv", "psi_final.csv", "cost_history.csv",
                 "result.json", "arcs.json", "control_and_switching.png",
                 "final_state.png", "cost_history.png", "singular_residual.png"):
        assert (out / name).exists(), name

    with open(out / "u_opt.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t_mid", "u"]
    assert len(rows) == 1 + 16
    assert [float(r[1]) for r in rows[1:]] == [0.4] * 16

    with open(out / "psi_final.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header == ["x", "re_psi", "im_psi", "abs2_psi"]

    res = json.loads((out / "result.json").read_text())
    assert res["schema"] == 1
    assert res["converged"] is True
    assert res["n_singular_arcs"] == 1
    assert res["report"]["passed"] is True
    assert res["cost_breakdown"]["total"] == res["cost"]

    arcs = json.loads((out / "arcs.json").read_text())
    assert arcs["n_t"] == 16
    assert [a["kind"] for a in arcs["arcs"]] == ["singular"]


def test_cli_solve_exit_codes(tmp_path):
    stuck = tiny_config(alpha1=-0.004)
    stuck["solver"] = {"u_init": {"type": "constant", "value": 0.5},
                       "max_iters": 1, "grad_tol": 1e-12}
    stuck["output"] = {"figures": False}
    cfgp = write_config(tmp_path, stuck, "stuck.json")
    out = tmp_path / "o2"
    proc = run_cli("solve", cfgp, "--out-dir", str(out))
    assert proc.returncode == 2
    res = json.loads((out / "result.json").read_text())
    assert res["converged"] is False
    assert not (out / "cost_history.png").exists()
    # interior iterate with large |Lambda|: no structure, reported as such
    assert res["n_singular_arcs"] == 0
    assert "structure_error" in res["report"]
    arcs = json.loads((out / "arcs.json").read_text())
    assert arcs["arcs"] == [] and arcs["structure_error"]

    bad = tiny_config()
    bad["problem"]["mystery"] = 3
    proc = run_cli("solve", write_config(tmp_path, bad, "bad.json"))
    assert proc.returncode == 64
    assert "config error" in proc.stderr

    proc = run_cli("solve", str(tmp_path / "nope.json"))
    assert proc.returncode == 64


def test_cli_verify_pass_fail_and_length(tmp_path):
    cfg = copy.deepcopy(TINY)
    cfg["output"] = {"figures": True}
    cfgp = write_config(tmp_path, cfg)

    good = tmp_path / "good.csv"
    np.savetxt(good, np.full(16, 0.4))
    out = tmp_path / "vg"
    proc = run_cli("verify", cfgp, str(good), "--out-dir", str(out))
    assert proc.returncode == 0, proc.stderr
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] is True
    assert rep["schema"] == 1
    assert len(rep["lambda"]) == 16
    assert (out / "verify_control_and_switching.png").exists()

    bad = tmp_path / "bad.csv"
    np.savetxt(bad, np.zeros(16))
    outb = tmp_path / "vb"
    proc = run_cli("verify", cfgp, str(bad), "--out-dir", str(outb))
    assert proc.returncode == 1
    rep = json.loads((outb / "report.json").read_text())
    assert rep["passed"] is False
    assert rep["verdicts"]["first_order"]["pass"] is False

    short = tmp_path / "short.csv"
    np.savetxt(short, np.zeros(19))
    proc = run_cli("verify", cfgp, str(short))
    assert proc.returncode == 65

    # interior non-stationary control: nothing classifiable, counts as a fail
    mush = tmp_path / "mush.csv"
    np.savetxt(mush, np.full(16, 0.55))
    outm = tmp_path / "vm"
    proc = run_cli("verify", cfgp, str(mush), "--out-dir", str(outm))
    assert proc.returncode == 1
    rep = json.loads((outm / "report.json").read_text())
    assert rep["passed"] is False and rep["structure_error"]


def test_cli_check_suites(tmp_path):
    cfgp = write_config(tmp_path, TINY)
    proc = run_cli("check", cfgp, "--which", "unitary", "--refine", "0")
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "[check:unitary]" in proc.stdout and "ok" in proc.stdout

    proc = run_cli("check", cfgp, "--which", "ibp", "--refine", "0")
    assert proc.returncode == 0, proc.stdout + proc.stderr

    proc = run_cli("check", cfgp, "--which", "grad", "--seed", "5")
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert proc.stdout.count("ok") >= 6
