"""Session fixtures: the two shipped configs solved once, shared by the
acceptance tests (the default solve takes a minute or two)."""

from pathlib import Path

import pytest

from schrodoc.analysis import full_report
from schrodoc.config import load_config
from schrodoc.optimizer import multistart, solve

REPO = Path(__file__).resolve().parent.parent


def _solved(name):
    cfg = load_config(str(REPO / "configs" / name))
    if cfg.n_starts > 1:
        res = multistart(cfg.spec, cfg.solver, cfg.n_starts, seed=cfg.seed)
    else:
        res = solve(cfg.spec, cfg.solver)
    return cfg, res


@pytest.fixture(scope="session")
def default_run():
    return _solved("default.json")


@pytest.fixture(scope="session")
def default_report(default_run):
    cfg, res = default_run
    return full_report(cfg.spec, res.u_opt, n_probes=cfg.n_probes, seed=cfg.seed,
                       eps_u=cfg.eps_u, eps_lambda=cfg.eps_lambda)


@pytest.fixture(scope="session")
def convex_run():
    return _solved("convex_sanity.json")
