"""Matplotlib figure rendering for the CLI report path (PNG files)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "fig_control_and_switching",
    "fig_final_state",
    "fig_cost_history",
    "fig_singular_residual",
]

_ARC_COLORS = {
    "singular": "#fdd0a2",
    "lower_boundary": "#c6dbef",
    "upper_boundary": "#fcbba1",
    "unresolved": "#d9d9d9",
}


def _shade_arcs(ax, arcs):
    seen = set()
    for a in arcs:
        color = _ARC_COLORS.get(a.kind)
        if color is None or a.length == 0:
            continue
        label = a.kind if a.kind not in seen else None
        seen.add(a.kind)
        ax.axvspan(a.t_start, a.t_end, color=color, alpha=0.5, label=label, lw=0)


def fig_control_and_switching(t_mid, u, lam, path, arcs=None, bounds=None):
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(8.0, 5.6), sharex=True)
    if arcs is not None:
        _shade_arcs(ax0, arcs)
    ax0.step(t_mid, u, where="mid", lw=1.2, color="tab:blue")
    if bounds is not None:
        for b in bounds:
            ax0.axhline(b, color="0.6", lw=0.8, ls="--")
    ax0.set_ylabel("u(t)")
    if arcs is not None:
        ax0.legend(loc="best", fontsize=8)
    ax1.plot(t_mid, lam, lw=1.0, color="tab:red")
    ax1.axhline(0.0, color="0.6", lw=0.8)
    ax1.set_ylabel("switching function")
    ax1.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def fig_final_state(x, psi_final, path, psi_target=None):
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(x, np.abs(psi_final) ** 2, lw=1.4, label="|psi(T)|^2")
    if psi_target is not None:
        ax.plot(x, np.abs(psi_target) ** 2, lw=1.0, ls="--", label="target")
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def fig_cost_history(costs, path):
    costs = np.asarray(costs, float)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    drop = costs - costs.min()
    if np.any(drop > 0):
        ax.semilogy(np.maximum(drop, drop[drop > 0].min() * 1e-3), lw=1.2)
        ax.set_ylabel("cost - best cost")
    else:
        ax.plot(costs, lw=1.2)
        ax.set_ylabel("cost")
    ax.set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def fig_singular_residual(t, r_nodes, path, arcs=None):
    fig, ax = plt.subplots(figsize=(8.0, 4.2))
    if arcs is not None:
        _shade_arcs(ax, arcs)
    ax.plot(t, r_nodes, lw=1.2, color="tab:green")
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("residual R(t)")
    if arcs is not None:
        ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
