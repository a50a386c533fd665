"""Figure rendering for the command-line reports.

Every report command can save a PNG next to its delimited output; all
rendering goes through the non-interactive Agg backend so runs are safe in
headless environments.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_policy_value(path, grid, phi, value, phi_ref=None, value_ref=None,
                      title="fixed-point solve"):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.plot(grid, phi, label="computed")
    if phi_ref is not None:
        ax1.plot(grid, phi_ref, "--", label="closed form")
    ax1.set_xlabel("population state")
    ax1.set_ylabel("stopping probability")
    ax1.legend(fontsize=8)
    ax2.plot(grid, value, label="continuation")
    if value_ref is not None:
        ax2.plot(grid, value_ref, "--", label="closed form")
    ax2.plot(grid, 1.0 - np.asarray(grid), ":", label="reward")
    ax2.set_xlabel("population state")
    ax2.set_ylabel("value")
    ax2.legend(fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_ode_family(path, curves, closed_phi, closed_v, grid):
    """curves: list of (lam, v_values, phi_values) on the common grid."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    for lam, v_vals, phi_vals in curves:
        ax1.plot(grid, phi_vals, label=f"lam={lam:g}")
        ax2.plot(grid, v_vals, label=f"lam={lam:g}")
    ax1.plot(grid, closed_phi, "k--", lw=1, label="limit")
    ax2.plot(grid, closed_v, "k--", lw=1, label="limit")
    ax1.set_xlabel("population state")
    ax1.set_ylabel("stopping probability")
    ax2.set_xlabel("population state")
    ax2.set_ylabel("continuation value")
    ax1.legend(fontsize=8)
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_convergence(path, lams, phi_gaps, value_gaps):
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.loglog(lams, phi_gaps, "o-", label="policy gap")
    ax.loglog(lams, value_gaps, "s-", label="value gap")
    ax.set_xlabel("regularization")
    ax.set_ylabel("sup gap away from thresholds")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_rate(path, ns, estimates, slope):
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.loglog(ns, estimates, "o", label="measured")
    anchor = estimates[0] * (np.asarray(ns, float) / ns[0]) ** slope
    ax.loglog(ns, anchor, "--", label=f"slope {slope:.3f}")
    ax.set_xlabel("population size")
    ax.set_ylabel("mean empirical distance")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_gap_bars(path, ns, gaps, stderrs):
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    x = np.arange(len(ns))
    ax.bar(x, gaps, yerr=3.0 * np.asarray(stderrs), capsize=4)
    ax.set_xticks(x, [str(n) for n in ns])
    ax.set_xlabel("population size")
    ax.set_ylabel("best deviation gain")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_etf_report(path, params, policy, td_losses, ce_losses):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 3.6))
    pg, rg = params.price_grid(), params.ret_grid()
    img = ax1.pcolormesh(rg, pg, policy, cmap="coolwarm", vmin=0.0, vmax=1.0)
    ax1.set_xlabel("market return")
    ax1.set_ylabel("index level")
    ax1.set_title("stopping probability")
    fig.colorbar(img, ax=ax1)
    iters = np.arange(len(td_losses))
    ax2.semilogy(iters, td_losses, label="TD")
    ax2.semilogy(iters, ce_losses, label="CE")
    ax2.set_xlabel("outer iteration")
    ax2.set_ylabel("held-out loss")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_market(path, prices, rets):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    for row in prices[: min(20, prices.shape[0])]:
        ax1.plot(row, lw=0.7)
    ax1.set_xlabel("day")
    ax1.set_ylabel("index level")
    ax2.hist(rets[:, 1:].ravel(), bins=60, density=True)
    ax2.set_xlabel("daily return")
    ax2.set_ylabel("density")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
