"""Figure rendering for scenario runs.

Each scenario gets one PNG next to its CSV artifacts, drawn from the numbers
the runner just computed. Figures are a convenience layer on top of the
delimited output; the CSVs remain the canonical, byte-reproducible record.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402


def _save(fig, out_dir: str, name: str) -> list:
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def render_counterexample(out_dir, ts, rates, target) -> list:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.semilogx(ts, rates, lw=1.5, label="(1/t) log(mixture / best)")
    ax.axhline(target, color="crimson", ls="--", lw=1.2,
               label=f"closed form {target:.5f}")
    ax.set_xlabel("t")
    ax.set_ylabel("rate")
    ax.set_title("Mixture portfolio trails the best stock at a constant rate")
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_dir, "counterexample.png")


def render_universality(out_dir, rate_curve, regret_rows, regret_slope) -> list:
    panels = 2 if regret_rows else 1
    fig, axes = plt.subplots(1, panels, figsize=(7 * panels, 4.5), squeeze=False)
    ax = axes[0][0]
    ts = [t for t, _ in rate_curve]
    rates = [r for _, r in rate_curve]
    ax.semilogx(ts, rates, "o-", lw=1.2)
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("(1/t) log(mixture / best)")
    ax.set_title("Mixture tracks the best family member")
    if regret_rows:
        ax2 = axes[0][1]
        ts = np.array([t for t, _ in regret_rows], dtype=float)
        regret = np.array([r for _, r in regret_rows])
        ax2.semilogx(ts, regret, "o", ms=3, label="log best - log mixture")
        if regret_slope is not None:
            fit = np.polyfit(np.log(ts), regret, 1)
            ax2.semilogx(ts, np.polyval(fit, np.log(ts)), "-",
                         label=f"fit slope {regret_slope:.3f}")
        ax2.set_xlabel("t")
        ax2.set_ylabel("regret (nats)")
        ax2.set_title("Regret growth against log t")
        ax2.legend()
    fig.tight_layout()
    return _save(fig, out_dir, "universality.png")


def render_ldp(out_dir, rows) -> list:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ts = sorted(set(r[0] for r in rows))
    for t in ts:
        rates = [r[2] for r in rows if r[0] == t and np.isfinite(r[2])]
        ax.plot([t] * len(rates), rates, "o", color="steelblue", ms=4, alpha=0.7)
    targets = [r[3] for r in rows if np.isfinite(r[3])]
    if targets:
        ax.axhline(targets[-1], color="crimson", ls="--", lw=1.2,
                   label=f"target rate {targets[-1]:.4f}")
        ax.legend()
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("-(1/t) log mass")
    ax.set_title("Empirical wealth-decay rates")
    fig.tight_layout()
    return _save(fig, out_dir, "ldp.png")


def render_fgp_verify(out_dir, slacks, identity_gaps) -> list:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))
    ax1.hist(slacks, bins=30, color="steelblue")
    ax1.set_xlabel("minimum inequality slack")
    ax1.set_ylabel("generators")
    ax1.set_title("Generated-portfolio inequality slack")
    ax2.hist(np.log10(np.maximum(identity_gaps, 1e-18)), bins=20, color="seagreen")
    ax2.set_xlabel("log10 value-identity gap")
    ax2.set_ylabel("prior/path cells")
    ax2.set_title("Mixture value identity drift")
    fig.tight_layout()
    return _save(fig, out_dir, "fgp_verify.png")
