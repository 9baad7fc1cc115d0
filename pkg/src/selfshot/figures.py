"""Matplotlib renderings of benchmark output (headless Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def save_convergence(traces: list[dict], path: str | Path) -> Path:
    """Support CE and dependence value against training iteration.

    Each trace dict: {"index": int, "rounds": [{"ce": [...], "dependence": [...] | None, ...}]};
    the first round of each kept episode is drawn.
    """
    fig, (ax_ce, ax_dep) = plt.subplots(1, 2, figsize=(9, 3.5))
    any_dep = False
    for tr in traces:
        if not tr["rounds"]:
            continue
        first = tr["rounds"][0]
        ax_ce.plot(first["ce"], lw=1, alpha=0.8, label=f"episode {tr['index']}")
        if first.get("dependence"):
            any_dep = True
            ax_dep.plot(first["dependence"], lw=1, alpha=0.8)
    ax_ce.set_xlabel("iteration")
    ax_ce.set_ylabel("support cross-entropy")
    ax_ce.set_title("classifier loss")
    if len(traces) <= 6:
        ax_ce.legend(fontsize=7)
    ax_dep.set_xlabel("iteration")
    ax_dep.set_ylabel("dependence value")
    ax_dep.set_title("feature/prediction dependence" if any_dep else "dependence term inactive")
    return _save(fig, path)


def save_accuracy_hist(
    accuracies: list[float], mean: float, ci95: float, path: str | Path
) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    if accuracies:
        ax.hist(np.asarray(accuracies), bins=min(30, max(5, len(accuracies) // 10 + 5)),
                color="#4878d0", edgecolor="white")
    ax.axvline(mean, color="#d65f5f", lw=2, label=f"mean {mean:.4f} (+/- {ci95:.4f})")
    ax.set_xlabel("episode accuracy")
    ax.set_ylabel("episodes")
    ax.legend(fontsize=8)
    return _save(fig, path)


def save_ablation(rows: list[dict], path: str | Path) -> Path:
    """Grouped bars: selector groups on x, one bar per loss."""
    losses = sorted({r["loss"] for r in rows})
    selectors = sorted({r["selector"] for r in rows})
    width = 0.8 / max(len(losses), 1)
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(selectors), 3.8))
    x = np.arange(len(selectors))
    for li, loss in enumerate(losses):
        means, errs = [], []
        for sel in selectors:
            match = [r for r in rows if r["loss"] == loss and r["selector"] == sel]
            means.append(match[0]["mean_accuracy"] if match else np.nan)
            errs.append(match[0]["ci95_half_width"] if match else 0.0)
        ax.bar(x + (li - (len(losses) - 1) / 2) * width, means, width * 0.95,
               yerr=errs, capsize=2, label=loss)
    ax.set_xticks(x, selectors)
    ax.set_xlabel("pseudo-label selector")
    ax.set_ylabel("mean accuracy")
    ax.legend(fontsize=8)
    return _save(fig, path)
