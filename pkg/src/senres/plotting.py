"""Report figures, rendered off-screen with the Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_scores(rows: list[dict], path) -> None:
    """Grouped bars of mean macro-F1 with 95% limits, one group per label fraction.

    ``rows`` carry ``method``, ``fraction``, ``mean`` and optional ``lower``/``upper``.
    """
    fractions = sorted({r["fraction"] for r in rows})
    methods = list(dict.fromkeys(r["method"] for r in rows))
    width = 0.8 / max(len(methods), 1)
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(fractions) + 2), 3.6))
    x = np.arange(len(fractions))
    for k, method in enumerate(methods):
        by_f = {r["fraction"]: r for r in rows if r["method"] == method}
        means = [by_f[f]["mean"] if f in by_f else np.nan for f in fractions]
        err = np.zeros((2, len(fractions)))
        for i, f in enumerate(fractions):
            r = by_f.get(f)
            if r is not None and r.get("lower") is not None:
                err[:, i] = [r["mean"] - r["lower"], r["upper"] - r["mean"]]
        ax.bar(x + (k - (len(methods) - 1) / 2) * width, means, width, yerr=err.tolist(), capsize=3, label=method)
    ax.set_xticks(x)
    ax.set_xticklabels([f"{100 * f:g}%" for f in fractions])
    ax.set_xlabel("labelled fraction")
    ax.set_ylabel("macro F1")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_losses(curves: dict[str, list[float]], path) -> None:
    """One line per run of its per-epoch training loss."""
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for name, losses in curves.items():
        ax.plot(np.arange(1, len(losses) + 1), losses, label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    if curves:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
