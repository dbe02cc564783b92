"""Report figures, rendered deterministically (Agg backend, no metadata)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

# Strip the Software key so rerenders of identical data hash identically.
_PNG_KWARGS = {"dpi": 120, "metadata": {"Software": None}}


def _bar(ax, labels, values, title, ylabel):
    ax.bar(range(len(values)), values, color="#4878d0", width=0.6)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    ax.grid(axis="y", alpha=0.3)


def render_report_figures(rows: list[dict], run_dir) -> list[Path]:
    """One bar chart per comparison axis; returns the written paths."""
    run_dir = Path(run_dir)
    labels = [f"{r['method']}\nseed {r['seed']}" for r in rows]
    paths: list[Path] = []

    fig, ax = plt.subplots(figsize=(6, 4))
    _bar(ax, labels, [r["client_epochs"] for r in rows], "Retraining cost", "client-epochs")
    fig.tight_layout()
    path = run_dir / "fig_client_epochs.png"
    fig.savefig(path, **_PNG_KWARGS)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    _bar(
        ax,
        labels,
        [r["storage_bytes"] for r in rows],
        "Server persistent storage",
        "bytes",
    )
    fig.tight_layout()
    path = run_dir / "fig_storage_bytes.png"
    fig.savefig(path, **_PNG_KWARGS)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    _bar(
        ax,
        labels,
        [r["retained_accuracy"] for r in rows],
        "Accuracy on retained data",
        "accuracy",
    )
    ax.set_ylim(0.0, 1.05)
    fig.tight_layout()
    path = run_dir / "fig_retained_accuracy.png"
    fig.savefig(path, **_PNG_KWARGS)
    plt.close(fig)
    paths.append(path)

    mia_rows = [r for r in rows if r["mia_delta"] is not None]
    if mia_rows:
        fig, ax = plt.subplots(figsize=(6, 4))
        _bar(
            ax,
            [f"{r['method']}\nseed {r['seed']}" for r in mia_rows],
            [r["mia_delta"] for r in mia_rows],
            "Membership-attack F1 delta vs scratch",
            "F1 difference",
        )
        ax.axhline(0.0, color="black", linewidth=0.8)
        fig.tight_layout()
        path = run_dir / "fig_mia_delta.png"
        fig.savefig(path, **_PNG_KWARGS)
        plt.close(fig)
        paths.append(path)
    return paths
