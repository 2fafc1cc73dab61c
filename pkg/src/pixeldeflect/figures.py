"""Matplotlib renderings of evaluation and grid-search reports.

Figures are written next to the delimited reports as PNG files. Rendering
is deterministic: a fixed style, no timestamps, and a pinned Software tag
in the PNG metadata, so repeated runs produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["render_evaluate_figure", "render_grid_figures"]

_PNG_METADATA = {"Software": "pixeldeflect"}

_BAR_FIELDS = [
    ("clean_acc", "clean"),
    ("attacked_acc", "attacked"),
    ("defended_acc", "defended"),
    ("defended_ens_acc", "defended (ens)"),
]

_CURVE_FIELDS = [
    ("attacked_acc", "attacked", "tab:red"),
    ("defended_acc", "defended", "tab:blue"),
    ("defended_ens_acc", "defended (ens)", "tab:green"),
    ("destruction_rate", "destruction rate", "tab:purple"),
]


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.3f}"


def render_evaluate_figure(row: dict, path) -> str:
    """Bar chart of the accuracy columns with the recovery rates annotated."""
    labels, values = [], []
    for field, label in _BAR_FIELDS:
        if row.get(field) is not None:
            labels.append(label)
            values.append(row[field])
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    bars = ax.bar(labels, values, color="tab:blue", width=0.6)
    ax.bar_label(bars, fmt="%.3f", padding=2, fontsize=9)
    ax.set_ylim(0.0, 1.12)
    ax.set_ylabel("top-1 accuracy")
    ax.set_title(
        "destruction rate: "
        f"{_fmt(row.get('destruction_rate'))} (single), "
        f"{_fmt(row.get('destruction_rate_ens'))} (ens)   "
        f"mean |L2|: {_fmt(row.get('mean_l2'))}",
        fontsize=10,
    )
    fig.tight_layout()
    fig.savefig(str(path), metadata=_PNG_METADATA)
    plt.close(fig)
    return str(path)


def render_grid_figures(rows: list[dict], path) -> str:
    """Per-hyperparameter mean curves over the grid rows, one subplot each.

    Failed grid points (rows carrying an error message) are skipped.
    """
    ok = [r for r in rows if not r.get("error")]
    axes_spec = [("sigma", "sigma"), ("window", "window apothem"), ("deflections", "deflections")]
    fig, axes = plt.subplots(1, len(axes_spec), figsize=(4.2 * len(axes_spec), 3.4))
    for ax, (param, title) in zip(axes, axes_spec):
        values = sorted({r[param] for r in ok})
        for metric, label, color in _CURVE_FIELDS:
            ys = []
            for v in values:
                pts = [r[metric] for r in ok if r[param] == v and r.get(metric) is not None]
                ys.append(sum(pts) / len(pts) if pts else float("nan"))
            ax.plot(values, ys, marker="o", label=label, color=color)
        ax.set_xlabel(title)
        ax.set_ylim(-0.02, 1.05)
        ax.grid(alpha=0.3)
    axes[0].set_ylabel("mean over grid rows")
    axes[-1].legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    fig.savefig(str(path), metadata=_PNG_METADATA)
    plt.close(fig)
    return str(path)
