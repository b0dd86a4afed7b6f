"""Report figures rendered from emitted metrics files.

Figures are written as PNG files alongside the delimited output; nothing is
shown interactively (the Agg backend is forced so rendering works headless).
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import load_metrics  # noqa: E402

__all__ = ["render_report"]

_TIME_CLASSES = ("train", "agg", "commit", "seal", "lv", "lr")


def _series(records):
    """Group records by (scenario, phase), preserving file order."""
    groups: dict[tuple[str, str], list] = {}
    for record in records:
        groups.setdefault((record.scenario, record.phase), []).append(record)
    return groups


def _label(key: tuple[str, str]) -> str:
    scenario, phase = key
    return f"{scenario}/{phase}"


def _plot_lines(groups, attr: str, ax, ylabel: str) -> bool:
    drew = False
    for key, recs in groups.items():
        xs = [r.round for r in recs if getattr(r, attr) is not None]
        ys = [getattr(r, attr) for r in recs if getattr(r, attr) is not None]
        if not xs:
            continue
        ax.plot(xs, ys, marker=".", label=_label(key))
        drew = True
    ax.set_xlabel("round")
    ax.set_ylabel(ylabel)
    if drew:
        ax.legend(fontsize=7)
    return drew


def _save(fig, path: Path, written: list[Path]) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)


def render_report(metrics_paths, out_dir) -> list[Path]:
    """Render accuracy/loss, membership-probe, timing and deviation figures.

    ``metrics_paths`` are CSV or JSONL files from :func:`emit_metrics`; the
    returned list names every file written.
    """
    records = []
    for path in metrics_paths:
        records.extend(load_metrics(path))
    if not records:
        raise ValueError("no metric records to render")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups = _series(records)
    written: list[Path] = []

    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(9, 3.5))
    _plot_lines(groups, "accuracy", ax_acc, "retained-test accuracy")
    _plot_lines(groups, "loss", ax_loss, "retained-test loss")
    _save(fig, out / "accuracy_loss.png", written)

    fig, (ax_p, ax_r) = plt.subplots(1, 2, figsize=(9, 3.5))
    _plot_lines(groups, "mia_precision", ax_p, "membership-probe precision")
    _plot_lines(groups, "mia_recall", ax_r, "membership-probe recall")
    _save(fig, out / "mia.png", written)

    fig, ax = plt.subplots(figsize=(7, 4))
    labels = [_label(key) for key in groups]
    bottoms = [0.0] * len(groups)
    for cls in _TIME_CLASSES:
        totals = [
            sum(getattr(r, f"time_{cls}_ms") for r in recs) / 1000.0
            for recs in groups.values()
        ]
        ax.bar(labels, totals, bottom=bottoms, label=cls)
        bottoms = [b + t for b, t in zip(bottoms, totals)]
    ax.set_ylabel("simulated time (s)")
    ax.tick_params(axis="x", labelrotation=20)
    ax.legend(fontsize=7)
    _save(fig, out / "interaction_time.png", written)

    fig, ax = plt.subplots(figsize=(6, 4))
    if _plot_lines(groups, "deviation_l2", ax, "L2 deviation from retrain reference"):
        _save(fig, out / "deviation.png", written)
    else:
        plt.close(fig)

    return written
