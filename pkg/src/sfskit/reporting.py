"""Tables and figures for run outputs.

Everything here is written to files: aligned text, CSV and JSON for the
result tables, PNG for the figures. Reruns of the same inputs must produce
byte-identical files, so the PNG metadata is pinned (matplotlib's default
Software tag would still be stable, but we do not want the contract to
depend on that) and all text output uses explicit "\n" line endings.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be set first

from .photometrics import N_LIGHT_CLASSES

_PNG_METADATA = {"Software": "sfskit"}

TABLE_COLUMNS = ("paradigm", "mae", "rmse", "top1", "top2", "top3")


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def format_table(rows: list[dict], columns=None) -> str:
    """Aligned text table; numeric cells right-justified at two decimals."""
    if columns is None:
        columns = TABLE_COLUMNS if not rows else tuple(rows[0].keys())
    grid = [[_cell(row[c]) for c in columns] for row in rows]
    widths = [
        max(len(str(c)), *(len(g[i]) for g in grid)) if grid else len(str(c))
        for i, c in enumerate(columns)
    ]
    lines = [
        "  ".join(str(c).ljust(w) for c, w in zip(columns, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for g in grid:
        cells = [
            v.ljust(w) if i == 0 else v.rjust(w)
            for i, (v, w) in enumerate(zip(g, widths))
        ]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def write_tables(rows: list[dict], outdir) -> list[Path]:
    """table.txt, table.csv and table.json under outdir; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    columns = TABLE_COLUMNS if not rows else tuple(rows[0].keys())

    txt = outdir / "table.txt"
    txt.write_text(format_table(rows, columns), encoding="utf-8")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in (row[c] for c in columns)])
    csv_path = outdir / "table.csv"
    csv_path.write_text(buf.getvalue(), encoding="utf-8")

    json_path = outdir / "table.json"
    json_path.write_text(
        json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return [txt, csv_path, json_path]


def report_to_dict(report) -> dict:
    """ParadigmReport as plain JSON-serializable data."""
    return {
        "name": report.name,
        "recon": {"mae": report.recon.mae, "rmse": report.recon.rmse},
        "normals": {
            "mean_deg": report.normals.mean_deg,
            "std_deg": report.normals.std_deg,
            "pct_under_20": report.normals.pct_under_20,
            "pct_under_25": report.normals.pct_under_25,
            "pct_under_30": report.normals.pct_under_30,
        },
        "lighting": {
            "top1": report.lighting.top1,
            "top2": report.lighting.top2,
            "top3": report.lighting.top3,
            "confusion": report.lighting.confusion.tolist(),
        },
        "stages": [
            {
                "stage": s.stage,
                "epochs": s.epochs,
                "curves": s.curves,
                "final_eval": s.final_eval,
            }
            for s in report.stages
        ],
    }


def _save(fig, path) -> None:
    fig.savefig(path, format="png", metadata=_PNG_METADATA)
    plt.close(fig)


def save_loss_curves(stages, path) -> None:
    """One panel per training stage, every recorded loss term per panel."""
    stages = [s for s in stages if s.curves.get("total")]
    n = max(len(stages), 1)
    fig, axes = plt.subplots(1, n, figsize=(5.0 * n, 3.6), squeeze=False)
    for ax, stage in zip(axes[0], stages):
        epochs = np.arange(1, len(stage.curves["total"]) + 1)
        for term, values in stage.curves.items():
            if any(v > 0 for v in values):
                ax.semilogy(epochs, values, label=term)
        ax.set_title(f"stage {stage.stage}")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.legend(fontsize="small")
    if not stages:
        axes[0][0].set_axis_off()
        axes[0][0].text(0.5, 0.5, "no epochs recorded", ha="center", va="center")
    fig.tight_layout()
    _save(fig, path)


def save_confusion(confusion: np.ndarray, path) -> None:
    """Heatmap of the 19-way lighting confusion counts (rows = true class)."""
    confusion = np.asarray(confusion)
    if confusion.shape != (N_LIGHT_CLASSES, N_LIGHT_CLASSES):
        raise ValueError(
            f"confusion matrix must be {N_LIGHT_CLASSES}x{N_LIGHT_CLASSES}, "
            f"got {confusion.shape}"
        )
    fig, ax = plt.subplots(figsize=(6.4, 5.6))
    im = ax.imshow(confusion, cmap="viridis")
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    ax.set_xticks(range(0, N_LIGHT_CLASSES, 3))
    ax.set_yticks(range(0, N_LIGHT_CLASSES, 3))
    fig.colorbar(im, ax=ax, label="count")
    fig.tight_layout()
    _save(fig, path)


def save_error_histogram(degrees: np.ndarray, path, bins: int = 60) -> None:
    """Per-pixel angular error distribution with the 20/25/30 degree marks."""
    degrees = np.asarray(degrees, dtype=np.float64).ravel()
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.hist(degrees, bins=bins, color="tab:blue")
    for cut in (20.0, 25.0, 30.0):
        ax.axvline(cut, color="tab:red", linewidth=0.8, linestyle="--")
    ax.set_xlabel("angular error (degrees)")
    ax.set_ylabel("pixels")
    fig.tight_layout()
    _save(fig, path)
