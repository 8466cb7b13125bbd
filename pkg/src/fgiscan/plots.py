"""Figure rendering for the analysis bundle.

Reads the delimited files a report run wrote and renders matplotlib
figures next to them.  matplotlib is imported lazily with the Agg
backend so headless use and library imports stay cheap; everything else
in the package works without this module ever being loaded.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .errors import EmptyInput

_LABEL_COLORS = {
    "legitimate": "#2a6fbd",
    "malicious": "#c23b22",
    "unknown": "#7f7f7f",
}

_FIG_KW = {"figsize": (6.0, 4.0), "dpi": 120}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def _read_rows(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _render_cdf(plt, path: Path, out: Path) -> bool:
    rows = _read_rows(path)
    if not rows:
        return False
    by_label: dict[str, tuple[list[float], list[float]]] = {}
    for row in rows:
        xs, ys = by_label.setdefault(row["label"], ([], []))
        xs.append(float(row["value"]))
        ys.append(float(row["cumulative"]))
    fig, ax = plt.subplots(**_FIG_KW)
    for label in sorted(by_label):
        xs, ys = by_label[label]
        ax.step(xs, ys, where="post", label=label,
                color=_LABEL_COLORS.get(label))
    metric = path.stem[len("cdf_"):]
    ax.set_xlabel(metric.replace("_", " "))
    ax.set_ylabel("cumulative fraction of packages")
    ax.set_ylim(0.0, 1.02)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return True


def _render_popularity(plt, path: Path, out: Path, top: int = 20) -> bool:
    rows = _read_rows(path)
    if not rows:
        return False
    rows = rows[:top]
    names = [row["function"] for row in rows][::-1]
    counts = [int(row["package_count"]) for row in rows][::-1]
    fig, ax = plt.subplots(**_FIG_KW)
    ax.barh(range(len(names)), counts, color="#4c8a64")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=7)
    ax.set_xlabel("packages using the function")
    bucket = path.stem[len("popularity_"):]
    ax.set_title(f"most used functions: {bucket.replace('_', ' ')}")
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return True


def _render_scatter(plt, path: Path, out: Path) -> bool:
    rows = _read_rows(path)
    if not rows:
        return False
    fig, ax = plt.subplots(**_FIG_KW)
    labels = sorted({row["label"] for row in rows})
    for label in labels:
        xs = [int(r["static_calls"]) for r in rows if r["label"] == label]
        ys = [int(r["total_events"]) for r in rows if r["label"] == label]
        ax.scatter(xs, ys, s=14, alpha=0.6, label=label,
                   color=_LABEL_COLORS.get(label))
    ax.set_xlabel("static call sites")
    ax.set_ylabel("dynamic events")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return True


def render_figures(bundle_dir: str | Path,
                   out_dir: str | Path | None = None) -> list[Path]:
    """Render every figure the bundle's CSVs support; returns written paths."""
    bundle_dir = Path(bundle_dir)
    out_dir = Path(out_dir) if out_dir is not None else bundle_dir
    if not bundle_dir.is_dir():
        raise EmptyInput(f"no bundle directory at {bundle_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    plt = _pyplot()
    written: list[Path] = []

    for path in sorted(bundle_dir.glob("cdf_*.csv")):
        out = out_dir / f"{path.stem}.png"
        if _render_cdf(plt, path, out):
            written.append(out)
    for path in sorted(bundle_dir.glob("popularity_*.csv")):
        out = out_dir / f"{path.stem}.png"
        if _render_popularity(plt, path, out):
            written.append(out)
    scatter_src = bundle_dir / "dynamic_counts.csv"
    if scatter_src.is_file():
        out = out_dir / "static_vs_dynamic.png"
        if _render_scatter(plt, scatter_src, out):
            written.append(out)
    if not written:
        raise EmptyInput(f"no renderable tables in {bundle_dir}")
    return written
