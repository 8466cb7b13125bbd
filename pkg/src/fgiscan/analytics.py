"""Corpus statistics and the delimited report bundle.

All outputs are deterministic byte-for-byte: fixed row ordering, CRLF
line endings, RFC-4180 quoting, ``repr``-style floats, ``n/a`` for
undefined numbers, and no timestamps.  Rendering of figures from these
CSVs lives in a separate module so this one stays import-light.
"""

from __future__ import annotations

import csv
from math import fsum, sqrt
from pathlib import Path
from typing import Sequence

from .catalog import Category
from .corpus import Label
from .errors import EmptyCorpus, EmptyInput, InsufficientData, LengthMismatch
from .profiles import FgiProfile
from .static_analysis import SetAlgebraResult, set_algebra

_COUNTED_CATEGORIES = (Category.NETWORK, Category.FILE, Category.PROCESS)


def cdf(values: Sequence[float]) -> tuple[list[float], list[float]]:
    """Empirical CDF with duplicates retained.

    Returns (sorted values, cumulative fractions) where the fraction at
    position i is (last index of that value + 1) / n, so equal values
    share one plateau height.
    """
    if len(values) == 0:
        raise EmptyInput("cdf of an empty sequence")
    ordered = sorted(float(v) for v in values)
    n = len(ordered)
    last_index = {v: i for i, v in enumerate(ordered)}
    return ordered, [(last_index[v] + 1) / n for v in ordered]


def pearson(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Sample Pearson correlation; None when either side has zero variance."""
    if len(x) != len(y):
        raise LengthMismatch(f"length {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise InsufficientData("pearson needs at least two pairs")
    mean_x = fsum(x) / n
    mean_y = fsum(y) / n
    sxx = fsum((xi - mean_x) ** 2 for xi in x)
    syy = fsum((yi - mean_y) ** 2 for yi in y)
    if sxx == 0.0 or syy == 0.0:
        return None
    sxy = fsum((xi - mean_x) * (yi - mean_y) for xi, yi in zip(x, y))
    return sxy / sqrt(sxx * syy)


def correlation_matrix(
    profiles: Sequence[FgiProfile],
    distinct: bool = False,
) -> dict[tuple[Label, Category], float | None]:
    """Per-label correlation of static call counts against dynamic event
    counts, one coefficient per category.

    Only packages carrying both a static and a dynamic profile enter the
    calculation; ``distinct`` switches the dynamic side from raw event
    counts to distinct function counts.
    """
    groups: dict[Label, list[FgiProfile]] = {}
    for profile in profiles:
        if profile.static is None or profile.dynamic is None:
            continue
        groups.setdefault(profile.package.label, []).append(profile)
    if not groups:
        raise InsufficientData("no package has both static and dynamic profiles")

    out: dict[tuple[Label, Category], float | None] = {}
    for label in sorted(groups, key=lambda l: l.value):
        members = groups[label]
        if len(members) < 2:
            raise InsufficientData(
                f"label {label.value!r} has {len(members)} usable package(s); "
                "need at least 2"
            )
        for category in _COUNTED_CATEGORIES:
            xs = [float(p.static.per_category_counts[category]) for p in members]
            if distinct:
                ys = [float(p.dynamic.per_category_distinct_counts[category])
                      for p in members]
            else:
                ys = [float(p.dynamic.per_category_counts[category])
                      for p in members]
            out[(label, category)] = pearson(xs, ys)
    return out


def function_popularity(
    result: SetAlgebraResult,
) -> dict[str, list[tuple[str, int]]]:
    """Package counts per function for each set bucket, most used first.

    Functions in the shared bucket count packages from both labels; ties
    break alphabetically so output order is total.
    """
    counts = result.per_function_package_counts

    def rows(names: set[str], labels: tuple[Label, ...]) -> list[tuple[str, int]]:
        tally = [
            (name, sum(counts.get((name, label), 0) for label in labels))
            for name in names
        ]
        return sorted(tally, key=lambda item: (-item[1], item[0]))

    return {
        "same": rows(result.s_same, (Label.LEGITIMATE, Label.MALICIOUS)),
        "legitimate_only": rows(result.s_r_minus, (Label.LEGITIMATE,)),
        "malicious_only": rows(result.s_m_minus, (Label.MALICIOUS,)),
    }


def url_summary(profiles: Sequence[FgiProfile]) -> list[dict]:
    """Per label: how many packages expose any URL, and a git URL."""
    groups: dict[Label, list[FgiProfile]] = {}
    for profile in profiles:
        if profile.metadata_features is not None:
            groups.setdefault(profile.package.label, []).append(profile)
    rows = []
    for label in sorted(groups, key=lambda l: l.value):
        members = groups[label]
        with_url = sum(1 for p in members if p.metadata_features.has_url)
        with_git = sum(1 for p in members if p.metadata_features.has_git_url)
        total = len(members)
        rows.append({
            "label": label.value,
            "packages": total,
            "with_url": with_url,
            "with_git_url": with_git,
            "url_fraction": with_url / total,
            "git_url_fraction": with_git / total,
        })
    return rows


# ---------------------------------------------------------------------------
# report bundle
# ---------------------------------------------------------------------------

def _format_cell(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    """RFC-4180 CSV: CRLF rows, minimal quoting, deterministic bytes."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_format_cell(cell) for cell in row])


_CDF_METRICS = {
    "description_tokens": lambda p: (
        p.metadata_features.description_token_count
        if p.metadata_features else None
    ),
    "author_maintainer_count": lambda p: (
        p.metadata_features.author_maintainer_count
        if p.metadata_features else None
    ),
    "dependency_count": lambda p: (
        p.metadata_features.dependency_count
        if p.metadata_features else None
    ),
    "static_calls": lambda p: (
        len(p.static.call_sites) if p.static else None
    ),
    "dynamic_events": lambda p: (
        len(p.dynamic.events) if p.dynamic else None
    ),
}


def build_report(
    out_dir: str | Path,
    profiles: Sequence[FgiProfile],
    set_result: SetAlgebraResult | None = None,
) -> list[Path]:
    """Write the delimited analysis bundle; returns the files written.

    The bundle always contains the CDF tables, URL summary, per-package
    dynamic counts, a plain-text summary and a README.  Set-algebra
    popularity tables appear when both labels carry static profiles, the
    correlation table when enough packages have both profile kinds.
    """
    if not profiles:
        raise EmptyCorpus("cannot report on an empty profile list")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    ordered = sorted(
        profiles,
        key=lambda p: (p.package.ecosystem.value, p.package.name,
                       p.package.version, p.package.content_digest),
    )

    # CDF tables, one file per metric, labels stacked
    for metric, getter in _CDF_METRICS.items():
        rows = []
        for label in sorted({p.package.label for p in ordered},
                            key=lambda l: l.value):
            values = [
                getter(p) for p in ordered
                if p.package.label == label and getter(p) is not None
            ]
            if not values:
                continue
            xs, ys = cdf(values)
            rows.extend((label.value, x, y) for x, y in zip(xs, ys))
        path = out_dir / f"cdf_{metric}.csv"
        write_csv(path, ("label", "value", "cumulative"), rows)
        written.append(path)

    # URL exposure per label
    path = out_dir / "url_summary.csv"
    write_csv(
        path,
        ("label", "packages", "with_url", "with_git_url",
         "url_fraction", "git_url_fraction"),
        [
            (r["label"], r["packages"], r["with_url"], r["with_git_url"],
             r["url_fraction"], r["git_url_fraction"])
            for r in url_summary(ordered)
        ],
    )
    written.append(path)

    # set algebra + popularity
    if set_result is None:
        malicious = [p.static for p in ordered
                     if p.static and p.package.label is Label.MALICIOUS]
        legitimate = [p.static for p in ordered
                      if p.static and p.package.label is Label.LEGITIMATE]
        if malicious and legitimate:
            set_result = set_algebra(malicious, legitimate)
    if set_result is not None:
        popularity = function_popularity(set_result)
        for bucket in ("same", "legitimate_only", "malicious_only"):
            path = out_dir / f"popularity_{bucket}.csv"
            write_csv(path, ("function", "package_count"), popularity[bucket])
            written.append(path)

    # static-vs-dynamic correlation
    corr_rows = []
    try:
        matrix = correlation_matrix(ordered)
    except InsufficientData:
        matrix = {}
    for (label, category), value in sorted(
        matrix.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
    ):
        corr_rows.append((label.value, category.value, value))
    path = out_dir / "correlation_matrix.csv"
    write_csv(path, ("label", "category", "pearson_r"), corr_rows)
    written.append(path)

    # per-package dynamic counts (scatter input)
    dyn_rows = []
    for p in ordered:
        if p.dynamic is None:
            continue
        counts = p.dynamic.per_category_counts
        static_total = len(p.static.call_sites) if p.static else 0
        dyn_rows.append((
            p.package.ecosystem.value, p.package.name, p.package.version,
            p.package.label.value,
            counts[Category.NETWORK], counts[Category.FILE],
            counts[Category.PROCESS], len(p.dynamic.events), static_total,
        ))
    path = out_dir / "dynamic_counts.csv"
    write_csv(
        path,
        ("ecosystem", "name", "version", "label", "network_events",
         "file_events", "process_events", "total_events", "static_calls"),
        dyn_rows,
    )
    written.append(path)

    # human-oriented summary
    lines = ["analysis summary", "================", ""]
    tally: dict[tuple[str, str], int] = {}
    for p in ordered:
        key = (p.package.ecosystem.value, p.package.label.value)
        tally[key] = tally.get(key, 0) + 1
    lines.append("packages by ecosystem and label:")
    for (eco, label), count in sorted(tally.items()):
        lines.append(f"  {eco:10s} {label:12s} {count}")
    lines.append("")
    lines.append("profile coverage:")
    lines.append(f"  metadata: {sum(1 for p in ordered if p.metadata_features)}")
    lines.append(f"  static:   {sum(1 for p in ordered if p.static)}")
    lines.append(f"  dynamic:  {sum(1 for p in ordered if p.dynamic)}")
    if set_result is not None:
        popularity = function_popularity(set_result)
        lines.append("")
        lines.append("most used shared functions:")
        for name, count in popularity["same"][:5]:
            lines.append(f"  {name}: {count} package(s)")
        lines.append(f"functions seen only in malicious packages: "
                     f"{len(set_result.s_m_minus)}")
    path = out_dir / "summary.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(path)

    readme = out_dir / "README.txt"
    readme.write_text(
        "Files in this bundle:\n"
        "  cdf_<metric>.csv          empirical CDF per label "
        "(value, cumulative fraction)\n"
        "  url_summary.csv           URL / git-URL exposure per label\n"
        "  popularity_<bucket>.csv   package counts per sensitive function\n"
        "  correlation_matrix.csv    static-vs-dynamic Pearson r per "
        "label and category\n"
        "  dynamic_counts.csv        per-package event counts "
        "(scatter input)\n"
        "  summary.txt               plain-text overview\n",
        encoding="utf-8",
    )
    written.append(readme)
    return written
