"""Report rendering: delimited tables plus matplotlib figures next to them.

Every table goes out as a small CSV with an optional generated-at header
line; the figure beside it shows the same numbers. Files are deterministic
for identical inputs apart from that header line.
"""

from __future__ import annotations

import datetime
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .validate import GeneralizationReport, histogram_buckets

GENERATED_PREFIX = "# generated"


def _write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence], stamp: bool = True) -> None:
    lines = []
    if stamp:
        now = datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        lines.append(f"{GENERATED_PREFIX} {now}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(str(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _save_bar_figure(path: str | Path, labels: Sequence[str], series: dict[str, Sequence[float]], title: str, ylabel: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4), dpi=100)
    n_series = len(series)
    width = 0.8 / max(n_series, 1)
    xs = range(len(labels))
    for i, (name, values) in enumerate(series.items()):
        offsets = [x + (i - (n_series - 1) / 2) * width for x in xs]
        ax.bar(offsets, values, width=width, label=name)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    if n_series > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": "tacforge"})
    plt.close(fig)


def write_histogram(reports: Iterable[GeneralizationReport], csv_path: str | Path, png_path: str | Path) -> list[int]:
    """Ten-bucket distribution of generalization rates, as CSV and figure."""
    buckets = histogram_buckets(reports)
    labels = [f"[{10 * i}%,{10 * (i + 1)}%)" for i in range(9)] + ["[90%,100%]"]
    _write_csv(
        csv_path,
        ("bucket_lo_pct", "bucket_hi_pct", "count"),
        [(10 * i, 10 * (i + 1), n) for i, n in enumerate(buckets)],
    )
    _save_bar_figure(
        png_path,
        labels,
        {"tactics": buckets},
        "Distribution of tactic generalization rates",
        "tactics",
    )
    return buckets


def write_stage_counts(mined: int, valid: int, generalizable: int, csv_path: str | Path) -> None:
    _write_csv(
        csv_path,
        ("stage", "count"),
        [("mined", mined), ("valid", valid), ("generalizable", generalizable)],
    )


def write_prove_summary(rows: Sequence[dict], csv_path: str | Path, png_path: str | Path) -> None:
    """Per-suite solved counts for the bare hook versus hook-plus-tactics."""
    table = []
    for row in rows:
        base = row["atp_only"]
        enhanced = row["with_tactics"]
        improvement = 100.0 * (enhanced - base) / base if base else 0.0
        table.append((row["suite"], row["goals"], base, enhanced, f"{improvement:.2f}"))
    _write_csv(csv_path, ("suite", "goals", "atp_only", "with_tactics", "improvement_pct"), table)
    _save_bar_figure(
        png_path,
        [row["suite"] for row in rows],
        {
            "ATP only": [row["atp_only"] for row in rows],
            "ATP + tactics": [row["with_tactics"] for row in rows],
        },
        "Goals proved with and without mined tactics",
        "goals proved",
    )


def write_mining_ablation(rows: Sequence[dict], csv_path: str | Path, png_path: str | Path) -> None:
    """Stage counts per mining-pipeline variant, with change against the full
    pipeline in percent."""
    full = next((r for r in rows if r["variant"] == "full"), None)
    table = []
    for row in rows:
        record = [row["variant"], row["mined"], row["valid"], row["generalizable"]]
        for key in ("mined", "valid", "generalizable"):
            if full is None or row is full or not full[key]:
                record.append("")
            else:
                record.append(f"{100.0 * (row[key] - full[key]) / full[key]:+.2f}")
        table.append(record)
    _write_csv(
        csv_path,
        (
            "variant",
            "mined",
            "valid",
            "generalizable",
            "mined_change_pct",
            "valid_change_pct",
            "generalizable_change_pct",
        ),
        table,
    )
    _save_bar_figure(
        png_path,
        [r["variant"] for r in rows],
        {
            "mined": [r["mined"] for r in rows],
            "valid": [r["valid"] for r in rows],
            "generalizable": [r["generalizable"] for r in rows],
        },
        "Mining pipeline ablation",
        "tactics",
    )


def write_gen_testing_comparison(rows: Sequence[dict], csv_path: str | Path, png_path: str | Path) -> None:
    """Solved counts: bare hook, full pipeline, and the no-generalization-
    testing variant that keeps every valid tactic."""
    _write_csv(
        csv_path,
        ("suite", "goals", "atp_only", "with_tactics", "without_gen_testing"),
        [
            (r["suite"], r["goals"], r["atp_only"], r["with_tactics"], r["without_gen_testing"])
            for r in rows
        ],
    )
    _save_bar_figure(
        png_path,
        [r["suite"] for r in rows],
        {
            "ATP only": [r["atp_only"] for r in rows],
            "full pipeline": [r["with_tactics"] for r in rows],
            "no gen. testing": [r["without_gen_testing"] for r in rows],
        },
        "Effect of generalization testing on proving",
        "goals proved",
    )


def strip_generated_lines(text: str) -> str:
    """Drop the generated-at header lines so outputs can be compared."""
    return "\n".join(line for line in text.splitlines() if not line.startswith(GENERATED_PREFIX))
