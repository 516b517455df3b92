#!/usr/bin/env python3
"""
Line charts from a records CSV, written as standalone SVG files with the
plotted data embedded as an XML comment
"""

import csv
import io
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

from .errors import SchemaError  # noqa: E402


logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = (
    "schema_version",
    "sweep_value",
    "seed",
    "epoch",
    "attack",
    "budget",
    "clean_acc",
    "attacked_acc",
    "success_rate",
    "failed",
)

Series = Dict[str, Dict[float, List[float]]]


def read_records(records_csv) -> List[dict]:
    """records.csv を読み込み、必須列と行の存在を確認"""
    path = Path(records_csv)
    if not path.exists():
        raise SchemaError(f"{path} does not exist")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        columns = reader.fieldnames or []
        rows = list(reader)
    missing = [column for column in REQUIRED_COLUMNS if column not in columns]
    if missing:
        raise SchemaError(f"{path} is not a records file", missing)
    if not rows:
        raise SchemaError(f"{path} has no records")
    return [row for row in rows if row["failed"] != "1"]


def _series(rows, x_column: str, y_column: str, group) -> Series:
    series: Series = defaultdict(lambda: defaultdict(list))
    for row in rows:
        if row[x_column] == "" or row[y_column] == "":
            continue
        series[group(row)][float(row[x_column])].append(float(row[y_column]))
    return series


def _group_label(row) -> str:
    parts = []
    if row["sweep_value"]:
        parts.append(row["sweep_value"])
    if row["attack"] != "none":
        parts.append(f"{row['attack']}@{row['budget']}")
    return " ".join(parts) or "all"


def _summaries(series: Series) -> List[Tuple[str, np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    out = []
    for label in sorted(series):
        xs = np.array(sorted(series[label]))
        values = [series[label][x] for x in xs]
        mean = np.array([np.mean(v) for v in values])
        low = np.array([np.min(v) for v in values])
        high = np.array([np.max(v) for v in values])
        out.append((label, xs, mean, low, high))
    return out


def _data_comment(title: str, summaries) -> str:
    lines = [f"data: {title}", "series,x,mean,min,max"]
    for label, xs, mean, low, high in summaries:
        for x, m, lo, hi in zip(xs, mean, low, high):
            lines.append(f"{label},{x!r},{m!r},{lo!r},{hi!r}")
    return "<!--\n" + "\n".join(lines).replace("--", "- -") + "\n-->\n"


def _line_chart(path: Path, title: str, xlabel: str, ylabel: str, series_list) -> Path:
    """平均線と min/max の帯を描き、データ表をコメントとして埋め込む"""
    with plt.rc_context({"svg.hashsalt": "init-robust", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        comments = []
        for name, series in series_list:
            summaries = _summaries(series)
            comments.append(_data_comment(f"{title} / {name}", summaries))
            for label, xs, mean, low, high in summaries:
                tag = f"{name}: {label}" if name else label
                ax.plot(xs, mean, marker="o", markersize=3, label=tag)
                ax.fill_between(xs, low, high, alpha=0.2)
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize="small")
        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
        plt.close(fig)

    svg = buffer.getvalue()
    head, sep, body = svg.partition("?>\n")
    if sep:
        svg = head + sep + "".join(comments) + body
    else:
        svg = "".join(comments) + svg
    path.write_text(svg, encoding="utf-8")
    logger.debug("chart written: %s", path)
    return path


def emit_plots(records_csv, out_dir) -> List[Path]:
    """records.csv から SVG チャートを生成。

    複数エポックを含む場合は精度対エポックと成功率対エポックの2枚、
    そうでなければ攻撃の種類ごとに成功率対予算を1枚ずつ出力する。
    """
    rows = read_records(records_csv)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    attacked = [row for row in rows if row["attack"] != "none"]
    epochs = {row["epoch"] for row in rows if row["epoch"] != ""}

    written = []
    if len(epochs) > 1:
        accuracy_series = [("clean", _series(rows, "epoch", "clean_acc", lambda r: r["sweep_value"] or "all"))]
        if attacked:
            accuracy_series.append(("attacked", _series(attacked, "epoch", "attacked_acc", _group_label)))
        written.append(
            _line_chart(out / "accuracy_vs_epoch.svg", "Accuracy vs epoch", "epoch", "accuracy", accuracy_series)
        )
        written.append(
            _line_chart(
                out / "success_vs_epoch.svg",
                "Attack success rate vs epoch",
                "epoch",
                "success rate",
                [("", _series(attacked, "epoch", "success_rate", _group_label))],
            )
        )
        return written

    if not attacked:
        written.append(
            _line_chart(
                out / "clean_accuracy.svg",
                "Clean accuracy",
                "epoch",
                "accuracy",
                [("", _series(rows, "epoch", "clean_acc", lambda r: r["sweep_value"] or "all"))],
            )
        )
        return written

    for kind in sorted({row["attack"] for row in attacked}):
        kind_rows = [row for row in attacked if row["attack"] == kind]
        written.append(
            _line_chart(
                out / f"success_vs_budget_{kind}.svg",
                f"Success rate vs budget ({kind})",
                "budget",
                "success rate",
                [("", _series(kind_rows, "budget", "success_rate", lambda r: r["sweep_value"] or "all"))],
            )
        )
    return written
