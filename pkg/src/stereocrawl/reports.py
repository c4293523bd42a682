"""Static report figures: SVG charts plus the CSV data behind each one.

Charts are written directly as SVG text with fixed layout and fixed number
formatting, so the same inputs always produce byte-identical files and the
reports work without a plotting stack.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from .harm import SubjectHarmSummary

__all__ = [
    "diverging_bar_chart",
    "box_chart",
    "scatter_chart",
    "write_harm_figures",
    "write_topic_figures",
]

_WIDTH = 680
_LABEL_W = 190
_ROW_H = 22
_TOP = 48
_BOTTOM = 20
_PLOT_LEFT = _LABEL_W + 10
_PLOT_RIGHT = _WIDTH - 20

_POS_COLOR = "#4878a8"
_NEG_COLOR = "#b05050"
_BOX_COLOR = "#8a6fb0"
_AXIS_COLOR = "#444444"
_TEXT_STYLE = 'font-family="sans-serif" font-size="11"'


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _num(value: float) -> str:
    """Coordinate formatting: fixed precision keeps output byte-stable."""
    return f"{value:.2f}"


def _svg(height: int, body: list[str], title: str) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{height}" '
        f'viewBox="0 0 {_WIDTH} {height}">',
        f'<rect x="0" y="0" width="{_WIDTH}" height="{height}" fill="white"/>',
        f'<text x="20" y="24" font-family="sans-serif" font-size="14" '
        f'font-weight="bold">{_escape(title)}</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _scale(vmin: float, vmax: float):
    span = vmax - vmin
    if span <= 0:
        span = 1.0
    width = _PLOT_RIGHT - _PLOT_LEFT

    def to_x(value: float) -> float:
        return _PLOT_LEFT + (value - vmin) / span * width

    return to_x


def _row_label(label: str, y: float) -> str:
    return (
        f'<text x="{_LABEL_W}" y="{_num(y)}" text-anchor="end" {_TEXT_STYLE}>'
        f"{_escape(label)}</text>"
    )


def diverging_bar_chart(
    title: str,
    labels: Sequence[str],
    values: Sequence[float],
    path: str,
) -> None:
    """Horizontal bars from a shared zero axis; negatives point left."""
    if len(labels) != len(values):
        raise ValueError("labels and values must align")
    vmin = min(0.0, *values) if values else 0.0
    vmax = max(0.0, *values) if values else 1.0
    to_x = _scale(vmin, vmax)
    zero_x = to_x(0.0)
    height = _TOP + _ROW_H * len(labels) + _BOTTOM
    body = [
        f'<line x1="{_num(zero_x)}" y1="{_TOP - 8}" x2="{_num(zero_x)}" '
        f'y2="{height - _BOTTOM}" stroke="{_AXIS_COLOR}" stroke-width="1"/>'
    ]
    for i, (label, value) in enumerate(zip(labels, values)):
        y = _TOP + i * _ROW_H
        x = to_x(value)
        left = min(zero_x, x)
        width = abs(x - zero_x)
        color = _POS_COLOR if value >= 0 else _NEG_COLOR
        body.append(_row_label(label, y + 13))
        body.append(
            f'<rect x="{_num(left)}" y="{_num(y + 3)}" width="{_num(max(width, 0.5))}" '
            f'height="{_ROW_H - 8}" fill="{color}"/>'
        )
        anchor_x = x + 4 if value >= 0 else x - 4
        anchor = "start" if value >= 0 else "end"
        body.append(
            f'<text x="{_num(anchor_x)}" y="{_num(y + 13)}" text-anchor="{anchor}" '
            f"{_TEXT_STYLE}>{_escape(_fmt(value))}</text>"
        )
    Path(path).write_text(_svg(height, body, title), encoding="utf-8")


def box_chart(
    title: str,
    labels: Sequence[str],
    stats: Sequence[tuple[float, float, float]],
    path: str,
) -> None:
    """Per-row interquartile box (q1..q3) with a median tick."""
    if len(labels) != len(stats):
        raise ValueError("labels and stats must align")
    highs = [q3 for _, _, q3 in stats]
    to_x = _scale(0.0, max(highs) if highs and max(highs) > 0 else 1.0)
    height = _TOP + _ROW_H * len(labels) + _BOTTOM
    body = [
        f'<line x1="{_num(to_x(0.0))}" y1="{_TOP - 8}" x2="{_num(to_x(0.0))}" '
        f'y2="{height - _BOTTOM}" stroke="{_AXIS_COLOR}" stroke-width="1"/>'
    ]
    for i, (label, (q1, median, q3)) in enumerate(zip(labels, stats)):
        y = _TOP + i * _ROW_H
        body.append(_row_label(label, y + 13))
        body.append(
            f'<rect x="{_num(to_x(q1))}" y="{_num(y + 3)}" '
            f'width="{_num(max(to_x(q3) - to_x(q1), 0.5))}" height="{_ROW_H - 8}" '
            f'fill="{_BOX_COLOR}" fill-opacity="0.5" stroke="{_BOX_COLOR}"/>'
        )
        body.append(
            f'<line x1="{_num(to_x(median))}" y1="{_num(y + 1)}" '
            f'x2="{_num(to_x(median))}" y2="{_num(y + _ROW_H - 3)}" '
            f'stroke="{_AXIS_COLOR}" stroke-width="2"/>'
        )
    Path(path).write_text(_svg(height, body, title), encoding="utf-8")


def scatter_chart(
    title: str,
    points: Sequence[tuple[float, float, str]],
    x_label: str,
    y_label: str,
    path: str,
) -> None:
    """Labeled scatter with plain min/max axis annotations."""
    height = 420
    plot_top, plot_bottom = _TOP, height - 50
    xs = [p[0] for p in points] or [0.0]
    ys = [p[1] for p in points] or [0.0]
    pad_x = (max(xs) - min(xs)) * 0.08 or 1.0
    pad_y = (max(ys) - min(ys)) * 0.08 or 0.01
    to_x = _scale(min(xs) - pad_x, max(xs) + pad_x)

    def to_y(value: float) -> float:
        low, high = min(ys) - pad_y, max(ys) + pad_y
        return plot_bottom - (value - low) / (high - low) * (plot_bottom - plot_top)

    body = [
        f'<line x1="{_PLOT_LEFT}" y1="{plot_bottom}" x2="{_PLOT_RIGHT}" '
        f'y2="{plot_bottom}" stroke="{_AXIS_COLOR}"/>',
        f'<line x1="{_PLOT_LEFT}" y1="{plot_top}" x2="{_PLOT_LEFT}" '
        f'y2="{plot_bottom}" stroke="{_AXIS_COLOR}"/>',
        f'<text x="{(_PLOT_LEFT + _PLOT_RIGHT) // 2}" y="{height - 12}" '
        f'text-anchor="middle" {_TEXT_STYLE}>{_escape(x_label)}</text>',
        f'<text x="16" y="{(plot_top + plot_bottom) // 2}" {_TEXT_STYLE} '
        f'transform="rotate(-90 16 {(plot_top + plot_bottom) // 2})" '
        f'text-anchor="middle">{_escape(y_label)}</text>',
        f'<text x="{_PLOT_LEFT}" y="{plot_bottom + 16}" {_TEXT_STYLE}>'
        f"{_escape(_fmt(min(xs)))}</text>",
        f'<text x="{_PLOT_RIGHT}" y="{plot_bottom + 16}" text-anchor="end" '
        f"{_TEXT_STYLE}>{_escape(_fmt(max(xs)))}</text>",
        f'<text x="{_PLOT_LEFT - 6}" y="{_num(to_y(max(ys)) + 4)}" text-anchor="end" '
        f"{_TEXT_STYLE}>{_escape(_fmt(max(ys)))}</text>",
        f'<text x="{_PLOT_LEFT - 6}" y="{_num(to_y(min(ys)) + 4)}" text-anchor="end" '
        f"{_TEXT_STYLE}>{_escape(_fmt(min(ys)))}</text>",
    ]
    for x, y, label in points:
        body.append(
            f'<circle cx="{_num(to_x(x))}" cy="{_num(to_y(y))}" r="4" '
            f'fill="{_POS_COLOR}" fill-opacity="0.8"/>'
        )
        body.append(
            f'<text x="{_num(to_x(x) + 6)}" y="{_num(to_y(y) + 3)}" '
            f'font-family="sans-serif" font-size="9">{_escape(label)}</text>'
        )
    Path(path).write_text(_svg(height, body, title), encoding="utf-8")


# --------------------------------------------------------------------------
# Figure sets
# --------------------------------------------------------------------------


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_harm_figures(
    summaries: Sequence[SubjectHarmSummary], outdir: str, protected_class: str = ""
) -> list[str]:
    """Regard bars, toxicity quartile boxes, and the regard-vs-toxicity scatter."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    suffix = f" ({protected_class})" if protected_class else ""
    subjects = [s.subject for s in summaries]

    regard = [float(s.overall_regard) for s in summaries]
    diverging_bar_chart(
        f"Overall regard by subject{suffix}", subjects, regard, str(out / "regard_bars.svg")
    )
    _write_csv(
        out / "regard_bars.csv",
        ["subject", "overall_regard"],
        [[s.subject, s.overall_regard] for s in summaries],
    )

    stats = [(s.toxicity_q1, s.toxicity_median, s.toxicity_q3) for s in summaries]
    box_chart(
        f"Toxicity quartiles by subject{suffix}", subjects, stats, str(out / "toxicity_box.svg")
    )
    _write_csv(
        out / "toxicity_box.csv",
        ["subject", "tox_q1", "tox_median", "tox_q3"],
        [
            [s.subject, repr(s.toxicity_q1), repr(s.toxicity_median), repr(s.toxicity_q3)]
            for s in summaries
        ],
    )

    points = [(float(s.overall_regard), s.toxicity_mean, s.subject) for s in summaries]
    scatter_chart(
        f"Regard vs mean toxicity{suffix}",
        points,
        "overall regard",
        "mean toxicity",
        str(out / "regard_vs_toxicity.svg"),
    )
    _write_csv(
        out / "regard_vs_toxicity.csv",
        ["subject", "overall_regard", "tox_mean"],
        [[s.subject, s.overall_regard, repr(s.toxicity_mean)] for s in summaries],
    )
    return [
        str(out / name)
        for name in (
            "regard_bars.svg",
            "regard_bars.csv",
            "toxicity_box.svg",
            "toxicity_box.csv",
            "regard_vs_toxicity.svg",
            "regard_vs_toxicity.csv",
        )
    ]


def write_topic_figures(
    distributions: dict[str, dict[int, float]],
    entropies: dict[str, float],
    topic_words: dict[int, Sequence[str]],
    outdir: str,
) -> list[str]:
    """One bar chart per topic (probability by subject) plus entropy bars."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    topics = sorted({tid for probs in distributions.values() for tid in probs})
    subjects = list(distributions)
    for topic_id in topics:
        values = [distributions[subject].get(topic_id, 0.0) for subject in subjects]
        words = ", ".join(topic_words.get(topic_id, ())[:3])
        title = f"Topic {topic_id} share by subject" + (f": {words}" if words else "")
        svg_path = out / f"topic_{topic_id}_bars.svg"
        diverging_bar_chart(title, subjects, values, str(svg_path))
        csv_path = out / f"topic_{topic_id}_bars.csv"
        _write_csv(
            csv_path,
            ["subject", "probability"],
            [[subject, repr(value)] for subject, value in zip(subjects, values)],
        )
        written += [str(svg_path), str(csv_path)]
    names = list(entropies)
    values = [entropies[name] for name in names]
    svg_path = out / "entropy_bars.svg"
    diverging_bar_chart(
        "Topic-distribution divergence from the pooled reference", names, values, str(svg_path)
    )
    csv_path = out / "entropy_bars.csv"
    _write_csv(
        csv_path,
        ["subject", "relative_entropy"],
        [[name, repr(value)] for name, value in zip(names, values)],
    )
    written += [str(svg_path), str(csv_path)]
    return written
