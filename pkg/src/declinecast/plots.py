"""Standalone SVG charts for forecast reports.

Both renderers return complete SVG documents as strings, with the plotted
numbers embedded in a metadata block at full precision so a report can be
checked without rasterizing anything.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 840, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 24, 40, 56

SERIES_STYLE = {
    "actual": 'stroke="#222222" stroke-width="2" fill="none"',
    "dnn": 'stroke="#1f6fb5" stroke-width="2" fill="none"',
    "arps": 'stroke="#c23b21" stroke-width="2" fill="none" stroke-dasharray="7 4"',
}


def _ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if raw <= step:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + step * 1e-9:
        ticks.append(round(v, 10))
        v += step
    return ticks


def _fmt(v):
    return f"{v:g}"


def _metadata(series):
    lines = ["<metadata>"]
    for name, values in series.items():
        joined = " ".join(
            str(v) if isinstance(v, int) else repr(float(v)) for v in values
        )
        lines.append(f"<data-series name=\"{escape(name)}\">{joined}</data-series>")
    lines.append("</metadata>")
    return "\n".join(lines)


def forecast_svg(title, actual, dnn_forecast, arps_forecast, n_input) -> str:
    """One well's chart: full actual series, both forecasts, shaded input zone.

    actual covers all months; the forecasts cover months n_input+1 onward.
    Months are numbered from 1 on the axis. arps_forecast may be None, in
    which case only the actual and DNN series are drawn.
    """
    actual = np.asarray(actual, dtype=float)
    dnn_forecast = np.asarray(dnn_forecast, dtype=float)
    if arps_forecast is not None:
        arps_forecast = np.asarray(arps_forecast, dtype=float)
        if arps_forecast.size != actual.size - n_input:
            raise ValueError("forecast lengths must equal months minus n_input")
    n = actual.size
    if dnn_forecast.size != n - n_input:
        raise ValueError("forecast lengths must equal months minus n_input")

    tops = [actual.max(), dnn_forecast.max()]
    if arps_forecast is not None:
        tops.append(arps_forecast.max())
    y_hi = float(max(tops)) * 1.05
    y_hi = y_hi if y_hi > 0 else 1.0
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(month):  # month is 1-based
        return MARGIN_L + (month - 1) / max(n - 1, 1) * plot_w

    def py(value):
        return MARGIN_T + (1.0 - value / y_hi) * plot_h

    def polyline(first_month, values, style):
        pts = " ".join(
            f"{px(first_month + i):.2f},{py(v):.2f}" for i, v in enumerate(values)
        )
        return f'<polyline points="{pts}" {style} />'

    series = {"actual": actual, "dnn": dnn_forecast}
    if arps_forecast is not None:
        series["arps"] = arps_forecast
    series["n_input"] = [n_input]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        _metadata(series),
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff" />',
        # shaded input region: months 1..n_input
        f'<rect x="{px(1):.2f}" y="{MARGIN_T}" width="{px(n_input) - px(1):.2f}" '
        f'height="{plot_h}" fill="#d8d8d8" />',
        f'<text x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{escape(str(title))}</text>',
    ]

    for v in _ticks(0.0, y_hi):
        y = py(v)
        parts.append(
            f'<line x1="{MARGIN_L}" y1="{y:.2f}" x2="{WIDTH - MARGIN_R}" y2="{y:.2f}" '
            f'stroke="#eeeeee" stroke-width="1" />'
        )
        parts.append(
            f'<text x="{MARGIN_L - 6}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt(v)}</text>'
        )
    month_ticks = [t for t in _ticks(1, n) if 1 <= t <= n]
    for t in month_ticks:
        x = px(t)
        parts.append(
            f'<line x1="{x:.2f}" y1="{HEIGHT - MARGIN_B}" x2="{x:.2f}" '
            f'y2="{HEIGHT - MARGIN_B + 5}" stroke="#444444" stroke-width="1" />'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{HEIGHT - MARGIN_B + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>'
        )
    parts.append(
        f'<line x1="{MARGIN_L}" y1="{HEIGHT - MARGIN_B}" x2="{WIDTH - MARGIN_R}" '
        f'y2="{HEIGHT - MARGIN_B}" stroke="#444444" stroke-width="1" />'
    )
    parts.append(
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
        f'y2="{HEIGHT - MARGIN_B}" stroke="#444444" stroke-width="1" />'
    )
    parts.append(
        f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 14}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">Month</text>'
    )
    parts.append(
        f'<text x="18" y="{HEIGHT / 2:.0f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {HEIGHT / 2:.0f})">Production (Mscf)</text>'
    )

    parts.append(polyline(1, actual, SERIES_STYLE["actual"]))
    parts.append(polyline(n_input + 1, dnn_forecast, SERIES_STYLE["dnn"]))
    if arps_forecast is not None:
        parts.append(polyline(n_input + 1, arps_forecast, SERIES_STYLE["arps"]))

    legend = [("actual", "Actual"), ("dnn", "DNN forecast")]
    if arps_forecast is not None:
        legend.append(("arps", "Arps refit"))
    legend_x = WIDTH - MARGIN_R - 190
    for row, (name, label) in enumerate(legend):
        y = MARGIN_T + 16 + row * 18
        parts.append(
            f'<line x1="{legend_x}" y1="{y}" x2="{legend_x + 28}" y2="{y}" '
            f"{SERIES_STYLE[name]} />"
        )
        parts.append(
            f'<text x="{legend_x + 36}" y="{y + 4}" font-family="sans-serif" '
            f'font-size="12">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def reduction_bar_svg(title, labels, values) -> str:
    """Bar chart of per-county error reductions; negative bars hang downward."""
    labels = [str(l) for l in labels]
    values = [float(v) for v in values]
    if len(labels) != len(values) or not labels:
        raise ValueError("labels and values must be non-empty and equal-length")

    lo = min(0.0, min(values)) * 1.15
    hi = max(0.0, max(values)) * 1.15
    if hi == lo:
        hi = lo + 1.0
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def py(v):
        return MARGIN_T + (hi - v) / (hi - lo) * plot_h

    slot = plot_w / len(labels)
    bar_w = slot * 0.6

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        _metadata({"reduction": values}),
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff" />',
        f'<text x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{escape(str(title))}</text>',
    ]
    for v in _ticks(lo, hi):
        y = py(v)
        parts.append(
            f'<line x1="{MARGIN_L}" y1="{y:.2f}" x2="{WIDTH - MARGIN_R}" y2="{y:.2f}" '
            f'stroke="#eeeeee" stroke-width="1" />'
        )
        parts.append(
            f'<text x="{MARGIN_L - 6}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{v * 100:g}%</text>'
        )
    zero_y = py(0.0)
    for i, (label, v) in enumerate(zip(labels, values)):
        x = MARGIN_L + i * slot + (slot - bar_w) / 2
        top = min(py(v), zero_y)
        h = abs(py(v) - zero_y)
        fill = "#1f6fb5" if v >= 0 else "#c23b21"
        parts.append(
            f'<rect x="{x:.2f}" y="{top:.2f}" width="{bar_w:.2f}" height="{h:.2f}" '
            f'fill="{fill}" />'
        )
        vy = top - 6 if v >= 0 else top + h + 14
        parts.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{vy:.2f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{v * 100:.1f}%</text>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{HEIGHT - MARGIN_B + 20}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="11">'
            f"{escape(label)}</text>"
        )
    parts.append(
        f'<line x1="{MARGIN_L}" y1="{zero_y:.2f}" x2="{WIDTH - MARGIN_R}" '
        f'y2="{zero_y:.2f}" stroke="#444444" stroke-width="1" />'
    )
    parts.append(
        f'<text x="18" y="{HEIGHT / 2:.0f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {HEIGHT / 2:.0f})">Error reduction</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts)
