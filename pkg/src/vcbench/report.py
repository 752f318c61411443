"""Report emission: rate-accuracy plot (SVG), curve CSV, BD-rate table.

The SVG is assembled by hand so identical inputs yield identical bytes. Rate
sits on a log-scaled x axis, accuracy on y, one polyline per curve with a
legend built from curve labels. BD comparisons that cannot be computed show
up as "N/A(reason)" table cells instead of aborting the report.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import math

from .errors import (
    CurveMonotonicityError,
    CurveOverlapError,
    ValidationError,
)
from .metrics import (
    MIN_BD_POINTS,
    RateAccuracyCurve,
    bd_rate,
    write_curve_csv,
)

PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#8c564b",
    "#17becf",
    "#7f7f7f",
)

_WIDTH = 760
_HEIGHT = 520
_PLOT = (70.0, 30.0, 740.0, 370.0)  # x0, y0, x1, y1
COLOR_MATRIX_NOTE = "color conversion: BT.709 limited range, nearest-neighbor chroma"


def _fmt(v: float) -> str:
    return format(v, ".6g")


def render_curve_svg(curves: Sequence[RateAccuracyCurve], title: str = "") -> str:
    if not curves or not any(c.points for c in curves):
        raise ValidationError("nothing to plot: no curve points")
    rates = [p.rate for c in curves for p in c.points]
    accs = [p.accuracy for c in curves for p in c.points]
    xlo, xhi = math.log10(min(rates)), math.log10(max(rates))
    if xhi - xlo < 1e-9:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    else:
        pad = 0.05 * (xhi - xlo)
        xlo, xhi = xlo - pad, xhi + pad
    ylo, yhi = min(accs), max(accs)
    if yhi - ylo < 1e-9:
        ylo, yhi = ylo - 0.05, yhi + 0.05
    else:
        pad = 0.05 * (yhi - ylo)
        ylo, yhi = ylo - pad, yhi + pad

    px0, py0, px1, py1 = _PLOT

    def sx(rate: float) -> float:
        return px0 + (math.log10(rate) - xlo) / (xhi - xlo) * (px1 - px0)

    def sy(acc: float) -> float:
        return py1 - (acc - ylo) / (yhi - ylo) * (py1 - py0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect x="0" y="0" width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<rect x="{_fmt(px0)}" y="{_fmt(py0)}" width="{_fmt(px1 - px0)}" '
        f'height="{_fmt(py1 - py0)}" fill="none" stroke="#333333"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_fmt((px0 + px1) / 2)}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{escape(title)}</text>'
        )

    # decade ticks on the log rate axis; fall back to the ends when the data
    # spans less than one decade
    decades = [k for k in range(math.ceil(xlo), math.floor(xhi) + 1)]
    xticks = [10.0**k for k in decades] if decades else [10.0**xlo, 10.0**xhi]
    for tick in xticks:
        x = sx(tick)
        parts.append(
            f'<line x1="{_fmt(x)}" y1="{_fmt(py0)}" x2="{_fmt(x)}" '
            f'y2="{_fmt(py1)}" stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(py1 + 16)}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(tick)}</text>'
        )
    for i in range(5):
        value = ylo + (yhi - ylo) * i / 4
        y = sy(value)
        parts.append(
            f'<line x1="{_fmt(px0)}" y1="{_fmt(y)}" x2="{_fmt(px1)}" '
            f'y2="{_fmt(y)}" stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{_fmt(px0 - 6)}" y="{_fmt(y + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{format(value, ".3g")}</text>'
        )
    parts.append(
        f'<text x="{_fmt((px0 + px1) / 2)}" y="{_fmt(py1 + 34)}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="12">'
        f"rate (log scale)</text>"
    )
    parts.append(
        f'<text x="16" y="{_fmt((py0 + py1) / 2)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {_fmt((py0 + py1) / 2)})">accuracy</text>'
    )

    for ci, curve in enumerate(curves):
        color = PALETTE[ci % len(PALETTE)]
        pts = " ".join(f"{_fmt(sx(p.rate))},{_fmt(sy(p.accuracy))}" for p in curve.points)
        if len(curve.points) > 1:
            parts.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
        for p in curve.points:
            parts.append(
                f'<circle cx="{_fmt(sx(p.rate))}" cy="{_fmt(sy(p.accuracy))}" '
                f'r="3" fill="{color}"/>'
            )
        ly = py1 + 52 + 18 * ci
        parts.append(
            f'<rect x="{_fmt(px0)}" y="{_fmt(ly - 10)}" width="12" height="12" '
            f'fill="{color}"/>'
        )
        parts.append(
            f'<text x="{_fmt(px0 + 18)}" y="{_fmt(ly)}" font-family="sans-serif" '
            f'font-size="12">{escape(curve.label)}</text>'
        )

    parts.append(
        f'<text x="{_fmt(px0)}" y="{_HEIGHT - 8}" font-family="sans-serif" '
        f'font-size="10" fill="#666666">{escape(COLOR_MATRIX_NOTE)}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _bd_cell(anchor: RateAccuracyCurve, test: RateAccuracyCurve) -> tuple[str, str, str]:
    """(bd cell, overlap low, overlap high); failures become N/A(reason)."""
    if len(anchor.points) < MIN_BD_POINTS or len(test.points) < MIN_BD_POINTS:
        return "N/A(points)", "", ""
    try:
        value = bd_rate(anchor, test)
    except CurveOverlapError:
        return "N/A(overlap)", "", ""
    except CurveMonotonicityError:
        return "N/A(monotonicity)", "", ""
    lo = max(min(p.accuracy for p in anchor.points), min(p.accuracy for p in test.points))
    hi = min(max(p.accuracy for p in anchor.points), max(p.accuracy for p in test.points))
    return format(value, ".2f"), _fmt(lo), _fmt(hi)


def write_bd_table(
    path: str | Path,
    anchor: RateAccuracyCurve,
    tests: Sequence[RateAccuracyCurve],
) -> None:
    lines = [f"# anchor: {anchor.label}", "label,bd_rate_percent,accuracy_low,accuracy_high"]
    for test in tests:
        cell, lo, hi = _bd_cell(anchor, test)
        lines.append(f"{test.label},{cell},{lo},{hi}")
    Path(path).write_text("\n".join(lines) + "\n")


def emit_report(
    curves: Sequence[RateAccuracyCurve],
    out_dir: str | Path,
    anchor: RateAccuracyCurve | None = None,
    title: str = "",
) -> dict[str, Path]:
    """Write curves.csv and report.svg, plus bd_rate.csv when an anchor is
    given. Returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "curves": out / "curves.csv",
        "svg": out / "report.svg",
    }
    write_curve_csv(paths["curves"], curves)
    paths["svg"].write_text(render_curve_svg(curves, title))
    if anchor is not None:
        tests = [c for c in curves if c is not anchor]
        paths["bd"] = out / "bd_rate.csv"
        write_bd_table(paths["bd"], anchor, tests)
    return paths
