"""Direct SVG rendering of regret curves on log2-log2 axes.

No plotting stack: coordinates are computed here and serialized as SVG
primitives with fixed decimal formatting, so identical inputs give
byte-identical files.  One chart per experiment: a mean curve per policy,
a shaded 0.95 Wald band, and a dashed least-squares fit line over the slope
window annotated with the slope value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

WIDTH = 760
HEIGHT = 480
MARGIN_LEFT = 64.0
MARGIN_RIGHT = 208.0
MARGIN_TOP = 44.0
MARGIN_BOTTOM = 56.0

# Okabe-Ito-ish palette, assigned to policies in sorted-name order.
PALETTE = ("#0072b2", "#d55e00", "#009e73", "#cc79a7", "#e69f00", "#56b4e9")


class PlotError(ValueError):
    """Unplottable input (no policies, no positive data)."""


@dataclass(frozen=True)
class CurveData:
    """One policy's aggregated curve: checkpoints, mean, Wald half-width, slope."""

    checkpoints: np.ndarray
    mean: np.ndarray
    half_width: np.ndarray
    slope: float


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_exponents(lo: float, hi: float, max_ticks: int = 9) -> list[int]:
    first = math.ceil(lo - 1e-9)
    last = math.floor(hi + 1e-9)
    if last < first:
        return [first]
    step = max(1, math.ceil((last - first + 1) / max_ticks))
    return list(range(first, last + 1, step))


def render_regret_svg(curves: dict[str, CurveData], horizon: int, title: str) -> str:
    """SVG text for the experiment chart; raises PlotError on empty input."""
    if not curves:
        raise PlotError("no policies to plot")
    names = sorted(curves)

    # Log-domain extents over positive data only.
    xs, ys = [], []
    for name in names:
        c = curves[name]
        pos = c.mean > 0.0
        if not np.any(pos):
            continue
        xs.append(np.log2(c.checkpoints[pos].astype(float)))
        upper = c.mean[pos] + c.half_width[pos]
        ys.append(np.log2(c.mean[pos]))
        ys.append(np.log2(upper))
    if not xs:
        raise PlotError("no positive regret values to plot")
    xlo = min(float(a.min()) for a in xs)
    xhi = max(float(a.max()) for a in xs)
    ylo = min(float(a.min()) for a in ys)
    yhi = max(float(a.max()) for a in ys)
    if xhi - xlo < 1e-9:
        xhi = xlo + 1.0
    if yhi - ylo < 1e-9:
        yhi = ylo + 1.0
    ylo -= 0.25
    yhi += 0.25

    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(logx: float) -> float:
        return MARGIN_LEFT + (logx - xlo) / (xhi - xlo) * plot_w

    def py(logy: float) -> float:
        return MARGIN_TOP + (yhi - logy) / (yhi - ylo) * plot_h

    out: list[str] = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="Helvetica, Arial, sans-serif">'
    )
    out.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    out.append(
        f'<text x="{_fmt(WIDTH / 2)}" y="24" font-size="15" text-anchor="middle">{_escape(title)}</text>'
    )

    # Axes frame and ticks.
    x0, x1 = MARGIN_LEFT, MARGIN_LEFT + plot_w
    y0, y1 = MARGIN_TOP, MARGIN_TOP + plot_h
    for ex in _tick_exponents(xlo, xhi):
        gx = px(float(ex))
        out.append(f'<line x1="{_fmt(gx)}" y1="{_fmt(y0)}" x2="{_fmt(gx)}" y2="{_fmt(y1)}" stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{_fmt(gx)}" y="{_fmt(y1 + 18)}" font-size="11" text-anchor="middle">{ex}</text>')
    for ey in _tick_exponents(ylo, yhi):
        gy = py(float(ey))
        out.append(f'<line x1="{_fmt(x0)}" y1="{_fmt(gy)}" x2="{_fmt(x1)}" y2="{_fmt(gy)}" stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{_fmt(x0 - 8)}" y="{_fmt(gy + 4)}" font-size="11" text-anchor="end">{ey}</text>')
    out.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(plot_w)}" height="{_fmt(plot_h)}" fill="none" stroke="#444444" stroke-width="1"/>')
    out.append(
        f'<text x="{_fmt(x0 + plot_w / 2)}" y="{_fmt(HEIGHT - 14)}" font-size="12" text-anchor="middle">log2(t)</text>'
    )
    out.append(
        f'<text x="18" y="{_fmt(y0 + plot_h / 2)}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 18 {_fmt(y0 + plot_h / 2)})">log2(cumulative regret)</text>'
    )

    legend_y = MARGIN_TOP + 10
    for idx, name in enumerate(names):
        c = curves[name]
        color = PALETTE[idx % len(PALETTE)]
        pos = c.mean > 0.0
        slope_txt = "n/a" if not math.isfinite(c.slope) else f"{c.slope:.3f}"
        if np.any(pos):
            lx = np.log2(c.checkpoints[pos].astype(float))
            ly = np.log2(c.mean[pos])
            lo_vals = np.maximum(c.mean[pos] - c.half_width[pos], 2.0**ylo)
            l_lo = np.log2(lo_vals)
            l_hi = np.log2(c.mean[pos] + c.half_width[pos])
            band_pts = [f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(lx, l_hi)]
            band_pts += [f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(lx[::-1], l_lo[::-1])]
            out.append(f'<polygon points="{" ".join(band_pts)}" fill="{color}" fill-opacity="0.15" stroke="none"/>')
            pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(lx, ly))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>')
            # Dashed OLS fit over the slope window (t >= horizon/64).
            window = lx >= math.log2(max(horizon / 64.0, float(c.checkpoints[pos][0])))
            if math.isfinite(c.slope) and int(window.sum()) >= 2:
                wx, wy = lx[window], ly[window]
                intercept = float(wy.mean()) - c.slope * float(wx.mean())
                fx0, fx1 = float(wx[0]), float(wx[-1])
                fy0, fy1 = c.slope * fx0 + intercept, c.slope * fx1 + intercept
                out.append(
                    f'<line x1="{_fmt(px(fx0))}" y1="{_fmt(py(fy0))}" x2="{_fmt(px(fx1))}" y2="{_fmt(py(fy1))}" '
                    f'stroke="{color}" stroke-width="1.2" stroke-dasharray="6 4"/>'
                )
        legend_x = x1 + 14
        out.append(
            f'<line x1="{_fmt(legend_x)}" y1="{_fmt(legend_y)}" x2="{_fmt(legend_x + 22)}" y2="{_fmt(legend_y)}" '
            f'stroke="{color}" stroke-width="1.8"/>'
        )
        out.append(
            f'<text x="{_fmt(legend_x + 28)}" y="{_fmt(legend_y + 4)}" font-size="11">'
            f"{_escape(name)} (slope {slope_txt})</text>"
        )
        legend_y += 18
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_regret_svg(path, curves: dict[str, CurveData], horizon: int, title: str) -> None:
    svg = render_regret_svg(curves, horizon, title)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)
