"""Static SVG reports: for each scenario value, an SE-vs-n panel and a
bias-vs-n panel with one line per estimator.

The output is plain text built without a plotting library so that it is
byte-stable and diff-friendly. Each file embeds the plotted series, in the
aggregates CSV layout, inside an XML comment delimited by ``DATA-BEGIN`` and
``DATA-END``.
"""
from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Dict, List, Sequence
from xml.sax.saxutils import escape

from .experiments import AGG_FIELDS, Aggregate, aggregates_csv

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f")
PANEL_W, PANEL_H = 320, 240
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 56, 16, 36, 44
LEGEND_H = 18


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "_", name).strip("_")


def _num(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, k: int = 5) -> List[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (k - 1) for i in range(k)]


def _range(vals: Sequence[float], include_zero: bool):
    lo, hi = min(vals), max(vals)
    if include_zero:
        lo, hi = min(lo, 0.0), max(hi, 0.0)
    if hi == lo:
        pad = abs(hi) * 0.1 or 0.01
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def _panel(x0: float, title: str, series: Dict[str, List[tuple]], colours: Dict[str, str],
           include_zero: bool) -> List[str]:
    xs = sorted({p[0] for pts in series.values() for p in pts})
    ys = [p[1] for pts in series.values() for p in pts]
    xlo, xhi = (xs[0] - 1, xs[0] + 1) if len(xs) == 1 else (xs[0], xs[-1])
    ylo, yhi = _range(ys, include_zero)
    left, top = x0 + MARGIN_L, MARGIN_T
    w = PANEL_W - MARGIN_L - MARGIN_R
    h = PANEL_H - MARGIN_T - MARGIN_B

    def px(x):
        return left + (x - xlo) / (xhi - xlo) * w

    def py(y):
        return top + (1.0 - (y - ylo) / (yhi - ylo)) * h

    out = ['<g class="panel">',
           f'<text x="{_num(left + w / 2)}" y="{MARGIN_T - 12}" text-anchor="middle" font-size="13">{title}</text>',
           f'<rect x="{_num(left)}" y="{_num(top)}" width="{_num(w)}" height="{_num(h)}" fill="none" stroke="#333"/>']
    for t in _ticks(ylo, yhi):
        out.append(f'<line x1="{_num(left - 4)}" y1="{_num(py(t))}" x2="{_num(left)}" y2="{_num(py(t))}" stroke="#333"/>')
        out.append(f'<text x="{_num(left - 6)}" y="{_num(py(t) + 4)}" text-anchor="end" font-size="10">{t:.3f}</text>')
    for x in xs:
        out.append(f'<line x1="{_num(px(x))}" y1="{_num(top + h)}" x2="{_num(px(x))}" y2="{_num(top + h + 4)}" stroke="#333"/>')
        out.append(f'<text x="{_num(px(x))}" y="{_num(top + h + 16)}" text-anchor="middle" font-size="10">{x:g}</text>')
    out.append(f'<text x="{_num(left + w / 2)}" y="{_num(top + h + 32)}" text-anchor="middle" font-size="11">n</text>')
    if include_zero and ylo < 0 < yhi:
        out.append(f'<line x1="{_num(left)}" y1="{_num(py(0))}" x2="{_num(left + w)}" y2="{_num(py(0))}" '
                   f'stroke="#999" stroke-dasharray="4 3"/>')
    for name, pts in series.items():
        pts = sorted(pts)
        path = " ".join(f"{_num(px(x))},{_num(py(y))}" for x, y in pts)
        c = colours[name]
        out.append(f'<polyline points="{path}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        for x, y in pts:
            out.append(f'<circle cx="{_num(px(x))}" cy="{_num(py(y))}" r="2.5" fill="{c}"/>')
    out.append("</g>")
    return out


def render_svg(scenario: str, aggs: Sequence[Aggregate]) -> str:
    """SVG text for one scenario value."""
    aggs = [a for a in aggs if a.scenario == scenario]
    if not aggs:
        raise ValueError(f"no aggregates for scenario {scenario!r}")
    names = list(dict.fromkeys(a.estimator for a in aggs))
    colours = {nm: PALETTE[i % len(PALETTE)] for i, nm in enumerate(names)}
    se = {nm: [(a.n, a.se) for a in aggs if a.estimator == nm] for nm in names}
    bias = {nm: [(a.n, a.bias) for a in aggs if a.estimator == nm] for nm in names}
    rows = (len(names) + 3) // 4
    width, height = 2 * PANEL_W, PANEL_H + LEGEND_H * rows + 8
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        "<!-- DATA-BEGIN",
        aggregates_csv(aggs).rstrip("\n"),
        "DATA-END -->",
        f"<title>{escape(scenario)}</title>",
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    lines += _panel(0, f"SE: {escape(scenario)}", se, colours, include_zero=False)
    lines += _panel(PANEL_W, f"Bias: {escape(scenario)}", bias, colours, include_zero=True)
    for i, nm in enumerate(names):
        x = 20 + (i % 4) * (width - 40) / 4
        y = PANEL_H + 8 + LEGEND_H * (i // 4)
        lines.append(f'<line x1="{_num(x)}" y1="{_num(y)}" x2="{_num(x + 18)}" y2="{_num(y)}" '
                     f'stroke="{colours[nm]}" stroke-width="2"/>')
        lines.append(f'<text x="{_num(x + 24)}" y="{_num(y + 4)}" font-size="11">{escape(nm)}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def extract_data(svg_text: str) -> List[Aggregate]:
    """Recover the aggregates embedded in an SVG written by ``render_svg``."""
    m = re.search(r"<!-- DATA-BEGIN\n(.*?)\nDATA-END -->", svg_text, re.S)
    if m is None:
        raise ValueError("no embedded data block")
    lines = m.group(1).splitlines()
    if tuple(lines[0].split(",")) != AGG_FIELDS:
        raise ValueError("unexpected data header")
    out = []
    for rec in csv.reader(lines[1:]):
        s, e, n, mm, mean, bias, se, mc, ok = rec
        out.append(Aggregate(s, e, int(n), int(mm), float(mean), float(bias), float(se), float(mc), int(ok)))
    return out


def write_report(aggs: Sequence[Aggregate], out_dir) -> List[Path]:
    """Write one SVG per scenario value; returns the paths in input order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for scenario in dict.fromkeys(a.scenario for a in aggs):
        p = out / f"{_slug(scenario)}.svg"
        p.write_text(render_svg(scenario, aggs), encoding="utf-8", newline="\n")
        paths.append(p)
    return paths
