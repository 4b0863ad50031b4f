"""Grouped bar charts written as plain SVG text.

Rendering is a pure function of the input rows: the same CSV gives the same
bytes. Negative Delta values are drawn as zero-height bars; the companion CSV
keeps the signed numbers.
"""
from __future__ import annotations

import csv
import io
from html import escape
from pathlib import Path

from .errors import ContractError
from .evaluate import plotted_delta

PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")
WIDTH, HEIGHT = 640, 360
MARGIN = {"left": 56, "right": 16, "top": 36, "bottom": 64}


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(x: float) -> str:
    return f"{x:.2f}"


def grouped_bar_svg(groups, series, values, title: str, y_max: float = 100.0,
                    y_label: str = "%") -> str:
    """``values[g][s]`` is the bar height for group ``g`` and series ``s``.

    Missing entries are skipped. Heights are clipped to ``[0, y_max]``.
    """
    if not groups or not series:
        raise ContractError("nothing to plot")
    if y_max <= 0:
        raise ContractError("y_max must be positive")
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    x0, y0 = MARGIN["left"], MARGIN["top"] + ph
    gw = pw / len(groups)
    bw = gw * 0.8 / len(series)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.2f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>']
    for k in range(5):
        v = y_max * k / 4
        y = y0 - ph * k / 4
        out.append(f'<line x1="{x0}" y1="{_num(y)}" x2="{x0 + pw}" y2="{_num(y)}" stroke="#ddd"/>')
        out.append(f'<text x="{x0 - 6}" y="{_num(y + 4)}" text-anchor="end">{v:g}</text>')
    out.append(f'<text x="14" y="{_num(MARGIN["top"] + ph / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 14 {_num(MARGIN["top"] + ph / 2)})">{escape(y_label)}</text>')
    for gi, g in enumerate(groups):
        gx = x0 + gi * gw + gw * 0.1
        for si, s in enumerate(series):
            v = values.get(g, {}).get(s)
            if v is None:
                continue
            h = ph * min(max(v, 0.0), y_max) / y_max
            out.append(f'<rect x="{_num(gx + si * bw)}" y="{_num(y0 - h)}" width="{_num(bw * 0.92)}" '
                       f'height="{_num(h)}" fill="{PALETTE[si % len(PALETTE)]}">'
                       f'<title>{escape(s)}: {v:.2f}</title></rect>')
        out.append(f'<text x="{_num(x0 + gi * gw + gw / 2)}" y="{y0 + 16}" '
                   f'text-anchor="middle">{escape(g)}</text>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="black"/>')
    lx = x0
    for si, s in enumerate(series):
        out.append(f'<rect x="{_num(lx)}" y="{HEIGHT - 22}" width="10" height="10" '
                   f'fill="{PALETTE[si % len(PALETTE)]}"/>')
        out.append(f'<text x="{_num(lx + 14)}" y="{HEIGHT - 13}">{escape(s)}</text>')
        lx += 14 + 7 * len(s) + 18
    out.append("</svg>")
    return "\n".join(out) + "\n"


def accuracy_chart(summary_rows) -> str:
    metrics = [m for m in dict.fromkeys(r["metric"] for r in summary_rows) if "Composite" not in m]
    variants = list(dict.fromkeys(r["variant"] for r in summary_rows))
    values = {}
    for r in summary_rows:
        values.setdefault(r["metric"], {})[r["variant"]] = float(r["value"])
    labels = {m: m.split(" (")[0] for m in metrics}
    return grouped_bar_svg([labels[m] for m in metrics], variants,
                           {labels[m]: values[m] for m in metrics}, "Image-caption matching")


def delta_chart(zero_shot_rows) -> str:
    tasks = list(dict.fromkeys(r["task"] for r in zero_shot_rows))
    variants = list(dict.fromkeys(r["variant"] for r in zero_shot_rows))
    values = {}
    for r in zero_shot_rows:
        values.setdefault(r["task"], {})[r["variant"]] = plotted_delta(float(r["delta"]))
    top = max([v for d in values.values() for v in d.values()] + [1.0])
    return grouped_bar_svg(tasks, variants, values, "Zero-shot negation Delta (negatives shown as 0)",
                           y_max=float(_nice_ceiling(top)), y_label="Delta (pp)")


def _nice_ceiling(x: float) -> float:
    for step in (1, 2, 5, 10, 20, 25, 50, 100):
        if x <= step:
            return step
    return x


def delta_data_csv(zero_shot_rows) -> str:
    """Signed and plotted Delta side by side."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("task", "variant", "delta", "plotted_delta"))
    for r in zero_shot_rows:
        d = float(r["delta"])
        w.writerow((r["task"], r["variant"], repr(d), repr(plotted_delta(d))))
    return buf.getvalue()


def render_results(results_dir, out_dir=None) -> list[Path]:
    """Render charts from ``summary.csv`` / ``zero_shot.csv`` in ``results_dir``."""
    src = Path(results_dir)
    out = Path(out_dir) if out_dir is not None else src
    summary, zero_shot = src / "summary.csv", src / "zero_shot.csv"
    if not summary.exists() and not zero_shot.exists():
        raise ContractError(f"{src}: no summary.csv or zero_shot.csv to plot")
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if summary.exists():
        rows = read_csv(summary)
        if rows:
            (out / "accuracy.svg").write_text(accuracy_chart(rows))
            written.append(out / "accuracy.svg")
    if zero_shot.exists():
        rows = read_csv(zero_shot)
        if rows:
            (out / "delta.svg").write_text(delta_chart(rows))
            (out / "delta_data.csv").write_text(delta_data_csv(rows))
            written += [out / "delta.svg", out / "delta_data.csv"]
    if not written:
        raise ContractError(f"{src}: result files are empty")
    return written
