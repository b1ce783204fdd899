"""Metrics tables, the cross-seed summary and a self-rendered SVG chart."""

from __future__ import annotations

import csv
import math
import re
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from ..errors import ValidationError

METRICS_HEADER = ["checkpoint", "avg_loss", "gap", "L_budget", "retrained"]
SUMMARY_HEADER = ["strategy", "seeds", "median_final_avg_loss", "median_final_gap", "L_star"]
CURVE_HEADER = ["strategy", "checkpoint", "median_avg_loss"]
_METRICS_RE = re.compile(r"^metrics_(?P<strategy>[a-z_]+)_(?P<seed>\d+)\.csv$")
_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _num(s: str):
    return float(s) if s != "" else None


def metrics_rows(metrics, optimal) -> list[list[str]]:
    retrain_times = {t for t, _ in metrics.retrains}
    rows = []
    for cp, avg in zip(metrics.checkpoints, metrics.averages):
        gap = avg - optimal if optimal is not None else None
        rows.append([fmt(cp), fmt(avg), fmt(gap), fmt(metrics.budget_at(cp)), "1" if cp in retrain_times else "0"])
    return rows


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_csv(path, header) -> list[dict]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        got = next(r, None)
        if got != header:
            raise ValidationError(f"{path}: expected header {','.join(header)}, got {got}")
        return [dict(zip(header, row)) for row in r]


def read_metrics(path) -> list[dict]:
    rows = read_csv(path, METRICS_HEADER)
    return [
        {
            "checkpoint": int(r["checkpoint"]),
            "avg_loss": float(r["avg_loss"]),
            "gap": _num(r["gap"]),
            "L_budget": _num(r["L_budget"]),
            "retrained": int(r["retrained"]),
        }
        for r in rows
    ]


def collect(out_dir) -> dict:
    """``{strategy: {seed: metrics rows}}`` from the per-seed files in ``out_dir``."""
    found: dict = {}
    for p in sorted(Path(out_dir).iterdir()):
        m = _METRICS_RE.match(p.name)
        if m:
            found.setdefault(m["strategy"], {})[int(m["seed"])] = read_metrics(p)
    if not found:
        raise ValidationError(f"no metrics_<strategy>_<seed>.csv files in {out_dir}")
    return found


def _median(xs):
    xs = [x for x in xs if x is not None]
    return float(np.median(xs)) if xs else None


def summarize(found: dict, optimal):
    """Summary rows and the median curve, strategies and seeds in sorted order."""
    summary, curve = [], []
    for strategy in sorted(found):
        per_seed = found[strategy]
        seeds = sorted(per_seed)
        finals = [per_seed[s][-1] for s in seeds]
        summary.append(
            [
                strategy,
                " ".join(str(s) for s in seeds),
                fmt(_median([f["avg_loss"] for f in finals])),
                fmt(_median([f["gap"] for f in finals])),
                fmt(optimal),
            ]
        )
        checkpoints = [r["checkpoint"] for r in per_seed[seeds[0]]]
        for i, cp in enumerate(checkpoints):
            vals = [per_seed[s][i]["avg_loss"] for s in seeds if i < len(per_seed[s])]
            curve.append([strategy, fmt(cp), fmt(float(np.median(vals)))])
    return summary, curve


def render_svg(curve: list[list[str]], optimal, title: str = "average loss") -> str:
    """Line chart of median average loss against log2(checkpoint).

    Each plotted point carries its table values in ``data-*`` attributes.
    """
    W, H, ml, mr, mt, mb = 720, 440, 70, 160, 40, 50
    series: dict = {}
    for strategy, cp, val in curve:
        series.setdefault(strategy, []).append((int(cp), float(val)))
    xs = [math.log2(cp) for pts in series.values() for cp, _ in pts] or [0.0, 1.0]
    ys = [v for pts in series.values() for _, v in pts] + ([optimal] if optimal is not None else [])
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys + [0.0]), max(ys + [1e-12])
    if x1 == x0:
        x1 = x0 + 1.0
    pad = 0.05 * (y1 - y0 or 1.0)
    y0, y1 = y0 - pad, y1 + pad

    def px(cp):
        return ml + (math.log2(cp) - x0) / (x1 - x0) * (W - ml - mr)

    def py(v):
        return mt + (y1 - v) / (y1 - y0) * (H - mt - mb)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<line x1="{ml}" y1="{H - mb}" x2="{W - mr}" y2="{H - mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{H - mb}" stroke="black"/>',
        f'<text x="{(ml + W - mr) / 2:.1f}" y="{H - 12}" text-anchor="middle" font-family="sans-serif" font-size="12">log2(t)</text>',
    ]
    for k in range(math.ceil(x0), math.floor(x1) + 1):
        x = ml + (k - x0) / (x1 - x0) * (W - ml - mr)
        out.append(f'<text x="{x:.1f}" y="{H - mb + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{k}</text>')
    for v in np.linspace(y0, y1, 5):
        out.append(f'<text x="{ml - 6}" y="{py(v) + 4:.1f}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.4g}</text>')
    if optimal is not None:
        out.append(
            f'<line class="lstar" data-value="{fmt(optimal)}" x1="{ml}" y1="{py(optimal):.2f}" x2="{W - mr}" '
            f'y2="{py(optimal):.2f}" stroke="gray" stroke-dasharray="6,4"/>'
        )
    for i, (strategy, pts) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        path = " ".join(f"{px(cp):.2f},{py(v):.2f}" for cp, v in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{path}"/>')
        for cp, v in pts:
            out.append(
                f'<circle class="point" data-strategy="{escape(strategy)}" data-checkpoint="{cp}" '
                f'data-value="{fmt(v)}" cx="{px(cp):.2f}" cy="{py(v):.2f}" r="2.5" fill="{color}"/>'
            )
        ly = mt + 18 * i + 10
        out.append(f'<line x1="{W - mr + 12}" y1="{ly}" x2="{W - mr + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - mr + 38}" y="{ly + 4}" font-family="sans-serif" font-size="11">{escape(strategy)}</text>')
    if optimal is not None:
        ly = mt + 18 * len(series) + 10
        out.append(f'<line x1="{W - mr + 12}" y1="{ly}" x2="{W - mr + 32}" y2="{ly}" stroke="gray" stroke-dasharray="6,4"/>')
        out.append(f'<text x="{W - mr + 38}" y="{ly + 4}" font-family="sans-serif" font-size="11">L*</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_report(out_dir, optimal) -> tuple[list, list]:
    """Rebuild ``summary.csv``, ``curve.csv`` and ``report.svg`` from the metrics files."""
    out_dir = Path(out_dir)
    found = collect(out_dir)
    summary, curve = summarize(found, optimal)
    write_csv(out_dir / "summary.csv", SUMMARY_HEADER, summary)
    write_csv(out_dir / "curve.csv", CURVE_HEADER, curve)
    (out_dir / "report.svg").write_text(render_svg(curve, optimal))
    return summary, curve


def read_optimal(out_dir):
    p = Path(out_dir) / "optimal.csv"
    if not p.exists():
        return None
    rows = read_csv(p, ["L_star"])
    return _num(rows[0]["L_star"]) if rows else None


def write_optimal(out_dir, optimal) -> None:
    write_csv(Path(out_dir) / "optimal.csv", ["L_star"], [[fmt(optimal)]])
