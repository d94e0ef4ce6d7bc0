"""Deterministic SVG figures for the three report kinds.

* stratification: witness points (first two coordinates) colored by codimension
* quotient: sorted distances from the first representative
* compare: GH upper bound against epsilon
"""
from __future__ import annotations

import numpy as np

from .errors import UnknownReportKind

W, H, PAD = 480, 360, 48
PALETTE = ("#1b6ca8", "#d1495b", "#66a182", "#edae49", "#8d6a9f", "#2e4057")


def _num(x):
    return format(float(x), ".6g")


def _frame(title):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<text x="{W // 2}" y="{PAD // 2}" text-anchor="middle" font-size="14">{title}</text>',
    ]


def _scale(vals, lo_px, hi_px):
    vals = np.asarray(vals, dtype=float)
    lo, hi = (float(vals.min()), float(vals.max())) if vals.size else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    return lambda v: lo_px + (float(v) - lo) * (hi_px - lo_px) / (hi - lo), lo, hi


def _axis_labels(xlo, xhi, ylo, yhi, xname, yname):
    return [
        f'<text x="{PAD}" y="{H - PAD + 16}" font-size="10">{_num(xlo)}</text>',
        f'<text x="{W - PAD}" y="{H - PAD + 16}" font-size="10" text-anchor="end">{_num(xhi)}</text>',
        f'<text x="{PAD - 4}" y="{H - PAD}" font-size="10" text-anchor="end">{_num(ylo)}</text>',
        f'<text x="{PAD - 4}" y="{PAD + 4}" font-size="10" text-anchor="end">{_num(yhi)}</text>',
        f'<text x="{W // 2}" y="{H - 8}" font-size="12" text-anchor="middle">{xname}</text>',
        f'<text x="12" y="{H // 2}" font-size="12" transform="rotate(-90 12 {H // 2})" '
        f'text-anchor="middle">{yname}</text>',
    ]


def _close(parts):
    return "\n".join(parts + ["</svg>"]) + "\n"


def empty_svg(title="empty report"):
    return _close(_frame(title))


def stratification_svg(strata):
    pts, codims = [], []
    for s in strata:
        for w in s.get("witnesses", []):
            pts.append((w + [0.0, 0.0])[:2])
            codims.append(int(s["codim"]))
    if not pts:
        return empty_svg("stratification")
    pts = np.array(pts)
    sx, xlo, xhi = _scale(pts[:, 0], PAD, W - PAD)
    sy, ylo, yhi = _scale(pts[:, 1], H - PAD, PAD)
    parts = _frame("stratification witnesses")
    classes = sorted(set(codims))
    for (x, y), c in zip(pts, codims):
        color = PALETTE[classes.index(c) % len(PALETTE)]
        parts.append(f'<circle cx="{_num(sx(x))}" cy="{_num(sy(y))}" r="3" fill="{color}"/>')
    for i, c in enumerate(classes):
        parts.append(f'<text x="{W - PAD}" y="{PAD + 14 * i}" font-size="11" text-anchor="end" '
                     f'fill="{PALETTE[i % len(PALETTE)]}">codim {c}</text>')
    return _close(parts + _axis_labels(xlo, xhi, ylo, yhi, "x1", "x2"))


def _polyline(xs, ys, color="#1b6ca8"):
    sx, xlo, xhi = _scale(xs, PAD, W - PAD)
    sy, ylo, yhi = _scale(ys, H - PAD, PAD)
    pts = " ".join(f"{_num(sx(x))},{_num(sy(y))}" for x, y in zip(xs, ys))
    marks = [f'<circle cx="{_num(sx(x))}" cy="{_num(sy(y))}" r="2.5" fill="{color}"/>'
             for x, y in zip(xs, ys)]
    return [f'<polyline points="{pts}" fill="none" stroke="{color}"/>'] + marks, (xlo, xhi, ylo, yhi)


def quotient_svg(space):
    d = np.asarray(space.distances)
    if d.size == 0:
        return empty_svg("quotient distance profile")
    prof = np.sort(d[0])
    lines, box = _polyline(np.arange(len(prof)), prof)
    return _close(_frame("quotient distance profile") + lines
                  + _axis_labels(*box, "rank", "distance from first orbit"))


def compare_svg(report):
    rows = report.get("rows", [])
    if not rows:
        return empty_svg("GH bound vs eps")
    eps = [r["eps"] for r in rows]
    up = [r["upper"] for r in rows]
    order = np.argsort(eps, kind="stable")
    lines, box = _polyline(np.array(eps)[order], np.array(up)[order])
    return _close(_frame("GH upper bound vs eps") + lines + _axis_labels(*box, "eps", "upper"))


def detect_kind(obj):
    if obj is None or obj == {} or obj == []:
        return "empty"
    if hasattr(obj, "distances"):
        return "quotient"
    if isinstance(obj, list) and all(isinstance(s, dict) and "codim" in s for s in obj):
        return "stratification"
    if isinstance(obj, dict) and obj.get("kind") == "compare":
        return "compare"
    if isinstance(obj, dict) and isinstance(obj.get("strata"), list):
        return "stratification"
    raise UnknownReportKind("input is not a stratification, quotient or compare report",
                            type=type(obj).__name__,
                            kind=str(obj.get("kind")) if isinstance(obj, dict) else None)


def render(obj):
    kind = detect_kind(obj)
    if kind == "empty":
        return empty_svg()
    if kind == "quotient":
        return quotient_svg(obj)
    if kind == "compare":
        return compare_svg(obj)
    strata = obj["strata"] if isinstance(obj, dict) else obj
    return stratification_svg(strata)

