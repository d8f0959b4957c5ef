"""Three-panel SVG line charts: states, held input and inter-sample intervals."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .hybridsim import EventLog, Trace

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 640, 200
_PAD_L, _PAD_R, _PAD_T, _PAD_B = 60, 20, 24, 28
_MAX_POINTS = 2000


def _thin(x: np.ndarray, ys: list) -> tuple:
    if len(x) <= _MAX_POINTS:
        return x, ys
    idx = np.unique(np.linspace(0, len(x) - 1, _MAX_POINTS).astype(int))
    return x[idx], [y[idx] for y in ys]


def _panel(y0: float, title: str, x: np.ndarray, ys: list, labels: list, step: bool = False,
           markers: bool = False) -> list:
    out = [f'<g transform="translate(0,{y0:.0f})">',
           f'<text x="{_PAD_L}" y="16" font-size="13">{escape(title)}</text>']
    if len(x) == 0:
        out.append('<text x="300" y="100" font-size="12">no data</text></g>')
        return out
    x, ys = _thin(np.asarray(x, float), [np.asarray(y, float) for y in ys])
    lo = min(float(np.nanmin(y)) for y in ys)
    hi = max(float(np.nanmax(y)) for y in ys)
    if hi - lo < 1e-15:
        lo, hi = lo - 0.5, hi + 0.5
    xa, xb = float(x[0]), float(x[-1]) if x[-1] > x[0] else float(x[0]) + 1.0
    pw = _W - _PAD_L - _PAD_R
    ph = _H - _PAD_T - _PAD_B

    def px(v):
        return _PAD_L + (v - xa) / (xb - xa) * pw

    def py(v):
        return _PAD_T + (hi - v) / (hi - lo) * ph

    out.append(f'<rect x="{_PAD_L}" y="{_PAD_T}" width="{pw}" height="{ph}" '
               'fill="none" stroke="#999"/>')
    for v, anchor_y in ((hi, _PAD_T + 4), (lo, _PAD_T + ph)):
        out.append(f'<text x="{_PAD_L - 4}" y="{anchor_y:.1f}" font-size="10" '
                   f'text-anchor="end">{v:.3g}</text>')
    out.append(f'<text x="{_PAD_L}" y="{_H - 8}" font-size="10">{xa:.3g}</text>')
    out.append(f'<text x="{_W - _PAD_R}" y="{_H - 8}" font-size="10" '
               f'text-anchor="end">t = {xb:.3g}</text>')
    for i, (y, lab) in enumerate(zip(ys, labels)):
        color = _COLORS[i % len(_COLORS)]
        if markers:
            dots = "".join(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="1.2"/>'
                           for a, b in zip(x, y))
            out.append(f'<g fill="{color}">{dots}</g>')
        else:
            pts = []
            for j, (a, b) in enumerate(zip(x, y)):
                if step and j:
                    pts.append(f"{px(a):.2f},{py(y[j - 1]):.2f}")
                pts.append(f"{px(a):.2f},{py(b):.2f}")
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1" '
                       f'points="{" ".join(pts)}"/>')
        out.append(f'<text x="{_W - _PAD_R - 4}" y="{_PAD_T + 14 + 12 * i}" font-size="11" '
                   f'text-anchor="end" fill="{color}">{escape(lab)}</text>')
    out.append("</g>")
    return out


def render(trace: Trace, events: EventLog, state_labels=None, title: str = "") -> str:
    n_w = trace.w.shape[1]
    labels = list(state_labels or [f"w{i}" for i in range(n_w)])
    body = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{3 * _H + 30}" '
            f'viewBox="0 0 {_W} {3 * _H + 30}" font-family="sans-serif">',
            f'<text x="{_PAD_L}" y="18" font-size="14">{escape(title)}</text>']
    body += _panel(30, "state trajectories", trace.t, [trace.w[:, i] for i in range(n_w)], labels)
    body += _panel(30 + _H, "input profile", trace.t,
                   [trace.u[:, i] for i in range(trace.u.shape[1])],
                   [f"u{i}" if trace.u.shape[1] > 1 else "u" for i in range(trace.u.shape[1])],
                   step=True)
    body += _panel(30 + 2 * _H, "sampling interval", events.t, [events.interval],
                   ["t_k - t_(k-1)"], markers=True)
    body.append("</svg>")
    return "\n".join(body) + "\n"


def write_svg(trace: Trace, events: EventLog, path, state_labels=None, title: str = "") -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(render(trace, events, state_labels, title))
    tmp.replace(path)
