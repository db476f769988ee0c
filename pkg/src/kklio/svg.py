"""Self-contained SVG line charts of a run (true state plus bounds).

One stacked panel per state component. During the initial transient the
bounds can peak far outside the scale of the true trajectory, so the
vertical range is anchored to the true values and bound curves are clipped
into view. The output is plain deterministic markup with no external
resources.
"""

from __future__ import annotations

from typing import Sequence

_W, _H, _PAD = 840, 260, 45


def write_svg(path: str, rows: Sequence, n_x: int) -> None:
    panels = []
    for i in range(n_x):
        ks = [r.k for r in rows]
        truth = [float(r.x[i]) for r in rows]
        lo = [float(r.x_lo[i]) for r in rows]
        hi = [float(r.x_hi[i]) for r in rows]
        panels.append(_panel(i, ks, truth, lo, hi))
    total_h = n_x * _H
    body = "\n".join(
        f'<g transform="translate(0,{i * _H})">{p}</g>' for i, p in enumerate(panels)
    )
    doc = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{total_h}" '
        f'viewBox="0 0 {_W} {total_h}">\n'
        f'<rect width="{_W}" height="{total_h}" fill="white"/>\n{body}\n</svg>\n'
    )
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(doc)


def _panel(i: int, ks, truth, lo, hi) -> str:
    t_min, t_max = min(truth), max(truth)
    span = max(t_max - t_min, 1e-9)
    y_lo = t_min - 1.5 * span
    y_hi = t_max + 1.5 * span

    def sx(k):
        return _PAD + (_W - 2 * _PAD) * (k - ks[0]) / max(ks[-1] - ks[0], 1)

    def sy(v):
        v = min(max(v, y_lo), y_hi)  # clip peaking bounds into view
        return _H - _PAD - (_H - 2 * _PAD) * (v - y_lo) / (y_hi - y_lo)

    def poly(vals, color, dash=""):
        pts = " ".join(f"{sx(k):.2f},{sy(v):.2f}" for k, v in zip(ks, vals))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        return (f'<polyline fill="none" stroke="{color}" stroke-width="1.2"{extra} '
                f'points="{pts}"/>')

    frame = (f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" '
             f'height="{_H - 2 * _PAD}" fill="none" stroke="#888"/>')
    label = (f'<text x="{_PAD}" y="{_PAD - 10}" font-family="monospace" '
             f'font-size="13">x{i + 1}: true (black), lower/upper bounds (blue/red, '
             f'clipped to view)</text>')
    ticks = (f'<text x="{_PAD}" y="{_H - _PAD + 16}" font-family="monospace" '
             f'font-size="11">k={ks[0]}</text>'
             f'<text x="{_W - _PAD - 40}" y="{_H - _PAD + 16}" font-family="monospace" '
             f'font-size="11">k={ks[-1]}</text>'
             f'<text x="4" y="{sy(t_max):.0f}" font-family="monospace" '
             f'font-size="11">{t_max:.3g}</text>'
             f'<text x="4" y="{sy(t_min):.0f}" font-family="monospace" '
             f'font-size="11">{t_min:.3g}</text>')
    return "".join([
        frame, label, ticks,
        poly(lo, "#1f77b4", dash="4 3"),
        poly(hi, "#d62728", dash="4 3"),
        poly(truth, "black"),
    ])
