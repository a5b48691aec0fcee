"""Report emission: CSV tables, a fixed-width summary table, and SVG top
views of maps with trajectories plus simple learning-curve plots."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .maze import MazeMap
from .pipeline import Trajectory

PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#17becf")


def write_csv(path: str | Path, header: list[str], rows: list) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def format_float(x: float) -> str:
    return f"{x:.6g}"


def exploration_table(reports: dict, absent: list[str] | None = None) -> str:
    """Fixed-width text table in the style of the exploration results."""
    headers = ("Method", "# Samples", "ADT (m)", "Max Distance (m)", "Collision Rate")
    rows = []
    for name, rep in reports.items():
        rows.append((name, str(rep.n_samples_used), f"{rep.adt:.2f}",
                     f"{rep.max_distance:.2f}", f"{rep.collision_rate * 100:.1f}%"))
    for name in absent or []:
        rows.append((name, "-", "absent", "absent", "absent"))
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i])
              for i in range(len(headers))]
    def fmt(row):
        return "  ".join(str(v).ljust(w) for v, w in zip(row, widths))
    line = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([fmt(headers), line] + [fmt(r) for r in rows]) + "\n"


# ---------------------------------------------------------------------------
# SVG rendering (hand-rolled: deterministic output, no plotting dependency)

def _svg_header(width_px: float, height_px: float) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px:.0f}" '
            f'height="{height_px:.0f}" viewBox="0 0 {width_px:.2f} {height_px:.2f}">')


def map_svg(map_: MazeMap, trajectories: list[Trajectory] | None = None,
            scale: float = 60.0) -> str:
    """Top view: obstacle cells as rects, trajectories as colored polylines
    (color keyed by subroutine id when present)."""
    xmax, ymax = map_.extent
    parts = [_svg_header(xmax * scale, ymax * scale),
             f'<rect width="{xmax * scale:.2f}" height="{ymax * scale:.2f}" fill="#f7f5f0"/>']
    cs = map_.cell_size
    for r in range(map_.height):
        c = 0
        while c < map_.width:
            if map_.occupancy[r, c]:
                c0 = c
                while c < map_.width and map_.occupancy[r, c]:
                    c += 1
                parts.append(f'<rect x="{c0 * cs * scale:.2f}" y="{r * cs * scale:.2f}" '
                             f'width="{(c - c0) * cs * scale:.2f}" '
                             f'height="{cs * scale:.2f}" fill="#4a4a48"/>')
            else:
                c += 1
    rows, cols = np.nonzero(map_.room_labels == -2)
    for r, c in zip(rows, cols):
        parts.append(f'<rect x="{c * cs * scale:.2f}" y="{r * cs * scale:.2f}" '
                     f'width="{cs * scale:.2f}" height="{cs * scale:.2f}" '
                     f'fill="#ffe9a8"/>')
    for traj in trajectories or []:
        if traj.subroutine_ids is not None:
            # one polyline per same-id run so colors follow the active subroutine
            start = 0
            ids = traj.subroutine_ids
            for i in range(1, len(ids) + 1):
                if i == len(ids) or ids[i] != ids[start]:
                    pts = traj.poses[start:i + 1]
                    color = PALETTE[int(ids[start]) % len(PALETTE)]
                    coords = " ".join(f"{x * scale:.1f},{y * scale:.1f}"
                                      for x, y, _ in pts)
                    parts.append(f'<polyline points="{coords}" fill="none" '
                                 f'stroke="{color}" stroke-width="2" opacity="0.75"/>')
                    start = i
        else:
            coords = " ".join(f"{x * scale:.1f},{y * scale:.1f}" for x, y, _ in traj.poses)
            parts.append(f'<polyline points="{coords}" fill="none" stroke="#d62728" '
                         'stroke-width="2" opacity="0.75"/>')
        x0, y0, _ = traj.poses[0]
        parts.append(f'<circle cx="{x0 * scale:.1f}" cy="{y0 * scale:.1f}" r="4" '
                     'fill="#111"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def curves_svg(curves: list[dict], x_key: str, y_key: str, title: str,
               width: float = 640, height: float = 360) -> str:
    """Line chart for learning curves; one entry per curve with keys
    label, x (list), y (list)."""
    pad = 48.0
    xs = [x for c in curves for x in c["x"]] or [0, 1]
    ys = [y for c in curves for y in c["y"]] or [0, 1]
    x_lo, x_hi = min(xs), max(xs) or 1
    y_lo, y_hi = min(0.0, min(ys)), max(ys) or 1.0
    if x_hi == x_lo:
        x_hi = x_lo + 1
    if y_hi == y_lo:
        y_hi = y_lo + 1

    def sx(x):
        return pad + (x - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    parts = [_svg_header(width, height),
             f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
             f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" '
             f'font-size="14" font-family="sans-serif">{title}</text>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
             f'y2="{height - pad}" stroke="#333"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="#333"/>',
             f'<text x="{width / 2:.0f}" y="{height - 10:.0f}" text-anchor="middle" '
             f'font-size="11" font-family="sans-serif">{x_key}</text>',
             f'<text x="14" y="{height / 2:.0f}" font-size="11" font-family="sans-serif" '
             f'transform="rotate(-90 14 {height / 2:.0f})" text-anchor="middle">{y_key}</text>']
    for i, c in enumerate(curves):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(c["x"], c["y"]))
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     'stroke-width="1.8"/>')
        parts.append(f'<text x="{width - pad + 4:.0f}" y="{pad + 14 * i:.0f}" '
                     f'font-size="11" font-family="sans-serif" fill="{color}">'
                     f'{c["label"]}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
