"""Direct SVG rendering of a closed-loop scenario log (no plotting library)."""

from __future__ import annotations

import csv
from pathlib import Path


class PlotDataError(ValueError):
    """Raised when a log CSV cannot be parsed."""


MARKER_STEPS = (1, 4, 7, 11)


def _read_csv(path: Path, required: list[str]) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise PlotDataError(f"{path}: empty file")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise PlotDataError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append({k: float(row[k]) for k in required})
            except (TypeError, ValueError):
                raise PlotDataError(f"{path}: row {lineno}: malformed value") from None
    if not rows:
        raise PlotDataError(f"{path}: no data rows")
    return rows


def render_scenario_svg(simlog_csv: str | Path, predictions_csv: str | Path,
                        out_path: str | Path, lane_width: float = 5.25) -> None:
    """Lanes, both trajectories, step markers, and dotted prediction polylines."""
    log = _read_csv(Path(simlog_csv), ["step", "ev_x", "ev_y", "tv_x", "tv_y"])
    preds = _read_csv(Path(predictions_csv), ["step", "k", "pred_x", "pred_y"])

    xs = [r["ev_x"] for r in log] + [r["tv_x"] for r in log] + \
         [r["pred_x"] for r in preds]
    x_lo, x_hi = min(xs) - 10.0, max(xs) + 10.0
    y_lo, y_hi = 0.0, 3.0 * lane_width
    width, height = 900.0, 260.0
    pad = 20.0

    def sx(x):
        return pad + (x - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
             f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
             f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>']

    for i in range(4):
        y = i * lane_width
        dash = '' if i in (0, 3) else ' stroke-dasharray="12,10"'
        parts.append(f'<line x1="{sx(x_lo):.1f}" y1="{sy(y):.1f}" '
                     f'x2="{sx(x_hi):.1f}" y2="{sy(y):.1f}" '
                     f'stroke="#444444" stroke-width="1.5"{dash}/>')

    by_step: dict[int, list[tuple[float, float]]] = {}
    for r in preds:
        by_step.setdefault(int(r["step"]), []).append((r["pred_x"], r["pred_y"]))
    for step in sorted(by_step):
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in by_step[step])
        parts.append(f'<polyline class="prediction" points="{pts}" fill="none" '
                     f'stroke="#999999" stroke-width="1" stroke-dasharray="2,4"/>')

    for key, color in (("ev", "#1f4e9c"), ("tv", "#b03030")):
        pts = " ".join(f'{sx(r[key + "_x"]):.2f},{sy(r[key + "_y"]):.2f}' for r in log)
        parts.append(f'<polyline class="{key}-trajectory" points="{pts}" '
                     f'fill="none" stroke="{color}" stroke-width="2"/>')

    steps_present = {int(r["step"]): r for r in log}
    shades = [0.25 + 0.75 * i / (len(MARKER_STEPS) - 1) for i in range(len(MARKER_STEPS))]
    for (step, shade) in zip(MARKER_STEPS, shades):
        if step not in steps_present:
            continue
        r = steps_present[step]
        for key, color in (("ev", "31,78,156"), ("tv", "176,48,48")):
            cx, cy = sx(r[key + "_x"]), sy(r[key + "_y"])
            parts.append(f'<rect class="{key}-marker" x="{cx - 5:.2f}" '
                         f'y="{cy - 5:.2f}" width="10" height="10" '
                         f'fill="rgba({color},{shade:.2f})" stroke="#222222"/>')

    parts.append("</svg>")
    Path(out_path).write_text("\n".join(parts) + "\n", encoding="utf-8")
