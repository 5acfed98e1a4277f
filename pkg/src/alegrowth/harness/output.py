"""CSV/JSON persistence and minimal SVG rendering."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from ..cluster import BoundaryTrace
from ..sampling import Trajectory

__all__ = [
    "TRAJECTORY_COLUMNS",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_json",
    "to_jsonable",
    "render_cluster_svg",
    "render_angles_svg",
    "render_svg",
    "cluster_aspect",
]

TRAJECTORY_COLUMNS = ("step", "theta", "c", "d", "beta", "C_cum", "parent")


def _g17(x) -> str:
    return format(float(x), ".17g")


def _meta_line(meta: dict) -> str:
    return json.dumps(to_jsonable(meta), sort_keys=True, separators=(",", ":"))


def write_trajectory_csv(path, traj: Trajectory, meta: dict | None = None) -> Path:
    """One row per particle; reals with 17 significant digits, parent -1 when unknown.

    The first line is ``# {json}`` holding ``meta`` (default: params and seed).
    """
    from ..slitgeom import base_angle, length_from_capacity

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = length_from_capacity(traj.capacities) if traj.n else np.zeros(0)
    b = base_angle(traj.capacities) if traj.n else np.zeros(0)
    parents = traj.parents if traj.parents is not None else np.full(traj.n, -1)
    if meta is None:
        meta = {"params": traj.params, "seed": traj.seed}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# " + _meta_line(meta) + "\n")
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for k in range(traj.n):
            w.writerow([k + 1, _g17(traj.angles[k]), _g17(traj.capacities[k]), _g17(np.atleast_1d(d)[k]),
                        _g17(np.atleast_1d(b)[k]), _g17(traj.cum_capacity[k]), int(parents[k])])
    return path


def read_trajectory_csv(path) -> dict:
    """Columns of a trajectory CSV as arrays; ``meta`` holds the embedded header."""
    meta = {}
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for ln in lines:
        if ln.startswith("#"):
            meta = json.loads(ln[1:])
        else:
            body.append(ln)
    rows = list(csv.DictReader(body))
    out = {k: np.array([float(r[k]) for r in rows]) for k in TRAJECTORY_COLUMNS}
    out["meta"] = meta
    out["step"] = out["step"].astype(int)
    out["parent"] = out["parent"].astype(int)
    return out


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def cluster_aspect(points: np.ndarray, off_disk: float = 1e-9) -> float:
    """Principal-axis aspect ratio of the image points lying off the unit circle."""
    p = np.asarray(points)
    p = p[np.abs(p) > 1 + off_disk]
    if p.size < 3:
        return float("nan")
    xy = np.vstack([p.real, p.imag])
    ev = np.linalg.eigvalsh(np.cov(xy))
    if ev[0] <= 0:
        return float("inf")
    return float(math.sqrt(ev[1] / ev[0]))


def _fmt_points(xy: np.ndarray) -> str:
    return " ".join(f"{x:.6g},{y:.6g}" for x, y in xy)


def _svg_meta(meta: dict | None) -> str:
    return f"<metadata>{escape(_meta_line(meta))}</metadata>" if meta else ""


def render_cluster_svg(traces: Sequence[BoundaryTrace] | BoundaryTrace, title: str = "", size: int = 600,
                       meta: dict | None = None) -> str:
    """One closed polyline per trace, viewBox fitted to the traces' bounding box."""
    if isinstance(traces, BoundaryTrace):
        traces = [traces]
    pts = np.concatenate([t.points for t in traces])
    x0, x1 = pts.real.min(), pts.real.max()
    y0, y1 = pts.imag.min(), pts.imag.max()
    pad = 0.05 * max(x1 - x0, y1 - y0, 1e-12)
    w, h = x1 - x0 + 2 * pad, y1 - y0 + 2 * pad
    sw = max(w, h) / size
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size * h / w:.0f}" '
        f'viewBox="{x0 - pad:.6g} {-(y1 + pad):.6g} {w:.6g} {h:.6g}">',
        f"<title>{escape(title)}</title>" if title else "",
        _svg_meta(meta),
    ]
    for t in traces:
        xy = np.column_stack([t.points.real, -t.points.imag])
        out.append(f'<polyline fill="none" stroke="black" stroke-width="{sw:.3g}" points="{_fmt_points(xy)}"/>')
    out.append("</svg>")
    return "\n".join(s for s in out if s) + "\n"


def render_angles_svg(series: Sequence[Sequence[float]], labels: Sequence[str] = (), width: int = 800,
                      panel_height: int = 160, meta: dict | None = None) -> str:
    """Step plot of ``theta_k`` against ``k``; one stacked panel per series."""
    n = len(series)
    H = panel_height * max(n, 1)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{H}" viewBox="0 0 {width} {H}">']
    if meta:
        out.append(_svg_meta(meta))
    for i, s in enumerate(series):
        a = np.asarray(s, float)
        top = i * panel_height
        m = 30
        out.append(f'<rect x="{m}" y="{top + 10}" width="{width - 2 * m}" height="{panel_height - 30}" '
                   'fill="none" stroke="#999"/>')
        lab = labels[i] if i < len(labels) else f"series {i + 1}"
        out.append(f'<text x="{m}" y="{top + panel_height - 6}" font-size="11">{escape(lab)}</text>')
        if a.size == 0:
            continue
        lo, hi = float(a.min()), float(a.max())
        if hi - lo < 1e-300:
            lo, hi = lo - 1, hi + 1
        k = np.arange(a.size + 1)
        xs = m + (width - 2 * m) * k / max(a.size, 1)
        ys = top + 10 + (panel_height - 30) * (hi - a) / (hi - lo)
        xy = np.empty((2 * a.size, 2))
        xy[0::2, 0], xy[1::2, 0] = xs[:-1], xs[1:]
        xy[0::2, 1], xy[1::2, 1] = ys, ys
        out.append(f'<polyline fill="none" stroke="black" stroke-width="1" points="{_fmt_points(xy)}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_svg(obj, **kw) -> str:
    """Cluster SVG for traces, angle step plot for angle sequences."""
    if isinstance(obj, BoundaryTrace) or (isinstance(obj, (list, tuple)) and obj and isinstance(obj[0], BoundaryTrace)):
        return render_cluster_svg(obj, **kw)
    if isinstance(obj, np.ndarray) and obj.ndim == 1:
        obj = [obj]
    return render_angles_svg(obj, **kw)
