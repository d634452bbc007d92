"""File exports: history CSV, density CSV, polygons JSON, displacements CSV, SVG."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .geometry import PolygonSet, clip_to_rect, polygon_vertices

HISTORY_HEADER = "iter,J,g_v,g_l,kkt_norm,step_norm,seconds"


def format_history_row(rec) -> str:
    vals = [rec.J, rec.g_v, rec.g_l, rec.kkt_norm, rec.step_norm, rec.seconds]
    return f"{rec.iteration}," + ",".join(f"{v:.12e}" for v in vals)


def write_history_csv(records, path):
    lines = [HISTORY_HEADER] + [format_history_row(r) for r in records]
    Path(path).write_text("\n".join(lines) + "\n")


def write_density_csv(rho: np.ndarray, nelx: int, nely: int, lx: float, ly: float, path):
    """nely rows of nelx densities, top row first; header line carries nelx,nely,lx,ly."""
    grid = np.asarray(rho, dtype=float).reshape(nely, nelx)
    lines = [f"# {nelx},{nely},{lx!r},{ly!r}"]
    for row in grid[::-1]:  # highest y first
        lines.append(",".join(f"{v:.9g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_density_csv(path):
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].lstrip("# ").split(",")
    nelx, nely = int(header[0]), int(header[1])
    lx, ly = float(header[2]), float(header[3])
    grid = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    if grid.shape != (nely, nelx):
        raise ConfigurationError(f"density grid shape {grid.shape} != ({nely}, {nelx})")
    return grid[::-1].ravel(), nelx, nely, lx, ly


def write_polygons_json(polys: PolygonSet, lx: float, ly: float, path):
    doc = {
        "K": polys.K,
        "S": polys.S,
        "lx": lx,
        "ly": ly,
        "polygons": [
            {
                "cx": float(polys.cx[i]),
                "cy": float(polys.cy[i]),
                "alpha": float(polys.alpha[i]),
                "d": [float(v) for v in polys.d[i]],
            }
            for i in range(polys.K)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_polygons_json(path):
    doc = json.loads(Path(path).read_text())
    K, S = int(doc["K"]), int(doc["S"])
    recs = doc["polygons"]
    if len(recs) != K or any(len(r["d"]) != S for r in recs):
        raise ConfigurationError(f"polygons.json inconsistent with header K={K}, S={S}")
    polys = PolygonSet(
        cx=np.array([r["cx"] for r in recs]),
        cy=np.array([r["cy"] for r in recs]),
        alpha=np.array([r["alpha"] for r in recs]),
        d=np.array([r["d"] for r in recs]),
    )
    return polys, float(doc["lx"]), float(doc["ly"])


def write_displacements_csv(u: np.ndarray, path):
    u = np.asarray(u, dtype=float)
    lines = ["node,ux,uy"]
    for node in range(u.size // 2):
        lines.append(f"{node},{u[2 * node]:.12e},{u[2 * node + 1]:.12e}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_design_svg(polys: PolygonSet, lx: float, ly: float, path,
                     density: np.ndarray | None = None,
                     mesh_shape: tuple | None = None, scale: float = 10.0):
    """Domain rectangle with the polygons clipped to it, optional density underlay."""
    w, h = lx * scale, ly * scale
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {lx!r} {ly!r}">',
        # flip y so the model's y-up convention renders upright
        f'<g transform="translate(0,{ly!r}) scale(1,-1)">',
        f'<rect x="0" y="0" width="{lx!r}" height="{ly!r}" fill="white" stroke="black" '
        f'stroke-width="{0.4 / scale * lx:.4f}"/>',
    ]
    if density is not None:
        if mesh_shape is None:
            raise ConfigurationError("density underlay needs mesh_shape = (nelx, nely)")
        nelx, nely = mesh_shape
        grid = np.asarray(density, dtype=float).reshape(nely, nelx)
        dx, dy = lx / nelx, ly / nely
        for ey in range(nely):
            for ex in range(nelx):
                v = grid[ey, ex]
                if v < 0.02:
                    continue
                shade = int(round(255 * (1.0 - v)))
                parts.append(
                    f'<rect x="{ex * dx:.4f}" y="{ey * dy:.4f}" width="{dx:.4f}" '
                    f'height="{dy:.4f}" fill="rgb({shade},{shade},{shade})"/>'
                )
    for i in range(polys.K):
        verts = clip_to_rect(polygon_vertices(polys, i), lx, ly)
        if verts.shape[0] < 3:
            continue
        pts = " ".join(f"{x:.6f},{y:.6f}" for x, y in verts)
        parts.append(
            f'<polygon points="{pts}" fill="#4682b4" fill-opacity="0.55" '
            f'stroke="#23395d" stroke-width="{0.6 / scale * lx:.4f}"/>'
        )
    parts.append("</g></svg>")
    Path(path).write_text("\n".join(parts) + "\n")
