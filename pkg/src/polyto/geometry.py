"""Convex-polygon design parameterization and its differentiable density map.

A design is the union of K convex polygons, each the feasible set of S
halfspaces. The j-th face of polygon i has unit normal at angle
``alpha[i] + 2*pi*j/S`` and sits at perpendicular distance ``d[i, j]``
from the polygon center. Fixing the face angles this way keeps every
polygon bounded and non-empty for any d >= 0.

The parameter-to-density map is smooth everywhere: halfspace signed
distances are combined with log-sum-exp (a smooth max), squashed through
a sigmoid, and unioned across polygons with a q-norm. An exact vertex
extractor (halfspace clipping) is provided alongside for export and for
cross-checking the smooth pipeline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError

TWO_PI = 2.0 * math.pi


@dataclass
class PolygonSet:
    """K convex polygons, each defined by S equiangular halfspaces.

    Attributes
    ----------
    cx, cy : (K,) center coordinates, length units
    alpha  : (K,) angular offset of each polygon's first face normal
    d      : (K, S) perpendicular face distances from the center, >= 0
    """

    cx: np.ndarray
    cy: np.ndarray
    alpha: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        self.cx = np.atleast_1d(np.asarray(self.cx, dtype=float))
        self.cy = np.atleast_1d(np.asarray(self.cy, dtype=float))
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.d = np.atleast_2d(np.asarray(self.d, dtype=float))
        K, S = self.d.shape
        if K < 1 or S < 3:
            raise ConfigurationError(f"need K >= 1 and S >= 3, got K={K}, S={S}")
        if not (self.cx.shape == self.cy.shape == self.alpha.shape == (K,)):
            raise ConfigurationError("cx, cy, alpha must all have shape (K,)")
        if np.any(self.d < 0.0):
            raise ConfigurationError("face distances d must be non-negative")

    @property
    def K(self) -> int:
        return self.d.shape[0]

    @property
    def S(self) -> int:
        return self.d.shape[1]

    def face_angles(self) -> np.ndarray:
        """(K, S) face normal angles; always derived from alpha, never stored."""
        return self.alpha[:, None] + TWO_PI * np.arange(self.S)[None, :] / self.S

    def copy(self) -> "PolygonSet":
        return PolygonSet(self.cx.copy(), self.cy.copy(), self.alpha.copy(), self.d.copy())


@dataclass
class Bounds:
    """Lower/upper bounds used to map normalized variables to parameters."""

    cx: tuple
    cy: tuple
    alpha: tuple = (0.0, TWO_PI)
    d: tuple = (0.0, 1.0)

    def validate(self):
        for name in ("cx", "cy", "alpha", "d"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ConfigurationError(f"invalid {name} bounds ({lo}, {hi})")

    def lowers(self, K: int, S: int) -> np.ndarray:
        return np.concatenate([
            np.full(K, self.cx[0]),
            np.full(K, self.cy[0]),
            np.full(K, self.alpha[0]),
            np.full(K * S, self.d[0]),
        ])

    def widths(self, K: int, S: int) -> np.ndarray:
        return np.concatenate([
            np.full(K, self.cx[1] - self.cx[0]),
            np.full(K, self.cy[1] - self.cy[0]),
            np.full(K, self.alpha[1] - self.alpha[0]),
            np.full(K * S, self.d[1] - self.d[0]),
        ])


def n_design_vars(K: int, S: int) -> int:
    return K * (S + 3)


@dataclass
class DesignVector:
    """Normalized design variables z in [0,1]^{K(S+3)}.

    Layout: [z_cx (K), z_cy (K), z_alpha (K), z_d (K*S, polygon-major)].
    """

    z: np.ndarray
    bounds: Bounds
    K: int
    S: int

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        if self.z.shape != (n_design_vars(self.K, self.S),):
            raise ConfigurationError(
                f"design vector length {self.z.size} != K(S+3) = {n_design_vars(self.K, self.S)}"
            )
        self.bounds.validate()


def split_design(z: np.ndarray, K: int, S: int):
    """Split a flat design vector into (cx, cy, alpha, d) blocks."""
    z = np.asarray(z)
    if z.shape != (n_design_vars(K, S),):
        raise ConfigurationError(
            f"design vector length {z.size} != K(S+3) = {n_design_vars(K, S)}"
        )
    return z[:K], z[K:2 * K], z[2 * K:3 * K], z[3 * K:].reshape(K, S)


def unnormalize(dv: DesignVector) -> PolygonSet:
    """Map normalized variables to physical polygon parameters.

    Each parameter is ``lower + (upper - lower) * z``; the inverse exists
    whenever the bound width is positive.
    """
    b = dv.bounds
    zcx, zcy, zal, zd = split_design(dv.z, dv.K, dv.S)
    return PolygonSet(
        cx=b.cx[0] + (b.cx[1] - b.cx[0]) * zcx,
        cy=b.cy[0] + (b.cy[1] - b.cy[0]) * zcy,
        alpha=b.alpha[0] + (b.alpha[1] - b.alpha[0]) * zal,
        d=b.d[0] + (b.d[1] - b.d[0]) * zd,
    )


def normalize(polys: PolygonSet, bounds: Bounds) -> DesignVector:
    """Inverse of :func:`unnormalize`; requires positive bound widths."""
    bounds.validate()

    def norm1(v, lo, hi):
        if hi <= lo:
            raise ConfigurationError(f"cannot normalize with zero-width bounds ({lo}, {hi})")
        return (np.asarray(v, dtype=float) - lo) / (hi - lo)

    z = np.concatenate([
        norm1(polys.cx, *bounds.cx),
        norm1(polys.cy, *bounds.cy),
        norm1(polys.alpha, *bounds.alpha),
        norm1(polys.d, *bounds.d).ravel(),
    ])
    return DesignVector(z, bounds, polys.K, polys.S)


@dataclass
class ProjectionParams:
    """Hyperparameters of the SDF-to-density projection."""

    beta: float = 10.0
    q: float = 8.0
    clamp_union: bool = True

    def __post_init__(self):
        if not self.beta > 0.0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}")
        if not self.q >= 1.0:
            raise ConfigurationError(f"q must be >= 1, got {self.q}")


def halfspace_sdf(x, y, cx, cy, theta, d):
    """Signed distance to a halfspace boundary: negative inside, zero on it."""
    return (np.asarray(x) - cx) * np.cos(theta) + (np.asarray(y) - cy) * np.sin(theta) - d


def _halfspace_values(polys: PolygonSet, i: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """(S, N) halfspace signed distances of polygon i at the given points."""
    th = polys.face_angles()[i]
    return (
        np.cos(th)[:, None] * (x[None, :] - polys.cx[i])
        + np.sin(th)[:, None] * (y[None, :] - polys.cy[i])
        - polys.d[i][:, None]
    )


def _logsumexp(a: np.ndarray, axis: int = 0) -> np.ndarray:
    """Shifted log-sum-exp; safe against overflow of exp."""
    m = np.max(a, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))).squeeze(axis)


def polygon_sdf(x, y, i: int, polys: PolygonSet):
    """Approximate signed distance to polygon i: log-sum-exp of its halfspaces.

    Overestimates the exact max by at most ln(S); not a unit-gradient field.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scalar = x.ndim == 0
    phi = _logsumexp(_halfspace_values(polys, i, np.atleast_1d(x).ravel(), np.atleast_1d(y).ravel()))
    return float(phi[0]) if scalar else phi.reshape(x.shape)


def project_density(phi, beta: float):
    """Map a signed distance to a density in (0, 1).

    Negative (interior) distances project toward 1, positive toward 0, with
    value 1/2 on the boundary; beta sets the transition sharpness.
    """
    if not beta > 0.0:
        raise ConfigurationError(f"beta must be positive, got {beta}")
    return expit(-beta * np.asarray(phi, dtype=float))


def union_density(rho_hats, q: float, clamp_union: bool = True):
    """Combine per-polygon densities into one field via a q-norm union.

    The result always dominates the elementwise max; with ``clamp_union``
    the overshoot where polygons overlap is cut at 1.
    """
    r = np.asarray(rho_hats, dtype=float)
    m = np.max(r, axis=0)
    safe = np.where(m > 0.0, m, 1.0)
    raw = safe * np.sum((r / safe) ** q, axis=0) ** (1.0 / q)
    raw = np.where(m > 0.0, raw, 0.0)
    return np.minimum(raw, 1.0) if clamp_union else raw


@dataclass
class DensityField:
    """Densities at evaluation points plus the intermediates sensitivities need.

    Attributes
    ----------
    rho     : (N,) final (possibly clamped) density per point
    rho_raw : (N,) unclamped q-norm union, used for clamp subgradients
    rho_hat : (K, N) per-polygon projected densities
    phi     : (K, N) per-polygon smooth signed distances
    """

    rho: np.ndarray
    rho_raw: np.ndarray
    rho_hat: np.ndarray
    phi: np.ndarray


def density_field(polys: PolygonSet, x, y, params: ProjectionParams) -> DensityField:
    """Evaluate the full design density at the given points (element centers)."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    K = polys.K
    phi = np.empty((K, x.size))
    for i in range(K):
        phi[i] = _logsumexp(_halfspace_values(polys, i, x, y))
    rho_hat = project_density(phi, params.beta)
    rho_raw = union_density(rho_hat, params.q, clamp_union=False)
    rho = np.minimum(rho_raw, 1.0) if params.clamp_union else rho_raw
    return DensityField(rho=rho, rho_raw=rho_raw, rho_hat=rho_hat, phi=phi)


def _clip_halfspace(points, nx, ny, cx, cy, dist):
    """Sutherland-Hodgman clip of a polygon against one halfspace (phi <= 0)."""
    if not points:
        return []
    out = []
    fa = None
    a = points[-1]
    fa = nx * (a[0] - cx) + ny * (a[1] - cy) - dist
    for b in points:
        fb = nx * (b[0] - cx) + ny * (b[1] - cy) - dist
        if fb <= 0.0:
            if fa > 0.0:
                t = fa / (fa - fb)
                out.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
            out.append(b)
        elif fa <= 0.0:
            t = fa / (fa - fb)
            out.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
        a, fa = b, fb
    return out


def polygon_vertices(polys: PolygonSet, i: int) -> np.ndarray:
    """Exact boundary vertices of polygon i, counterclockwise.

    Clips a bounding square (side 4*max(d)+1, always containing every
    active vertex) successively against each face. Faces cut off by their
    neighbors contribute no vertex, so fewer than S vertices may return.
    """
    d = polys.d[i]
    cx, cy = float(polys.cx[i]), float(polys.cy[i])
    half = 2.0 * float(d.max()) + 0.5
    pts = [(cx - half, cy - half), (cx + half, cy - half),
           (cx + half, cy + half), (cx - half, cy + half)]
    th = polys.face_angles()[i]
    for j in range(polys.S):
        pts = _clip_halfspace(pts, math.cos(th[j]), math.sin(th[j]), cx, cy, float(d[j]))
        if not pts:
            return np.zeros((0, 2))
    # drop duplicate vertices created by faces passing exactly through a corner
    eps = 1e-9 * (1.0 + float(d.max()))
    out = []
    for p in pts:
        if not out or math.hypot(p[0] - out[-1][0], p[1] - out[-1][1]) > eps:
            out.append(p)
    if len(out) > 1 and math.hypot(out[0][0] - out[-1][0], out[0][1] - out[-1][1]) <= eps:
        out.pop()
    return np.asarray(out, dtype=float).reshape(-1, 2)


def polygon_area(vertices: np.ndarray) -> float:
    """Shoelace area of a simple polygon; positive for counterclockwise input."""
    v = np.asarray(vertices, dtype=float)
    if v.shape[0] < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def clip_to_rect(vertices: np.ndarray, lx: float, ly: float) -> np.ndarray:
    """Clip a convex polygon to the domain rectangle [0,lx] x [0,ly]."""
    pts = [tuple(p) for p in np.asarray(vertices, dtype=float)]
    # four halfspaces: -x <= 0, x - lx <= 0, -y <= 0, y - ly <= 0
    for nx, ny, dist in ((-1.0, 0.0, 0.0), (1.0, 0.0, lx), (0.0, -1.0, 0.0), (0.0, 1.0, ly)):
        pts = _clip_halfspace(pts, nx, ny, 0.0, 0.0, dist)
        if not pts:
            return np.zeros((0, 2))
    return np.asarray(pts, dtype=float)


def init_grid(K: int, S: int, lx: float, ly: float, kx: int, ky: int,
              radius: float, alpha0: float = 0.0) -> PolygonSet:
    """Equi-spaced, equi-sized polygons on a kx-by-ky grid of cell centers."""
    if kx * ky != K:
        raise ConfigurationError(f"grid {kx}x{ky} holds {kx * ky} polygons, need K={K}")
    if not radius > 0.0:
        raise ConfigurationError(f"initial radius must be positive, got {radius}")
    ix = np.arange(kx)
    iy = np.arange(ky)
    cx = np.tile((ix + 0.5) * lx / kx, ky)
    cy = np.repeat((iy + 0.5) * ly / ky, kx)
    return PolygonSet(
        cx=cx,
        cy=cy,
        alpha=np.full(K, float(alpha0)),
        d=np.full((K, S), float(radius)),
    )


def grid_radius_for_volume(K: int, S: int, lx: float, ly: float, vf_star: float) -> float:
    """Face distance making K regular S-gons cover vf_star of the domain area.

    A regular S-gon with face distance r has area S * r^2 * tan(pi/S); this
    matches the shoelace area of its extracted vertices exactly.
    """
    if not 0.0 < vf_star <= 1.0:
        raise ConfigurationError(f"vf_star must be in (0, 1], got {vf_star}")
    return math.sqrt(vf_star * lx * ly / (K * S * math.tan(math.pi / S)))
