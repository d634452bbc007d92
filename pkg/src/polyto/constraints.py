"""Volume and minimum-edge-length constraints on the polygon design."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .geometry import PolygonSet


@dataclass
class ConstraintConfig:
    """Volume budget and optional minimum edge length."""

    vf_star: float
    l_star: float | None = None

    def __post_init__(self):
        if not 0.0 < self.vf_star <= 1.0:
            raise ConfigurationError(f"vf_star must be in (0, 1], got {self.vf_star}")
        if self.l_star is not None and not self.l_star > 0.0:
            raise ConfigurationError(f"l_star must be positive, got {self.l_star}")


def volume_constraint(rho, element_area, vf_star: float, domain_area: float) -> float:
    """g_v = sum(rho_e * v_e) / (vf_star * |domain|) - 1; feasible iff <= 0."""
    material = float(np.sum(np.asarray(rho, dtype=float) * element_area))
    return material / (vf_star * domain_area) - 1.0


def edge_lengths(polys: PolygonSet, i: int) -> np.ndarray:
    """Edge lengths of polygon i from its face distances alone.

    l_j = (d_{j+1} + d_{j-1} - 2 d_j cos g) / sin g with g = 2*pi/S and
    cyclic indices. A negative value means face j is cut off by its
    neighbors and contributes no edge.
    """
    d = polys.d[i]
    gamma = 2.0 * math.pi / polys.S
    return (np.roll(d, -1) + np.roll(d, 1) - 2.0 * d * math.cos(gamma)) / math.sin(gamma)


def all_edge_lengths(polys: PolygonSet) -> np.ndarray:
    """(K, S) edge lengths for every face of every polygon."""
    gamma = 2.0 * math.pi / polys.S
    d = polys.d
    return (np.roll(d, -1, axis=1) + np.roll(d, 1, axis=1)
            - 2.0 * d * math.cos(gamma)) / math.sin(gamma)


def smooth_min_length(lengths) -> float:
    """Smooth minimum of edge lengths: -LSE(-l), within ln(n) below the true min."""
    flat = np.asarray(lengths, dtype=float).ravel()
    if flat.size == 0:
        raise ConfigurationError("smooth_min_length needs at least one length")
    m = np.max(-flat)
    return float(-(m + math.log(np.sum(np.exp(-flat - m)))))


def min_length_constraint(l_min: float, l_star: float) -> float:
    """g_l = 1 - l_min / l_star; feasible iff <= 0.

    Because the smooth minimum underestimates the true minimum, feasibility
    guarantees every true edge length is at least l_star.
    """
    if not l_star > 0.0:
        raise ConfigurationError(f"l_star must be positive, got {l_star}")
    return 1.0 - l_min / l_star
