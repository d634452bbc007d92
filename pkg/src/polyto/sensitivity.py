"""Analytic gradients of compliance and constraints w.r.t. the design vector.

Compliance is self-adjoint, so its density sensitivity needs no extra
solve: dJ/drho_e = -p rho^{p-1} (E0 - Emin) u_e' k0 u_e. From there (and
from the trivially linear volume sensitivity) a shared chain walks back
through q-norm union, sigmoid projection, log-sum-exp, and the halfspace
planes to the polygon parameters, then to the normalized variables.

A finite-difference harness verifies any scalar(z) against its analytic
gradient, skipping coordinates where the difference quotient itself is
unstable (clamp kinks, noise-dominated quotients).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constraints import all_edge_lengths
from .errors import ConfigurationError
from .fea import FeaSolution, MeshProblem
from .geometry import (DensityField, DesignVector, PolygonSet, ProjectionParams,
                       _halfspace_values, n_design_vars, unnormalize)


@dataclass
class GradientBundle:
    """Gradients of objective and constraints w.r.t. the normalized design vector."""

    dJ_dz: np.ndarray
    dgv_dz: np.ndarray
    dgl_dz: np.ndarray | None = None


def compliance_density_gradient(solution: FeaSolution, rho: np.ndarray,
                                problem: MeshProblem, ke0: np.ndarray) -> np.ndarray:
    """dJ/drho_e, always <= 0 for the self-adjoint compliance objective."""
    ue = solution.u[problem.edof]
    strain_energy = np.einsum("ei,ij,ej->e", ue, ke0, ue)
    return -problem.p * rho ** (problem.p - 1.0) * (problem.E0 - problem.Emin) * strain_energy


def density_param_gradient(dF_drho: np.ndarray, polys: PolygonSet,
                           x: np.ndarray, y: np.ndarray, field: DensityField,
                           params: ProjectionParams) -> np.ndarray:
    """Chain dF/drho back to the physical polygon parameters.

    Returns a flat gradient in the design-vector layout
    [cx (K), cy (K), alpha (K), d (K*S)] but in physical units.
    """
    K, S = polys.K, polys.S
    th = polys.face_angles()

    # union factor (rho_hat_k / rho_raw)^(q-1), bounded in [0, 1]; zero where
    # clamped (hard-min subgradient) or where everything underflowed to 0
    safe_raw = np.where(field.rho_raw > 0.0, field.rho_raw, 1.0)
    union_fac = (field.rho_hat / safe_raw) ** (params.q - 1.0)
    union_fac[:, field.rho_raw <= 0.0] = 0.0
    if params.clamp_union:
        union_fac[:, field.rho_raw > 1.0] = 0.0

    sigmoid_fac = -params.beta * field.rho_hat * (1.0 - field.rho_hat)
    s = dF_drho[None, :] * union_fac * sigmoid_fac  # (K, N)

    out = np.zeros(n_design_vars(K, S))
    d_block = out[3 * K:].reshape(K, S)
    for i in range(K):
        a = _halfspace_values(polys, i, x, y)          # (S, N)
        w = np.exp(a - field.phi[i][None, :])          # softmax weights, <= 1
        ws = w * s[i][None, :]
        ws_face = ws.sum(axis=1)                       # (S,)
        cos_t, sin_t = np.cos(th[i]), np.sin(th[i])
        out[i] = -float(cos_t @ ws_face)
        out[K + i] = -float(sin_t @ ws_face)
        da_dalpha = (-(x[None, :] - polys.cx[i]) * sin_t[:, None]
                     + (y[None, :] - polys.cy[i]) * cos_t[:, None])
        out[2 * K + i] = float(np.sum(ws * da_dalpha))
        d_block[i] = -ws_face
    return out


def _to_design_space(param_grad: np.ndarray, dv: DesignVector) -> np.ndarray:
    return param_grad * dv.bounds.widths(dv.K, dv.S)


def _require(cache, name: str):
    if cache is None:
        raise ConfigurationError(f"gradient requires the cached {name} from the evaluation")
    return cache


def grad_objective(dv: DesignVector, field: DensityField, solution: FeaSolution,
                   problem: MeshProblem, params: ProjectionParams,
                   ke0: np.ndarray | None = None) -> np.ndarray:
    """dJ/dz via the adjoint compliance chain."""
    field = _require(field, "density field")
    solution = _require(solution, "FEA solution")
    if ke0 is None:
        ke0 = problem.element_stiffness_unit()
    dJ_drho = compliance_density_gradient(solution, field.rho, problem, ke0)
    x, y = problem.element_centers()
    return _to_design_space(
        density_param_gradient(dJ_drho, unnormalize(dv), x, y, field, params), dv)


def grad_volume(dv: DesignVector, field: DensityField, problem: MeshProblem,
                vf_star: float, params: ProjectionParams) -> np.ndarray:
    """dg_v/dz; the density sensitivity is the constant v_e / (vf* |domain|)."""
    field = _require(field, "density field")
    dgv_drho = np.full(problem.n_elements,
                       problem.element_area / (vf_star * problem.domain_area))
    x, y = problem.element_centers()
    return _to_design_space(
        density_param_gradient(dgv_drho, unnormalize(dv), x, y, field, params), dv)


def grad_minlength(dv: DesignVector, l_star: float) -> np.ndarray:
    """dg_l/dz; exactly zero on every center and alpha slot."""
    if not l_star > 0.0:
        raise ConfigurationError(f"l_star must be positive, got {l_star}")
    polys = unnormalize(dv)
    K, S = polys.K, polys.S
    lengths = all_edge_lengths(polys)                 # (K, S)
    neg = -lengths.ravel()
    m = neg.max()
    w = np.exp(neg - m)
    softmin = (w / w.sum()).reshape(K, S)             # d l_min / d l
    dgl_dl = -softmin / l_star
    gamma = 2.0 * math.pi / S
    dgl_dd = (np.roll(dgl_dl, 1, axis=1) + np.roll(dgl_dl, -1, axis=1)
              - 2.0 * math.cos(gamma) * dgl_dl) / math.sin(gamma)
    out = np.zeros(n_design_vars(K, S))
    out[3 * K:] = dgl_dd.ravel()
    return _to_design_space(out, dv)


def _central_difference(f, z: np.ndarray, i: int, h: float) -> float:
    """Box-aware central difference along coordinate i within [0, 1]."""
    hp = min(h, 1.0 - z[i])
    hm = min(h, z[i])
    if hp + hm <= 0.0:
        raise ConfigurationError(f"coordinate {i} has no room for a step of {h}")
    zp = z.copy()
    zp[i] += hp
    zm = z.copy()
    zm[i] -= hm
    fp, fm = f(zp), f(zm)
    if not (math.isfinite(fp) and math.isfinite(fm)):
        raise ConfigurationError(f"non-finite function value while differencing coordinate {i}")
    return (fp - fm) / (hp + hm)


def fd_check(f, analytic: np.ndarray, z: np.ndarray, h: float = 1e-6,
             floor: float = 1e-8, kink_rtol: float = 1e-3) -> float:
    """Worst relative analytic-vs-central-difference error over the coordinates.

    Coordinates with |analytic| <= floor are ignored, as are coordinates
    where quotients at h and h/10 disagree (a clamp kink inside the stencil
    or a noise-dominated quotient; neither can be checked by differencing).
    """
    if not h > 0.0:
        raise ConfigurationError(f"step h must be positive, got {h}")
    z = np.asarray(z, dtype=float)
    analytic = np.asarray(analytic, dtype=float)
    worst = 0.0
    for i in range(z.size):
        a = analytic[i]
        if abs(a) <= floor:
            continue
        fd1 = _central_difference(f, z, i, h)
        fd2 = _central_difference(f, z, i, h / 10.0)
        if abs(fd1 - fd2) > kink_rtol * max(abs(fd1), abs(fd2), floor):
            continue
        worst = max(worst, abs(fd1 - a) / max(abs(a), floor))
    return worst
