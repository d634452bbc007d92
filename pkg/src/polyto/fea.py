"""Linear elasticity on a structured quad mesh with SIMP material interpolation.

Plane stress, bilinear quadrilateral elements, unit thickness. Nodes are
numbered ``n = iy * (nelx + 1) + ix`` with y increasing upward and DOFs
``(2n, 2n + 1) = (u_x, u_y)``. Elements are numbered ``e = ey * nelx + ex``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, SolverError
from .geometry import DensityField

RESIDUAL_TOL = 1e-9


def simp_modulus(rho, p: float, E0: float, Emin: float):
    """Penalized Young's modulus: Emin + (E0 - Emin) * rho**p."""
    return Emin + (E0 - Emin) * np.asarray(rho, dtype=float) ** p


def _shape_gradients(xi: float, eta: float):
    """d/dxi and d/deta of the four bilinear shape functions.

    Corner order: (-1,-1), (1,-1), (1,1), (-1,1) -- counterclockwise from
    the bottom-left node.
    """
    dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
    deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
    return dxi, deta


def _strain_matrix(xi: float, eta: float, dx: float, dy: float) -> np.ndarray:
    """3x8 strain-displacement matrix for a rectangle of size dx x dy."""
    dxi, deta = _shape_gradients(xi, eta)
    dndx = dxi * 2.0 / dx
    dndy = deta * 2.0 / dy
    B = np.zeros((3, 8))
    B[0, 0::2] = dndx
    B[1, 1::2] = dndy
    B[2, 0::2] = dndy
    B[2, 1::2] = dndx
    return B


def plane_stress_matrix(nu: float) -> np.ndarray:
    """Unit-modulus plane-stress constitutive matrix."""
    return np.array([
        [1.0, nu, 0.0],
        [nu, 1.0, 0.0],
        [0.0, 0.0, 0.5 * (1.0 - nu)],
    ]) / (1.0 - nu * nu)


def element_stiffness_unit(nu: float, dx: float, dy: float) -> np.ndarray:
    """8x8 element stiffness for unit Young's modulus, 2x2 Gauss quadrature.

    Symmetric, with exactly three zero eigenvalues (the 2D rigid-body modes);
    scaled by the element modulus at assembly time.
    """
    if not (0.0 < nu < 0.5):
        raise ConfigurationError(f"Poisson ratio must be in (0, 0.5), got {nu}")
    if dx <= 0.0 or dy <= 0.0:
        raise ConfigurationError(f"element sizes must be positive, got dx={dx}, dy={dy}")
    D0 = plane_stress_matrix(nu)
    g = 1.0 / np.sqrt(3.0)
    ke = np.zeros((8, 8))
    detJ = 0.25 * dx * dy
    for xi, eta in ((-g, -g), (g, -g), (g, g), (-g, g)):
        B = _strain_matrix(xi, eta, dx, dy)
        ke += B.T @ D0 @ B * detJ
    return ke


@dataclass
class MeshProblem:
    """Structured-mesh elasticity problem: geometry, material, loads, supports."""

    nelx: int
    nely: int
    lx: float
    ly: float
    E0: float
    Emin: float
    nu: float
    p: float
    fixed_dofs: np.ndarray
    f: np.ndarray

    edof: np.ndarray = field(init=False, repr=False)
    free_dofs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.nelx < 1 or self.nely < 1:
            raise ConfigurationError("mesh needs at least one element each way")
        if not (self.E0 > self.Emin > 0.0):
            raise ConfigurationError(f"need E0 > Emin > 0, got E0={self.E0}, Emin={self.Emin}")
        if not (0.0 < self.nu < 0.5):
            raise ConfigurationError(f"Poisson ratio must be in (0, 0.5), got {self.nu}")
        self.fixed_dofs = np.unique(np.asarray(self.fixed_dofs, dtype=int))
        self.f = np.asarray(self.f, dtype=float)
        if self.fixed_dofs.size == 0:
            raise ConfigurationError("no fixed DOFs: structure would float freely")
        if self.f.shape != (self.ndof,):
            raise ConfigurationError(f"load vector length {self.f.size} != ndof {self.ndof}")
        if np.any(self.fixed_dofs < 0) or np.any(self.fixed_dofs >= self.ndof):
            raise ConfigurationError("fixed DOF index out of range")
        if np.any(self.f[self.fixed_dofs] != 0.0):
            raise ConfigurationError("load vector must be zero on fixed DOFs")

        eys, exs = np.divmod(np.arange(self.n_elements), self.nelx)
        n1 = eys * (self.nelx + 1) + exs
        n2 = n1 + 1
        n3 = n2 + self.nelx + 1
        n4 = n1 + self.nelx + 1
        self.edof = np.column_stack([
            2 * n1, 2 * n1 + 1, 2 * n2, 2 * n2 + 1,
            2 * n3, 2 * n3 + 1, 2 * n4, 2 * n4 + 1,
        ])
        self.free_dofs = np.setdiff1d(np.arange(self.ndof), self.fixed_dofs)

    @property
    def dx(self) -> float:
        return self.lx / self.nelx

    @property
    def dy(self) -> float:
        return self.ly / self.nely

    @property
    def n_elements(self) -> int:
        return self.nelx * self.nely

    @property
    def ndof(self) -> int:
        return 2 * (self.nelx + 1) * (self.nely + 1)

    @property
    def element_area(self) -> float:
        return self.dx * self.dy

    @property
    def domain_area(self) -> float:
        return self.lx * self.ly

    def node_id(self, ix: int, iy: int) -> int:
        return iy * (self.nelx + 1) + ix

    def element_centers(self):
        """(xe, ye) arrays of element-center coordinates, element order e = ey*nelx + ex."""
        xe = np.tile((np.arange(self.nelx) + 0.5) * self.dx, self.nely)
        ye = np.repeat((np.arange(self.nely) + 0.5) * self.dy, self.nelx)
        return xe, ye

    def element_stiffness_unit(self) -> np.ndarray:
        return element_stiffness_unit(self.nu, self.dx, self.dy)


@dataclass
class FeaSolution:
    """Nodal displacements, compliance f.u, and the reusable factorization."""

    u: np.ndarray
    compliance: float
    factor: object


def assemble_solve(density, problem: MeshProblem, ke0: np.ndarray | None = None) -> FeaSolution:
    """Assemble the SIMP-scaled global stiffness and solve K u = f.

    ``density`` is a DensityField or a plain per-element array. The reduced
    system is solved by sparse LU; the relative residual must come in under
    1e-9 or a SolverError is raised.
    """
    rho = density.rho if isinstance(density, DensityField) else np.asarray(density, dtype=float)
    if rho.shape != (problem.n_elements,):
        raise ConfigurationError(
            f"density length {rho.size} != number of elements {problem.n_elements}"
        )
    if problem.fixed_dofs.size < 3:
        raise ConfigurationError("at least 3 constrained DOFs are needed to pin rigid modes")
    if ke0 is None:
        ke0 = problem.element_stiffness_unit()

    E = simp_modulus(rho, problem.p, problem.E0, problem.Emin)
    data = (E[:, None, None] * ke0).ravel()
    rows = np.repeat(problem.edof, 8, axis=1).ravel()
    cols = np.tile(problem.edof, (1, 8)).ravel()
    Kmat = sp.coo_matrix((data, (rows, cols)), shape=(problem.ndof, problem.ndof)).tocsr()

    free = problem.free_dofs
    Kred = Kmat[free, :][:, free].tocsc()
    fred = problem.f[free]

    try:
        lu = spla.splu(Kred)
    except RuntimeError as exc:
        raise SolverError(
            f"reduced stiffness matrix could not be factorized ({exc}); "
            "constraints are insufficient to remove rigid-body modes"
        ) from exc

    u = np.zeros(problem.ndof)
    fnorm = np.linalg.norm(fred)
    if fnorm > 0.0:
        ured = lu.solve(fred)
        if not np.all(np.isfinite(ured)):
            raise SolverError(
                "singular or indefinite reduced stiffness matrix; "
                "constraints are insufficient to remove rigid-body modes"
            )
        residual = np.linalg.norm(Kred @ ured - fred) / fnorm
        if residual > RESIDUAL_TOL:
            raise SolverError(
                f"linear solve did not converge: relative residual {residual:.3e} "
                f"> {RESIDUAL_TOL:.1e}"
            )
        u[free] = ured
    return FeaSolution(u=u, compliance=float(problem.f @ u), factor=lu)


def problem_library(name: str, nelx: int, nely: int, lx: float, ly: float,
                    E0: float = 1.0, Emin: float | None = None,
                    nu: float = 0.3, p: float = 3.0) -> MeshProblem:
    """Canonical benchmark problems.

    mid_cantilever : left edge fully clamped, unit downward point load at the
        right edge's mid-height node (ties round up).
    mbb : symmetric half model; u_x = 0 along the left edge, u_y = 0 at the
        bottom-right node, unit downward load at the top-left node.
    """
    if Emin is None:
        Emin = 1e-3 * E0
    ncols = nelx + 1
    ndof = 2 * ncols * (nely + 1)
    f = np.zeros(ndof)

    if name == "mid_cantilever":
        left_nodes = np.arange(nely + 1) * ncols
        fixed = np.concatenate([2 * left_nodes, 2 * left_nodes + 1])
        load_node = ((nely + 1) // 2) * ncols + nelx
        f[2 * load_node + 1] = -1.0
    elif name == "mbb":
        left_nodes = np.arange(nely + 1) * ncols
        fixed = np.concatenate([2 * left_nodes, [2 * nelx + 1]])
        load_node = nely * ncols
        f[2 * load_node + 1] = -1.0
    else:
        raise ConfigurationError(
            f"unknown problem '{name}'; valid names: mid_cantilever, mbb"
        )
    return MeshProblem(nelx=nelx, nely=nely, lx=lx, ly=ly, E0=E0, Emin=Emin,
                       nu=nu, p=p, fixed_dofs=fixed, f=f)
