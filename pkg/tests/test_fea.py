import math

import numpy as np
import pytest

from polyto.errors import ConfigurationError, SolverError
from polyto.fea import (MeshProblem, assemble_solve, element_stiffness_unit,
                        plane_stress_matrix, problem_library, simp_modulus)


def stiffness_3x3_quadrature(nu, dx, dy):
    """Independent oracle: same integrand, 3x3 Gauss points, hand-rolled B."""
    D0 = np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]]) / (1.0 - nu**2)
    g = math.sqrt(3.0 / 5.0)
    pts = [(-g, 5.0 / 9.0), (0.0, 8.0 / 9.0), (g, 5.0 / 9.0)]
    ke = np.zeros((8, 8))
    for xi, wx in pts:
        for eta, wy in pts:
            dndxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
            dndeta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
            dndx = dndxi * 2.0 / dx
            dndy = dndeta * 2.0 / dy
            B = np.zeros((3, 8))
            B[0, 0::2] = dndx
            B[1, 1::2] = dndy
            B[2, 0::2] = dndy
            B[2, 1::2] = dndx
            ke += wx * wy * B.T @ D0 @ B * (dx * dy / 4.0)
    return ke


def dense_solve_oracle(rho, problem):
    """Assemble the global matrix with plain Python scatter and solve densely."""
    ke0 = stiffness_3x3_quadrature(problem.nu, problem.dx, problem.dy)
    K = np.zeros((problem.ndof, problem.ndof))
    E = simp_modulus(rho, problem.p, problem.E0, problem.Emin)
    for e in range(problem.n_elements):
        dofs = problem.edof[e]
        for a in range(8):
            for b in range(8):
                K[dofs[a], dofs[b]] += E[e] * ke0[a, b]
    free = problem.free_dofs
    u = np.zeros(problem.ndof)
    u[free] = np.linalg.solve(K[np.ix_(free, free)], problem.f[free])
    return u


class TestSimpModulus:
    def test_endpoints(self):
        assert simp_modulus(1.0, 3.0, 1.0, 1e-3) == pytest.approx(1.0)
        assert simp_modulus(0.0, 3.0, 1.0, 1e-3) == pytest.approx(1e-3)

    def test_halfway(self):
        assert simp_modulus(0.5, 3.0, 1.0, 1e-3) == pytest.approx(0.125875, abs=1e-12)

    def test_strictly_increasing(self):
        rho = np.linspace(0.0, 1.0, 50)
        E = simp_modulus(rho, 3.0, 1.0, 1e-3)
        assert np.all(np.diff(E) > 0.0)


class TestElementStiffness:
    def test_rigid_body_translations(self):
        ke = element_stiffness_unit(0.3, 0.6, 0.6)
        ux = np.array([1.0, 0.0] * 4)
        uy = np.array([0.0, 1.0] * 4)
        assert np.max(np.abs(ke @ ux)) < 1e-14
        assert np.max(np.abs(ke @ uy)) < 1e-14

    def test_rigid_body_rotation(self):
        dx, dy = 0.6, 0.4
        ke = element_stiffness_unit(0.3, dx, dy)
        corners = [(0.0, 0.0), (dx, 0.0), (dx, dy), (0.0, dy)]
        rot = np.array([(-y, x) for x, y in corners]).ravel()
        assert np.max(np.abs(ke @ rot)) < 1e-14

    def test_exactly_three_zero_eigenvalues(self):
        ke = element_stiffness_unit(0.3, 1.0, 0.5)
        eigs = np.sort(np.abs(np.linalg.eigvalsh(ke)))
        assert np.all(eigs[:3] < 1e-10)
        assert eigs[3] > 1e-3

    def test_symmetric(self):
        ke = element_stiffness_unit(0.25, 0.7, 0.3)
        assert np.max(np.abs(ke - ke.T)) <= 1e-12 * np.max(np.abs(ke))

    def test_matches_higher_order_quadrature(self):
        # the integrand is polynomial enough that 2x2 Gauss is exact; a 3x3
        # rule must agree to roundoff
        for nu, dx, dy in ((0.3, 1.0, 1.0), (0.3, 0.6, 0.6), (0.45, 0.5, 1.5)):
            ke = element_stiffness_unit(nu, dx, dy)
            oracle = stiffness_3x3_quadrature(nu, dx, dy)
            assert np.max(np.abs(ke - oracle)) < 1e-10

    def test_known_corner_entry_square_element(self):
        ke = element_stiffness_unit(0.3, 1.0, 1.0)
        assert ke[0, 0] == pytest.approx((0.5 - 0.3 / 6.0) / (1.0 - 0.09), rel=1e-12)

    def test_constitutive_matrix(self):
        D = plane_stress_matrix(0.3)
        assert D[0, 0] == pytest.approx(1.0 / 0.91)
        assert D[0, 1] == pytest.approx(0.3 / 0.91)
        assert D[2, 2] == pytest.approx(0.35 / 0.91)

    def test_invalid_inputs(self):
        with pytest.raises(ConfigurationError):
            element_stiffness_unit(0.6, 1.0, 1.0)
        with pytest.raises(ConfigurationError):
            element_stiffness_unit(0.3, -1.0, 1.0)


class TestAssembleSolve:
    def test_zero_load(self):
        p = problem_library("mid_cantilever", 4, 2, 4.0, 2.0)
        p.f[:] = 0.0
        sol = assemble_solve(np.ones(p.n_elements), p)
        assert np.all(sol.u == 0.0)
        assert sol.compliance == 0.0

    def test_matches_dense_oracle(self):
        p = problem_library("mid_cantilever", 4, 2, 4.0, 2.0)
        rho = np.ones(p.n_elements)
        sol = assemble_solve(rho, p)
        u_oracle = dense_solve_oracle(rho, p)
        assert np.linalg.norm(sol.u - u_oracle) <= 1e-8 * np.linalg.norm(u_oracle)

    def test_compliance_halves_when_moduli_double(self):
        p1 = problem_library("mid_cantilever", 4, 2, 4.0, 2.0)
        p2 = problem_library("mid_cantilever", 4, 2, 4.0, 2.0, E0=2.0, Emin=2e-3)
        rho = np.linspace(0.2, 1.0, p1.n_elements)
        J1 = assemble_solve(rho, p1).compliance
        J2 = assemble_solve(rho, p2).compliance
        assert J1 == 2.0 * J2  # power-of-two scaling is exact through the LU

    def test_compliance_positive_and_u_zero_on_fixed(self):
        p = problem_library("mbb", 8, 4, 8.0, 4.0)
        sol = assemble_solve(np.full(p.n_elements, 0.5), p)
        assert sol.compliance > 0.0
        assert np.all(sol.u[p.fixed_dofs] == 0.0)

    def test_reduced_matrix_positive_definite_for_random_density(self):
        rng = np.random.default_rng(9)
        p = problem_library("mid_cantilever", 5, 3, 5.0, 3.0)
        ke0 = p.element_stiffness_unit()
        for _ in range(5):
            rho = rng.uniform(0.0, 1.0, p.n_elements)
            E = simp_modulus(rho, p.p, p.E0, p.Emin)
            K = np.zeros((p.ndof, p.ndof))
            for e in range(p.n_elements):
                K[np.ix_(p.edof[e], p.edof[e])] += E[e] * ke0
            Kred = K[np.ix_(p.free_dofs, p.free_dofs)]
            assert np.linalg.eigvalsh(Kred).min() > 0.0

    def test_compliance_monotone_in_density(self):
        rng = np.random.default_rng(10)
        p = problem_library("mid_cantilever", 6, 4, 6.0, 4.0)
        for _ in range(6):
            lo = rng.uniform(0.05, 0.6, p.n_elements)
            hi = np.minimum(lo + rng.uniform(0.0, 0.4, p.n_elements), 1.0)
            assert assemble_solve(lo, p).compliance >= assemble_solve(hi, p).compliance - 1e-12

    def test_tip_deflection_against_beam_theory(self):
        # 2:1 beam: shear deflection is ~20% of the bending term, so compare
        # against the shear-corrected (Timoshenko) estimate
        p = problem_library("mid_cantilever", 100, 50, 60.0, 30.0)
        sol = assemble_solve(np.ones(p.n_elements), p)
        tip = -sol.u[2 * p.node_id(p.nelx, (p.nely + 1) // 2) + 1]
        L, h = p.lx, p.ly
        bend = L**3 / (3.0 * (h**3 / 12.0))
        shear = L / ((5.0 / 6.0) * (1.0 / 2.6) * h)
        assert tip == pytest.approx(bend + shear, rel=0.15)

    def test_singular_without_enough_constraints(self):
        # constraining 3 DOFs that leave a rotation free must be caught
        f = np.zeros(2 * 3 * 2)
        f[2 * 2 + 1] = -1.0
        p = MeshProblem(nelx=2, nely=1, lx=2.0, ly=1.0, E0=1.0, Emin=1e-3, nu=0.3,
                        p=3.0, fixed_dofs=np.array([0, 1, 2]), f=f)
        with pytest.raises(SolverError):
            assemble_solve(np.ones(2), p)

    def test_density_length_mismatch(self):
        p = problem_library("mid_cantilever", 4, 2, 4.0, 2.0)
        with pytest.raises(ConfigurationError):
            assemble_solve(np.ones(3), p)


class TestProblemLibrary:
    def test_mid_cantilever_layout(self):
        p = problem_library("mid_cantilever", 100, 50, 60.0, 30.0)
        assert p.fixed_dofs.size == 102
        load_dof = 2 * (25 * 101 + 100) + 1
        assert p.f[load_dof] == -1.0
        assert np.count_nonzero(p.f) == 1

    def test_mbb_layout(self):
        p = problem_library("mbb", 100, 50, 60.0, 30.0)
        assert p.fixed_dofs.size == 52  # 51 u_x on the left edge + 1 u_y
        assert 2 * 100 + 1 in p.fixed_dofs
        load_dof = 2 * (50 * 101) + 1
        assert p.f[load_dof] == -1.0

    def test_reversed_load_same_magnitude(self):
        p = problem_library("mid_cantilever", 8, 4, 8.0, 4.0)
        rho = np.full(p.n_elements, 0.7)
        u1 = assemble_solve(rho, p).u
        p.f = -p.f
        u2 = assemble_solve(rho, p).u
        assert np.allclose(np.abs(u1), np.abs(u2), atol=1e-14)

    def test_unknown_name_lists_valid(self):
        with pytest.raises(ConfigurationError, match="mid_cantilever"):
            problem_library("bridge", 4, 2, 4.0, 2.0)

    def test_load_on_fixed_dof_rejected(self):
        p = problem_library("mid_cantilever", 4, 2, 4.0, 2.0)
        f = p.f.copy()
        f[p.fixed_dofs[0]] = 1.0
        with pytest.raises(ConfigurationError):
            MeshProblem(nelx=4, nely=2, lx=4.0, ly=2.0, E0=1.0, Emin=1e-3, nu=0.3,
                        p=3.0, fixed_dofs=p.fixed_dofs, f=f)

    def test_no_fixed_dofs_rejected(self):
        with pytest.raises(ConfigurationError):
            MeshProblem(nelx=4, nely=2, lx=4.0, ly=2.0, E0=1.0, Emin=1e-3, nu=0.3,
                        p=3.0, fixed_dofs=np.array([], dtype=int), f=np.zeros(30))

    def test_element_centers_layout(self):
        p = problem_library("mid_cantilever", 4, 2, 4.0, 2.0)
        x, y = p.element_centers()
        assert np.allclose(x[:4], [0.5, 1.5, 2.5, 3.5])
        assert np.allclose(y[:4], 0.5)
        assert np.allclose(y[4:], 1.5)
