import math

import numpy as np
import pytest

from polyto.constraints import (ConstraintConfig, all_edge_lengths, edge_lengths,
                                min_length_constraint, smooth_min_length,
                                volume_constraint)
from polyto.errors import ConfigurationError
from polyto.geometry import PolygonSet, halfspace_sdf, polygon_vertices


def random_positive_length_polygons(rng, n_polys=1):
    """Polygon sets whose face-distance formula gives all-positive edge lengths."""
    while True:
        S = int(rng.integers(3, 11))
        base = rng.uniform(5.0, 15.0)
        d = base * (1.0 + 0.1 * rng.uniform(-1.0, 1.0, (n_polys, S)))
        polys = PolygonSet(
            cx=rng.uniform(0.0, 60.0, n_polys),
            cy=rng.uniform(0.0, 30.0, n_polys),
            alpha=rng.uniform(0.0, 2 * math.pi, n_polys),
            d=d,
        )
        lengths = all_edge_lengths(polys)
        if np.all(lengths > 0.05):
            return polys


def vertex_oracle_lengths(polys, i):
    """Edge length of every face measured between its two clipped vertices."""
    verts = polygon_vertices(polys, i)
    th = polys.face_angles()[i]
    out = np.empty(polys.S)
    for j in range(polys.S):
        phi = halfspace_sdf(verts[:, 0], verts[:, 1], polys.cx[i], polys.cy[i],
                            th[j], polys.d[i, j])
        on_face = verts[np.abs(phi) <= 1e-7]
        assert on_face.shape[0] == 2, "active face must carry exactly two vertices"
        out[j] = np.linalg.norm(on_face[0] - on_face[1])
    return out


class TestConstraintConfig:
    def test_valid(self):
        ConstraintConfig(vf_star=0.5, l_star=2.0)
        ConstraintConfig(vf_star=1.0)

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            ConstraintConfig(vf_star=0.0)
        with pytest.raises(ConfigurationError):
            ConstraintConfig(vf_star=0.5, l_star=-1.0)


class TestVolumeConstraint:
    def test_exact_balance(self):
        rho = np.full(50, 0.5)
        assert volume_constraint(rho, 1.0, 0.5, 50.0) == pytest.approx(0.0, abs=1e-14)

    def test_double_budget(self):
        rho = np.ones(50)
        assert volume_constraint(rho, 1.0, 0.5, 50.0) == pytest.approx(1.0)

    def test_half_budget(self):
        rho = np.full(50, 0.25)
        assert volume_constraint(rho, 1.0, 0.5, 50.0) == pytest.approx(-0.5)

    def test_linear_in_density(self):
        rng = np.random.default_rng(0)
        rho = rng.uniform(0.0, 1.0, 80)
        g1 = volume_constraint(rho, 0.36, 0.4, 80 * 0.36)
        for a in (0.0, 0.3, 0.7, 1.0):
            ga = volume_constraint(a * rho, 0.36, 0.4, 80 * 0.36)
            assert ga + 1.0 == pytest.approx(a * (g1 + 1.0), abs=1e-12)


class TestEdgeLengths:
    def test_unit_square(self):
        sq = PolygonSet([0.0], [0.0], [0.0], [[1.0] * 4])
        assert np.allclose(edge_lengths(sq, 0), 2.0)

    def test_regular_hexagon_matches_vertex_oracle(self):
        hexa = PolygonSet([3.0], [4.0], [0.2], [[10.0] * 6])
        expected = 10.0 / math.sin(math.pi / 3.0)
        assert np.allclose(edge_lengths(hexa, 0), expected, atol=1e-12)
        assert np.allclose(vertex_oracle_lengths(hexa, 0), expected, atol=1e-9)

    def test_inactive_face_goes_negative(self):
        hexa = PolygonSet([0.0], [0.0], [0.0], [[10.0, 10.0, 25.0, 10.0, 10.0, 10.0]])
        lengths = edge_lengths(hexa, 0)
        assert lengths[2] == pytest.approx((10.0 + 10.0 - 25.0) / math.sin(math.pi / 3.0))
        assert lengths[2] < 0.0
        # the clipped polygon indeed lost that face
        assert polygon_vertices(hexa, 0).shape[0] == 5

    def test_matches_vertex_oracle_on_random_polygons(self):
        rng = np.random.default_rng(1)
        for _ in range(40):
            polys = random_positive_length_polygons(rng)
            assert np.allclose(edge_lengths(polys, 0), vertex_oracle_lengths(polys, 0),
                               atol=1e-9)

    def test_independent_of_center_and_rotation(self):
        rng = np.random.default_rng(2)
        polys = random_positive_length_polygons(rng)
        moved = polys.copy()
        moved.cx += rng.uniform(-5, 5)
        moved.cy += rng.uniform(-5, 5)
        moved.alpha += rng.uniform(0, 2 * math.pi)
        assert np.array_equal(edge_lengths(polys, 0), edge_lengths(moved, 0))


class TestSmoothMinLength:
    def test_single_length(self):
        assert smooth_min_length([3.0]) == pytest.approx(3.0, abs=1e-14)

    def test_four_equal_lengths(self):
        assert smooth_min_length([2.0, 2.0, 2.0, 2.0]) == pytest.approx(2.0 - math.log(4.0))

    def test_widely_separated(self):
        assert smooth_min_length([5.0, 100.0]) == pytest.approx(5.0 - math.log1p(math.exp(-95.0)))

    def test_underestimates_within_log_n(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            lengths = rng.uniform(-5.0, 20.0, rng.integers(1, 40))
            sm = smooth_min_length(lengths)
            assert sm <= lengths.min() + 1e-12
            assert sm >= lengths.min() - math.log(lengths.size) - 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ConfigurationError):
            smooth_min_length([])


class TestMinLengthConstraint:
    def test_boundary(self):
        assert min_length_constraint(2.0, 2.0) == pytest.approx(0.0)

    def test_slack(self):
        assert min_length_constraint(4.0, 2.0) == pytest.approx(-1.0)

    def test_fully_violated(self):
        assert min_length_constraint(0.0, 2.0) == pytest.approx(1.0)

    def test_conservative_guarantee(self):
        # feasibility of the smooth constraint implies every true edge is long enough
        rng = np.random.default_rng(4)
        for _ in range(25):
            polys = random_positive_length_polygons(rng, n_polys=2)
            l_min = smooth_min_length(all_edge_lengths(polys))
            l_star = l_min * (1.0 - 1e-9)
            if l_star <= 0.0:
                continue
            assert min_length_constraint(l_min, l_star) <= 0.0
            for i in range(polys.K):
                assert vertex_oracle_lengths(polys, i).min() >= l_star - 1e-9
