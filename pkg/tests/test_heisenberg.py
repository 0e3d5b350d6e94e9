"""
Unit Tests for the Heisenberg fundamental solution
"""

import os
import sys

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from calculus.heisenberg import (
    FundamentalSolution,
    convolution_error,
    fundamental_solution,
    gauge_profile,
    heisenberg_report,
    homogeneity_error,
    mass_constant,
    polar_to_group,
    residual_points,
    sublaplacian_residual,
)


@pytest.fixture(scope="module")
def gamma():
    return fundamental_solution()


class TestConstant:
    def test_quadrature_converged(self, gamma):
        assert mass_constant(64) == pytest.approx(gamma.constant, rel=1e-6)

    def test_positive(self, gamma):
        assert gamma.constant > 0


class TestGamma:
    def test_weight(self, gamma):
        assert gamma.weight == -2

    def test_profile_on_gauge_sphere(self):
        points = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.25], [0.6, 0.8, 0.0]])
        np.testing.assert_allclose(gauge_profile(points), 1.0)

    def test_polar_coordinates_have_unit_gauge(self):
        theta = np.linspace(-1.5, 1.5, 7)
        x, y, z = polar_to_group(1.0, theta, 0.3)
        np.testing.assert_allclose(gauge_profile(np.stack([x, y, z], axis=-1)), 1.0)

    def test_tabulate(self, gamma):
        axis, values = gamma.tabulate(n=5, half_width=1.0)
        assert values.shape == (5, 5, 5)
        assert np.isinf(values[2, 2, 2])
        assert values[4, 2, 2] == pytest.approx(gamma.constant)

    def test_homogeneous(self, gamma):
        assert homogeneity_error(gamma, residual_points(7)) < 1e-12

    def test_sublaplacian_annihilates_off_identity(self, gamma):
        points = residual_points(9)
        assert len(points) < 9 ** 3
        assert float(np.max(sublaplacian_residual(gamma, points))) < 1e-4


class TestConvolution:
    def test_reproduces_gaussian(self, gamma):
        points = np.array([[0.0, 0.0, 0.0], [0.3, -0.2, 0.1]])
        assert convolution_error(gamma, points) < 1e-4

    def test_wrong_constant_fails(self, gamma):
        wrong = FundamentalSolution(1.1 * gamma.constant)
        assert convolution_error(wrong, np.zeros((1, 3))) > 1e-2


class TestReport:
    def test_report_passes(self):
        report = heisenberg_report()
        assert report.passed
        assert report.residual_max < 1e-4
        assert report.convolution_error < 1e-4
        assert len(report.convolution_points) == 3


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
