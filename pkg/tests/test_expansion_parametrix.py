"""
Unit Tests for expansions, asymptotic sums and parametrices
"""

import os
import sys
import warnings

import numpy as np
import pytest
import sympy

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from calculus.enveloping_calculus import FilteredDiffOp
from calculus.errors import DomainError, ExtrapolationError, MalformedInputError, NotHEllipticError
from calculus.expansion_parametrix import (
    Expansion,
    asymptotic_sum,
    compose_families,
    expansion_report,
    extract_expansion,
    homogenize,
    hypoellipticity_demo,
    invert_cosymbol,
    parametrix,
)
from calculus.filtered_patch import torus_patch
from calculus.heisenberg import FundamentalSolution
from calculus.kernel_zoom import (
    SymbolSlice,
    compose_slices,
    essential_homogeneity_test,
    expression_family,
    family_from_operator,
    measured_order,
    profile_family,
    restrict_t,
    sqrt_family,
)
from calculus.lattice import TGrid, TorusGrid


@pytest.fixture(scope="module")
def line():
    return TorusGrid(1, 1, 256)


@pytest.fixture(scope="module")
def sqrt_expansion(line):
    return extract_expansion(sqrt_family(line, TGrid(levels=12)), terms=3)


@pytest.fixture(scope="module")
def lap_potential():
    p = torus_patch(1)
    x0 = p.coords[0]
    op = FilteredDiffOp.from_terms(p, {(2,): -1, (0,): 2 + sympy.cos(x0)})
    return family_from_operator(op, TorusGrid(1, 256, 256), TGrid(levels=12), "lap_potential")


def trusted_outer(grid: TorusGrid, margin: int = 8) -> np.ndarray:
    return grid.trusted_mask(margin) & (np.abs(grid.eta_axis()) >= 1)


class TestHomogenize:
    def test_extends_from_outer_shell(self):
        grid = TorusGrid(1, 1, 64)
        eta = grid.eta_axis()
        values = np.where(np.abs(eta) >= 8, 1.0 / np.maximum(np.abs(eta), 1), 5.0).reshape(1, -1)
        out = homogenize(SymbolSlice(grid, values, -1.0), -1.0)
        inner = (np.abs(eta) >= 1) & (np.abs(eta) <= 3)
        np.testing.assert_allclose(out.values[0, inner], 1.0 / np.abs(eta[inner]))
        assert out.values[0, grid.n_eta // 2] == 0


class TestExtractExpansion:
    def test_term_weights(self, sqrt_expansion):
        assert sqrt_expansion.term_weights() == [1.0, 0.0, -1.0]

    def test_leading_term_is_abs_eta(self, sqrt_expansion, line):
        mask = trusted_outer(line)
        a0 = sqrt_expansion.terms[0].values[0]
        np.testing.assert_allclose(a0[mask], np.abs(line.eta_axis()[mask]), rtol=1e-12)

    def test_odd_term_vanishes(self, sqrt_expansion, line):
        mask = trusted_outer(line)
        assert np.max(np.abs(sqrt_expansion.terms[1].values[0][mask])) < 1e-5

    def test_second_term(self, sqrt_expansion, line):
        mask = trusted_outer(line)
        a2 = sqrt_expansion.terms[2].values[0][mask]
        np.testing.assert_allclose(a2, 0.5 / np.abs(line.eta_axis()[mask]), rtol=1e-4)

    def test_report(self, sqrt_expansion):
        report = expansion_report(sqrt_expansion)
        assert report.passed
        assert report.remainder_bounds == [0.0, -1.0, -2.0]
        assert len(report.extrapolation_discrepancies) == 2

    def test_unstable_extrapolation(self, line):
        F = profile_family(lambda x, eta, t: np.sqrt(abs(t)) + eta[0], line, TGrid(levels=12), 1.0)
        with pytest.raises(ExtrapolationError) as exc:
            extract_expansion(F, terms=2)
        assert exc.value.diagnostics["term"] == 1


class TestAsymptoticSum:
    def test_sum_of_sqrt_terms(self, sqrt_expansion, line):
        tgrid = TGrid(levels=4)
        total = asymptotic_sum(sqrt_expansion, tgrid)
        assert total.values.shape == line.slice_shape + (tgrid.size,)
        assert total.weight == 1.0
        # t = 0 keeps the leading term only
        np.testing.assert_allclose(total.values[..., tgrid.zero_index], sqrt_expansion.terms[0].values)

    def test_weights_must_decrease(self, sqrt_expansion, line):
        a0 = sqrt_expansion.terms[0]
        with pytest.raises(DomainError):
            asymptotic_sum(Expansion(1.0, (a0, a0), line), TGrid(levels=2))


class TestInvertCosymbol:
    def test_reciprocal(self, line):
        eta = line.eta_axis().reshape(1, -1)
        inverse = invert_cosymbol(SymbolSlice(line, (eta ** 2).astype(complex), 2.0))
        mask = trusted_outer(line)
        np.testing.assert_allclose(inverse.values[0, mask], 1.0 / eta[0, mask] ** 2)
        assert inverse.weight == -2.0

    def test_negative_weight_is_quiet_at_zero_frequency(self, line):
        eta = line.eta_axis().reshape(1, -1)
        K = SymbolSlice(line, (1.0 / np.maximum(np.abs(eta), 1.0)).astype(complex), -1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error", RuntimeWarning)
            inverse = invert_cosymbol(K)
        mask = trusted_outer(line)
        np.testing.assert_allclose(inverse.values[0, mask], np.abs(eta[0, mask]))
        assert inverse.weight == 1.0

    def test_vanishing_cosymbol(self, line):
        eta = line.eta_axis().reshape(1, -1)
        with pytest.raises(NotHEllipticError) as exc:
            invert_cosymbol(SymbolSlice(line, (eta ** 2 - 16).astype(complex), 2.0))
        assert abs(exc.value.witness["eta"][0]) == 4.0

    def test_heisenberg_filtration(self):
        grid = TorusGrid(3, 1, 16)
        e0, e1, _ = grid.eta_mesh()
        values = np.broadcast_to(e0 ** 2 + e1 ** 2, grid.slice_shape).astype(complex)
        inverse = invert_cosymbol(SymbolSlice(grid, values, 2.0, (1, 1, 2)), filtration="heisenberg")
        assert isinstance(inverse, FundamentalSolution)
        assert inverse.weight == -2

    def test_heisenberg_needs_sublaplacian(self):
        grid = TorusGrid(3, 1, 16)
        values = np.ones(grid.slice_shape, dtype=complex)
        with pytest.raises(MalformedInputError):
            invert_cosymbol(SymbolSlice(grid, values, 0.0, (1, 1, 2)), filtration="heisenberg")
        with pytest.raises(MalformedInputError):
            invert_cosymbol(SymbolSlice(grid, values, 0.0), filtration="engel")


class TestParametrix:
    def test_x_invariant_operator(self, line):
        P = expression_family("t^2 + eta0^2", line, TGrid(levels=12), 2.0)
        report = parametrix(P, k=3).report()
        assert report.passed
        assert report.bound == -4
        assert report.right_order <= -3.8

    def test_potential_operator(self, lap_potential):
        report = parametrix(lap_potential, k=3).report()
        assert report.passed
        assert report.right_order <= -3.8
        assert report.left_order <= -3.8

    def test_more_iterations_lower_the_residual(self, lap_potential):
        low = parametrix(lap_potential, k=1).report()
        high = parametrix(lap_potential, k=3).report()
        assert high.right_order < low.right_order

    def test_not_elliptic(self, line):
        P = expression_family("eta0^2 - 16", line, TGrid(levels=4), 2.0)
        with pytest.raises(NotHEllipticError):
            parametrix(P)

    def test_negative_iterations(self, line):
        with pytest.raises(DomainError):
            parametrix(sqrt_family(line, TGrid(levels=4)), k=-1)


class TestComposeFamilies:
    def test_product_keeps_source(self, line):
        S = sqrt_family(line, TGrid(levels=6))
        square = compose_families(S, S)
        assert square.weight == 2.0
        assert square.source is not None
        assert essential_homogeneity_test(square, 2.0, lambdas=(0.5, 2.0)).passed

    def test_x_dependent_uses_three_t_values(self, lap_potential):
        composed = compose_families(lap_potential, lap_potential)
        assert composed.tgrid.size == 3
        assert composed.weight == 4.0

    def test_x_dependent_composite_re_extends_homogeneously(self, lap_potential):
        grid = lap_potential.grid
        composed = compose_families(lap_potential, lap_potential)
        inner = grid.trusted_mask(8)
        eta = grid.eta_axis()[inner] / grid.n_eta
        top = composed.values[:, inner, composed.tgrid.index(1.0)]
        # the t = 1 composite is a degree-4 polynomial in eta at every x
        vander = np.polynomial.polynomial.polyvander(eta, 4)
        coeffs, *_ = np.linalg.lstsq(vander, top.T, rcond=None)
        assert np.max(np.abs(vander @ coeffs - top.T)) <= 1e-9 * np.max(np.abs(top))

        def scaled(x, eta, t):
            return sum(coeffs[j][:, None] * (eta[0] / grid.n_eta) ** j * t ** (4 - j) for j in range(5))

        extended = profile_family(scaled, grid, TGrid(levels=4), 4.0, name="re_extended")
        assert essential_homogeneity_test(extended, 4.0, lambdas=(0.5, 2.0)).passed
        frozen = composed.values[:, inner, composed.tgrid.index(0.0)]
        principal = restrict_t(extended, 0.0).values[:, inner]
        np.testing.assert_allclose(principal, frozen, rtol=1e-8, atol=1e-6)

    @pytest.mark.parametrize("order", ["left", "right"])
    def test_composition_with_rapid_decay_slice(self, lap_potential, order):
        grid = lap_potential.grid
        x = grid.x_axis().reshape(-1, 1)
        eta = grid.eta_axis().reshape(1, -1)
        bump = SymbolSlice(grid, ((1 + 0.5 * np.cos(x)) * np.exp(-eta ** 2 / 2)).astype(complex), -8.0)
        P1 = restrict_t(lap_potential, 1.0)
        product = compose_slices(bump, P1) if order == "left" else compose_slices(P1, bump)
        assert measured_order(product) <= -8.0
        assert np.max(np.abs(product.values[:, np.abs(grid.eta_axis()) >= 16])) < 1e-12
        assert np.max(np.abs(product.values)) > 1.0


class TestHypoellipticity:
    def test_potential_operator(self, lap_potential):
        x = lap_potential.grid.x_axis()
        report = hypoellipticity_demo(lap_potential, np.exp(np.cos(x)))
        assert report.passed
        assert report.relative_error <= 1e-6
        assert report.residual_tail < 1e-6

    def test_parametrix_residual_is_smooth(self, lap_potential):
        x = lap_potential.grid.x_axis()
        report = hypoellipticity_demo(lap_potential, np.exp(np.cos(x)))
        sups = report.parametrix_residual_sups
        assert report.parametrix_residual_shells[0] == 0
        # Q' alone is only a parametrix: low modes are off, high modes are not
        assert report.parametrix_relative_error > 1e-3
        assert sups[0] > 1.0
        assert report.parametrix_residual_tail < 1e-6 * sups[0]
        assert max(sups[3:]) < 1e-6 * max(sups[:2])

    def test_needs_one_dimension(self):
        grid = TorusGrid(2, 1, 16)
        P = expression_family("t^2 + eta0^2 + eta1^2", grid, TGrid(levels=4), 2.0)
        with pytest.raises(MalformedInputError):
            hypoellipticity_demo(P, np.ones((16, 16)))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
