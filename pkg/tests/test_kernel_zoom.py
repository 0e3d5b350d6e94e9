"""
Unit Tests for symbol families and the zoom action

Covers the Kohn-Nirenberg transforms, exact and lattice zooms, the cocycle of
the logarithmic kernel, homogeneity and decay reports, pseudolocality and
composition on the periodic grid.
"""

import math
import os
import sys

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from calculus.enveloping_calculus import FilteredDiffOp, sublaplacian
from calculus.errors import (
    ConvergenceError,
    CutoffRequiredError,
    DomainError,
    LatticeMismatchError,
    MalformedInputError,
    NotHomogeneousError,
    RefineGridError,
)
from calculus.filtered_patch import heisenberg_patch, torus_patch
from calculus.kernel_zoom import (
    FourierProfile,
    SymbolFamily,
    SymbolSlice,
    apply_slice,
    cocycle,
    compose_slices,
    cosymbol_limit,
    decay_report,
    essential_homogeneity_test,
    expression_family,
    extend_cosymbol,
    family_from_operator,
    identity_slice,
    kernel_from_symbol,
    log_kernel_family,
    measured_order,
    normalize_outside_interval,
    operator_matrix,
    profile_family,
    pseudolocality_report,
    reality_check,
    regularity_check,
    regularity_order,
    restrict_t,
    sqrt_family,
    symbol_from_kernel,
    t_smoothness_check,
    zoom_pullback,
)
from calculus.lattice import TGrid, TorusGrid


@pytest.fixture(scope="module")
def line():
    return TorusGrid(1, 1, 256)


@pytest.fixture(scope="module")
def sqrt_symbol(line):
    return sqrt_family(line, TGrid(levels=6))


def gridded(S: SymbolFamily) -> SymbolFamily:
    """Same values with the closed-form source dropped."""
    return SymbolFamily(S.grid, S.tgrid, S.values.copy(), S.weight, S.weights, None, S.name)


def eta_index(grid: TorusGrid, eta: int) -> int:
    return grid.n_eta // 2 + eta


class TestTransforms:
    def test_delta_kernel_is_identity(self):
        grid = TorusGrid(1, 1, 64)
        kernel = np.zeros(grid.slice_shape, dtype=complex)
        kernel[0, grid.n_eta // 2] = 1.0 / grid.xi_step
        S = symbol_from_kernel(kernel, grid)
        np.testing.assert_allclose(S.values, 1.0, atol=1e-12)

    def test_round_trip(self):
        grid = TorusGrid(2, 4, 16)
        rng = np.random.default_rng(7)
        kernel = rng.normal(size=grid.slice_shape) + 1j * rng.normal(size=grid.slice_shape)
        S = symbol_from_kernel(kernel, grid)
        np.testing.assert_allclose(kernel_from_symbol(S), kernel, atol=1e-10)

    def test_leaking_kernel_needs_cutoff(self):
        grid = TorusGrid(1, 1, 64)
        kernel = np.ones(grid.slice_shape)
        with pytest.raises(CutoffRequiredError):
            symbol_from_kernel(kernel, grid, radius=1.0)
        cut = kernel_from_symbol(symbol_from_kernel(kernel, grid, radius=1.0, apply_cutoff=True))
        assert np.abs(cut[0, np.abs(grid.xi_axis()) >= 1.0]).max() < 1e-12

    def test_slice_shape_checked(self):
        with pytest.raises(MalformedInputError):
            SymbolSlice(TorusGrid(1, 1, 16), np.zeros((1, 8)))


class TestFamilies:
    def test_expression_family_values(self):
        grid = TorusGrid(1, 1, 32)
        F = expression_family("t^2 + eta0^2", grid, TGrid(levels=3), 2.0)
        S = restrict_t(F, 0.5)
        assert S.values[0, eta_index(grid, 3)] == pytest.approx(9.25)

    def test_bad_expression(self):
        with pytest.raises(MalformedInputError):
            expression_family("eta0 + q", TorusGrid(1, 1, 16), TGrid(levels=2), 1.0)

    def test_restrict_off_grid(self, sqrt_symbol):
        with pytest.raises(DomainError):
            restrict_t(sqrt_symbol, 0.3)

    def test_operator_family_on_torus(self):
        p = torus_patch(1)
        op = FilteredDiffOp.from_terms(p, {(2,): -1, (0,): 1})
        grid = TorusGrid(1, 1, 32)
        F = family_from_operator(op, grid, TGrid(levels=3))
        assert F.weight == 2
        assert restrict_t(F, 0.5).values[0, eta_index(grid, 3)] == pytest.approx(9.25)

    def test_operator_family_left_invariant_frame(self):
        p = heisenberg_patch()
        op = FilteredDiffOp.from_terms(p, {(1, 0, 0): 1})
        grid = TorusGrid(3, 1, 16)
        F = family_from_operator(op, grid, TGrid(levels=2))
        values = restrict_t(F, 1.0).values
        c = grid.n_eta // 2
        assert values[0, 0, 0, c + 2, c + 1, c + 3] == pytest.approx(2j)

    def test_x_dependent_operator_needs_x_grid(self):
        p = torus_patch(2)
        op = FilteredDiffOp.from_terms(p, {(0, 1): p.coords[0] ** 2 + 1})
        with pytest.raises(MalformedInputError):
            family_from_operator(op, TorusGrid(2, 1, 16), TGrid(levels=2))

    def test_reality(self):
        grid = TorusGrid(1, 1, 32)
        tgrid = TGrid(levels=2)
        assert reality_check(sqrt_family(grid, tgrid))
        assert reality_check(profile_family(lambda x, eta, t: 1j * eta[0], grid, tgrid, 1.0))
        assert not reality_check(profile_family(lambda x, eta, t: eta[0], grid, tgrid, 1.0))


class TestZoom:
    def test_sourced_zoom_is_exact(self, sqrt_symbol):
        zoomed = zoom_pullback(sqrt_symbol, 0.5)
        np.testing.assert_allclose(zoomed.values, 0.5 * sqrt_symbol.values, rtol=1e-13)

    def test_lattice_zoom(self, sqrt_symbol):
        S = gridded(sqrt_symbol)
        zoomed = zoom_pullback(S, 2.0)
        grid = S.grid
        t_index = S.tgrid.index(0.25)
        assert zoomed.values[0, eta_index(grid, 10), t_index] == pytest.approx(math.sqrt(0.25 + 400))
        # 2 * 200 lies past the box
        assert np.isnan(zoomed.values[0, eta_index(grid, 100), t_index])
        # t = 2 is off the grid
        assert np.all(np.isnan(zoomed.values[..., S.tgrid.index(1.0)]))

    def test_gridded_zoom_needs_dyadic_lambda(self, sqrt_symbol):
        S = gridded(sqrt_symbol)
        with pytest.raises(LatticeMismatchError):
            zoom_pullback(S, 3.0)
        with pytest.raises(DomainError):
            zoom_pullback(S, 0.0)

    def test_interpolated_zoom_on_linear_symbol(self):
        grid = TorusGrid(1, 1, 32)
        S = gridded(expression_family("eta0", grid, TGrid(levels=3), 1.0))
        zoomed = zoom_pullback(S, 1.5, interpolate=True)
        assert zoomed.values[0, eta_index(grid, 2), S.tgrid.index(0.5)] == pytest.approx(3.0)


class TestLogKernelCocycle:
    @pytest.mark.parametrize("lam", [2.0, 4.0, 8.0])
    def test_zero_frequency(self, line, lam):
        S = log_kernel_family(line, TGrid(levels=4))
        result = cocycle(S, lam, weight=-1.0)
        expected = -math.log(lam) / lam * line.volume
        assert result.zero_frequency(1.0).real == pytest.approx(expected, rel=1e-9)
        off = result.raw.values[0, eta_index(line, 5), S.tgrid.index(1.0)]
        assert abs(off) < 1e-9

    def test_cocycle_is_not_rapidly_decaying_at_zero(self, line):
        S = log_kernel_family(line, TGrid(levels=4))
        normalized = cocycle(S, 2.0).zero_frequency(0.5, normalized=True)
        assert normalized.real == pytest.approx(-2 * math.pi * math.log(2.0), rel=1e-9)

    def test_needs_one_dimension(self):
        with pytest.raises(MalformedInputError):
            log_kernel_family(TorusGrid(2, 1, 16), TGrid(levels=2))


class TestHomogeneity:
    def test_sqrt_is_essentially_homogeneous(self, sqrt_symbol):
        report = essential_homogeneity_test(sqrt_symbol, 1.0)
        assert report.passed
        assert len(report.checks) == 6

    def test_wrong_weight_fails(self, sqrt_symbol):
        report = essential_homogeneity_test(sqrt_symbol, 2.0, lambdas=(2.0,))
        assert not report.passed
        assert report.checks[0].worst_tail_slope > 0

    def test_gridded_family_skips_small_lambdas(self, sqrt_symbol):
        report = essential_homogeneity_test(gridded(sqrt_symbol), 1.0, lambdas=(0.5, 2.0))
        assert report.checks[0].skipped
        assert report.passed

    @pytest.mark.parametrize("build, margin", [
        (lambda: sqrt_family(TorusGrid(1, 1, 256), TGrid(levels=6)), 8),
        (lambda: expression_family("eta0^2", TorusGrid(1, 1, 256), TGrid(levels=4), 2.0), 8),
        # outer shells of the log symbol carry the periodization of its singularity
        (lambda: log_kernel_family(TorusGrid(1, 1, 256), TGrid(levels=2), cutoff_radius=2.0), 64),
        (lambda: family_from_operator(sublaplacian(heisenberg_patch()), TorusGrid(3, 1, 64), TGrid(levels=0)), 8),
    ], ids=["sqrt", "eta_squared", "log_kernel", "heis_sublaplacian"])
    def test_decay_estimates(self, build, margin):
        S = build()
        report = decay_report(S, margin=margin)
        assert report.passed, [(e.a, e.b, e.k, e.slope, e.bound) for e in report.entries if not e.passed]
        assert {e.k for e in report.entries} == {0, 1, 2}
        assert max(sum(e.b) for e in report.entries) == 2
        entry = next(e for e in report.entries if not any(e.a) and not any(e.b) and e.k == 0)
        assert entry.bound == S.weight
        assert entry.slope == pytest.approx(S.weight, abs=0.1)

    def test_measured_order(self, line):
        F = expression_family("eta0^2", line, TGrid(levels=2), 2.0)
        assert measured_order(restrict_t(F, 0.0)) == pytest.approx(2.0, abs=0.05)

    def test_t_smoothness(self, sqrt_symbol):
        assert t_smoothness_check(sqrt_symbol).passed


class TestCosymbols:
    def test_limit_of_sqrt(self, sqrt_symbol):
        s0 = cosymbol_limit(sqrt_symbol)
        np.testing.assert_allclose(s0.values[0], np.abs(sqrt_symbol.grid.eta_axis()), atol=1e-12)

    def test_limits_of_two_extensions_differ_by_rapid_decay(self, sqrt_symbol, line):
        bumped = profile_family(
            lambda x, eta, t: np.sqrt(t ** 2 + eta[0] ** 2) + (1 - t ** 2) * np.exp(-eta[0] ** 2),
            line, sqrt_symbol.tgrid, 1.0, name="sqrt_bumped",
        )
        np.testing.assert_allclose(restrict_t(bumped, 1.0).values, restrict_t(sqrt_symbol, 1.0).values, atol=1e-14)
        diff = cosymbol_limit(bumped).values - cosymbol_limit(sqrt_symbol).values
        np.testing.assert_allclose(diff[0], np.exp(-line.eta_axis() ** 2), atol=1e-14)
        assert measured_order(SymbolSlice(line, diff, 1.0)) <= -8.0

    def test_limit_rejects_jump(self):
        grid = TorusGrid(1, 1, 32)
        F = profile_family(lambda x, eta, t: (0.0 if t == 0 else 1.0) + 0 * eta[0], grid, TGrid(levels=4), 0.0)
        with pytest.raises(ConvergenceError) as exc:
            cosymbol_limit(F)
        assert exc.value.errors[-1] == pytest.approx(1.0)

    def test_extend_homogeneous_slice(self, sqrt_symbol):
        s0 = cosymbol_limit(sqrt_symbol)
        extended = extend_cosymbol(s0, TGrid(levels=3))
        assert extended.values.shape[-1] == TGrid(levels=3).size
        np.testing.assert_allclose(extended.values[..., 0], s0.values)

    def test_extend_rejects_inhomogeneous_slice(self, line):
        F = expression_family("1 + eta0^2", line, TGrid(levels=2), 2.0)
        with pytest.raises(NotHomogeneousError) as exc:
            extend_cosymbol(restrict_t(F, 0.0), TGrid(levels=2))
        assert exc.value.expected_weight == 2.0

    def test_nose_normalization_keeps_homogeneous_family(self, line):
        F = sqrt_family(line, TGrid(levels=4, t_up=2))
        normalized = normalize_outside_interval(F)
        np.testing.assert_allclose(normalized.values, F.values, rtol=1e-12)


class TestPseudolocality:
    def test_cut_log_kernel_passes(self, line):
        report = pseudolocality_report(log_kernel_family(line, TGrid(levels=2), cutoff_radius=2.0))
        assert report.passed
        assert [e.order for e in report.entries] == [1, 2, 3]

    def test_uncut_log_kernel_fails(self, line):
        report = pseudolocality_report(log_kernel_family(line, TGrid(levels=2)))
        assert not report.passed


class TestKernelRegularity:
    def test_order_from_weight(self, sqrt_symbol):
        grid = TorusGrid(1, 1, 64)
        decaying = profile_family(lambda x, eta, t: (1 + eta[0] ** 2) ** -1.5, grid, TGrid(levels=2), -3.0)
        assert regularity_order(decaying) == 1
        assert regularity_order(sqrt_symbol) is None

    def test_decaying_symbol_has_bounded_derivative(self):
        grid = TorusGrid(1, 1, 64)
        decaying = profile_family(lambda x, eta, t: (1 + eta[0] ** 2) ** -1.5, grid, TGrid(levels=2), -3.0)
        report = regularity_check(decaying.source, grid, 1)
        assert report.passed
        assert report.grid_sizes == [64, 128, 256]
        assert report.growth == pytest.approx(1.0, abs=0.05)

    def test_delta_kernel_derivative_blows_up(self):
        grid = TorusGrid(1, 1, 64)
        delta = FourierProfile(lambda x, eta, t: 1.0, (1,), label="delta")
        report = regularity_check(delta, grid, 1)
        assert not report.passed
        assert report.growth == pytest.approx(16.0, rel=1e-6)


class TestComposition:
    def test_x_invariant_product(self):
        grid = TorusGrid(1, 1, 16)
        eta = grid.eta_axis().reshape(1, -1).astype(complex)
        A = SymbolSlice(grid, 1j * eta, 1.0)
        B = SymbolSlice(grid, eta ** 2, 2.0)
        product = compose_slices(A, B)
        np.testing.assert_allclose(product.values, 1j * eta ** 3)
        assert product.weight == 3.0

    def test_derivative_after_multiplication(self):
        grid = TorusGrid(1, 16, 16)
        x = grid.x_axis().reshape(-1, 1)
        eta = grid.eta_axis().reshape(1, -1)
        A = SymbolSlice(grid, np.broadcast_to(1j * eta, grid.slice_shape).astype(complex), 1.0)
        B = SymbolSlice(grid, np.broadcast_to(np.cos(x), grid.slice_shape).astype(complex), 0.0)
        product = compose_slices(A, B)
        expected = 1j * eta * np.cos(x) - np.sin(x)
        inner = np.abs(grid.eta_axis()) <= 6
        np.testing.assert_allclose(product.values[:, inner], np.broadcast_to(expected, grid.slice_shape)[:, inner],
                                   atol=1e-12)

    def test_aliasing_guard(self):
        grid = TorusGrid(1, 16, 16)
        x = grid.x_axis().reshape(-1, 1)
        B = SymbolSlice(grid, np.broadcast_to(np.cos(6 * x), grid.slice_shape).astype(complex), 0.0)
        with pytest.raises(RefineGridError):
            compose_slices(identity_slice(grid), B)

    def test_apply_derivative(self):
        grid = TorusGrid(1, 1, 32)
        x = np.arange(32) * 2 * np.pi / 32
        S = SymbolSlice(grid, (1j * grid.eta_axis()).reshape(1, -1), 1.0)
        np.testing.assert_allclose(apply_slice(S, np.sin(x)), np.cos(x), atol=1e-12)

    def test_identity_matrix(self):
        grid = TorusGrid(1, 1, 16)
        np.testing.assert_allclose(operator_matrix(identity_slice(grid)), np.eye(16), atol=1e-12)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
