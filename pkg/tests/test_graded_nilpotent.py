"""
Unit Tests for graded nilpotent Lie algebras

Exact identities on the shipped algebras, BCH products in rationals and the
homogeneous norms.
"""

import os
import sys
from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from calculus.errors import DomainError, MalformedInputError
from calculus.graded_nilpotent import (
    CATALOG,
    GradedLieAlgebra,
    GroupElement,
    abelian,
    bch_multiply,
    dilate,
    dynkin_terms,
    engel,
    group_symbols,
    heisenberg,
    homogeneous_norm,
    koranyi_gauge,
    left_invariant_fields,
    to_exact,
    to_float,
    validate,
)

rationals = st.fractions(min_value=-5, max_value=5, max_denominator=7)
positive_rationals = st.fractions(min_value=Fraction(1, 4), max_value=4, max_denominator=5)


def vectors(n):
    return st.lists(rationals, min_size=n, max_size=n)


@pytest.fixture
def heis():
    return heisenberg()


@pytest.fixture
def engel_algebra():
    return engel()


class TestValidate:
    @pytest.mark.parametrize("name", sorted(CATALOG))
    def test_shipped_algebras_pass(self, name):
        report = validate(CATALOG[name]())
        assert report.ok, report.message

    def test_grading_violation_located(self):
        bad = GradedLieAlgebra.from_brackets([1, 1, 1], {(0, 1): {2: Fraction(1)}})
        report = validate(bad)
        assert not report.ok
        assert report.violation == "grading"
        assert report.indices == (0, 1, 2)

    def test_antisymmetry_violation(self):
        h = heisenberg()
        constants = [[list(row) for row in plane] for plane in h.structure_constants]
        constants[1][0][2] = Fraction(1)
        broken = GradedLieAlgebra(h.weights, tuple(tuple(tuple(r) for r in p) for p in constants))
        report = validate(broken)
        assert report.violation == "antisymmetry"
        assert report.indices == (0, 1, 2)

    def test_jacobi_violation(self):
        # graded and nilpotent, but [e2, [e0, e1]] = e4 is not balanced by the other two terms
        brackets = {(0, 1): {3: Fraction(1)}, (2, 3): {4: Fraction(1)}}
        alg = GradedLieAlgebra.from_brackets([1, 1, 1, 2, 3], brackets)
        report = validate(alg)
        assert not report.ok
        assert report.violation == "jacobi"
        assert report.indices == (0, 1, 2)

    def test_shape_mismatch_raises(self):
        h = heisenberg()
        with pytest.raises(MalformedInputError):
            validate(GradedLieAlgebra((1, 1), h.structure_constants))

    def test_out_of_range_bracket_raises(self):
        with pytest.raises(MalformedInputError):
            GradedLieAlgebra.from_brackets([1, 1], {(0, 2): {1: Fraction(1)}})

    def test_empty_algebra_raises(self):
        with pytest.raises(MalformedInputError):
            validate(GradedLieAlgebra((), ()))


class TestAlgebraProperties:
    def test_heisenberg_invariants(self, heis):
        assert heis.dim == 3
        assert heis.step == 2
        assert heis.homogeneous_dimension == 4
        assert heis.basis_names() == ("X", "Y", "Z")

    def test_engel_invariants(self, engel_algebra):
        assert engel_algebra.step == 3
        assert engel_algebra.homogeneous_dimension == 7
        assert engel_algebra.weight_lcm == 6

    def test_bracket_is_bilinear(self, heis):
        u = [Fraction(2), Fraction(0), Fraction(1)]
        v = [Fraction(0), Fraction(3), Fraction(5)]
        assert heis.bracket(u, v) == [0, 0, Fraction(6)]


class TestDilation:
    def test_scales_by_weight(self, heis):
        assert dilate(heis, Fraction(2), [1, 1, 1]) == (2, 2, 4)

    def test_rejects_non_positive(self, heis):
        with pytest.raises(DomainError):
            dilate(heis, 0, [1, 1, 1])

    def test_rejects_wrong_length(self, heis):
        with pytest.raises(MalformedInputError):
            dilate(heis, 2, [1, 1])

    @given(vectors(4), vectors(4), positive_rationals)
    @settings(max_examples=200, deadline=None)
    def test_is_group_automorphism(self, a, b, lam):
        alg = engel()
        left = dilate(alg, lam, bch_multiply(alg, a, b))
        right = bch_multiply(alg, dilate(alg, lam, a), dilate(alg, lam, b))
        assert tuple(left) == tuple(right)


class TestBCH:
    def test_dynkin_low_order(self):
        table = dict(dynkin_terms(2))
        assert table[(0,)] == 1
        assert table[(1,)] == 1
        # words are kept unmerged, so [X, Y] collects (0, 1) minus (1, 0)
        assert table[(0, 1)] - table[(1, 0)] == Fraction(1, 2)

    def test_heisenberg_closed_form(self, heis):
        a = [Fraction(1), Fraction(2), Fraction(3)]
        b = [Fraction(-1, 2), Fraction(5), Fraction(1, 3)]
        expected_z = a[2] + b[2] + Fraction(1, 2) * (a[0] * b[1] - a[1] * b[0])
        assert bch_multiply(heis, a, b) == (a[0] + b[0], a[1] + b[1], expected_z)

    def test_engel_third_order_term(self, engel_algebra):
        x = [Fraction(1), 0, 0, 0]
        y = [0, Fraction(1), 0, 0]
        product = bch_multiply(engel_algebra, x, y)
        # 1/2 [X1, X2] = X3/2 and 1/12 [X1, [X1, X2]] = X4/12
        assert product == (1, 1, Fraction(1, 2), Fraction(1, 12))

    def test_abelian_is_addition(self):
        alg = abelian(3)
        assert bch_multiply(alg, [1, 2, 3], [4, 5, 6]) == (5, 7, 9)

    def test_wrong_length_raises(self, heis):
        with pytest.raises(MalformedInputError):
            bch_multiply(heis, [1, 2], [1, 2, 3])

    @given(vectors(3), vectors(3), vectors(3))
    @settings(max_examples=300, deadline=None)
    def test_heisenberg_associative(self, a, b, c):
        alg = heisenberg()
        assert bch_multiply(alg, bch_multiply(alg, a, b), c) == bch_multiply(alg, a, bch_multiply(alg, b, c))

    @given(vectors(4), vectors(4), vectors(4))
    @settings(max_examples=300, deadline=None)
    def test_engel_associative(self, a, b, c):
        alg = engel()
        assert bch_multiply(alg, bch_multiply(alg, a, b), c) == bch_multiply(alg, a, bch_multiply(alg, b, c))

    def test_random_rational_triples_seeded(self):
        rng = np.random.default_rng(0)
        alg = engel()
        for _ in range(1000):
            a, b, c = (
                [Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 6))) for _ in range(4)]
                for _ in range(3)
            )
            assert bch_multiply(alg, bch_multiply(alg, a, b), c) == bch_multiply(alg, a, bch_multiply(alg, b, c))


class TestGroupElement:
    def test_inverse(self, heis):
        g = GroupElement(heis, (Fraction(1), Fraction(-2), Fraction(3)))
        assert (g * g.inverse()).coords == GroupElement.identity(heis).coords

    def test_dilate_multiplies_norm(self, heis):
        g = GroupElement(heis, (Fraction(1), Fraction(1), Fraction(1)))
        assert g.dilate(3).norm() == pytest.approx(3 * g.norm())

    def test_mismatched_groups(self, heis):
        g = GroupElement(heis, (0, 0, 0))
        h = GroupElement(abelian(3), (0, 0, 0))
        with pytest.raises(MalformedInputError):
            g * h

    def test_wrong_length(self, heis):
        with pytest.raises(MalformedInputError):
            GroupElement(heis, (0, 0))

    def test_exact_and_float_conversion(self):
        assert to_exact([0.5, sympy.Rational(1, 3)]) == (Fraction(1, 2), Fraction(1, 3))
        assert to_exact([0.1], max_denominator=100) == (Fraction(1, 10),)
        assert to_float([Fraction(1, 4)]) == (0.25,)


class TestNorms:
    @given(st.floats(0.1, 10), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=100, deadline=None)
    def test_homogeneous_norm_scales(self, lam, x, y, z):
        alg = heisenberg()
        base = homogeneous_norm(alg, [x, y, z])
        scaled = homogeneous_norm(alg, [lam * x, lam * y, lam ** 2 * z])
        assert scaled == pytest.approx(lam * base, rel=1e-9, abs=1e-12)

    def test_koranyi_gauge_vectorized(self):
        points = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.25]])
        np.testing.assert_allclose(koranyi_gauge(points), [1.0, 1.0])

    def test_norm_wrong_width(self, heis):
        with pytest.raises(MalformedInputError):
            homogeneous_norm(heis, [1.0, 2.0])


class TestLeftInvariantFields:
    def test_heisenberg_fields(self, heis):
        g0, g1, _ = group_symbols(3)
        X, Y, Z = left_invariant_fields(heis)
        assert X == (1, 0, -g1 / 2)
        assert Y == (0, 1, g0 / 2)
        assert Z == (0, 0, 1)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
