"""
Graded Nilpotent Lie Algebras - exact structure constants, dilations and BCH

Structure constants are exact rationals. Group elements are stored in
exponential coordinates of the first kind and multiplied with the
Baker-Campbell-Hausdorff series, truncated at the step of the algebra, so the
product is exact whenever the coordinates are rationals (or sympy symbols).
Floating coordinates are accepted for the numeric layer.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from pydantic import BaseModel

from calculus.errors import DomainError, MalformedInputError

logger = logging.getLogger(__name__)

Scalar = Union[Fraction, float, int, sympy.Expr]
Coords = Tuple[Scalar, ...]


@dataclass(frozen=True)
class GradedLieAlgebra:
    """
    Graded nilpotent Lie algebra with basis e_1..e_n.

    Args:
        weights: grading degree d_j of each basis vector
        structure_constants: c[i][j][k] with [e_i, e_j] = sum_k c[i][j][k] e_k
        names: display names of the basis vectors
        name: catalog name, if any
    """

    weights: Tuple[int, ...]
    structure_constants: Tuple[Tuple[Tuple[Fraction, ...], ...], ...]
    names: Tuple[str, ...] = ()
    name: str = ""

    @property
    def dim(self) -> int:
        return len(self.weights)

    @property
    def step(self) -> int:
        return max(self.weights)

    @property
    def homogeneous_dimension(self) -> int:
        return sum(self.weights)

    @property
    def weight_lcm(self) -> int:
        return math.lcm(*self.weights)

    def basis_names(self) -> Tuple[str, ...]:
        if self.names:
            return self.names
        return tuple(f"e{j}" for j in range(self.dim))

    def bracket(self, u: Sequence[Scalar], v: Sequence[Scalar]) -> List[Scalar]:
        """Lie bracket of two coordinate vectors."""
        n = self.dim
        out: List[Scalar] = [0] * n
        c = self.structure_constants
        for i in range(n):
            if u[i] == 0:
                continue
            for j in range(n):
                if v[j] == 0:
                    continue
                cij = c[i][j]
                for k in range(n):
                    if cij[k] != 0:
                        out[k] = out[k] + cij[k] * u[i] * v[j]
        return out

    @classmethod
    def from_brackets(
        cls,
        weights: Sequence[int],
        brackets: Dict[Tuple[int, int], Dict[int, Fraction]],
        names: Sequence[str] = (),
        name: str = "",
    ) -> "GradedLieAlgebra":
        """
        Build an algebra from the brackets [e_i, e_j] with i < j.

        The antisymmetric partner [e_j, e_i] is filled in automatically.
        """
        n = len(weights)
        table = [[[Fraction(0)] * n for _ in range(n)] for _ in range(n)]
        for (i, j), coeffs in brackets.items():
            if not (0 <= i < n and 0 <= j < n):
                raise MalformedInputError(f"bracket index ({i}, {j}) out of range for dim {n}")
            for k, value in coeffs.items():
                if not 0 <= k < n:
                    raise MalformedInputError(f"bracket target {k} out of range for dim {n}")
                value = Fraction(value)
                table[i][j][k] = value
                table[j][i][k] = -value
        constants = tuple(tuple(tuple(row) for row in plane) for plane in table)
        return cls(tuple(int(w) for w in weights), constants, tuple(names), name)


class ValidationReport(BaseModel):
    """Outcome of an identity check; `indices` locate the first violation."""

    ok: bool
    violation: Optional[str] = None
    indices: Tuple[int, ...] = ()
    message: str = ""


def _check_shapes(alg: GradedLieAlgebra) -> None:
    n = alg.dim
    if n == 0:
        raise MalformedInputError("algebra must have positive dimension")
    if any((not isinstance(w, int)) or w < 1 for w in alg.weights):
        raise MalformedInputError(f"weights must be positive integers, got {alg.weights}")
    c = alg.structure_constants
    if len(c) != n or any(len(plane) != n for plane in c) or any(
        len(row) != n for plane in c for row in plane
    ):
        raise MalformedInputError(
            f"structure constants must have shape ({n}, {n}, {n}) to match {n} weights"
        )


def validate(alg: GradedLieAlgebra) -> ValidationReport:
    """
    Check antisymmetry, grading, nilpotency and the Jacobi identity, in that order.

    Args:
        alg: algebra to check

    Returns:
        ValidationReport; on failure it names the first violated identity

    Raises:
        MalformedInputError: weights and structure constants disagree in size
    """
    _check_shapes(alg)
    n = alg.dim
    c = alg.structure_constants
    d = alg.weights

    for i, j, k in product(range(n), repeat=3):
        if c[i][j][k] != -c[j][i][k]:
            return ValidationReport(
                ok=False, violation="antisymmetry", indices=(i, j, k),
                message=f"c[{i}][{j}][{k}] = {c[i][j][k]} but c[{j}][{i}][{k}] = {c[j][i][k]}",
            )

    for i, j, k in product(range(n), repeat=3):
        if c[i][j][k] != 0 and d[k] != d[i] + d[j]:
            return ValidationReport(
                ok=False, violation="grading", indices=(i, j, k),
                message=f"[e{i}, e{j}] has a component on e{k} of degree {d[k]} != {d[i]} + {d[j]}",
            )

    step = alg.step
    for i, j, k in product(range(n), repeat=3):
        if c[i][j][k] != 0 and d[i] + d[j] > step:
            return ValidationReport(
                ok=False, violation="nilpotency", indices=(i, j, k),
                message=f"bracket of weight {d[i] + d[j]} exceeds step {step}",
            )

    basis = [[Fraction(int(a == b)) for b in range(n)] for a in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            for l in range(j + 1, n):
                ei, ej, el = basis[i], basis[j], basis[l]
                total = [
                    a + b + e
                    for a, b, e in zip(
                        alg.bracket(ei, alg.bracket(ej, el)),
                        alg.bracket(ej, alg.bracket(el, ei)),
                        alg.bracket(el, alg.bracket(ei, ej)),
                    )
                ]
                if any(v != 0 for v in total):
                    return ValidationReport(
                        ok=False, violation="jacobi", indices=(i, j, l),
                        message=f"Jacobi sum for (e{i}, e{j}, e{l}) is {[str(v) for v in total]}",
                    )

    return ValidationReport(ok=True)


def dilate(alg: GradedLieAlgebra, lam: Scalar, xi: Sequence[Scalar]) -> Coords:
    """Apply delta_lambda: component j is scaled by lam ** d_j."""
    if not lam > 0:
        raise DomainError(f"dilation parameter must be positive, got {lam}")
    if len(xi) != alg.dim:
        raise MalformedInputError(f"expected {alg.dim} coordinates, got {len(xi)}")
    return tuple(lam ** w * x for w, x in zip(alg.weights, xi))


@lru_cache(maxsize=None)
def dynkin_terms(max_length: int) -> Tuple[Tuple[Tuple[int, ...], Fraction], ...]:
    """
    Dynkin coefficients of log(exp X exp Y), aggregated per bracket word.

    Words are over {0: X, 1: Y} and are read as right-nested brackets
    [w1, [w2, ... [w_{L-1}, w_L]]]. Only words up to `max_length` letters are kept.
    """
    coefficients: Dict[Tuple[int, ...], Fraction] = {}

    def blocks(remaining: int):
        # compositions into (r, s) pairs with r + s >= 1
        if remaining == 0:
            yield ()
            return
        for size in range(1, remaining + 1):
            for r in range(size + 1):
                for rest in blocks(remaining - size):
                    yield ((r, size - r),) + rest

    for length in range(1, max_length + 1):
        for pairs in blocks(length):
            n = len(pairs)
            word: Tuple[int, ...] = ()
            denominator = 1
            for r, s in pairs:
                word += (0,) * r + (1,) * s
                denominator *= math.factorial(r) * math.factorial(s)
            if length > 1 and word[-1] == word[-2]:
                continue
            coeff = Fraction((-1) ** (n - 1), n * length * denominator)
            coefficients[word] = coefficients.get(word, Fraction(0)) + coeff

    terms = tuple(sorted((w, c) for w, c in coefficients.items() if c != 0))
    logger.debug("dynkin table up to length %d has %d words", max_length, len(terms))
    return terms


def bch_multiply(alg: GradedLieAlgebra, xi: Sequence[Scalar], zeta: Sequence[Scalar]) -> Coords:
    """
    Group product log(exp xi * exp zeta), exact up to the step of the algebra.

    Args:
        alg: validated graded algebra
        xi: left factor in exponential coordinates
        zeta: right factor in exponential coordinates

    Returns:
        Coordinates of the product

    Raises:
        MalformedInputError: coordinate vectors of the wrong length
    """
    n = alg.dim
    if len(xi) != n or len(zeta) != n:
        raise MalformedInputError(f"expected {n} coordinates, got {len(xi)} and {len(zeta)}")
    letters = (list(xi), list(zeta))
    result: List[Scalar] = [0] * n
    for word, coeff in dynkin_terms(alg.step):
        acc = letters[word[-1]]
        for letter in reversed(word[:-1]):
            acc = alg.bracket(letters[letter], acc)
            if all(v == 0 for v in acc):
                break
        else:
            for k in range(n):
                if acc[k] != 0:
                    result[k] = result[k] + coeff * acc[k]
    return tuple(result)


def homogeneous_norm(alg: GradedLieAlgebra, xi) -> np.ndarray:
    """
    Canonical homogeneous norm (sum_j |xi_j|^(2L/d_j))^(1/(2L)), L = lcm of weights.

    The last axis of `xi` holds the coordinates, so arrays of points are accepted.
    """
    return weighted_norm(alg.weights, xi)


def weighted_norm(weights: Sequence[int], xi) -> np.ndarray:
    arr = np.asarray(xi, dtype=float)
    if arr.shape[-1] != len(weights):
        raise MalformedInputError(f"expected {len(weights)} coordinates, got shape {arr.shape}")
    big = math.lcm(*weights)
    total = np.zeros(arr.shape[:-1])
    for j, w in enumerate(weights):
        total = total + np.abs(arr[..., j]) ** (2 * big // w)
    out = total ** (1.0 / (2 * big))
    return out if out.ndim else float(out)


def koranyi_gauge(xi) -> np.ndarray:
    """Korányi gauge ((x^2 + y^2)^2 + 16 z^2)^(1/4) on the Heisenberg algebra."""
    arr = np.asarray(xi, dtype=float)
    r2 = arr[..., 0] ** 2 + arr[..., 1] ** 2
    out = (r2 ** 2 + 16.0 * arr[..., 2] ** 2) ** 0.25
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class GroupElement:
    """Element of the simply connected group, in exponential coordinates."""

    algebra: GradedLieAlgebra
    coords: Coords

    def __post_init__(self):
        if len(self.coords) != self.algebra.dim:
            raise MalformedInputError(
                f"group element needs {self.algebra.dim} coordinates, got {len(self.coords)}"
            )

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        if other.algebra != self.algebra:
            raise MalformedInputError("cannot multiply elements of different groups")
        return GroupElement(self.algebra, bch_multiply(self.algebra, self.coords, other.coords))

    def inverse(self) -> "GroupElement":
        return GroupElement(self.algebra, tuple(-c for c in self.coords))

    def dilate(self, lam: Scalar) -> "GroupElement":
        return GroupElement(self.algebra, dilate(self.algebra, lam, self.coords))

    def norm(self) -> float:
        return homogeneous_norm(self.algebra, [float(c) for c in self.coords])

    @classmethod
    def identity(cls, alg: GradedLieAlgebra) -> "GroupElement":
        return cls(alg, tuple(Fraction(0) for _ in range(alg.dim)))


def to_exact(coords: Sequence[Scalar], max_denominator: Optional[int] = None) -> Tuple[Fraction, ...]:
    """Convert coordinates to Fractions; floats convert exactly unless a denominator cap is given."""
    out = []
    for c in coords:
        value = Fraction(c) if not isinstance(c, sympy.Basic) else Fraction(str(sympy.nsimplify(c)))
        if max_denominator is not None:
            value = value.limit_denominator(max_denominator)
        out.append(value)
    return tuple(out)


def to_float(coords: Sequence[Scalar]) -> Tuple[float, ...]:
    return tuple(float(c) for c in coords)


@lru_cache(maxsize=None)
def left_invariant_fields(alg: GradedLieAlgebra) -> Tuple[Tuple[sympy.Expr, ...], ...]:
    """
    Left-invariant vector fields of the group in exponential coordinates.

    Field j at g is d/ds log(exp g exp(s e_j)) at s = 0, returned as a tuple of
    coefficient expressions in the symbols g0..g{n-1} (see `group_symbols`).
    """
    g = group_symbols(alg.dim)
    s = sympy.Symbol("s")
    fields = []
    for j in range(alg.dim):
        direction = [s if k == j else sympy.Integer(0) for k in range(alg.dim)]
        prod = bch_multiply(alg, list(g), direction)
        fields.append(tuple(sympy.expand(sympy.diff(sympy.sympify(c), s).subs(s, 0)) for c in prod))
    return tuple(fields)


def group_symbols(n: int) -> Tuple[sympy.Symbol, ...]:
    return sympy.symbols(f"g0:{n}", real=True)


def abelian(n: int) -> GradedLieAlgebra:
    """Abelian algebra R^n, all weights 1."""
    return GradedLieAlgebra.from_brackets(
        [1] * n, {}, names=tuple(f"e{j}" for j in range(n)), name=f"abelian{n}"
    )


def heisenberg() -> GradedLieAlgebra:
    """heis_1: weights (1, 1, 2), [X, Y] = Z."""
    return GradedLieAlgebra.from_brackets(
        [1, 1, 2], {(0, 1): {2: Fraction(1)}}, names=("X", "Y", "Z"), name="heis"
    )


def engel() -> GradedLieAlgebra:
    """Engel algebra: weights (1, 1, 2, 3), [X1, X2] = X3, [X1, X3] = X4."""
    return GradedLieAlgebra.from_brackets(
        [1, 1, 2, 3],
        {(0, 1): {2: Fraction(1)}, (0, 2): {3: Fraction(1)}},
        names=("X1", "X2", "X3", "X4"),
        name="engel",
    )


CATALOG = {
    "heis": heisenberg,
    "engel": engel,
    "abelian1": lambda: abelian(1),
    "abelian2": lambda: abelian(2),
    "abelian3": lambda: abelian(3),
}
