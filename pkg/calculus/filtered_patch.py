"""
Filtered Patches - vector-field filtrations on a single coordinate patch

A patch carries a frame X_1..X_n of vector fields with polynomial or
trigonometric-polynomial coefficients, each tagged with its filtration degree.
Brackets are computed symbolically and expanded back into the frame, which
gives the closure check, the pointwise osculating algebras and the bracket
coefficients used by the enveloping calculus. The exponential chart of the
tangent groupoid is the time-1 flow of the frame field -sum_j (delta_t xi)_j X_j;
on a coordinate frame this is exactly y = x - t xi.
"""

import logging
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy
from pydantic import BaseModel
from scipy.integrate import solve_ivp
from sympy.parsing.sympy_parser import parse_expr

from calculus.errors import DegenerateFrameError, DomainError, MalformedInputError
from calculus.graded_nilpotent import GradedLieAlgebra, validate

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

_ALLOWED_FUNCTIONS = {
    "sin": sympy.sin,
    "cos": sympy.cos,
    "exp": sympy.exp,
    "sqrt": sympy.sqrt,
    "pi": sympy.pi,
    "Rational": sympy.Rational,
}
_EXPRESSION_PATTERN = re.compile(r"^[A-Za-z0-9_+\-*/().,^ ]*$")


def parse_coefficient(text: str, symbols: Sequence[sympy.Symbol], location: str = "") -> sympy.Expr:
    """
    Parse a coefficient expression over the given coordinate symbols.

    Only arithmetic, the coordinate names and a few elementary functions are
    accepted.

    Raises:
        MalformedInputError: unparsable text or unknown names
    """
    if not isinstance(text, str) or not _EXPRESSION_PATTERN.match(text):
        raise MalformedInputError(f"invalid characters in expression {text!r}", location or None)
    namespace: Dict[str, object] = dict(_ALLOWED_FUNCTIONS)
    namespace.update({str(s): s for s in symbols})
    try:
        expr = parse_expr(text.replace("^", "**"), local_dict=namespace, evaluate=True)
    except (SyntaxError, TypeError, ValueError, sympy.SympifyError) as exc:
        raise MalformedInputError(f"cannot parse {text!r}: {exc}", location or None) from exc
    unknown = {str(s) for s in expr.free_symbols} - set(map(str, symbols))
    if unknown:
        raise MalformedInputError(f"unknown names {sorted(unknown)} in {text!r}", location or None)
    return expr


@dataclass(frozen=True)
class FilteredPatch:
    """
    Coordinate patch with a filtered frame.

    Args:
        coords: coordinate symbols x_1..x_n
        frame: frame[j][k] is the coefficient of d/dx_k in X_j
        orders: filtration degree d_j of X_j
        depth: N, the top of the filtration
        periodic: torus patch flag; coordinates are then taken mod `period`
        extent: (lo, hi) box per coordinate
        injectivity_radius: sup-norm bound on delta_t xi for the exponential chart
        frame_names: display names of the frame fields
        name: catalog name
    """

    coords: Tuple[sympy.Symbol, ...]
    frame: Tuple[Tuple[sympy.Expr, ...], ...]
    orders: Tuple[int, ...]
    depth: int
    periodic: bool = False
    period: float = TWO_PI
    extent: Tuple[Tuple[float, float], ...] = ()
    injectivity_radius: float = 1.0
    frame_names: Tuple[str, ...] = ()
    name: str = ""

    def __post_init__(self):
        n = len(self.coords)
        if len(self.frame) != n or any(len(row) != n for row in self.frame):
            raise MalformedInputError(f"frame must consist of {n} fields with {n} coefficients each")
        if len(self.orders) != n:
            raise MalformedInputError(f"expected {n} orders, got {len(self.orders)}")
        if any(d < 1 for d in self.orders):
            raise MalformedInputError(f"orders must be positive, got {self.orders}")
        if not self.extent:
            box = ((0.0, self.period),) * n if self.periodic else ((-1.0, 1.0),) * n
            object.__setattr__(self, "extent", box)
        if not self.frame_names:
            object.__setattr__(self, "frame_names", tuple(f"X{j}" for j in range(n)))
        if self.injectivity_radius <= 0:
            raise MalformedInputError("injectivity radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def frame_matrix(self) -> sympy.Matrix:
        """Rows are the frame fields in coordinate components."""
        return sympy.Matrix([list(row) for row in self.frame])

    def apply_field(self, j: int, f: sympy.Expr) -> sympy.Expr:
        """X_j(f) for a symbolic function f of the coordinates."""
        return sum(
            (c * sympy.diff(f, x) for c, x in zip(self.frame[j], self.coords) if c != 0),
            sympy.Integer(0),
        )

    def is_coordinate_frame(self) -> bool:
        n = self.dim
        return all(
            sympy.simplify(self.frame[j][k] - (1 if j == k else 0)) == 0
            for j in range(n) for k in range(n)
        )

    def has_constant_frame(self) -> bool:
        return all(not sympy.sympify(c).free_symbols for row in self.frame for c in row)

    def contains(self, x: Sequence[float]) -> bool:
        if len(x) != self.dim:
            return False
        if self.periodic:
            return True
        return all(lo <= float(v) <= hi for v, (lo, hi) in zip(x, self.extent))

    def wrap(self, y: np.ndarray) -> np.ndarray:
        return np.mod(y, self.period) if self.periodic else y

    def volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.extent]))


class FiltrationReport(BaseModel):
    """Closure check outcome with the computed bracket table."""

    ok: bool
    violation: Optional[str] = None
    indices: Tuple[int, ...] = ()
    message: str = ""
    brackets: Dict[str, List[str]] = {}


@lru_cache(maxsize=None)
def _frame_inverse(p: FilteredPatch) -> sympy.Matrix:
    return sympy.simplify(p.frame_matrix().inv())


@lru_cache(maxsize=None)
def _frame_det_function(p: FilteredPatch) -> Callable:
    return sympy.lambdify(p.coords, p.frame_matrix().det(), "numpy")


@lru_cache(maxsize=None)
def _frame_function(p: FilteredPatch) -> Callable:
    return sympy.lambdify(p.coords, p.frame_matrix(), "numpy")


def vector_field_bracket(p: FilteredPatch, u: Sequence[sympy.Expr], v: Sequence[sympy.Expr]) -> List[sympy.Expr]:
    """Coordinate components of [u, v] = sum_l (u^l d_l v^k - v^l d_l u^k)."""
    out = []
    for k in range(p.dim):
        total = sympy.Integer(0)
        for l, x in enumerate(p.coords):
            if u[l] != 0:
                total += u[l] * sympy.diff(v[k], x)
            if v[l] != 0:
                total -= v[l] * sympy.diff(u[k], x)
        out.append(sympy.expand(total))
    return out


@lru_cache(maxsize=None)
def bracket_coefficients(p: FilteredPatch, i: int, j: int) -> Tuple[sympy.Expr, ...]:
    """Frame expansion [X_i, X_j] = sum_k f_ij^k X_k, all degrees kept."""
    components = sympy.Matrix([vector_field_bracket(p, p.frame[i], p.frame[j])])
    coefficients = components * _frame_inverse(p)
    return tuple(sympy.simplify(c) for c in coefficients)


def _sample_points(p: FilteredPatch, per_axis: int = 5) -> List[Tuple[float, ...]]:
    axes = []
    for lo, hi in p.extent:
        if p.periodic:
            axes.append(np.linspace(lo, hi, per_axis, endpoint=False))
        else:
            axes.append(np.linspace(lo, hi, per_axis))
    return [tuple(float(v) for v in point) for point in product(*axes)]


def check_frame(p: FilteredPatch, per_axis: int = 5, tol: float = 1e-12) -> None:
    """
    Raise DegenerateFrameError if the frame determinant nearly vanishes on the sample grid.
    """
    det = _frame_det_function(p)
    for point in _sample_points(p, per_axis):
        value = float(np.abs(det(*point)))
        if value < tol:
            raise DegenerateFrameError(
                f"frame of patch {p.name or '<unnamed>'} is degenerate at {point} (|det| = {value:.3e})",
                point,
            )


def check_filtration(p: FilteredPatch) -> FiltrationReport:
    """
    Verify that the frame brackets respect the declared filtration.

    Args:
        p: patch with symbolic frame coefficients

    Returns:
        FiltrationReport, ok iff every [X_i, X_j] has zero component on X_k
        whenever d_k > min(d_i + d_j, depth) and every order is at most depth

    Raises:
        DegenerateFrameError: the frame is not a basis at some sample point
    """
    check_frame(p)
    d = p.orders
    table: Dict[str, List[str]] = {}
    first: Optional[FiltrationReport] = None
    for i in range(p.dim):
        for j in range(i + 1, p.dim):
            coeffs = bracket_coefficients(p, i, j)
            table[f"{i},{j}"] = [str(c) for c in coeffs]
            for k, c in enumerate(coeffs):
                if first is None and d[k] > min(d[i] + d[j], p.depth) and sympy.simplify(c) != 0:
                    first = FiltrationReport(
                        ok=False, violation="closure", indices=(i, j, k),
                        message=(
                            f"[{p.frame_names[i]}, {p.frame_names[j]}] has component {c} on "
                            f"{p.frame_names[k]} of degree {d[k]} > min({d[i]} + {d[j]}, depth {p.depth})"
                        ),
                    )
    if first is not None:
        first.brackets = table
        logger.info("filtration check failed: %s", first.message)
        return first
    for k, dk in enumerate(d):
        if dk > p.depth:
            return FiltrationReport(
                ok=False, violation="order_exceeds_depth", indices=(k,),
                message=f"{p.frame_names[k]} has order {dk} above depth {p.depth}",
                brackets=table,
            )
    return FiltrationReport(ok=True, brackets=table)


@lru_cache(maxsize=None)
def _checked(p: FilteredPatch) -> FilteredPatch:
    report = check_filtration(p)
    if not report.ok:
        raise MalformedInputError(f"patch {p.name or '<unnamed>'} fails the filtration check: {report.message}")
    return p


@dataclass(frozen=True)
class OsculatingFibre:
    """Osculating graded algebra at a base point."""

    base_point: Tuple[float, ...]
    algebra: GradedLieAlgebra


def osculating_constant_expressions(p: FilteredPatch) -> Dict[Tuple[int, int, int], sympy.Expr]:
    """Grading-compatible bracket coefficients f_ij^k (d_k = d_i + d_j) as functions of x."""
    _checked(p)
    d = p.orders
    out = {}
    for i in range(p.dim):
        for j in range(i + 1, p.dim):
            for k, c in enumerate(bracket_coefficients(p, i, j)):
                if d[k] == d[i] + d[j] and c != 0:
                    out[(i, j, k)] = c
    return out


def _exact_value(expr: sympy.Expr, max_denominator: int = 10 ** 12) -> Fraction:
    value = sympy.nsimplify(expr) if expr.is_number else expr
    if isinstance(value, sympy.Rational):
        return Fraction(int(value.p), int(value.q))
    approx = Fraction(float(sympy.N(expr, 30))).limit_denominator(max_denominator)
    logger.debug("osculating constant %s rounded to %s", expr, approx)
    return approx


def osculating_at(p: FilteredPatch, x: Sequence) -> OsculatingFibre:
    """
    Osculating algebra at x: bracket coefficients at x kept where d_k = d_i + d_j.

    Raises:
        DomainError: x outside the patch
        MalformedInputError: the patch fails its filtration check
    """
    if not p.contains(x):
        raise DomainError(f"point {tuple(x)} lies outside patch {p.name or '<unnamed>'}")
    point = [sympy.Rational(str(Fraction(v).limit_denominator(10 ** 9))) if not isinstance(v, Fraction)
             else sympy.Rational(v.numerator, v.denominator) for v in x]
    substitution = dict(zip(p.coords, point))
    brackets: Dict[Tuple[int, int], Dict[int, Fraction]] = {}
    for (i, j, k), expr in osculating_constant_expressions(p).items():
        value = _exact_value(sympy.sympify(expr).subs(substitution))
        if value != 0:
            brackets.setdefault((i, j), {})[k] = value
    algebra = GradedLieAlgebra.from_brackets(p.orders, brackets, names=p.frame_names, name=f"{p.name}@x")
    report = validate(algebra)
    if not report.ok:
        raise MalformedInputError(f"osculating algebra at {tuple(x)} is invalid: {report.message}")
    return OsculatingFibre(tuple(float(v) for v in x), algebra)


def _delta_t(orders: Sequence[int], xi: Sequence[float], t: float) -> np.ndarray:
    return np.array([t ** d * float(v) for d, v in zip(orders, xi)])


@dataclass(frozen=True)
class ChartImage:
    """Image of (x, xi, t) under the groupoid exponential: a pair for t != 0, a fibre point at t = 0."""

    base: Tuple[float, ...]
    t: float
    target: Optional[Tuple[float, ...]] = None
    fibre: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class ExponentialChart:
    """
    Tangent-groupoid exponential chart of a patch.

    The splitting sends graded coordinates to the frame, psi(xi) = sum_j xi_j X_j(x);
    the connection is the one making the frame parallel, whose geodesics are the
    flows of constant-coefficient frame combinations.
    """

    patch: FilteredPatch
    radius: Optional[float] = None

    @property
    def injectivity_radius(self) -> float:
        return self.radius if self.radius is not None else self.patch.injectivity_radius

    def splitting(self, x: Sequence[float], xi: Sequence[float]) -> np.ndarray:
        """psi(xi) at x in coordinate components."""
        frame = np.asarray(_frame_function(self.patch)(*[float(v) for v in x]), dtype=float)
        return np.asarray(xi, dtype=float) @ frame

    def grading_map(self, x: Sequence[float], v: Sequence[float], degree: int) -> np.ndarray:
        """Frame coordinates of v of the given degree, others zeroed (the map H^i -> H^i/H^(i-1))."""
        frame = np.asarray(_frame_function(self.patch)(*[float(u) for u in x]), dtype=float)
        coeffs = np.linalg.solve(frame.T, np.asarray(v, dtype=float))
        mask = np.array([d == degree for d in self.patch.orders])
        return np.where(mask, coeffs, 0.0)

    def __call__(self, x: Sequence[float], xi: Sequence[float], t: float) -> ChartImage:
        return exp_chart(self.patch, x, xi, t, radius=self.radius)


def _flow(p: FilteredPatch, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Time-1 flow of -sum_j v_j X_j starting at x."""
    if p.has_constant_frame():
        frame = np.asarray(_frame_function(p)(*x), dtype=float)
        return x - v @ frame
    frame_fn = _frame_function(p)

    def rhs(_s, y):
        return -(v @ np.asarray(frame_fn(*y), dtype=float))

    solution = solve_ivp(rhs, (0.0, 1.0), x, method="DOP853", rtol=1e-12, atol=1e-14)
    if not solution.success:
        raise DomainError(f"frame flow failed from {tuple(x)}: {solution.message}")
    return solution.y[:, -1]


def exp_chart(
    p: FilteredPatch,
    x: Sequence[float],
    xi: Sequence[float],
    t: float,
    radius: Optional[float] = None,
) -> ChartImage:
    """
    Groupoid exponential Exp(x, xi, t).

    For t != 0 the target is exp_x(-psi(delta_t xi)); for t = 0 the point stays
    in the osculating fibre as (x, xi).

    Raises:
        DomainError: x outside the patch or delta_t xi beyond the injectivity radius
    """
    if not p.contains(x):
        raise DomainError(f"point {tuple(x)} lies outside patch {p.name or '<unnamed>'}")
    if len(xi) != p.dim:
        raise MalformedInputError(f"expected {p.dim} graded coordinates, got {len(xi)}")
    base = np.asarray([float(v) for v in x])
    if t == 0:
        return ChartImage(tuple(base), 0.0, fibre=tuple(float(v) for v in xi))
    v = _delta_t(p.orders, xi, t)
    bound = radius if radius is not None else p.injectivity_radius
    size = float(np.max(np.abs(v))) if v.size else 0.0
    if size > bound:
        raise DomainError(f"|delta_t xi| = {size:.6g} exceeds the injectivity radius {bound:.6g}")
    target = p.wrap(_flow(p, base, v))
    return ChartImage(tuple(base), float(t), target=tuple(float(y) for y in target))


class InjectivityReport(BaseModel):
    ok: bool
    samples: int
    min_image_separation: float
    collisions: List[Tuple[int, int]] = []


def sample_injectivity(
    p: FilteredPatch,
    x: Sequence[float],
    t: float = 1.0,
    samples: int = 64,
    seed: int = 0,
    tol: float = 1e-9,
) -> InjectivityReport:
    """Sampled collision test of xi -> Exp(x, xi, t) inside the injectivity domain."""
    rng = np.random.default_rng(seed)
    bound = 0.99 * p.injectivity_radius
    scale = np.array([abs(t) ** d for d in p.orders])
    points = rng.uniform(-bound, bound, size=(samples, p.dim)) / scale
    images = np.array([exp_chart(p, x, xi, t).target for xi in points])
    if p.periodic:
        diff = images[:, None, :] - images[None, :, :]
        diff = (diff + p.period / 2) % p.period - p.period / 2
        dist = np.max(np.abs(diff), axis=-1)
    else:
        dist = np.max(np.abs(images[:, None, :] - images[None, :, :]), axis=-1)
    source = np.max(np.abs(points[:, None, :] - points[None, :, :]), axis=-1)
    iu = np.triu_indices(samples, k=1)
    collisions = [
        (int(a), int(b)) for a, b in zip(*iu) if dist[a, b] < tol and source[a, b] > tol
    ]
    return InjectivityReport(
        ok=not collisions,
        samples=samples,
        min_image_separation=float(dist[iu].min()) if samples > 1 else math.inf,
        collisions=collisions,
    )


# Shipped patches

def _symbols(names: str) -> Tuple[sympy.Symbol, ...]:
    return tuple(sympy.symbols(names, real=True))


def trivial_patch(n: int, half_width: float = 10.0) -> FilteredPatch:
    """R^n with the coordinate frame, all orders 1."""
    coords = tuple(sympy.symbols(f"x0:{n}", real=True))
    frame = tuple(tuple(sympy.Integer(int(j == k)) for k in range(n)) for j in range(n))
    return FilteredPatch(
        coords, frame, (1,) * n, 1, extent=((-half_width, half_width),) * n,
        injectivity_radius=half_width / 2, frame_names=tuple(f"D{k}" for k in range(n)),
        name=f"trivial{n}",
    )


def torus_patch(n: int) -> FilteredPatch:
    """Flat torus T^n = (R / 2 pi Z)^n with the coordinate frame."""
    coords = tuple(sympy.symbols(f"x0:{n}", real=True))
    frame = tuple(tuple(sympy.Integer(int(j == k)) for k in range(n)) for j in range(n))
    return FilteredPatch(
        coords, frame, (1,) * n, 1, periodic=True, injectivity_radius=math.pi,
        frame_names=tuple(f"D{k}" for k in range(n)), name=f"torus{n}",
    )


def heisenberg_patch(depth: int = 2, orders: Tuple[int, ...] = (1, 1, 2)) -> FilteredPatch:
    """R^3 with X = dx - (y/2) dz, Y = dy + (x/2) dz, Z = dz."""
    x, y, z = _symbols("x y z")
    half = sympy.Rational(1, 2)
    frame = (
        (sympy.Integer(1), sympy.Integer(0), -half * y),
        (sympy.Integer(0), sympy.Integer(1), half * x),
        (sympy.Integer(0), sympy.Integer(0), sympy.Integer(1)),
    )
    return FilteredPatch(
        (x, y, z), frame, orders, depth, extent=((-4.0, 4.0),) * 3, injectivity_radius=2.0,
        frame_names=("X", "Y", "Z"), name="heis" if depth == 2 else f"heis_depth{depth}",
    )


def heisenberg_depth_one_patch() -> FilteredPatch:
    """Negative case: Heisenberg frame declared with depth 1, so [X, Y] = Z escapes H^1."""
    return heisenberg_patch(depth=1)


def engel_patch() -> FilteredPatch:
    """R^4 with X1 = d1, X2 = d2 + x1 d3 + (x1^2/2) d4, X3 = d3 + x1 d4, X4 = d4."""
    x1, x2, x3, x4 = _symbols("x1 x2 x3 x4")
    zero, one = sympy.Integer(0), sympy.Integer(1)
    frame = (
        (one, zero, zero, zero),
        (zero, one, x1, x1 ** 2 / 2),
        (zero, zero, one, x1),
        (zero, zero, zero, one),
    )
    return FilteredPatch(
        (x1, x2, x3, x4), frame, (1, 1, 2, 3), 3, extent=((-2.0, 2.0),) * 4, injectivity_radius=1.0,
        frame_names=("X1", "X2", "X3", "X4"), name="engel",
    )


def twisted_heisenberg_patch() -> FilteredPatch:
    """X = dx, Y = dy + (x + x^3/3) dz, Z = dz: the osculating constant of [X, Y] is 1 + x^2."""
    x, y, z = _symbols("x y z")
    zero, one = sympy.Integer(0), sympy.Integer(1)
    frame = ((one, zero, zero), (zero, one, x + x ** 3 / 3), (zero, zero, one))
    return FilteredPatch(
        (x, y, z), frame, (1, 1, 2), 2, extent=((-2.0, 2.0),) * 3, injectivity_radius=1.0,
        frame_names=("X", "Y", "Z"), name="twisted_heis",
    )


PATCH_CATALOG = {
    "trivial1": lambda: trivial_patch(1),
    "trivial2": lambda: trivial_patch(2),
    "torus1": lambda: torus_patch(1),
    "torus2": lambda: torus_patch(2),
    "heis": heisenberg_patch,
    "heis_depth1": heisenberg_depth_one_patch,
    "engel": engel_patch,
    "twisted_heis": twisted_heisenberg_patch,
}
