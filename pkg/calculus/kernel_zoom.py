"""
Kernel Zoom - extended full symbols on a torus and the dual zoom action

A symbol family samples P^(x, eta, t) on a periodic x-grid, a centred
frequency lattice and a dyadic t-grid. Values use the Kohn-Nirenberg
convention a^(x, eta) = sum_xi h^d k(x, x - xi) exp(-i eta.xi), so the
identity has symbol 1 and -Laplace has symbol |eta|^2.

Families may carry a closed-form source (a Fourier-side profile, a kernel-side
profile, or a linear combination). Zooming a sourced family evaluates the
source exactly; gridded families are resampled on the lattice for dyadic
lambda >= 1, or interpolated on request.

Schwartz-class membership is replaced by rapid decay across dyadic shells:
a field passes when its tail slope over the last shells above the noise floor
is at most -max_order, or when fewer than two shells rise above the floor.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from pydantic import BaseModel
from scipy.interpolate import RegularGridInterpolator

from calculus.enveloping_calculus import FilteredDiffOp, apply_operator, h_weight
from calculus.errors import (
    ConvergenceError,
    CutoffRequiredError,
    DomainError,
    LatticeMismatchError,
    MalformedInputError,
    NotHomogeneousError,
    RefineGridError,
)
from calculus.filtered_patch import parse_coefficient
from calculus.graded_nilpotent import weighted_norm
from calculus.lattice import (
    DEFAULT_MARGIN,
    DEFAULT_S_MIN,
    TGrid,
    TorusGrid,
    broadcast_norm,
    dyadic_exponent,
    eta_derivative,
    exponential_cutoff,
    multi_indices,
    shell_fit,
    smooth_step,
    t_derivative,
)
from calculus.worker_pool import get_worker_pool

logger = logging.getLogger(__name__)

DEFAULT_MAX_ORDER = 8.0
DEFAULT_LAMBDAS = tuple(2.0 ** j for j in range(-3, 4))
DECAY_SLACK = 0.1
NOISE_RELATIVE = 1e-10
NOISE_ABSOLUTE = 1e-12
DEFAULT_TOL = 1e-8


# Sources

@dataclass(frozen=True)
class FourierProfile:
    """
    Closed-form symbol func(x, eta, t) on the Fourier side.

    `func` receives tuples of broadcastable x and eta arrays and a float t.
    """

    func: Callable
    weights: Tuple[int, ...]
    zoom: float = 1.0
    label: str = ""

    def zoomed(self, lam: float) -> "FourierProfile":
        return replace(self, zoom=self.zoom * lam)

    def sample(self, grid: TorusGrid, t: float) -> np.ndarray:
        lam = self.zoom
        eta = tuple(lam ** w * e for w, e in zip(self.weights, grid.eta_mesh()))
        values = self.func(grid.x_mesh(), eta, lam * float(t))
        return np.broadcast_to(np.asarray(values, dtype=complex), grid.slice_shape).copy()


@dataclass(frozen=True)
class KernelProfile:
    """
    Kernel-side profile smooth(x, xi, t) + A log|xi| in exponential coordinates.

    Zooming pushes the kernel forward as a density,
    lam^(-d_H) k(x, delta_(1/lam) xi, lam t). The logarithmic part is 1-D only;
    its diagonal sample is log(h / 2 pi), the zeta-corrected trapezoid value.
    """

    smooth: Callable
    weights: Tuple[int, ...]
    log_coefficient: float = 0.0
    zoom: float = 1.0
    label: str = ""

    def zoomed(self, lam: float) -> "KernelProfile":
        return replace(self, zoom=self.zoom * lam)

    def kernel(self, grid: TorusGrid, t: float) -> np.ndarray:
        lam = self.zoom
        xi = tuple(e / lam ** w for w, e in zip(self.weights, grid.xi_mesh()))
        values = np.broadcast_to(
            np.asarray(self.smooth(grid.x_mesh(), xi, lam * float(t)), dtype=complex), grid.slice_shape
        ).copy()
        if self.log_coefficient:
            if grid.d != 1:
                raise MalformedInputError("logarithmic kernel profiles are supported on 1-D tori only")
            r = np.abs(grid.xi_axis())
            logs = np.empty_like(r)
            nonzero = r > 0
            logs[nonzero] = np.log(r[nonzero])
            logs[~nonzero] = math.log(grid.xi_step / (2.0 * math.pi))
            values = values + self.log_coefficient * (logs - math.log(lam)).reshape((1, -1))
        return values * lam ** (-sum(self.weights))

    def sample(self, grid: TorusGrid, t: float) -> np.ndarray:
        return symbol_values(self.kernel(grid, t), grid)


@dataclass(frozen=True)
class CombinedSource:
    """Linear combination sum_i c_i * source_i."""

    parts: Tuple[Tuple[complex, object], ...]

    @property
    def weights(self) -> Tuple[int, ...]:
        return self.parts[0][1].weights

    def zoomed(self, lam: float) -> "CombinedSource":
        return CombinedSource(tuple((c, s.zoomed(lam)) for c, s in self.parts))

    def sample(self, grid: TorusGrid, t: float) -> np.ndarray:
        total = np.zeros(grid.slice_shape, dtype=complex)
        for c, s in self.parts:
            total = total + c * s.sample(grid, t)
        return total


@dataclass(frozen=True)
class ProductSource:
    """Pointwise product of sources; the symbol of a composition of x-independent families."""

    factors: Tuple[object, ...]

    @property
    def weights(self) -> Tuple[int, ...]:
        return self.factors[0].weights

    def zoomed(self, lam: float) -> "ProductSource":
        return ProductSource(tuple(s.zoomed(lam) for s in self.factors))

    def sample(self, grid: TorusGrid, t: float) -> np.ndarray:
        total = np.ones(grid.slice_shape, dtype=complex)
        for s in self.factors:
            total = total * s.sample(grid, t)
        return total


Source = Union[FourierProfile, KernelProfile, CombinedSource, ProductSource]


# Slices and families

@dataclass(frozen=True, eq=False)
class SymbolSlice:
    """Symbol values on (x, eta) at one t; shape (n_x,)*d + (n_eta,)*d."""

    grid: TorusGrid
    values: np.ndarray
    weight: float = 0.0
    weights: Tuple[int, ...] = ()
    name: str = ""

    def __post_init__(self):
        if not self.weights:
            object.__setattr__(self, "weights", (1,) * self.grid.d)
        if self.values.shape != self.grid.slice_shape:
            raise MalformedInputError(f"slice shape {self.values.shape} != grid shape {self.grid.slice_shape}")

    def norm(self) -> np.ndarray:
        return broadcast_norm(self.grid.eta_norm(self.weights), self.values.shape, self.grid.d)

    def with_values(self, values: np.ndarray, **changes) -> "SymbolSlice":
        return replace(self, values=values, **changes)


@dataclass(frozen=True, eq=False)
class SymbolFamily:
    """
    Extended full symbol on x-grid x lattice x t-grid.

    values has shape (n_x,)*d + (n_eta,)*d + (len(tgrid),); NaN marks entries
    a resampling could not define.
    """

    grid: TorusGrid
    tgrid: TGrid
    values: np.ndarray
    weight: float
    weights: Tuple[int, ...] = ()
    source: Optional[Source] = None
    name: str = ""

    def __post_init__(self):
        if not self.weights:
            object.__setattr__(self, "weights", (1,) * self.grid.d)
        expected = self.grid.slice_shape + (self.tgrid.size,)
        if self.values.shape != expected:
            raise MalformedInputError(f"family shape {self.values.shape} != expected {expected}")

    @property
    def homogeneous_dimension(self) -> int:
        return sum(self.weights)


def symbol_values(kernel: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Fibrewise DFT of a kernel given on (x, xi offsets)."""
    axes = tuple(range(grid.d, 2 * grid.d))
    spectrum = np.fft.fftn(np.fft.ifftshift(kernel, axes=axes), axes=axes)
    return np.fft.fftshift(spectrum, axes=axes) * grid.xi_step ** grid.d


def kernel_values(symbol: np.ndarray, grid: TorusGrid) -> np.ndarray:
    axes = tuple(range(grid.d, 2 * grid.d))
    kernel = np.fft.ifftn(np.fft.ifftshift(symbol, axes=axes), axes=axes)
    return np.fft.fftshift(kernel, axes=axes) / grid.xi_step ** grid.d


def pullback_kernel(k_xy: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Pull a kernel on patch x patch back to chart coordinates: k~(x, xi) = k(x, x - xi)."""
    n, d = grid.n_eta, grid.d
    if grid.n_x != n or k_xy.shape != (n,) * (2 * d):
        raise MalformedInputError(f"patch x patch kernel needs shape {(n,) * (2 * d)} on a grid with n_x = n_eta")
    idx = np.arange(n)
    target = (idx[:, None] - (idx[None, :] - n // 2)) % n
    index = []
    for j in range(d):
        shape = [1] * (2 * d)
        shape[j] = n
        index.append(idx.reshape(shape))
    for j in range(d):
        shape = [1] * (2 * d)
        shape[j] = n
        shape[d + j] = n
        index.append(target.reshape(shape))
    return k_xy[tuple(index)]


def symbol_from_kernel(
    kernel: np.ndarray,
    grid: TorusGrid,
    weight: float = 0.0,
    weights: Sequence[int] = (),
    radius: Optional[float] = None,
    apply_cutoff: bool = False,
    tol: float = 1e-12,
    name: str = "",
) -> SymbolSlice:
    """
    t = 1 symbol slice of a kernel given in chart coordinates (x, xi).

    Args:
        kernel: array of shape grid.slice_shape, axis layout (x..., xi...)
        radius: chart injectivity radius; below half the period the kernel must
            vanish outside it, or be cut off when `apply_cutoff` is set

    Raises:
        CutoffRequiredError: kernel support leaks past the radius without a cutoff
    """
    kernel = np.asarray(kernel, dtype=complex)
    if kernel.shape != grid.slice_shape:
        raise MalformedInputError(f"kernel shape {kernel.shape} != grid shape {grid.slice_shape}")
    weights = tuple(weights) or (1,) * grid.d
    if radius is not None and radius < grid.period / 2:
        r = broadcast_norm(grid.xi_norm((1,) * grid.d), kernel.shape, grid.d)
        if apply_cutoff:
            kernel = kernel * exponential_cutoff(r, radius)
        else:
            scale = float(np.max(np.abs(kernel))) or 1.0
            leak = float(np.max(np.abs(np.where(r > radius, kernel, 0.0))))
            if leak > tol * scale:
                raise CutoffRequiredError(
                    f"kernel has mass {leak:.3e} beyond the chart radius {radius}; apply the exponential cutoff"
                )
    return SymbolSlice(grid, symbol_values(kernel, grid), weight, weights, name)


def kernel_from_symbol(S: SymbolSlice) -> np.ndarray:
    """Inverse of `symbol_from_kernel`: kernel on (x, xi offsets)."""
    return kernel_values(S.values, S.grid)


def family_from_source(source: Source, grid: TorusGrid, tgrid: TGrid, weight: float, name: str = "") -> SymbolFamily:
    slices = get_worker_pool().map_ordered(lambda t: source.sample(grid, t), list(tgrid.values))
    return SymbolFamily(grid, tgrid, np.stack(slices, axis=-1), weight, tuple(source.weights), source, name)


def restrict_t(S: SymbolFamily, t: float) -> SymbolSlice:
    """The slice at grid point t; DomainError for off-grid t."""
    idx = S.tgrid.index(t)
    return SymbolSlice(S.grid, S.values[..., idx].copy(), S.weight, S.weights, f"{S.name}@t={t:g}")


# Shipped families

def profile_family(
    func: Callable, grid: TorusGrid, tgrid: TGrid, weight: float,
    weights: Sequence[int] = (), name: str = "",
) -> SymbolFamily:
    weights = tuple(weights) or (1,) * grid.d
    return family_from_source(FourierProfile(func, weights, label=name), grid, tgrid, weight, name)


def expression_family(
    expression: str, grid: TorusGrid, tgrid: TGrid, weight: float,
    weights: Sequence[int] = (), name: str = "",
) -> SymbolFamily:
    """
    Family from a text expression in x0.., eta0.. and t, e.g. "sqrt(t^2 + eta0^2)".

    Raises:
        MalformedInputError: the expression does not parse
    """
    xs = sympy.symbols(f"x0:{grid.d}", real=True)
    etas = sympy.symbols(f"eta0:{grid.d}", real=True)
    t = sympy.Symbol("t", real=True)
    namespace = list(xs) + list(etas) + [t]
    expr = parse_coefficient(expression, namespace, location=name or "symbol expression")
    fn = sympy.lambdify(namespace, expr, "numpy")
    return profile_family(lambda x, eta, tt: fn(*x, *eta, tt), grid, tgrid, weight, weights, name or expression)


def sqrt_family(grid: TorusGrid, tgrid: TGrid) -> SymbolFamily:
    """(t^2 + |eta|^2)^(1/2), jointly homogeneous of weight 1."""
    return profile_family(
        lambda x, eta, t: np.sqrt(t ** 2 + sum(e ** 2 for e in eta)), grid, tgrid, 1.0, name="sqrt"
    )


def log_kernel_family(grid: TorusGrid, tgrid: TGrid, cutoff_radius: Optional[float] = None) -> SymbolFamily:
    """
    Constant family of the kernel log|xi| on T^1, weight -1.

    Without a cutoff the kernel is uncut on the fundamental box, and the raw
    cocycle is exactly -lam^-1 log(lam) at every xi. With a cutoff the kernel is
    chi(|xi| / R) log|xi|, smooth off the diagonal.
    """
    if grid.d != 1:
        raise MalformedInputError("the log-kernel family lives on T^1")
    if cutoff_radius is None:
        smooth = _zero_profile
        name = "log_kernel"
    else:
        def smooth(x, xi, t):
            r = np.abs(xi[0])
            safe = np.where(r > 0, r, 1.0)
            return np.where(r > 0, (exponential_cutoff(r, cutoff_radius) - 1.0) * np.log(safe), 0.0)
        name = f"log_kernel_cut{cutoff_radius:g}"
    source = KernelProfile(smooth, (1,), log_coefficient=1.0, label=name)
    return family_from_source(source, grid, tgrid, -1.0, name)


def _zero_profile(x, xi, t):
    return 0.0


def _euclidean_symbols(A: FilteredDiffOp) -> Dict[Tuple[int, ...], sympy.Expr]:
    """Per multi-index, e^(-i eta.x) X^a e^(i eta.x) as an expression in x and eta."""
    p = A.patch
    etas = sympy.symbols(f"eta0:{p.dim}", real=True)
    plane = sympy.exp(sympy.I * sum(e * x for e, x in zip(etas, p.coords)))
    out = {}
    for a, _ in A.terms:
        single = FilteredDiffOp.from_terms(p, {a: 1})
        out[a] = sympy.expand(sympy.simplify(apply_operator(single, plane) / plane))
    return out


def family_from_operator(A: FilteredDiffOp, grid: TorusGrid, tgrid: TGrid, name: str = "") -> SymbolFamily:
    """
    Full symbol family sum_a t^(m - |a|_H) c_a(x) e^(-i eta.x) X^a e^(i eta.x).

    On a coordinate frame this is the classical symbol with t-powers; otherwise
    the frame must be left-invariant with constant coefficients and the symbol
    is taken at the identity (the osculating-model Euclidean symbol).

    Raises:
        MalformedInputError: dimension mismatch, or x-dependent data the grid cannot carry
    """
    p = A.patch
    if grid.d != p.dim:
        raise MalformedInputError(f"grid dimension {grid.d} != patch dimension {p.dim}")
    m = A.h_order if A.h_order is not None else 0
    etas = sympy.symbols(f"eta0:{p.dim}", real=True)
    t = sympy.Symbol("t", real=True)
    coordinate = p.is_coordinate_frame()
    pieces = _euclidean_symbols(A)
    total = sympy.Integer(0)
    for a, c in A.terms:
        piece = pieces[a]
        if not coordinate:
            if c.free_symbols & set(p.coords):
                raise MalformedInputError("non-coordinate frames need constant coefficients")
            piece = piece.subs({x: 0 for x in p.coords})
        total += t ** (m - h_weight(p, a)) * c * piece
    total = sympy.expand(total)
    if total.free_symbols & set(p.coords):
        if grid.x_invariant:
            raise MalformedInputError("x-dependent symbol on an x-invariant grid")
        if not p.periodic:
            raise MalformedInputError("x-dependent coefficients need a periodic patch")
    fn = sympy.lambdify(list(p.coords) + list(etas) + [t], total, "numpy")
    logger.debug("operator symbol: %s", total)
    return profile_family(
        lambda x, eta, tt: fn(*x, *eta, tt), grid, tgrid, float(m), tuple(p.orders), name or p.name
    )


# Dual zoom action

def _lattice_indices(grid: TorusGrid, weights: Sequence[int], j: int):
    """Per-axis source index and validity for eta -> delta'_(2^j) eta, j >= 0."""
    n = grid.n_eta
    offsets = np.arange(n) - n // 2
    out = []
    for w in weights:
        target = offsets * (2 ** (j * w))
        ok = (target >= -(n // 2)) & (target < n // 2)
        out.append((np.where(ok, target + n // 2, 0), ok))
    return out


def _t_indices(tgrid: TGrid, lam: float):
    idx, ok = [], []
    for t in tgrid.values:
        if tgrid.contains(lam * t):
            idx.append(tgrid.index(lam * t))
            ok.append(True)
        else:
            idx.append(0)
            ok.append(False)
    return np.array(idx), np.array(ok)


def _lattice_zoom(S: SymbolFamily, j: int) -> np.ndarray:
    d = S.grid.d
    arr = S.values
    mask = np.ones((1,) * d + (S.grid.n_eta,) * d + (S.tgrid.size,), dtype=bool)
    for axis, (idx, ok) in enumerate(_lattice_indices(S.grid, S.weights, j)):
        arr = np.take(arr, idx, axis=d + axis)
        shape = [1] * (2 * d + 1)
        shape[d + axis] = ok.size
        mask = mask & ok.reshape(shape)
    t_idx, t_ok = _t_indices(S.tgrid, 2.0 ** j)
    arr = np.take(arr, t_idx, axis=-1)
    mask = mask & t_ok.reshape((1,) * (2 * d) + (-1,))
    return np.where(mask, arr, np.nan)


def _interpolate_slice(S: SymbolFamily, lam: float, t_target: float) -> np.ndarray:
    """Values at (x, delta'_lam eta, t_target) by linear interpolation in t and eta."""
    grid, tv = S.grid, S.tgrid.values
    d = grid.d
    if t_target < tv[0] or t_target > tv[-1]:
        return np.full(grid.slice_shape, np.nan, dtype=complex)
    k = int(np.searchsorted(tv, t_target))
    if tv[min(k, tv.size - 1)] == t_target:
        at_t = S.values[..., min(k, tv.size - 1)]
    else:
        w = (t_target - tv[k - 1]) / (tv[k] - tv[k - 1])
        at_t = (1 - w) * S.values[..., k - 1] + w * S.values[..., k]
    moved = np.moveaxis(at_t, list(range(d, 2 * d)), list(range(d)))
    axes = np.meshgrid(*([grid.eta_axis()] * d), indexing="ij")
    points = np.stack([lam ** w * a.ravel() for w, a in zip(S.weights, axes)], axis=-1)
    grids = (grid.eta_axis(),) * d
    parts = []
    for component in (moved.real, moved.imag):
        interp = RegularGridInterpolator(grids, component, bounds_error=False, fill_value=np.nan)
        parts.append(interp(points))
    flat = parts[0] + 1j * parts[1]
    out = flat.reshape((grid.n_eta,) * d + (grid.n_x,) * d)
    return np.moveaxis(out, list(range(d)), list(range(d, 2 * d)))


def zoom_pullback(S: SymbolFamily, lam: float, interpolate: bool = False) -> SymbolFamily:
    """
    beta_lam^* S: values at (x, delta'_lam eta, lam t).

    Raises:
        DomainError: lam <= 0
        LatticeMismatchError: gridded family, lam not a power of two >= 1, no interpolation
    """
    if lam <= 0:
        raise DomainError(f"zoom parameter must be positive, got {lam}")
    if lam == 1:
        return S
    name = f"zoom({S.name},{lam:g})"
    if S.source is not None:
        return family_from_source(S.source.zoomed(lam), S.grid, S.tgrid, S.weight, name)
    j = dyadic_exponent(lam)
    if j is not None and j >= 0:
        return SymbolFamily(S.grid, S.tgrid, _lattice_zoom(S, j), S.weight, S.weights, None, name)
    if not interpolate:
        raise LatticeMismatchError(
            f"lambda = {lam:g} does not map the frequency lattice and t-grid into themselves; enable interpolation"
        )
    slices = get_worker_pool().map_ordered(lambda t: _interpolate_slice(S, lam, lam * t), list(S.tgrid.values))
    return SymbolFamily(S.grid, S.tgrid, np.stack(slices, axis=-1), S.weight, S.weights, None, name)


# Seminorm reports

class SeminormEntry(BaseModel):
    a: List[int]
    b: List[int]
    k: int
    shells: List[int] = []
    sups: List[float] = []
    radii: List[float] = []
    slope: Optional[float] = None
    tail_slope: Optional[float] = None
    bound: Optional[float] = None
    passed: bool


class SchwartzSeminormReport(BaseModel):
    """Shell sups of |eta^a d_eta^b d_t^k f| with a pass flag per entry."""

    passed: bool
    max_order: float
    entries: List[SeminormEntry]


def _joint_norm(S: SymbolFamily) -> np.ndarray:
    d = S.grid.d
    axes = np.meshgrid(*([S.grid.eta_axis()] * d), S.tgrid.values, indexing="ij")
    norm = np.asarray(weighted_norm(tuple(S.weights) + (1,), np.stack(axes, axis=-1)), dtype=float)
    return np.broadcast_to(norm.reshape((1,) * d + norm.shape), S.values.shape)


def _trusted(S: SymbolFamily, margin: int) -> np.ndarray:
    d = S.grid.d
    mask = S.grid.trusted_mask(margin)
    return np.broadcast_to(mask.reshape((1,) * d + mask.shape + (1,)), S.values.shape)


def _eta_power(S: SymbolFamily, a: Sequence[int]) -> np.ndarray:
    out = np.ones((1,) * (2 * S.grid.d + 1))
    for e, power in zip(S.grid.eta_mesh(), a):
        if power:
            out = out * e[..., None] ** power
    return out


class _DerivativeCache:
    """d_eta^b d_t^k of one family, computed once per (b, k)."""

    def __init__(self, S: SymbolFamily):
        self.S = S
        self._cache: Dict[Tuple[Tuple[int, ...], int], np.ndarray] = {}

    def get(self, b: Tuple[int, ...], k: int) -> np.ndarray:
        key = (tuple(b), k)
        if key not in self._cache:
            out = self.S.values
            for j, bj in enumerate(b):
                out = eta_derivative(out, self.S.grid.d + j, bj, self.S.grid.frequency_step)
            self._cache[key] = t_derivative(out, self.S.tgrid.values, k)
        return self._cache[key]


def _finite(value: Optional[float]) -> Optional[float]:
    return None if value is None or not math.isfinite(value) else float(value)


def seminorm_report(
    F: SymbolFamily,
    reference: Optional[SymbolFamily] = None,
    max_degree: int = 1,
    max_k: int = 1,
    max_order: float = DEFAULT_MAX_ORDER,
    s_min: int = DEFAULT_S_MIN,
    margin: int = DEFAULT_MARGIN,
) -> SchwartzSeminormReport:
    """
    Rapid-decay report of F in (eta, t) jointly, t carrying weight 1.

    The noise floor of each entry is NOISE_RELATIVE times the same seminorm of
    `reference` (pointwise) plus NOISE_ABSOLUTE.
    """
    norm = _joint_norm(F)
    mask = _trusted(F, margin)
    f_cache = _DerivativeCache(F)
    r_cache = _DerivativeCache(reference) if reference is not None else None
    entries = []
    combos = [
        (a, b, k)
        for a in multi_indices(F.grid.d, max_degree)
        for b in multi_indices(F.grid.d, max_degree)
        for k in range(max_k + 1)
    ]

    def measure(combo):
        a, b, k = combo
        power = _eta_power(F, a)
        magnitude = np.abs(power * f_cache.get(b, k))
        floor = NOISE_ABSOLUTE
        if r_cache is not None:
            floor = NOISE_RELATIVE * np.abs(power * r_cache.get(b, k)) + NOISE_ABSOLUTE
        fit = shell_fit(magnitude, norm, s_min=s_min, floor=floor, mask=mask)
        passed = len(fit.sups) < 2 or (fit.tail_slope is not None and fit.tail_slope <= -max_order)
        return SeminormEntry(
            a=list(a), b=list(b), k=k, shells=list(fit.exponents), sups=list(fit.sups),
            radii=list(fit.radii), slope=_finite(fit.slope), tail_slope=_finite(fit.tail_slope), passed=passed,
        )

    # derivative caches are filled serially so worker threads only read them
    for _, b, k in combos:
        f_cache.get(b, k)
        if r_cache is not None:
            r_cache.get(b, k)
    entries = get_worker_pool().map_ordered(measure, combos)
    return SchwartzSeminormReport(passed=all(e.passed for e in entries), max_order=max_order, entries=entries)


# Cocycle and homogeneity

@dataclass(frozen=True, eq=False)
class CocycleResult:
    """
    Raw difference beta_lam^* P - lam^m P and normalized F_lam = lam^-m beta_lam^* P - P.
    """

    lam: float
    raw: SymbolFamily
    normalized: SymbolFamily
    report: SchwartzSeminormReport

    def zero_frequency(self, t: float = 1.0, normalized: bool = False) -> complex:
        family = self.normalized if normalized else self.raw
        d = family.grid.d
        index = (0,) * d + (family.grid.n_eta // 2,) * d + (family.tgrid.index(t),)
        return complex(family.values[index])


def cocycle(
    S: SymbolFamily,
    lam: float,
    weight: Optional[float] = None,
    interpolate: bool = False,
    max_degree: int = 1,
    max_k: int = 1,
    max_order: float = DEFAULT_MAX_ORDER,
) -> CocycleResult:
    """Cocycle of S at lam against weight m (default: the declared weight)."""
    m = S.weight if weight is None else weight
    zoomed = zoom_pullback(S, lam, interpolate=interpolate)
    scale = lam ** m
    raw_values = zoomed.values - scale * S.values
    raw_source = norm_source = None
    if S.source is not None:
        raw_source = CombinedSource(((1.0, S.source.zoomed(lam)), (-scale, S.source)))
        norm_source = CombinedSource(((1.0 / scale, S.source.zoomed(lam)), (-1.0, S.source)))
    raw = SymbolFamily(S.grid, S.tgrid, raw_values, m, S.weights, raw_source, f"raw_cocycle({S.name},{lam:g})")
    normalized = SymbolFamily(
        S.grid, S.tgrid, raw_values / scale, m, S.weights, norm_source, f"cocycle({S.name},{lam:g})"
    )
    report = seminorm_report(normalized, S, max_degree=max_degree, max_k=max_k, max_order=max_order)
    logger.debug("cocycle of %s at lambda=%g: passed=%s", S.name, lam, report.passed)
    return CocycleResult(lam, raw, normalized, report)


class HomogeneityCheck(BaseModel):
    lam: float
    skipped: bool = False
    passed: bool
    worst_tail_slope: Optional[float] = None


class HomogeneityReport(BaseModel):
    passed: bool
    weight: float
    checks: List[HomogeneityCheck]


def essential_homogeneity_test(
    S: SymbolFamily,
    m: Optional[float] = None,
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
    interpolate: bool = False,
    max_order: float = DEFAULT_MAX_ORDER,
) -> HomogeneityReport:
    """
    Pass iff the cocycle decays rapidly for every lam in the test set.

    Gridded families skip lam < 1: the lattice cannot represent that zoom, and
    the cocycle identity F_(1/lam) = -lam^m beta_(1/lam)^* F_lam makes it redundant.
    """
    m = S.weight if m is None else m
    checks = []
    for lam in lambdas:
        if lam == 1:
            continue
        if S.source is None and lam < 1 and not interpolate:
            checks.append(HomogeneityCheck(lam=lam, skipped=True, passed=True))
            continue
        result = cocycle(S, lam, weight=m, interpolate=interpolate, max_order=max_order)
        slopes = [e.tail_slope for e in result.report.entries if e.tail_slope is not None]
        checks.append(HomogeneityCheck(
            lam=lam, passed=result.report.passed, worst_tail_slope=max(slopes) if slopes else None,
        ))
    passed = all(c.passed for c in checks)
    logger.info("homogeneity test of %s at weight %g: %s", S.name, m, "pass" if passed else "fail")
    return HomogeneityReport(passed=passed, weight=m, checks=checks)


# Decay estimates and measured orders

class DecayReport(BaseModel):
    """Shell slopes of |eta^a d_eta^b d_t^k P| against m + |a|_H - |b|_H - k."""

    passed: bool
    weight: float
    slack: float
    entries: List[SeminormEntry]


def decay_report(
    S: SymbolFamily,
    max_degree: int = 2,
    max_k: int = 2,
    slack: float = DECAY_SLACK,
    s_min: int = DEFAULT_S_MIN,
    margin: int = DEFAULT_MARGIN,
) -> DecayReport:
    norm = _joint_norm(S)
    mask = _trusted(S, margin)
    cache = _DerivativeCache(S)
    floor = NOISE_RELATIVE * np.abs(S.values) + NOISE_ABSOLUTE
    combos = [
        (a, b, k)
        for a in multi_indices(S.grid.d, max_degree)
        for b in multi_indices(S.grid.d, max_degree)
        for k in range(max_k + 1)
    ]
    for _, b, k in combos:
        cache.get(b, k)

    def measure(combo):
        a, b, k = combo
        bound = S.weight + sum(ai * w for ai, w in zip(a, S.weights)) - sum(bi * w for bi, w in zip(b, S.weights)) - k
        fit = shell_fit(np.abs(_eta_power(S, a) * cache.get(b, k)), norm, s_min=s_min, floor=floor, mask=mask)
        passed = fit.slope is None or fit.slope <= bound + slack
        return SeminormEntry(
            a=list(a), b=list(b), k=k, shells=list(fit.exponents), sups=list(fit.sups), radii=list(fit.radii),
            slope=_finite(fit.slope), tail_slope=_finite(fit.tail_slope), bound=float(bound), passed=passed,
        )

    entries = get_worker_pool().map_ordered(measure, combos)
    return DecayReport(passed=all(e.passed for e in entries), weight=S.weight, slack=slack, entries=entries)


def slice_shell_fit(S: SymbolSlice, s_min: int = DEFAULT_S_MIN, margin: int = DEFAULT_MARGIN, floor: float = 1e-10):
    """Shell fit of sup_x |S| over ||eta||_H shells."""
    mask = broadcast_norm(S.grid.trusted_mask(margin), S.values.shape, S.grid.d)
    return shell_fit(np.abs(S.values), S.norm(), s_min=s_min, floor=floor, mask=mask)


def measured_order(S: SymbolSlice, s_min: int = DEFAULT_S_MIN, margin: int = DEFAULT_MARGIN, floor: float = 1e-10) -> float:
    """Fitted growth exponent of S over dyadic shells; -inf when fewer than two shells rise above `floor`."""
    fit = slice_shell_fit(S, s_min, margin, floor)
    return -math.inf if fit.slope is None else fit.slope


# Nose normalization, cosymbol extension and limits

def _pullback_slice(S: SymbolFamily, lam: float, t: float, interpolate: bool) -> np.ndarray:
    """S(x, delta'_lam eta, lam t) as a slice."""
    if S.source is not None:
        return S.source.zoomed(lam).sample(S.grid, t)
    if not interpolate:
        raise LatticeMismatchError("nose normalization of a gridded family needs interpolation")
    return _interpolate_slice(S, lam, lam * t)


def normalize_outside_interval(S: SymbolFamily, interpolate: bool = False) -> SymbolFamily:
    """
    Make S exactly homogeneous for |t| >= 1.

    For |t| >= 1 the output is |t|^m S(delta'_(1/|t|) eta, sign t); a smooth
    partition blends it with S over 1/2 < |t| < 1, and |t| <= 1/2 is untouched.
    """
    out = S.values.copy()
    m = S.weight
    for ti, t in enumerate(S.tgrid.values):
        if abs(t) <= 0.5:
            continue
        phi = float(smooth_step((abs(t) - 0.5) / 0.5))
        if phi == 0.0:
            continue
        extension = abs(t) ** m * _pullback_slice(S, 1.0 / abs(t), t, interpolate)
        out[..., ti] = (1.0 - phi) * S.values[..., ti] + phi * extension
    return SymbolFamily(S.grid, S.tgrid, out, m, S.weights, None, f"normalized({S.name})")


def dyadic_homogeneity_error(K: SymbolSlice, weight: Optional[float] = None, margin: int = DEFAULT_MARGIN) -> float:
    """max relative |K(delta'_2 eta) - 2^w K(eta)| over ||eta||_H >= 1 with eta and delta'_2 eta trusted."""
    w = K.weight if weight is None else weight
    grid, d = K.grid, K.grid.d
    n = grid.n_eta
    offsets = np.arange(n) - n // 2
    arr = K.values
    region = grid.trusted_mask(margin) & (grid.eta_norm(K.weights) >= 1)
    for axis, ((idx, _), wj) in enumerate(zip(_lattice_indices(grid, K.weights, 1), K.weights)):
        arr = np.take(arr, idx, axis=d + axis)
        shape = [1] * d
        shape[axis] = n
        inside = np.abs(offsets * 2 ** wj) <= n // 2 - margin
        region = region & inside.reshape(shape)
    region = np.broadcast_to(region.reshape((1,) * d + region.shape), arr.shape)
    expected = 2.0 ** w * K.values
    scale = np.maximum(np.abs(expected), 1e-300)
    err = np.where(region, np.abs(arr - expected) / scale, 0.0)
    err = np.where((np.abs(expected) == 0) & (np.abs(arr) == 0), 0.0, err)
    return float(np.nanmax(err)) if err.size else 0.0


def extend_cosymbol(
    K: SymbolSlice,
    tgrid: TGrid,
    tol: float = DEFAULT_TOL,
    radius: Optional[float] = None,
    margin: int = DEFAULT_MARGIN,
) -> SymbolFamily:
    """
    Constant-in-t family of a homogeneous t = 0 slice, times the exponential cutoff.

    The cutoff is applied kernel-side only when `radius` is below half the period
    (on the torus the chart covers the whole fundamental box otherwise).

    Raises:
        NotHomogeneousError: K fails the dyadic homogeneity check at its weight
    """
    error = dyadic_homogeneity_error(K, margin=margin)
    if error > tol:
        slope = measured_order(K)
        raise NotHomogeneousError(
            f"slice {K.name or '<unnamed>'} is not homogeneous of weight {K.weight:g} "
            f"(relative error {error:.3e}, fitted slope {slope:.3f})",
            fitted_slope=slope, expected_weight=K.weight,
        )
    values = K.values
    if radius is not None and radius < K.grid.period / 2:
        kernel = kernel_values(values, K.grid)
        r = broadcast_norm(K.grid.xi_norm(K.weights), kernel.shape, K.grid.d)
        values = symbol_values(kernel * exponential_cutoff(r, radius), K.grid)
    stacked = np.repeat(values[..., None], tgrid.size, axis=-1)
    return SymbolFamily(K.grid, tgrid, stacked, K.weight, K.weights, None, f"extend({K.name})")


def cosymbol_limit(S: SymbolFamily, tol: float = 1e-6, ratio: float = 0.75) -> SymbolSlice:
    """
    The t = 0 slice, after checking that the dyadic slices converge to it.

    Convergence is accepted when the last error is below `tol` (relative to
    the slice size) or the last four errors shrink geometrically by `ratio`.

    Raises:
        ConvergenceError: neither criterion holds
    """
    s0 = restrict_t(S, 0.0)
    region = broadcast_norm(S.grid.eta_norm(S.weights) >= 1, s0.values.shape, S.grid.d)
    region = region & broadcast_norm(S.grid.trusted_mask(), s0.values.shape, S.grid.d)
    scale = max(1.0, float(np.nanmax(np.where(region, np.abs(s0.values), 0.0))))
    errors = []
    for k in range(S.tgrid.levels + 1):
        t = 2.0 ** (-k)
        if not S.tgrid.contains(t):
            continue
        diff = np.abs(S.values[..., S.tgrid.index(t)] - s0.values)
        errors.append(float(np.nanmax(np.where(region, diff, 0.0))) / scale)
    tail = errors[-4:]
    geometric = len(tail) >= 2 and all(b <= ratio * a for a, b in zip(tail, tail[1:]) if a > 0) and \
        all(b == 0 for a, b in zip(tail, tail[1:]) if a == 0)
    if not errors or not (errors[-1] <= tol or geometric):
        raise ConvergenceError(f"dyadic slices of {S.name} do not converge to the t = 0 slice", tuple(errors))
    logger.debug("cosymbol limit of %s: final error %.3e", S.name, errors[-1] if errors else 0.0)
    return s0


def identity_family(grid: TorusGrid, tgrid: TGrid, weights: Sequence[int] = ()) -> SymbolFamily:
    weights = tuple(weights) or (1,) * grid.d
    return profile_family(lambda x, eta, t: 1.0, grid, tgrid, 0.0, weights, name="identity")


# Checks on families

def reality_check(S: SymbolFamily, tol: float = 1e-10) -> bool:
    """P(x, -eta, t) == conj P(x, eta, t) on the symmetric part of the lattice."""
    d = S.grid.d
    inner = S.values[(slice(None),) * d + (slice(1, None),) * d]
    flipped = inner[(slice(None),) * d + (slice(None, None, -1),) * d]
    scale = max(1.0, float(np.nanmax(np.abs(inner))))
    return bool(np.nanmax(np.abs(flipped - np.conj(inner))) <= tol * scale)


class TSmoothnessReport(BaseModel):
    passed: bool
    steps: List[float]
    second_differences: List[float]


def t_smoothness_check(S: SymbolFamily, growth: float = 4.0) -> TSmoothnessReport:
    """
    Second differences (P(h) - 2P(0) + P(-h)) / h^2 on ||eta||_H >= 1 stay bounded as h -> 0.
    """
    region = broadcast_norm(S.grid.eta_norm(S.weights) >= 1, S.grid.slice_shape, S.grid.d)
    p0 = S.values[..., S.tgrid.zero_index]
    steps, sups = [], []
    for h in S.tgrid.positive:
        if h > 1:
            continue
        second = (S.values[..., S.tgrid.index(h)] - 2 * p0 + S.values[..., S.tgrid.index(-h)]) / h ** 2
        steps.append(float(h))
        sups.append(float(np.nanmax(np.where(region, np.abs(second), 0.0))))
    reference = max(sups[-3:]) if sups else 0.0
    coarse = max(sups) if sups else 0.0
    passed = not sups or reference <= growth * max(sups[0], 1e-12) or reference <= growth * coarse / max(len(sups), 1)
    return TSmoothnessReport(passed=bool(passed), steps=steps, second_differences=sups)


def lattice_second_difference(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Lattice Laplacian sum_j (p(eta + e_j) - 2 p(eta) + p(eta - e_j)); NaN on the box edge."""
    d = grid.d
    out = np.zeros_like(values, dtype=complex)
    for j in range(d):
        axis = d + j
        out = out + np.roll(values, -1, axis=axis) - 2 * values + np.roll(values, 1, axis=axis)
    edge = np.zeros(values.shape, dtype=bool)
    for j in range(d):
        index = [slice(None)] * values.ndim
        index[d + j] = [0, grid.n_eta - 1]
        edge[tuple(index)] = True
    return np.where(edge, np.nan, out)


class PseudolocalityEntry(BaseModel):
    order: int
    slope: Optional[float]
    bound: float
    passed: bool


class PseudolocalityReport(BaseModel):
    """Repeated lattice Laplacians of the symbol must gain two orders each."""

    passed: bool
    entries: List[PseudolocalityEntry]


def pseudolocality_report(
    S: SymbolFamily, t: float = 1.0, max_power: int = 3, slack: float = DECAY_SLACK,
    s_min: int = DEFAULT_S_MIN,
) -> PseudolocalityReport:
    """
    Off-diagonal smoothness surrogate.

    The lattice Laplacian multiplies the kernel by -4 sum_j sin^2(xi_j / 2),
    which vanishes only on the diagonal; smoothness off the diagonal shows as
    each application lowering the shell order by two.
    """
    slice_ = restrict_t(S, t)
    field_values = slice_.values
    margin = 2 * max_power + DEFAULT_MARGIN
    entries = []
    for power in range(1, max_power + 1):
        field_values = lattice_second_difference(field_values, S.grid)
        current = SymbolSlice(S.grid, field_values, S.weight - 2 * power, S.weights)
        floor = NOISE_RELATIVE * float(np.nanmax(np.abs(slice_.values))) + NOISE_ABSOLUTE
        order = measured_order(current, s_min=s_min, margin=margin, floor=floor)
        bound = S.weight - 2 * power
        slope = _finite(order)
        entries.append(PseudolocalityEntry(
            order=power, slope=slope, bound=float(bound), passed=slope is None or slope <= bound + slack,
        ))
    return PseudolocalityReport(passed=all(e.passed for e in entries), entries=entries)


class RegularityReport(BaseModel):
    passed: bool
    derivatives: int
    grid_sizes: List[int]
    sups: List[float]
    growth: float


def regularity_order(S: SymbolFamily) -> Optional[int]:
    """Largest k with weight <= -d_H - k - 1, or None when the kernel need not be C^0."""
    k = math.floor(-S.weight - S.homogeneous_dimension - 1 + 1e-9)
    return k if k >= 0 else None


def regularity_check(
    profile: Source, grid: TorusGrid, derivatives: int, t: float = 1.0,
    refinements: int = 2, max_growth: float = 1.25,
) -> RegularityReport:
    """
    Finite-difference derivatives of the kernel slice stay bounded under refinement G, 2G, 4G.
    """
    sizes, sups = [], []
    for level in range(refinements + 1):
        g = grid.refined(2 ** level)
        kernel = kernel_values(profile.sample(g, t), g)
        field_values = kernel
        for j in range(g.d):
            axis = g.d + j
            derivative = kernel
            for _ in range(derivatives):
                derivative = (np.roll(derivative, -1, axis=axis) - derivative) / g.xi_step
            field_values = derivative if j == 0 else np.maximum(np.abs(field_values), np.abs(derivative))
        sizes.append(g.n_eta)
        sups.append(float(np.max(np.abs(field_values))))
    growth = sups[-1] / sups[0] if sups[0] > 0 else (0.0 if sups[-1] == 0 else math.inf)
    return RegularityReport(
        passed=growth <= max_growth, derivatives=derivatives, grid_sizes=sizes, sups=sups, growth=float(growth)
    )


# Grid composition

def x_spectrum(S: SymbolSlice) -> Tuple[np.ndarray, np.ndarray]:
    """Fourier coefficients of S in x (fft order) and the integer frequencies per axis."""
    d = S.grid.d
    axes = tuple(range(d))
    coeffs = np.fft.fftn(np.nan_to_num(S.values), axes=axes) / S.grid.n_x ** d
    freqs = np.rint(np.fft.fftfreq(S.grid.n_x, 1.0 / S.grid.n_x)).astype(int)
    return coeffs, freqs


def significant_modes(S: SymbolSlice, tol: float = 1e-10) -> List[Tuple[Tuple[int, ...], np.ndarray]]:
    """x-frequencies k with max_eta |S_k(eta)| above tol * max|S|, with their coefficient arrays."""
    d = S.grid.d
    coeffs, freqs = x_spectrum(S)
    scale = float(np.nanmax(np.abs(S.values))) or 1.0
    peak = np.max(np.abs(coeffs), axis=tuple(range(d, 2 * d)))
    out = []
    for index in zip(*np.nonzero(peak > tol * scale)):
        k = tuple(int(freqs[i]) for i in index)
        out.append((k, coeffs[index]))
    return sorted(out, key=lambda item: item[0])


def _alias_guard(S: SymbolSlice, modes) -> None:
    limit = S.grid.n_x / 4
    for k, _ in modes:
        if any(abs(v) > limit for v in k):
            raise RefineGridError(
                f"x-spectrum of {S.name or 'slice'} reaches frequency {k} above n_x/4 = {limit:g}; refine the x-grid"
            )


def compose_slices(A: SymbolSlice, B: SymbolSlice, tol: float = 1e-10, scale: int = 1) -> SymbolSlice:
    """
    Symbol of the composition A o B on the periodic grid.

    (A o B)(x, eta) = sum_k B_k(eta) a(x, eta + scale k) e^(i k.x) over the
    x-Fourier modes B_k of B; scale = 1 is the t = 1 slice and scale = -1 the
    t = -1 slice. This is the discrete kernel composition, exact for
    band-limited data. Shifts wrap around the lattice when n_eta == n_x and are
    undefined (NaN) past the box otherwise.

    Raises:
        RefineGridError: an x-spectrum reaches above n_x / 4
    """
    if A.grid != B.grid:
        raise MalformedInputError("slices live on different grids")
    grid, d = A.grid, A.grid.d
    name = f"({A.name})o({B.name})"
    weight = A.weight + B.weight
    if grid.x_invariant:
        return SymbolSlice(grid, A.values * B.values, weight, A.weights, name)
    modes_a = significant_modes(A, tol)
    modes_b = significant_modes(B, tol)
    _alias_guard(A, modes_a)
    _alias_guard(B, modes_b)
    wrap = grid.n_eta == grid.n_x
    x_mesh = grid.x_mesh()

    def term(item):
        k, coeff = item
        shifted = A.values
        valid = np.ones(grid.slice_shape, dtype=bool)
        for j, kj in enumerate(k):
            if kj == 0:
                continue
            axis = d + j
            shifted = np.roll(shifted, -scale * kj, axis=axis)
            if not wrap:
                idx = np.arange(grid.n_eta) + scale * kj
                ok = (idx >= 0) & (idx < grid.n_eta)
                shape = [1] * (2 * d)
                shape[axis] = grid.n_eta
                valid = valid & ok.reshape(shape)
        step = grid.frequency_step
        phase = np.exp(1j * step * sum(kj * x for kj, x in zip(k, x_mesh))) if any(k) else 1.0
        contribution = coeff.reshape((1,) * d + coeff.shape) * shifted * phase
        return np.where(valid, contribution, np.nan)

    total = np.zeros(grid.slice_shape, dtype=complex)
    for contribution in get_worker_pool().map_ordered(term, modes_b):
        total = total + contribution
    return SymbolSlice(grid, total, weight, A.weights, name)


def identity_slice(grid: TorusGrid, weights: Sequence[int] = ()) -> SymbolSlice:
    return SymbolSlice(grid, np.ones(grid.slice_shape, dtype=complex), 0.0, tuple(weights), "I")


def apply_slice(S: SymbolSlice, f: np.ndarray) -> np.ndarray:
    """(Op S) f on the x-grid: sum_eta S(x, eta) f^(eta) e^(i eta.x)."""
    grid, d = S.grid, S.grid.d
    n = grid.n_eta
    if f.shape != (n,) * d or (not grid.x_invariant and grid.n_x != n):
        raise MalformedInputError(f"function shape {f.shape} does not match the grid")
    f_hat = np.fft.fftshift(np.fft.fftn(f)) / n ** d
    if grid.x_invariant:
        body = S.values.reshape((n,) * d) * f_hat
        return np.fft.ifftn(np.fft.ifftshift(body)) * n ** d
    x_axes = np.meshgrid(*([grid.x_axis()] * d), indexing="ij")
    eta_axes = grid.eta_mesh()
    phase = np.exp(1j * sum(x.reshape(x.shape + (1,) * d) * e for x, e in zip(x_axes, eta_axes)))
    return np.sum(S.values * f_hat.reshape((1,) * d + f_hat.shape) * phase, axis=tuple(range(d, 2 * d)))


def operator_matrix(S: SymbolSlice) -> np.ndarray:
    """Dense matrix of Op S on the 1-D x-grid."""
    grid = S.grid
    if grid.d != 1:
        raise MalformedInputError("dense operator matrices are built on T^1 only")
    n = grid.n_eta
    x = grid.x_axis() if not grid.x_invariant else np.arange(n) * grid.period / n
    values = S.values if not grid.x_invariant else np.repeat(S.values, n, axis=0)
    eta = grid.eta_axis()
    left = values * np.exp(1j * np.outer(x, eta))
    right = np.exp(-1j * np.outer(eta, x))
    return left @ right / n
