"""
Expansion & Parametrix - polyhomogeneous expansions, asymptotic sums and
parametrices of H-elliptic symbols

    * homogenize         exact dyadic-orbit extension of a t = 0 slice beyond the unit shell
    * extract_expansion  a ~ sum_j a_j from an essentially homogeneous family
    * asymptotic_sum     Borel-style sum of homogeneous terms with growing cut-off radii
    * invert_cosymbol    reciprocal of an elliptic cosymbol (or the tabulated Heisenberg inverse)
    * parametrix         Neumann series Q' = Q0 (I + R + ... + R^k), R = I - P o Q0
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from calculus.errors import DomainError, ExtrapolationError, MalformedInputError, NotHEllipticError
from calculus.heisenberg import fundamental_solution
from calculus.kernel_zoom import (
    ProductSource,
    SymbolFamily,
    SymbolSlice,
    _finite,
    _lattice_indices,
    apply_slice,
    compose_slices,
    cosymbol_limit,
    extend_cosymbol,
    identity_slice,
    measured_order,
    operator_matrix,
    restrict_t,
    slice_shell_fit,
)
from calculus.lattice import DEFAULT_MARGIN, TGrid, broadcast_norm, radial_cutoff

logger = logging.getLogger(__name__)

DEFAULT_TERMS = 3
DEFAULT_EXTRAPOLATION_TOL = 1e-6
DEFAULT_ELLIPTIC_EPS = 1e-8
ORDER_SLACK = 0.2
# smallest t used at ||eta|| ~ 1 is 2^-WINDOW_LEVEL; the window scales with ||eta||
WINDOW_LEVEL = 10
LAGRANGE_WEIGHTS = (8.0 / 3.0, -2.0, 1.0 / 3.0)


def homogenize(S: SymbolSlice, weight: float, margin: int = DEFAULT_MARGIN) -> SymbolSlice:
    """
    Exactly homogeneous extension of S beyond the unit shell, times chi(||eta||_H).

    Each lattice point takes the value at the outermost dyadic image
    delta'_(2^j) eta still inside the trusted box, scaled by 2^(-j w). Points
    whose orbit starts outside the trusted box keep their own value.
    """
    grid, d = S.grid, S.grid.d
    n = grid.n_eta
    offsets = np.arange(n) - n // 2
    trusted = grid.trusted_mask(margin)
    out = S.values.astype(complex).copy()
    assigned = np.zeros((n,) * d, dtype=bool)
    top = int(math.log2(n))
    for j in range(top, -1, -1):
        arr = S.values
        inside = np.ones((n,) * d, dtype=bool)
        for axis, ((idx, _), wj) in enumerate(zip(_lattice_indices(grid, S.weights, j), S.weights)):
            arr = np.take(arr, idx, axis=d + axis)
            shape = [1] * d
            shape[axis] = n
            inside = inside & (np.abs(offsets * 2 ** (j * wj)) <= n // 2 - margin).reshape(shape)
        take = inside & ~assigned & trusted & (grid.eta_norm(S.weights) > 0)
        if take.any():
            mask = broadcast_norm(take, out.shape, d)
            out = np.where(mask, 2.0 ** (-j * weight) * arr, out)
            assigned |= take
    chi = broadcast_norm(radial_cutoff(grid.eta_norm(S.weights)), out.shape, d)
    return SymbolSlice(grid, out * chi, weight, S.weights, f"homogenized({S.name})")


@dataclass(frozen=True, eq=False)
class Expansion:
    """Terms a_j of weight m - j, each homogeneous beyond the unit shell and cut off inside it."""

    weight: float
    terms: Tuple[SymbolSlice, ...]
    grid: object
    weights: Tuple[int, ...] = ()
    cutoff: str = "chi(||eta||_H): 0 below 1/2, 1 above 1"
    remainder_orders: Tuple[float, ...] = ()
    extrapolation_discrepancies: Tuple[float, ...] = ()

    def term_weights(self) -> List[float]:
        return [a.weight for a in self.terms]


class ExpansionReport(BaseModel):
    weight: float
    term_weights: List[float]
    remainder_orders: List[Optional[float]]
    remainder_bounds: List[float]
    extrapolation_discrepancies: List[float]
    passed: bool


def expansion_report(E: Expansion, slack: float = 0.1) -> ExpansionReport:
    bounds = [E.weight - k for k in range(1, len(E.remainder_orders) + 1)]
    orders = [_finite(o) for o in E.remainder_orders]
    passed = all(o is None or o <= b + slack for o, b in zip(orders, bounds))
    return ExpansionReport(
        weight=E.weight, term_weights=E.term_weights(), remainder_orders=orders, remainder_bounds=bounds,
        extrapolation_discrepancies=list(E.extrapolation_discrepancies), passed=passed,
    )


def _window_levels(S: SymbolFamily) -> np.ndarray:
    """Per-point extrapolation level k: nodes 2^-k, 2^(1-k), 2^(2-k) scale with ||eta||_H."""
    norm = np.maximum(S.grid.eta_norm(S.weights), 1.0)
    levels = WINDOW_LEVEL - np.floor(np.log2(norm)).astype(int)
    return np.clip(levels, 3, S.tgrid.levels)


def _gather(values: np.ndarray, tgrid: TGrid, levels: np.ndarray, shift: int, d: int) -> np.ndarray:
    """values at t = 2^(shift - level) per lattice point (positive t)."""
    out = np.empty(values.shape[:-1], dtype=complex)
    for level in np.unique(levels):
        t = 2.0 ** (shift - int(level))
        mask = broadcast_norm(levels == level, out.shape, d)
        out = np.where(mask, values[..., tgrid.index(t)], out)
    return out


def _extrapolate(values: np.ndarray, tgrid: TGrid, levels: np.ndarray, d: int, shift: int = 0) -> np.ndarray:
    """Three-point one-sided Lagrange extrapolation to t = 0 from (h, 2h, 4h), h = 2^(shift - level)."""
    return sum(w * _gather(values, tgrid, levels, shift + i, d) for i, w in enumerate(LAGRANGE_WEIGHTS))


def extract_expansion(
    S: SymbolFamily,
    terms: int = DEFAULT_TERMS,
    tol: float = DEFAULT_EXTRAPOLATION_TOL,
    margin: int = DEFAULT_MARGIN,
) -> Expansion:
    """
    a_j = homogenize(B_j at t = 0, m - j) with B_0 = S and B_(j+1) = (B_j - B_j(0)) / t.

    The subtracted t-independent part is the raw t = 0 slice; it differs from
    the homogenized term only inside the unit shell, where the difference is
    smoothing. Only t > 0 enters, so S need only be nose-normalized.

    Raises:
        ExtrapolationError: the t = 0 value of some B_j moves by more than
            tol * max(|B_j(0)|, ||eta||^(m - j)) when the step is doubled
    """
    grid, tg, d = S.grid, S.tgrid, S.grid.d
    if tg.t_up < 0:
        raise DomainError("expansion extraction needs the t-grid to reach t = 1")
    m = S.weight
    pos = tg.values > 0
    positive_t = tg.values[pos]
    B = S.values[..., pos]
    b0 = S.values[..., tg.zero_index]
    levels = _window_levels(S)
    norm = grid.eta_norm(S.weights)
    region = broadcast_norm((norm >= 1) & grid.trusted_mask(margin), b0.shape, d)
    norm_full = broadcast_norm(norm, b0.shape, d)
    # B_j is kept on the full t-grid layout; only its positive half is ever read
    full = np.zeros(S.values.shape, dtype=complex)
    full[..., pos] = B

    slices: List[SymbolSlice] = []
    discrepancies: List[float] = []
    for j in range(terms):
        w = m - j
        logger.info("extracting expansion term %d (weight %g)", j, w)
        if j > 0:
            coarse = _extrapolate(full, tg, levels, d, shift=1)
            scale = np.maximum(np.abs(b0), np.where(region, norm_full, 1.0) ** w)
            ratio = np.where(region, np.abs(b0 - coarse) / np.where(scale > 0, scale, 1.0), 0.0)
            worst = float(np.nanmax(ratio))
            discrepancies.append(worst)
            if worst > tol:
                at = np.unravel_index(int(np.nanargmax(ratio)), ratio.shape)
                raise ExtrapolationError(
                    f"t = 0 extrapolation of expansion term {j} is unstable ({worst:.3e} > {tol:g}); "
                    "refine the t-grid or shrink the lattice",
                    {"term": j, "discrepancy": worst, "index": [int(i) for i in at], "tolerance": tol},
                )
        a_j = homogenize(SymbolSlice(grid, b0.copy(), w, S.weights), w, margin)
        slices.append(SymbolSlice(grid, a_j.values, w, S.weights, f"a_{j}"))
        # raw B_j(0) rather than chi * a_j; the two agree modulo smoothing
        B = (B - b0[..., None]) / positive_t
        full[..., pos] = B
        b0 = _extrapolate(full, tg, levels, d)

    top = restrict_t(S, 1.0).values
    orders = []
    partial = np.zeros_like(top)
    for k, a in enumerate(slices, start=1):
        partial = partial + a.values
        orders.append(measured_order(SymbolSlice(grid, top - partial, m - k, S.weights), margin=margin))
    logger.debug("expansion remainder orders: %s", orders)
    return Expansion(m, tuple(slices), grid, tuple(S.weights), remainder_orders=tuple(orders),
                     extrapolation_discrepancies=tuple(discrepancies))


def _cutoff_radius(a: SymbolSlice, j: int, m: float, margin: int) -> float:
    """Smallest R = 2^r with sup |chi(||eta|| / R) a| / (1 + ||eta||)^(m - j + 1) <= 2^-j."""
    grid = a.grid
    norm = grid.eta_norm(a.weights)
    trusted = broadcast_norm(grid.trusted_mask(margin), a.values.shape, grid.d)
    norm_full = broadcast_norm(norm, a.values.shape, grid.d)
    r_max = int(math.log2(grid.n_eta))
    for r in range(0, r_max + 1):
        R = 2.0 ** r
        cut = radial_cutoff(norm_full / R) if r > 0 else 1.0
        ratio = np.abs(cut * a.values) / (1.0 + norm_full) ** (m - j + 1)
        if float(np.nanmax(np.where(trusted, ratio, 0.0))) <= 2.0 ** (-j):
            return R
    return 2.0 ** r_max


def asymptotic_sum(E: Expansion, tgrid: TGrid, margin: int = DEFAULT_MARGIN) -> SymbolFamily:
    """
    sum_j t^j chi(||eta|| / R_j) a_j with R_j >= 1 chosen per term.

    The terms already carry chi(||eta||), so R_j = 1 adds no further cut-off.

    Raises:
        DomainError: term weights are not strictly decreasing
    """
    weights = E.term_weights()
    if any(b >= a for a, b in zip(weights, weights[1:])):
        raise DomainError(f"asymptotic sums need strictly decreasing weights, got {weights}")
    grid = E.grid
    shape = grid.slice_shape + (tgrid.size,)
    if not E.terms:
        return SymbolFamily(grid, tgrid, np.zeros(shape, dtype=complex), E.weight, E.weights, None, "zero")
    values = np.zeros(shape, dtype=complex)
    radii = []
    for j, a in enumerate(E.terms):
        R = _cutoff_radius(a, j, E.weight, margin)
        radii.append(R)
        term = a.values
        if R > 1:
            term = term * broadcast_norm(radial_cutoff(grid.eta_norm(a.weights) / R), term.shape, grid.d)
        values = values + term[..., None] * tgrid.values ** j
    logger.debug("asymptotic sum radii: %s", radii)
    return SymbolFamily(grid, tgrid, values, E.weight, E.weights or E.terms[0].weights, None, "asymptotic_sum")


def invert_cosymbol(
    c: SymbolSlice, filtration: str = "trivial", eps: float = DEFAULT_ELLIPTIC_EPS, margin: int = DEFAULT_MARGIN,
):
    """
    Inverse cosymbol of weight -m.

    trivial: 1 / c homogenized to weight -m; heisenberg: the sublaplacian's
    fundamental solution (a kernel, returned as FundamentalSolution).

    Raises:
        NotHEllipticError: |c| < eps ||eta||^m at some trusted ||eta||_H >= 1
    """
    grid, d = c.grid, c.grid.d
    norm = grid.eta_norm(c.weights)
    if filtration == "heisenberg":
        target = (grid.eta_mesh()[0] ** 2 + grid.eta_mesh()[1] ** 2) if d == 3 else None
        if target is None or tuple(c.weights) != (1, 1, 2) or not np.allclose(
            c.values, np.broadcast_to(target, c.values.shape), rtol=1e-10, atol=1e-10
        ):
            raise MalformedInputError("the Heisenberg inverse is shipped for the sublaplacian cosymbol only")
        return fundamental_solution()
    if filtration != "trivial":
        raise MalformedInputError(f"unknown filtration {filtration!r}")
    region = broadcast_norm((norm >= 1) & grid.trusted_mask(margin), c.values.shape, d)
    scale = np.where(region, broadcast_norm(norm, c.values.shape, d), 1.0) ** c.weight
    ratio = np.divide(np.abs(c.values), scale, out=np.full(c.values.shape, np.inf), where=region)
    if float(np.nanmin(ratio)) < eps:
        at = np.unravel_index(int(np.nanargmin(ratio)), ratio.shape)
        eta = [float(grid.eta_axis()[i]) for i in at[d:]]
        x = [float(grid.x_axis()[i]) for i in at[:d]]
        raise NotHEllipticError(
            f"cosymbol {c.name or '<unnamed>'} vanishes at eta = {eta}",
            {"x": x, "eta": eta, "value": float(np.abs(c.values[at]))},
        )
    safe = np.where(np.abs(c.values) > 0, c.values, 1.0)
    reciprocal = np.where(np.abs(c.values) > 0, 1.0 / safe, 0.0)
    return homogenize(SymbolSlice(grid, reciprocal, -c.weight, c.weights, f"inv({c.name})"), -c.weight, margin)


class ParametrixReport(BaseModel):
    k: int
    weight: float
    residual_order: Optional[float]
    right_order: Optional[float]
    left_order: Optional[float]
    bound: float
    shells: List[int]
    right_sups: List[float]
    left_sups: List[float]
    passed: bool


@dataclass(frozen=True, eq=False)
class ParametrixState:
    P: SymbolSlice
    Q0: SymbolSlice
    R: SymbolSlice
    partial_sums: Tuple[SymbolSlice, ...]
    Q: SymbolSlice
    right_residual: SymbolSlice
    left_residual: SymbolSlice
    k: int

    def orders(self) -> Dict[str, float]:
        return {
            "residual": measured_order(self.R),
            "right": measured_order(self.right_residual),
            "left": measured_order(self.left_residual),
        }

    def report(self, slack: float = ORDER_SLACK) -> ParametrixReport:
        orders = self.orders()
        bound = -(self.k + 1)
        right_fit = slice_shell_fit(self.right_residual)
        left_fit = slice_shell_fit(self.left_residual)
        ok = all(o <= bound + slack for o in (orders["right"], orders["left"]))
        return ParametrixReport(
            k=self.k, weight=self.P.weight, residual_order=_finite(orders["residual"]),
            right_order=_finite(orders["right"]), left_order=_finite(orders["left"]), bound=bound,
            shells=list(right_fit.exponents), right_sups=list(right_fit.sups), left_sups=list(left_fit.sups),
            passed=ok,
        )


def _minus(A: SymbolSlice, B: SymbolSlice, name: str) -> SymbolSlice:
    return SymbolSlice(A.grid, A.values - B.values, min(A.weight, B.weight), A.weights, name)


def parametrix(P: SymbolFamily, k: int = 3, eps: float = DEFAULT_ELLIPTIC_EPS) -> ParametrixState:
    """
    Q0 = extend_cosymbol(invert_cosymbol(sigma_m(P))) at t = 1, R = I - P o Q0,
    A_k = sum_{j <= k} R^j, Q' = Q0 o A_k.

    Raises:
        NotHEllipticError: the principal cosymbol vanishes on the unit shell
        RefineGridError: a composition would alias on the x-grid
    """
    if k < 0:
        raise DomainError(f"iteration count must be non-negative, got {k}")
    cosym = cosymbol_limit(P)
    inverse = invert_cosymbol(cosym, eps=eps)
    Q0 = restrict_t(extend_cosymbol(inverse, P.tgrid), 1.0)
    P1 = restrict_t(P, 1.0)
    I = identity_slice(P.grid, P.weights)
    R = _minus(I, compose_slices(P1, Q0), "R")
    logger.info("parametrix: residual R has measured order %.3f", measured_order(R))
    partial = [I]
    power = I
    for j in range(1, k + 1):
        logger.info("parametrix: Neumann order %d", j)
        power = compose_slices(power, R)
        partial.append(SymbolSlice(P.grid, partial[-1].values + power.values, 0.0, P.weights, f"A_{j}"))
    Q = compose_slices(Q0, partial[-1])
    Q = SymbolSlice(P.grid, Q.values, -P.weight, P.weights, "Q'")
    right = _minus(I, compose_slices(P1, Q), "I - P o Q'")
    left = _minus(I, compose_slices(Q, P1), "I - Q' o P")
    return ParametrixState(P1, Q0, R, tuple(partial), Q, right, left, k)


def compose_families(A: SymbolFamily, B: SymbolFamily) -> SymbolFamily:
    """
    Symbol family of A o B.

    x-independent families compose by pointwise product at every t (keeping
    closed-form sources); x-dependent ones are composed on the grid at t = +-1
    and by the frozen-point product at t = 0, on the t-grid {-1, 0, 1}.
    """
    if A.grid != B.grid or A.tgrid != B.tgrid:
        raise MalformedInputError("families live on different grids")
    weight = A.weight + B.weight
    name = f"({A.name})o({B.name})"
    if A.grid.x_invariant:
        source = ProductSource((A.source, B.source)) if A.source is not None and B.source is not None else None
        return SymbolFamily(A.grid, A.tgrid, A.values * B.values, weight, A.weights, source, name)
    tgrid = TGrid(0, 0)
    slices = []
    for t in tgrid.values:
        if t == 0:
            a0, b0 = restrict_t(A, 0.0), restrict_t(B, 0.0)
            slices.append(a0.values * b0.values)
        else:
            scale = 1 if t > 0 else -1
            slices.append(compose_slices(restrict_t(A, t), restrict_t(B, t), scale=scale).values)
    return SymbolFamily(A.grid, tgrid, np.stack(slices, axis=-1), weight, A.weights, None, name)


class HypoellipticityReport(BaseModel):
    k: int
    refinements: int
    parametrix_relative_error: float
    parametrix_residual_shells: List[int]
    parametrix_residual_sups: List[float]
    parametrix_residual_tail: float
    relative_error: float
    residual_shells: List[int]
    residual_sups: List[float]
    solution_shells: List[int]
    solution_sups: List[float]
    residual_tail: float
    passed: bool


def _fourier_shells(values: np.ndarray, grid) -> Tuple[List[int], List[float]]:
    coeffs = np.abs(np.fft.fftshift(np.fft.fft(values))) / values.size
    eta = np.abs(grid.eta_axis())
    shells, sups = [], []
    s = 0
    while 2 ** s <= eta.max():
        band = (eta >= 2 ** s) & (eta < 2 ** (s + 1))
        if band.any():
            shells.append(s)
            sups.append(float(coeffs[band].max()))
        s += 1
    return shells, sups


def hypoellipticity_demo(
    P: SymbolFamily,
    f: np.ndarray,
    k: int = 3,
    refinements: int = 4,
    low_band: float = 4.0,
    tol: float = 1e-6,
    tail_shell: int = 6,
) -> HypoellipticityReport:
    """
    Solve P u = f on T^1 with the parametrix and compare with a dense solve.

    The parametrix solution u = Q' f is reported as is, with the shells of
    f - P Q' f; its high shells are the smoothing error. The refined solve
    then takes steps u += Q' r + E M_low^-1 E^H (r - P Q' r) / n with
    r = f - P u, where E spans the modes |eta| < low_band and M_low is P
    restricted to them.
    """
    if P.grid.d != 1:
        raise MalformedInputError("the hypoellipticity demo runs on T^1")
    state = parametrix(P, k)
    grid = P.grid
    n = grid.n_eta
    M = operator_matrix(state.P)
    reference = np.linalg.solve(M, f.astype(complex))
    x = np.arange(n) * grid.period / n
    low = grid.eta_axis()[np.abs(grid.eta_axis()) < low_band]
    E = np.exp(1j * np.outer(x, low))
    M_low = E.conj().T @ M @ E / n

    def Qf(g):
        return apply_slice(state.Q, g)

    u = Qf(f)
    scale = max(np.max(np.abs(reference)), 1e-300)
    rough_error = float(np.max(np.abs(u - reference)) / scale)
    rough_shells, rough_sups = _fourier_shells(f - M @ u, grid)
    rough_tail = max([v for s, v in zip(rough_shells, rough_sups) if s >= tail_shell], default=0.0)
    for step in range(refinements):
        r = f - M @ u
        correction = Qf(r)
        leftover = r - M @ correction
        correction = correction + E @ np.linalg.solve(M_low, E.conj().T @ leftover / n)
        u = u + correction
        logger.debug("hypoellipticity refinement %d: residual %.3e", step, float(np.max(np.abs(r))))
    residual = f - M @ u
    error = float(np.max(np.abs(u - reference)) / scale)
    r_shells, r_sups = _fourier_shells(residual, grid)
    u_shells, u_sups = _fourier_shells(u, grid)
    tail = max([v for s, v in zip(r_shells, r_sups) if s >= tail_shell], default=0.0)
    passed = rough_tail < tol and error <= tol and tail < tol
    logger.info(
        "hypoellipticity demo: parametrix error %.3e, smoothing tail %.3e, refined error %.3e",
        rough_error, rough_tail, error,
    )
    return HypoellipticityReport(
        k=k, refinements=refinements, parametrix_relative_error=rough_error,
        parametrix_residual_shells=rough_shells, parametrix_residual_sups=rough_sups,
        parametrix_residual_tail=rough_tail, relative_error=error, residual_shells=r_shells, residual_sups=r_sups,
        solution_shells=u_shells, solution_sups=u_sups, residual_tail=tail, passed=passed,
    )
