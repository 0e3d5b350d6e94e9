"""
Lattice - torus grids, t-grids, dyadic shells and shell fits

The numeric layer samples symbols on a periodic x-grid times a centred
frequency lattice times a dyadic t-grid. This module owns the geometry of
those grids plus the small numerical kit shared by the symbol code: smooth
cut-offs, finite differences, and slope fits over dyadic shells.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from calculus.errors import DomainError, MalformedInputError
from calculus.graded_nilpotent import weighted_norm

logger = logging.getLogger(__name__)

DEFAULT_T_LEVELS = 12
DEFAULT_MARGIN = 8
DEFAULT_S_MIN = 2


def smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, built from exp(-1/u)."""
    u = np.asarray(u, dtype=float)
    a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
    b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


def radial_cutoff(r):
    """chi(r): 0 for r <= 1/2, 1 for r >= 1."""
    return smooth_step(2.0 * np.asarray(r, dtype=float) - 1.0)


def exponential_cutoff(r, radius: float):
    """1 on r <= radius/2, 0 on r >= radius."""
    return 1.0 - radial_cutoff(np.asarray(r, dtype=float) / radius)


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def dyadic_exponent(lam: float) -> Optional[int]:
    """j with lam == 2**j exactly, or None."""
    if lam <= 0:
        return None
    mantissa, exponent = math.frexp(lam)
    return exponent - 1 if mantissa == 0.5 else None


@dataclass(frozen=True)
class TorusGrid:
    """
    Periodic grid on T^d with a centred frequency lattice.

    Args:
        d: torus dimension (1..3)
        n_x: x-samples per axis; 1 for x-independent families
        n_eta: lattice points per axis, also the xi-grid size of kernels
        period: side length L of the torus
    """

    d: int
    n_x: int
    n_eta: int
    period: float = 2.0 * math.pi

    def __post_init__(self):
        if not 1 <= self.d <= 3:
            raise MalformedInputError(f"torus dimension must be 1, 2 or 3, got {self.d}")
        if self.n_x != 1 and not is_power_of_two(self.n_x):
            raise MalformedInputError(f"n_x must be 1 or a power of two, got {self.n_x}")
        if not is_power_of_two(self.n_eta) or self.n_eta < 4:
            raise MalformedInputError(f"n_eta must be a power of two >= 4, got {self.n_eta}")

    @property
    def x_invariant(self) -> bool:
        return self.n_x == 1

    @property
    def frequency_step(self) -> float:
        return 2.0 * math.pi / self.period

    @property
    def xi_step(self) -> float:
        return self.period / self.n_eta

    @property
    def volume(self) -> float:
        return self.period ** self.d

    @property
    def slice_shape(self) -> Tuple[int, ...]:
        return (self.n_x,) * self.d + (self.n_eta,) * self.d

    def x_axis(self) -> np.ndarray:
        return np.arange(self.n_x) * self.period / max(self.n_x, 1)

    def eta_axis(self) -> np.ndarray:
        """Centred ascending lattice -n/2 .. n/2 - 1, scaled to the period."""
        return (np.arange(self.n_eta) - self.n_eta // 2) * self.frequency_step

    def xi_axis(self) -> np.ndarray:
        """Centred kernel offsets, spacing L / n_eta."""
        return (np.arange(self.n_eta) - self.n_eta // 2) * self.xi_step

    def _mesh(self, axis: np.ndarray, offset: int) -> Tuple[np.ndarray, ...]:
        total = 2 * self.d
        out = []
        for j in range(self.d):
            shape = [1] * total
            shape[offset + j] = axis.size
            out.append(axis.reshape(shape))
        return tuple(out)

    def x_mesh(self) -> Tuple[np.ndarray, ...]:
        return self._mesh(self.x_axis(), 0)

    def eta_mesh(self) -> Tuple[np.ndarray, ...]:
        return self._mesh(self.eta_axis(), self.d)

    def xi_mesh(self) -> Tuple[np.ndarray, ...]:
        return self._mesh(self.xi_axis(), self.d)

    def eta_norm(self, weights: Sequence[int]) -> np.ndarray:
        """Homogeneous norm of every lattice point, shape (n_eta,)*d."""
        axes = np.meshgrid(*([self.eta_axis()] * self.d), indexing="ij")
        return np.asarray(weighted_norm(weights, np.stack(axes, axis=-1)), dtype=float).reshape((self.n_eta,) * self.d)

    def xi_norm(self, weights: Sequence[int]) -> np.ndarray:
        axes = np.meshgrid(*([self.xi_axis()] * self.d), indexing="ij")
        return np.asarray(weighted_norm(weights, np.stack(axes, axis=-1)), dtype=float).reshape((self.n_eta,) * self.d)

    def trusted_mask(self, margin: int = DEFAULT_MARGIN) -> np.ndarray:
        """Lattice points at least `margin` steps inside the box edge."""
        idx = np.arange(self.n_eta) - self.n_eta // 2
        ok = np.abs(idx) <= self.n_eta // 2 - margin
        masks = np.meshgrid(*([ok] * self.d), indexing="ij")
        return np.logical_and.reduce(masks) if self.d > 1 else masks[0]

    def refined(self, factor: int) -> "TorusGrid":
        n_x = self.n_x if self.n_x == 1 else self.n_x * factor
        return TorusGrid(self.d, n_x, self.n_eta * factor, self.period)


@dataclass(frozen=True)
class TGrid:
    """
    Dyadic t-grid {0} U {+-2^k : k = -levels .. t_up}, ascending.

    With t_up = 0 the grid stops at |t| = 1; a positive t_up reaches past the
    unit interval for nose normalization.
    """

    levels: int = DEFAULT_T_LEVELS
    t_up: int = 0

    def __post_init__(self):
        if self.levels < 0 or self.t_up < -self.levels:
            raise MalformedInputError(f"invalid t-grid levels={self.levels}, t_up={self.t_up}")

    @property
    def positive(self) -> np.ndarray:
        return 2.0 ** np.arange(-self.levels, self.t_up + 1)

    @property
    def values(self) -> np.ndarray:
        pos = self.positive
        return np.concatenate([-pos[::-1], [0.0], pos])

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def zero_index(self) -> int:
        return self.levels + self.t_up + 1

    def index(self, t: float) -> int:
        """Position of t on the grid; DomainError for off-grid t."""
        if t == 0:
            return self.zero_index
        j = dyadic_exponent(abs(float(t)))
        if j is None or not -self.levels <= j <= self.t_up:
            raise DomainError(f"t = {t} is not on the t-grid (levels {self.levels}, t_up {self.t_up})")
        offset = j + self.levels
        return self.zero_index + 1 + offset if t > 0 else self.zero_index - 1 - offset

    def contains(self, t: float) -> bool:
        try:
            self.index(t)
        except DomainError:
            return False
        return True


def eta_derivative(values: np.ndarray, axis: int, order: int, step: float = 1.0) -> np.ndarray:
    """Repeated centred differences along one lattice axis."""
    out = values
    for _ in range(order):
        out = np.gradient(out, step, axis=axis)
    return out


def t_derivative(values: np.ndarray, t_values: np.ndarray, order: int) -> np.ndarray:
    """Derivatives along the last axis on the non-uniform t-grid."""
    out = values
    for _ in range(order):
        out = np.gradient(out, t_values, axis=-1)
    return out


def multi_indices(d: int, max_total: int) -> List[Tuple[int, ...]]:
    """All multi-indices of length d with |a| <= max_total, graded then lexicographic."""
    out: List[Tuple[int, ...]] = []

    def grow(prefix, remaining, slots):
        if slots == 0:
            out.append(tuple(prefix))
            return
        for v in range(remaining + 1):
            grow(prefix + [v], remaining - v, slots - 1)

    grow([], max_total, d)
    return sorted(out, key=lambda a: (sum(a), tuple(-v for v in a)))


@dataclass(frozen=True)
class ShellFit:
    """Shell sups of a field and their log-log slopes."""

    exponents: Tuple[int, ...]
    sups: Tuple[float, ...]
    radii: Tuple[float, ...]
    slope: Optional[float]
    tail_slope: Optional[float]


def _lstsq_slope(x: Sequence[float], y: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.asarray(x, dtype=float), np.asarray(y, dtype=float), 1)
    return float(slope)


def shell_fit(
    magnitude: np.ndarray,
    norm: np.ndarray,
    s_min: int = DEFAULT_S_MIN,
    floor=0.0,
    mask: Optional[np.ndarray] = None,
) -> ShellFit:
    """
    Sup of `magnitude` over each dyadic shell 2^s <= norm < 2^(s+1) and the fitted slope.

    The slope regresses log2 of each sup against log2 of the norm where the sup
    is attained, so an exactly homogeneous field returns its weight. Shells whose
    sup does not exceed `floor` (scalar or per-point array) are dropped. The tail
    slope uses the last three shells kept.
    """
    magnitude = np.asarray(magnitude, dtype=float)
    floor_arr = np.broadcast_to(np.asarray(floor, dtype=float), magnitude.shape)
    valid = np.isfinite(magnitude)
    if mask is not None:
        valid &= mask
    positive = norm[valid & (norm > 0)]
    if positive.size == 0:
        return ShellFit((), (), (), None, None)
    s_max = int(math.floor(math.log2(float(positive.max()))))
    exps, sups, radii = [], [], []
    for s in range(s_min, s_max + 1):
        in_shell = valid & (norm >= 2.0 ** s) & (norm < 2.0 ** (s + 1))
        if not in_shell.any():
            continue
        local = np.where(in_shell, magnitude, -np.inf)
        flat = int(np.argmax(local))
        peak = float(local.flat[flat])
        if peak <= float(floor_arr.flat[flat]) or peak <= 0:
            continue
        exps.append(s)
        sups.append(peak)
        radii.append(float(norm.flat[flat]))
    slope = tail = None
    if len(sups) >= 2:
        logs = np.log2(sups)
        slope = _lstsq_slope(np.log2(radii), logs)
        tail = _lstsq_slope(np.log2(radii[-3:]), logs[-3:])
    return ShellFit(tuple(exps), tuple(sups), tuple(radii), slope, tail)


def broadcast_norm(norm: np.ndarray, shape: Tuple[int, ...], d: int) -> np.ndarray:
    """Broadcast a (n_eta,)*d norm array against a slice or family array of `shape`."""
    lead = (1,) * d
    trail = (1,) * (len(shape) - 2 * d)
    return np.broadcast_to(norm.reshape(lead + norm.shape + trail), shape)
