"""
Heisenberg - fundamental solution of the sublaplacian on heis_1

L = -(X^2 + Y^2) with X = dx - (y/2) dz, Y = dy + (x/2) dz has a fundamental
solution c * ((x^2 + y^2)^2 + 16 z^2)^(-1/2), homogeneous of weight 2 - d_H = -2.
The constant c is not taken from tables: it is fixed by the weak-form mass
oracle  int Gamma L(phi) = phi(0)  evaluated by quadrature in homogeneous
polar coordinates  r^2 = s^2 cos(theta), 4 z = s^2 sin(theta).
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
import sympy
from pydantic import BaseModel

from calculus.enveloping_calculus import apply_operator, sublaplacian
from calculus.filtered_patch import heisenberg_patch
from calculus.graded_nilpotent import koranyi_gauge

logger = logging.getLogger(__name__)

HOMOGENEOUS_DIMENSION = 4
DEFAULT_NODES = 48
S_MAX = 6.0
MASS_S_MAX = 3.0


def _gauss(n: int, a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (nodes + 1.0), half * weights


def _theta_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes in theta in (-pi/2, pi/2) via theta = (pi/2) sin(pi u / 2), which smooths sqrt(cos theta) at the ends."""
    u, w = _gauss(n, -1.0, 1.0)
    theta = 0.5 * math.pi * np.sin(0.5 * math.pi * u)
    jacobian = 0.25 * math.pi ** 2 * np.cos(0.5 * math.pi * u)
    return theta, w * jacobian


def polar_to_group(s, theta, phi=0.0):
    """(s, theta, phi) -> (x, y, z) with x^2 + y^2 = s^2 cos(theta), z = s^2 sin(theta) / 4."""
    r = s * np.sqrt(np.maximum(np.cos(theta), 0.0))
    return r * np.cos(phi), r * np.sin(phi), 0.25 * s ** 2 * np.sin(theta)


def gauge_profile(points) -> np.ndarray:
    """((x^2 + y^2)^2 + 16 z^2)^(-1/2), the fundamental solution up to its constant."""
    n = np.asarray(koranyi_gauge(points), dtype=float)
    with np.errstate(divide="ignore"):
        return 1.0 / n ** 2


@lru_cache(maxsize=None)
def _sublaplacian_of(expr_text: str):
    patch = heisenberg_patch()
    expr = sympy.sympify(expr_text, locals={str(c): c for c in patch.coords})
    return patch.coords, apply_operator(sublaplacian(patch), expr)


def mass_constant(nodes: int = DEFAULT_NODES) -> float:
    """
    c with int c Gamma_1 L(phi) = phi(0) for phi = exp(-N^4).

    In homogeneous polar coordinates the Haar measure is (s^3 / 4) ds dtheta dphi
    and Gamma_1 = s^-2, so the integral is (pi / 2) int int s L(phi) ds dtheta.
    """
    coords, l_phi = _sublaplacian_of("exp(-((x**2 + y**2)**2 + 16*z**2))")
    fn = sympy.lambdify(coords, l_phi, "numpy")
    s, ws = _gauss(nodes, 0.0, MASS_S_MAX)
    theta, wt = _theta_rule(nodes)
    S, T = np.meshgrid(s, theta, indexing="ij")
    x, y, z = polar_to_group(S, T)
    integrand = S * fn(x, y, z)
    integral = 0.5 * math.pi * float(np.einsum("i,j,ij->", ws, wt, integrand))
    constant = 1.0 / integral
    logger.info("sublaplacian fundamental solution constant from mass oracle: %.12g", constant)
    return constant


@dataclass(frozen=True)
class FundamentalSolution:
    """Gamma(g) = constant * ((x^2 + y^2)^2 + 16 z^2)^(-1/2)."""

    constant: float

    @property
    def weight(self) -> int:
        return 2 - HOMOGENEOUS_DIMENSION

    def __call__(self, points) -> np.ndarray:
        return self.constant * gauge_profile(points)

    def tabulate(self, n: int = 33, half_width: float = 2.0) -> Tuple[np.ndarray, np.ndarray]:
        """Values on an n^3 grid of [-half_width, half_width]^3; the origin carries inf."""
        axis = np.linspace(-half_width, half_width, n)
        mesh = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
        return axis, self(mesh)


@lru_cache(maxsize=1)
def fundamental_solution(nodes: int = DEFAULT_NODES) -> FundamentalSolution:
    return FundamentalSolution(mass_constant(nodes))


class HeisenbergReport(BaseModel):
    constant: float
    residual_max: float
    residual_points: int
    homogeneity_error: float
    convolution_error: Optional[float] = None
    convolution_points: List[List[float]] = []
    passed: bool


def sublaplacian_residual(gamma: FundamentalSolution, points: np.ndarray) -> np.ndarray:
    """|L Gamma| at the given points (symbolic L, evaluated numerically)."""
    coords, l_gamma = _sublaplacian_of("((x**2 + y**2)**2 + 16*z**2)**(-1/2)")
    fn = sympy.lambdify(coords, l_gamma, "numpy")
    pts = np.asarray(points, dtype=float)
    return np.abs(gamma.constant * np.asarray(fn(pts[..., 0], pts[..., 1], pts[..., 2]), dtype=float))


def residual_points(n: int = 9, half_width: float = 2.0, min_gauge: float = 0.25) -> np.ndarray:
    axis = np.linspace(-half_width, half_width, n)
    mesh = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    return mesh[koranyi_gauge(mesh) >= min_gauge]


def homogeneity_error(gamma: FundamentalSolution, points: np.ndarray, lambdas: Sequence[float] = (0.5, 2.0, 3.0)) -> float:
    """max relative |Gamma(delta_lam g) - lam^(2 - d_H) Gamma(g)|."""
    pts = np.asarray(points, dtype=float)
    base = gamma(pts)
    worst = 0.0
    for lam in lambdas:
        scaled = pts * np.array([lam, lam, lam ** 2])
        err = np.abs(gamma(scaled) - lam ** gamma.weight * base) / np.abs(lam ** gamma.weight * base)
        worst = max(worst, float(np.max(err)))
    return worst


@lru_cache(maxsize=None)
def _transported_sublaplacian():
    """
    -( (X - k2 Z)^2 + (Y + k1 Z)^2 ) f at h, with f = exp(-|h|^2).

    Moving L from Gamma onto f(g k^-1) conjugates the frame by Ad_k.
    """
    patch = heisenberg_patch()
    x, y, z = patch.coords
    k1, k2 = sympy.symbols("k1 k2", real=True)
    f = sympy.exp(-(x ** 2 + y ** 2 + z ** 2))

    def X(u):
        return patch.apply_field(0, u) - k2 * patch.apply_field(2, u)

    def Y(u):
        return patch.apply_field(1, u) + k1 * patch.apply_field(2, u)

    expr = -(X(X(f)) + Y(Y(f)))
    return sympy.lambdify((x, y, z, k1, k2), expr, "numpy"), sympy.lambdify((x, y, z), f, "numpy")


def convolution_error(gamma: FundamentalSolution, points: np.ndarray, nodes: int = DEFAULT_NODES) -> float:
    """
    max |L(f * Gamma)(g) - f(g)| over the points, f a Gaussian.

    L(f * Gamma)(g) = int (L_k f)(g k^-1) Gamma(k) dk, computed in homogeneous
    polar coordinates where Gamma(k) dk = constant * (s / 4) ds dtheta dphi is smooth.
    """
    lf, f = _transported_sublaplacian()
    s, ws = _gauss(nodes, 0.0, S_MAX)
    theta, wt = _theta_rule(nodes)
    phi, wp = _gauss(nodes, 0.0, 2.0 * math.pi)
    S, T, P = np.meshgrid(s, theta, phi, indexing="ij")
    k1, k2, k3 = polar_to_group(S, T, P)
    weight = gamma.constant * 0.25 * S * ws[:, None, None] * wt[None, :, None] * wp[None, None, :]
    worst = 0.0
    for g in np.asarray(points, dtype=float):
        hx = g[0] - k1
        hy = g[1] - k2
        hz = g[2] - k3 - 0.5 * (g[0] * k2 - g[1] * k1)
        value = float(np.sum(weight * lf(hx, hy, hz, k1, k2)))
        worst = max(worst, abs(value - float(f(*g))))
    return worst


def heisenberg_report(
    nodes: int = DEFAULT_NODES,
    grid_points: int = 9,
    convolution_points: Optional[np.ndarray] = None,
    tol: float = 1e-4,
) -> HeisenbergReport:
    """Constant, L Gamma residual off the identity, homogeneity and L(f * Gamma) = f."""
    gamma = fundamental_solution(nodes)
    pts = residual_points(grid_points)
    residual = float(np.max(sublaplacian_residual(gamma, pts)))
    homog = homogeneity_error(gamma, pts)
    if convolution_points is None:
        convolution_points = np.array([[0.0, 0.0, 0.0], [0.3, -0.2, 0.1], [-0.5, 0.4, 0.25]])
    conv = convolution_error(gamma, convolution_points, nodes)
    passed = residual < tol and homog < 1e-10 and conv < tol
    logger.info("heisenberg demo: residual %.3e, homogeneity %.3e, convolution %.3e", residual, homog, conv)
    return HeisenbergReport(
        constant=gamma.constant, residual_max=residual, residual_points=int(len(pts)),
        homogeneity_error=homog, convolution_error=conv,
        convolution_points=np.asarray(convolution_points, dtype=float).tolist(), passed=passed,
    )
