"""Brute-force reference integrators for low-dimensional checks.

Everything here enumerates: midpoint grids, the sorted area-element curve
g(w) built from them, and a ray-sector decomposition of a 2-D contour.
Dimensions above three are refused.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InputError

MAX_ORACLE_DIM = 3
RADIUS_BRACKET = 20.0
RADIUS_TOL = 1e-12

# Correlated Gaussian on [-5, 5]^2 used throughout the tests.
GAUSS_RHO = 0.7
GAUSS_NORM = math.sqrt(1.0 - GAUSS_RHO**2) / (2.0 * math.pi)

# Unit-variance bivariate normal with correlation 1/2; its contour at level
# 0.041 is the ellipse used for the sector decomposition.
ELLIPSE_NORM = 1.0 / (2.0 * math.pi * math.sqrt(0.75))


def gaussian_2d(x, y):
    """sqrt(1 - 0.7^2)/(2 pi) * exp(-(x^2 + 1.4 x y + y^2)/2)."""
    return GAUSS_NORM * np.exp(-0.5 * (x * x + 2.0 * GAUSS_RHO * x * y + y * y))


def log_gaussian_2d(points) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = p[:, 0], p[:, 1]
    return math.log(GAUSS_NORM) - 0.5 * (x * x + 2.0 * GAUSS_RHO * x * y + y * y)


def ellipse_likelihood(x, y):
    """exp(-(x^2 + x y + y^2)/1.5) / (2 pi sqrt(0.75)); peak 0.18378 at the origin."""
    return ELLIPSE_NORM * np.exp(-(x * x + x * y + y * y) / 1.5)


@dataclass(frozen=True)
class GridSpec:
    lower: tuple
    upper: tuple
    cells: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        n = tuple(int(v) for v in self.cells)
        if not (len(lo) == len(hi) == len(n)):
            raise InputError("grid bounds and cell counts must have the same length")
        if not 1 <= len(n) <= MAX_ORACLE_DIM:
            raise InputError(f"grid oracle supports 1 to {MAX_ORACLE_DIM} dimensions, got {len(n)}")
        for a, b, k in zip(lo, hi, n):
            if not (math.isfinite(a) and math.isfinite(b)) or b <= a:
                raise InputError(f"bad axis bounds [{a}, {b}]")
            if k < 1:
                raise InputError("cell counts must be >= 1")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "cells", n)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def widths(self) -> tuple:
        return tuple((b - a) / k for a, b, k in zip(self.lower, self.upper, self.cells))

    @property
    def dw(self) -> float:
        return float(np.prod(self.widths))

    @property
    def total_measure(self) -> float:
        return float(np.prod([b - a for a, b in zip(self.lower, self.upper)]))

    def centers(self) -> np.ndarray:
        """Cell midpoints as an (n_cells, dim) array, first axis slowest."""
        axes = [a + (np.arange(k) + 0.5) * w for a, k, w in zip(self.lower, self.cells, self.widths)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def _cell_values(f: Callable, spec: GridSpec) -> np.ndarray:
    pts = spec.centers()
    vals = np.asarray(f(*pts.T), dtype=float)
    if vals.shape != (pts.shape[0],):
        vals = np.broadcast_to(vals, (pts.shape[0],)).astype(float)
    if not np.all(np.isfinite(vals)):
        raise InputError("integrand is not finite on every cell center")
    return vals


def grid_integrate(f: Callable, spec: GridSpec) -> float:
    """Midpoint rule: sum over cells of f(center) * dw.

    ``f`` takes one array per axis and is evaluated on all centers at once.
    """
    vals = _cell_values(f, spec)
    return float(np.sum(vals) * spec.dw)


def sorted_area_curve(f: Callable, spec: GridSpec) -> list[tuple[float, float]]:
    """The step curve g(w): cell ordinates sorted descending against cumulative measure.

    Each pair is (right edge w of the step, height g). The sum of heights
    times dw equals :func:`grid_integrate`.
    """
    vals = _cell_values(f, spec)
    g = np.sort(vals)[::-1]
    w = spec.dw * np.arange(1, g.size + 1)
    return list(zip(w.tolist(), g.tolist()))


def curve_integral(curve: Sequence[tuple[float, float]]) -> float:
    total, prev = 0.0, 0.0
    for w, g in curve:
        total += g * (w - prev)
        prev = w
    return total


def contour_radius(likelihood: Callable, L_star: float, phi: float,
                   peak=(0.0, 0.0), bracket: float = RADIUS_BRACKET, tol: float = RADIUS_TOL) -> float:
    """Distance from ``peak`` to the level set likelihood = L_star along angle ``phi``."""
    c, s = math.cos(phi), math.sin(phi)
    px, py = peak

    def above(r):
        return float(likelihood(px + r * c, py + r * s)) >= L_star

    if not above(0.0):
        raise InputError("L_star exceeds the likelihood at the peak")
    if above(bracket):
        raise InputError(f"contour lies beyond the bisection bracket {bracket}")
    lo, hi = 0.0, bracket
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if above(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sector_radii(L_star: float, n_sectors: int, likelihood: Callable = ellipse_likelihood,
                 peak=(0.0, 0.0)) -> np.ndarray:
    if n_sectors < 1:
        raise InputError("n_sectors must be positive")
    dS = 2.0 * math.pi / n_sectors
    return np.array([contour_radius(likelihood, L_star, (i + 0.5) * dS, peak) for i in range(n_sectors)])


def ellipse_pyramid_sum(L_star: float, n_sectors: int, likelihood: Callable = ellipse_likelihood,
                        peak=(0.0, 0.0)) -> float:
    """Area inside the contour as sum of R_i^2/2 * dS over equal arcs (rays at arc centers)."""
    R = sector_radii(L_star, n_sectors, likelihood, peak)
    return float(np.sum(R * R) * 0.5 * (2.0 * math.pi / n_sectors))


def ellipse_area_exact(L_star: float) -> float:
    """Closed-form area of {ellipse_likelihood >= L_star}: pi * 1.5 log(peak/L) / sqrt(0.75)."""
    k = 1.5 * math.log(ELLIPSE_NORM / L_star)
    return math.pi * k / math.sqrt(0.75)


def write_curve_csv(path, curve) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["w", "g"])
        for w, g in curve:
            wr.writerow([repr(w), repr(g)])


def write_radii_csv(path, radii) -> None:
    n = len(radii)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["i", "phi", "R"])
        for i, r in enumerate(radii):
            wr.writerow([i + 1, repr((i + 0.5) * 2.0 * math.pi / n), repr(float(r))])
