"""Geometry of the Dirichlet posterior on the probability simplex.

Directions live in the (M-1)-dimensional simplex plane; the chart's basis
maps them into probability space, ``theta = center + rho * (basis @ e)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    CenterBelowConstraintError,
    DimensionMismatchError,
    InputError,
    NumericError,
    ZeroCountError,
)
from .numerics import NEG_INF, OrthonormalBasis, gram_schmidt

BOUNDARY_TOL = 1e-12
RADIUS_REL_TOL = 1e-10
RADIUS_MAX_ITER = 200

CENTER_PAPER = "paper"
CENTER_MODE = "analytic-mode"
CENTER_CUSTOM = "custom"


@dataclass(frozen=True)
class CountTable:
    counts: tuple
    shape: Optional[tuple] = None

    def __post_init__(self):
        counts = tuple(float(c) if not float(c).is_integer() else int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if len(counts) < 2:
            raise InputError("a count table needs at least two cells")
        for i, r in enumerate(counts):
            if not math.isfinite(r) or r < 1:
                cell = self.cell_label(i)
                if r == 0:
                    raise ZeroCountError(f"cell {cell} has count 0; every count must be >= 1")
                raise InputError(f"cell {cell} has invalid count {r!r}; every count must be >= 1")
        if self.shape is not None:
            shape = tuple(int(s) for s in self.shape)
            object.__setattr__(self, "shape", shape)
            if len(shape) != 2 or shape[0] * shape[1] != len(counts):
                raise InputError(f"shape {shape} does not match {len(counts)} counts")

    @property
    def M(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> float:
        return sum(self.counts)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float)

    def cell_label(self, i: int) -> str:
        """Human label for flat index ``i`` (row-major (row, col) when shaped)."""
        if self.shape is not None and len(self.shape) == 2:
            J = self.shape[1]
            return f"({i // J + 1},{i % J + 1}) = t{i + 1}"
        return f"t{i + 1}"


@dataclass(frozen=True)
class SimplexChart:
    center: np.ndarray
    basis: OrthonormalBasis

    @property
    def M(self) -> int:
        return self.center.size

    @property
    def W(self) -> np.ndarray:
        return self.basis.matrix

    def embed(self, e) -> np.ndarray:
        """Ambient step direction W @ e for chart direction(s) e."""
        e = np.asarray(e, dtype=float)
        return e @ self.W.T


def _as_counts(counts) -> CountTable:
    return counts if isinstance(counts, CountTable) else CountTable(tuple(counts))


def log_dirichlet_norm(counts) -> float:
    """log Gamma(n) - sum log Gamma(r_i)."""
    r = _as_counts(counts).array
    return math.lgamma(float(r.sum())) - float(sum(math.lgamma(x) for x in r))


def log_dirichlet_posterior(theta, counts) -> float:
    """Normalized log density of Dirichlet(r_1, ..., r_M) at ``theta``.

    Zero components count as -inf unless the matching r_i is 1.
    Components within the boundary tolerance below zero are treated as 0.
    """
    ct = _as_counts(counts)
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != ct.M:
        raise DimensionMismatchError(f"theta has {theta.shape[-1]} components, counts have {ct.M}")
    r = ct.array
    th = np.where(theta < 0.0, np.where(theta >= -BOUNDARY_TOL, 0.0, np.nan), theta)
    a = r - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(a == 0.0, 0.0, a * np.log(th))
    total = log_dirichlet_norm(ct) + np.sum(terms, axis=-1)
    total = np.where(np.any(np.isnan(th), axis=-1), NEG_INF, total)
    total = np.where(np.isnan(total), NEG_INF, total)
    if np.ndim(total) == 0:
        return float(total)
    return total


def dirichlet_center(counts, kind: str = CENTER_PAPER, custom=None) -> np.ndarray:
    """Interior center used as the ray origin.

    ``paper``: r_i / n. ``analytic-mode``: (r_i - 1)/(n - M), which is only
    interior when every r_i > 1; otherwise falls back to r_i / n on error.
    """
    ct = _as_counts(counts)
    r = ct.array
    if kind == CENTER_PAPER:
        return r / r.sum()
    if kind == CENTER_MODE:
        if np.any(r <= 1.0):
            raise InputError("analytic-mode center needs every count > 1 to be interior")
        return (r - 1.0) / (r.sum() - ct.M)
    if kind == CENTER_CUSTOM:
        c = np.asarray(custom, dtype=float)
        if c.shape != (ct.M,) or np.any(c <= 0) or abs(c.sum() - 1.0) > 1e-12:
            raise InputError("custom center must be an interior point of the simplex")
        return c
    raise InputError(f"unknown center kind {kind!r}")


def simplex_basis(M: int) -> OrthonormalBasis:
    """Orthonormal basis of the simplex plane from the edge vectors v_i - v_M."""
    if M < 2:
        raise ValueError("M must be >= 2")
    U = np.zeros((M - 1, M))
    U[np.arange(M - 1), np.arange(M - 1)] = 1.0
    U[:, -1] = -1.0
    return gram_schmidt(U)


def simplex_chart(M: int, counts=None, center=None, kind: str = CENTER_PAPER) -> SimplexChart:
    if center is None:
        if counts is None:
            center = np.full(M, 1.0 / M)
        else:
            ct = _as_counts(counts)
            if ct.M != M:
                raise DimensionMismatchError(f"M={M} but counts have {ct.M} cells")
            center = dirichlet_center(ct, kind)
    center = np.asarray(center, dtype=float)
    return SimplexChart(center, simplex_basis(M))


def _boundary_radii(center: np.ndarray, delta: np.ndarray) -> np.ndarray:
    # delta: (k, M). Only components moving toward zero (delta < 0) bound the ray.
    with np.errstate(divide="ignore", invalid="ignore"):
        cand = np.where(delta < 0.0, -center / delta, np.inf)
    return cand.min(axis=-1)


def simplex_boundary_radius(chart: SimplexChart, e) -> float:
    """Distance from the center to the simplex boundary along chart direction ``e``."""
    delta = chart.embed(e)
    R = _boundary_radii(chart.center, np.atleast_2d(delta))
    if not np.all(np.isfinite(R)):
        raise NumericError("direction has no positive boundary radius")
    return float(R[0]) if np.ndim(e) == 1 else R


def log_simplex_volume(M: int) -> float:
    """log of sqrt(M) / (M-1)!, the volume of the probability simplex in its plane."""
    if M < 2:
        raise ValueError("M must be >= 2")
    return 0.5 * math.log(M) - math.lgamma(M)


def _ray_log_density(center, delta, a, log_norm, rho):
    s = log_norm
    for c, d, ai in zip(center, delta, a):
        if ai == 0.0:
            continue
        x = c + rho * d
        if x <= 0.0:
            return NEG_INF
        s += ai * math.log(x)
    return s


def _level_slack(level: float) -> float:
    # summation order differs between evaluation paths; forgive last-bit differences at the center
    return 1e-12 * max(1.0, abs(level))


def likelihood_radius(chart: SimplexChart, e, counts, log_L_star: float) -> float:
    """Largest rho on the ray (up to the simplex boundary) still inside the constraint.

    Bisection on the feasibility of ``log_posterior >= log_L_star``; the
    superlevel sets of a Dirichlet density with all r_i >= 1 are convex so
    the feasible part of the ray is an interval starting at the center.
    """
    ct = _as_counts(counts)
    center = chart.center
    delta = chart.embed(e)
    R_b = float(_boundary_radii(center, delta[None, :])[0])
    if log_L_star == NEG_INF:
        return R_b
    a = ct.array - 1.0
    log_norm = log_dirichlet_norm(ct)
    c_list, d_list, a_list = center.tolist(), delta.tolist(), a.tolist()
    if _ray_log_density(c_list, d_list, a_list, log_norm, 0.0) < log_L_star - _level_slack(log_L_star):
        raise CenterBelowConstraintError("the center lies below the likelihood constraint")
    if _ray_log_density(c_list, d_list, a_list, log_norm, R_b) >= log_L_star:
        return R_b
    lo, hi = 0.0, R_b
    tol = RADIUS_REL_TOL * R_b
    for _ in range(RADIUS_MAX_ITER):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if _ray_log_density(c_list, d_list, a_list, log_norm, mid) >= log_L_star:
            lo = mid
        else:
            hi = mid
    return lo


def likelihood_radii(chart: SimplexChart, E, counts, log_L_star: float) -> np.ndarray:
    """Vectorized :func:`likelihood_radius` over the rows of ``E``."""
    ct = _as_counts(counts)
    E = np.atleast_2d(np.asarray(E, dtype=float))
    delta = chart.embed(E)
    R_b = _boundary_radii(chart.center, delta)
    if log_L_star == NEG_INF:
        return R_b
    a = ct.array - 1.0
    log_norm = log_dirichlet_norm(ct)
    active = a != 0.0

    def ray_logp(rho):
        x = chart.center[None, :] + rho[:, None] * delta
        x = x[:, active]
        with np.errstate(divide="ignore", invalid="ignore"):
            val = log_norm + np.sum(a[active] * np.log(np.maximum(x, 0.0)), axis=1)
        val = np.where(np.any(x <= 0.0, axis=1), NEG_INF, val)
        return val

    if ray_logp(np.zeros(1))[0] < log_L_star - _level_slack(log_L_star):
        raise CenterBelowConstraintError("the center lies below the likelihood constraint")
    at_bound = ray_logp(R_b) >= log_L_star
    lo = np.zeros_like(R_b)
    hi = R_b.copy()
    tol = RADIUS_REL_TOL * R_b
    for _ in range(RADIUS_MAX_ITER):
        open_ = (hi - lo > tol) & ~at_bound
        if not np.any(open_):
            break
        mid = 0.5 * (lo + hi)
        ok = ray_logp(mid) >= log_L_star
        lo = np.where(open_ & ok, mid, lo)
        hi = np.where(open_ & ~ok, mid, hi)
    return np.where(at_bound, R_b, lo)


class BoundaryRadius:
    """Radius function for the bare simplex (no likelihood constraint)."""

    def __init__(self, chart: SimplexChart):
        self.chart = chart

    def __call__(self, e) -> float:
        return simplex_boundary_radius(self.chart, e)

    def many(self, E) -> np.ndarray:
        return _boundary_radii(self.chart.center, self.chart.embed(np.atleast_2d(E)))


class LikelihoodRadius:
    """Radius function for the constraint ``log_posterior >= log_L_star``."""

    def __init__(self, chart: SimplexChart, counts, log_L_star: float):
        self.chart = chart
        self.counts = _as_counts(counts)
        self.log_L_star = log_L_star

    def __call__(self, e) -> float:
        return likelihood_radius(self.chart, e, self.counts, self.log_L_star)

    def many(self, E) -> np.ndarray:
        return likelihood_radii(self.chart, E, self.counts, self.log_L_star)


def uniform_simplex(n: int, M: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` uniform points on the simplex via normalized unit exponentials."""
    x = rng.standard_exponential((n, M))
    return x / x.sum(axis=1, keepdims=True)


def dirichlet_moments(counts, i: int) -> tuple[float, float]:
    """Closed-form marginal mean and variance of theta_i (0-based) under Dirichlet(r)."""
    r = _as_counts(counts).array
    n = r.sum()
    mean = r[i] / n
    return mean, mean * (1.0 - mean) / (n + 1.0)


def flatten_table(rows: Sequence[Sequence[float]]) -> tuple[list, tuple]:
    """Row-major flattening of an I x J table: cell (i, j) -> index i*J + j."""
    J = len(rows[0])
    if any(len(r) != J for r in rows):
        raise InputError("ragged contingency table")
    return [x for row in rows for x in row], (len(rows), J)
