"""Log-space arithmetic, shrinkage order statistics, sphere measure and Gram-Schmidt."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError

NEG_INF = float("-inf")

# Seed vectors whose projected residual falls below this (relative) are dependent.
DEGENERATE_TOL = 1e-12
# Above this ambient dimension Gram-Schmidt does a second orthogonalization pass.
REORTHOGONALIZE_ABOVE = 20


def log_add(x: float, y: float) -> float:
    """Return log(exp(x) + exp(y)) without leaving log space.

    The larger argument is factored out so the correction term is
    ``log1p(exp(-|x - y|))``; negative infinity stands for zero mass.
    """
    if x < y:
        x, y = y, x
    if y == NEG_INF:
        return x
    return x + math.log1p(math.exp(y - x))


def log_sum(values) -> float:
    """Fold :func:`log_add` over an iterable of log values."""
    acc = NEG_INF
    for v in values:
        acc = log_add(acc, float(v))
    return acc


def log1mexp(a: float) -> float:
    """log(1 - exp(-a)) for a > 0, accurate at both small and large a."""
    if a <= 0.0:
        raise ValueError("log1mexp needs a > 0")
    if a < math.log(2.0):
        return math.log(-math.expm1(-a))
    return math.log1p(-math.exp(-a))


@dataclass(frozen=True)
class OrderStats:
    """Order statistics of the largest of N uniform draws on [0, W]."""

    n_objects: int
    log_W: float = 0.0

    def __post_init__(self):
        if self.n_objects < 1:
            raise ValueError("n_objects must be >= 1")

    @property
    def W(self) -> float:
        return math.exp(self.log_W)

    def shrinkage_density(self, t):
        """Density N t^(N-1) of the shrinkage ratio t = w_max / W on [0, 1]."""
        t = np.asarray(t, dtype=float)
        return self.n_objects * t ** (self.n_objects - 1)


def expected_w_max(s: OrderStats) -> float:
    return (1.0 - 1.0 / (s.n_objects + 1)) * s.W


def std_w_max(s: OrderStats) -> float:
    n = s.n_objects
    return math.sqrt(n / ((n + 1) ** 2 * (n + 2))) * s.W


def log_abscissa_schedule(t: int, s: OrderStats) -> float:
    """Expected log of the enclosed measure after ``t`` shrinkage steps."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return -t / s.n_objects + s.log_W


def log_sphere_surface_area(m: int) -> float:
    if m < 1:
        raise ValueError("m must be >= 1")
    return math.log(m) + 0.5 * m * math.log(math.pi) - math.lgamma(0.5 * m + 1.0)


def sphere_surface_area(m: int) -> float:
    """Surface measure of the unit (m-1)-sphere embedded in m dimensions."""
    return math.exp(log_sphere_surface_area(m))


@dataclass(frozen=True)
class OrthonormalBasis:
    """Orthonormal columns stored as an (ambient_dim, basis_dim) array."""

    matrix: np.ndarray

    @property
    def ambient_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def basis_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def columns(self) -> list[np.ndarray]:
        return [self.matrix[:, j].copy() for j in range(self.basis_dim)]


def _orthogonalize(B: np.ndarray, j: int, v: np.ndarray, passes: int) -> np.ndarray:
    for _ in range(passes):
        if j:
            Q = B[:, :j]
            v = v - Q @ (Q.T @ v)
    return v


def gram_schmidt(seed_vectors) -> OrthonormalBasis:
    """Orthonormalize seed vectors in order; the first column is the first seed normalized.

    Raises DegenerateInputError when a seed is (numerically) in the span of
    the previous ones.
    """
    seeds = np.atleast_2d(np.asarray(seed_vectors, dtype=float))
    k, m = seeds.shape
    if k > m:
        raise DegenerateInputError(f"{k} vectors cannot be independent in {m} dimensions")
    passes = 2 if m > REORTHOGONALIZE_ABOVE else 1
    B = np.empty((m, k))
    for j in range(k):
        v = seeds[j]
        scale = np.linalg.norm(v)
        if scale == 0.0:
            raise DegenerateInputError(f"seed vector {j + 1} is zero")
        r = _orthogonalize(B, j, v, passes)
        norm = np.linalg.norm(r)
        if norm < DEGENERATE_TOL * scale:
            raise DegenerateInputError(
                f"seed vector {j + 1} is linearly dependent on the previous ones "
                f"(residual norm {norm:.3g})"
            )
        B[:, j] = r / norm
    return OrthonormalBasis(B)
