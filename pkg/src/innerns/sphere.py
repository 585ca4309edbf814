"""Uniform directions and the angle-modulated random walk on the unit sphere."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import StallError
from .numerics import OrthonormalBasis, gram_schmidt

ANGLE_EPS = 1e-9
DEFAULT_N_ACCEPTS = 20
STALL_FACTOR = 10_000


def _unit_gaussian(k: int, rng: np.random.Generator) -> np.ndarray:
    while True:
        e0 = rng.standard_normal(k)
        norm = math.sqrt(float(e0 @ e0))
        if norm >= 1e-300:
            return e0 / norm


def random_direction(m: int, rng: np.random.Generator) -> np.ndarray:
    """A direction uniform on the unit (m-1)-sphere (normalized Gaussian)."""
    if m < 2:
        raise ValueError("m must be >= 2")
    return _unit_gaussian(m, rng)


def random_directions(k: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` independent uniform directions as a (k, m) array (m = 1 gives signs)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    e0 = rng.standard_normal((k, m))
    norms = np.sqrt(np.einsum("ij,ij->i", e0, e0))
    bad = norms < 1e-300
    while np.any(bad):  # measure-zero event
        e0[bad] = rng.standard_normal((int(bad.sum()), m))
        norms = np.sqrt(np.einsum("ij,ij->i", e0, e0))
        bad = norms < 1e-300
    return e0 / norms[:, None]


def rotation_basis(anchor) -> OrthonormalBasis:
    """Orthonormal m x m basis whose first column is ``anchor``.

    The remaining columns come from Gram-Schmidt against the identity
    columns; the identity column most parallel to the anchor is the one
    left out, which keeps every residual well away from zero.
    """
    a = np.asarray(anchor, dtype=float)
    a = a / np.linalg.norm(a)
    m = a.size
    skip = int(np.argmax(np.abs(a)))
    seeds = [a] + [np.eye(m)[i] for i in range(m) if i != skip]
    return gram_schmidt(seeds)


def angle_from_score(step_score: float, u: float) -> float:
    """arcsin(u ** step_score) clamped into (eps, pi/2 - eps)."""
    log_x = step_score * math.log(u)
    if log_x >= 0.0:
        return math.pi / 2 - ANGLE_EPS
    alpha = math.asin(math.exp(log_x))
    return min(max(alpha, ANGLE_EPS), math.pi / 2 - ANGLE_EPS)


@dataclass
class WalkState:
    current: np.ndarray
    step_score: float = 0.0
    accepted: int = 0
    rejected: int = 0
    _basis: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def acceptance_rate(self) -> float:
        total = self.accepted + self.rejected
        return self.accepted / total if total else float("nan")

    def basis(self) -> np.ndarray:
        # Rebuilt only when the walk moves (i.e. at accepted points).
        if self._basis is None:
            self._basis = rotation_basis(self.current).matrix
        return self._basis

    def move_to(self, e: np.ndarray) -> None:
        self.current = e
        self._basis = None


def propose_step(state: WalkState, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """A direction at angle exactly ``alpha`` from the current one.

    e_new = cos(alpha) e + B (0, sin(alpha) v) with v uniform on the
    (m-2)-sphere, so proposals are uniform over the ring at that angle.
    """
    B = state.basis()
    m = B.shape[0]
    v = _unit_gaussian(m - 1, rng)
    e = math.cos(alpha) * state.current + math.sin(alpha) * (B[:, 1:] @ v)
    return e / math.sqrt(float(e @ e))


def modulate_angle(state: WalkState, accepted_last: Optional[bool], rng: np.random.Generator) -> float:
    """Update the step score from the last outcome and draw the next angle.

    A rejection raises the score by 1/2 (smaller angles), an acceptance
    lowers it by 1/2. ``accepted_last=None`` (first step) leaves it alone.
    """
    if accepted_last is True:
        state.step_score -= 0.5
    elif accepted_last is False:
        state.step_score += 0.5
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return angle_from_score(state.step_score, u)


def constrained_walk(
    start,
    accept: Callable[[np.ndarray], bool],
    n_accepts: int = DEFAULT_N_ACCEPTS,
    rng: Optional[np.random.Generator] = None,
    on_reject: Optional[Callable[[np.ndarray], None]] = None,
) -> tuple[np.ndarray, WalkState]:
    """Walk from ``start`` until ``n_accepts`` proposals pass ``accept``.

    Raises StallError after ``10_000 * n_accepts`` consecutive rejections.
    """
    if rng is None:
        rng = np.random.default_rng()
    start = np.asarray(start, dtype=float)
    state = WalkState(start / np.linalg.norm(start))
    stall_limit = STALL_FACTOR * n_accepts
    streak = 0
    last: Optional[bool] = None
    while state.accepted < n_accepts:
        alpha = modulate_angle(state, last, rng)
        proposal = propose_step(state, alpha, rng)
        if accept(proposal):
            state.move_to(proposal)
            state.accepted += 1
            last = True
            streak = 0
        else:
            state.rejected += 1
            last = False
            streak += 1
            if on_reject is not None:
                on_reject(proposal)
            if streak >= stall_limit:
                raise StallError(f"{streak} consecutive rejections in the sphere walk")
    return state.current, state
