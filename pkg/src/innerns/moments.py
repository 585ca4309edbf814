"""Posterior moments of a functional and model comparison from evidences."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import AllZeroEvidenceError, ConsistencyError, EvaluationError, InputError
from .expr import FunctionalExpr
from .ns import NSRunResult
from .numerics import NEG_INF, log_sum

VARIANCE_TOL = 1e-9


@dataclass(frozen=True)
class MomentReport:
    """M1, M2 and the one-standard-deviation bounds M1 -/+ sqrt(variance)."""

    M1: float
    M2: float
    variance: float
    lower: float
    upper: float
    log_Z: float
    T: int
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)


def moments_from_values(values, log_weights, log_Z: float, T: int, seed=None) -> MomentReport:
    """Weighted first and second moments of ``values`` under normalized ``exp(log_weights)``."""
    v = np.asarray(values, dtype=float)
    w = np.exp(np.asarray(log_weights, dtype=float))
    w = w / w.sum()
    M1 = float(np.dot(w, v))
    M2 = float(np.dot(w, v * v))
    # central form loses less precision than M2 - M1^2
    var = float(np.dot(w, (v - M1) ** 2))
    raw = M2 - M1 * M1
    scale = max(1.0, abs(M2))
    if raw < -VARIANCE_TOL * scale:
        raise ConsistencyError(f"negative variance {raw!r} from weighted moments")
    var = max(var, 0.0)
    sd = math.sqrt(var)
    return MomentReport(M1, M2, var, M1 - sd, M1 + sd, float(log_Z), int(T), seed)


def estimate_moments(result: NSRunResult, u: FunctionalExpr, seed: Optional[int] = None) -> MomentReport:
    """M1 = sum_t (A_t/Z) u(theta_t) and M2 likewise with u^2."""
    if not result.samples:
        raise InputError("no samples to average over")
    iters = [s.iteration for s in result.samples]
    vals = u.evaluate(result.thetas, rows=iters)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise EvaluationError("functional is not finite", iters[i])
    return moments_from_values(vals, result.log_weights, result.log_Z, result.iterations, seed)


def model_posterior(log_evidences: Sequence[float], log_priors: Optional[Sequence[float]] = None) -> list:
    """p_j Z_j / sum_k p_k Z_k, computed in log space. Priors default to equal."""
    z = np.asarray(log_evidences, dtype=float)
    if z.ndim != 1 or z.size == 0:
        raise InputError("need at least one log evidence")
    if log_priors is None:
        lp = np.zeros_like(z)
    else:
        lp = np.asarray(log_priors, dtype=float)
        if lp.shape != z.shape:
            raise InputError("log_priors and log_evidences differ in length")
    if np.all(z == NEG_INF):
        raise AllZeroEvidenceError("every model has zero evidence")
    s = z + lp
    total = log_sum(s.tolist())
    if total == NEG_INF:
        raise AllZeroEvidenceError("every model has zero prior-weighted evidence")
    return [float(math.exp(x - total)) for x in s]
