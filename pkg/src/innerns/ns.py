"""The Nested Sampling loop proper.

The engine keeps N live objects, repeatedly discards the one with the lowest
log integrand, replaces it with a single fresh draw above that level and
accumulates the evidence in log space using the deterministic shrinkage
schedule ``log w_t = -t/N + log W``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .errors import SamplerExhaustedError
from .numerics import NEG_INF, log1mexp, log_add

MAX_ITERATIONS_CAP = 1_000_000

TERMINATION_KNOWN_MAX = "max-known-bound"
TERMINATION_SELF = "self-contribution"
TERMINATION_CAP = "iteration-cap"


@dataclass(frozen=True)
class NSConfig:
    n_objects: int
    log_W: float = 0.0
    termination_factor: Optional[float] = None
    max_iterations: Optional[int] = None
    rng_seed: int = 0
    known_log_max_f: Optional[float] = None
    dynamic_range_decades: float = 10.0

    def __post_init__(self):
        if self.n_objects < 2:
            raise ValueError("n_objects must be >= 2 (survivor reuse needs a survivor)")
        if self.termination_factor is not None and self.termination_factor <= 1.0:
            raise ValueError("termination_factor must exceed 1")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")

    @property
    def log_termination_factor(self) -> float:
        if self.termination_factor is None:
            return 2.0 * math.log(self.n_objects)
        return math.log(self.termination_factor)

    @property
    def iteration_cap(self) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        guess = int(50 * self.n_objects * self.dynamic_range_decades)
        return min(guess, MAX_ITERATIONS_CAP)


@dataclass(frozen=True)
class NSObject:
    theta: np.ndarray
    log_f: float


@dataclass(frozen=True)
class WeightedSample:
    theta: np.ndarray
    log_g: float
    log_A: float
    iteration: int


@dataclass
class NSRunResult:
    log_Z: float
    samples: list[WeightedSample]
    iterations: int
    termination_reason: str
    n_objects: int
    log_W: float
    live: list[NSObject] = field(default_factory=list)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([s.theta for s in self.samples])

    @property
    def log_weights(self) -> np.ndarray:
        """Normalized log posterior weights log(A_t / Z)."""
        return np.array([s.log_A for s in self.samples]) - self.log_Z

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def trace_rows(self):
        """Yield (t, log_w, log_g, log_A, log_Z, terminated) for every iteration."""
        log_Z = NEG_INF
        for s in self.samples:
            log_Z = log_add(log_Z, s.log_A)
            log_w = -s.iteration / self.n_objects + self.log_W
            last = s.iteration == self.iterations
            yield (s.iteration, log_w, s.log_g, s.log_A, log_Z, int(last))

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "log_w", "log_g", "log_A", "log_Z", "termination_flag"])
            for t, log_w, log_g, log_A, log_Z, flag in self.trace_rows():
                writer.writerow([t, repr(log_w), repr(log_g), repr(log_A), repr(log_Z), flag])


class ConstrainedSampler(Protocol):
    """Anything that can produce a point with ``target(theta) >= log_star``.

    ``live`` holds the current live thetas (None during initialization) and
    ``worst`` the index of the object being replaced. Implementations raise
    SamplerExhaustedError when they give up.
    """

    def draw(
        self,
        target: Callable[[np.ndarray], float],
        log_star: float,
        rng: np.random.Generator,
        live: Optional[np.ndarray] = None,
        worst: Optional[int] = None,
    ) -> tuple[np.ndarray, float]: ...


def log_area_element(t: int, n_objects: int, log_W: float, log_g: float) -> float:
    """log A_t = -(t-1)/N + log W + log(1 - e^{-1/N}) + log g_t."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if log_g == NEG_INF:
        return NEG_INF
    return -(t - 1) / n_objects + log_W + log1mexp(1.0 / n_objects) + log_g


def check_termination(t: int, log_A: float, log_Z: float, cfg: NSConfig) -> tuple[bool, Optional[str]]:
    """Stopping rule after iteration ``t`` has been folded into ``log_Z``.

    With a known maximum of f the bound on the next area element is used,
    otherwise the current element's own contribution.
    """
    threshold = log_Z - cfg.log_termination_factor
    if cfg.known_log_max_f is not None:
        bound = (
            -t / cfg.n_objects
            + cfg.log_W
            + log1mexp(1.0 / cfg.n_objects)
            + cfg.known_log_max_f
        )
        if bound < threshold:
            return True, TERMINATION_KNOWN_MAX
        return False, None
    if log_A < threshold:
        return True, TERMINATION_SELF
    return False, None


def run_nested_sampling(
    target: Callable[[np.ndarray], float],
    sampler: ConstrainedSampler,
    cfg: NSConfig,
    initial: Optional[Sequence[NSObject]] = None,
    callback: Optional[Callable[[WeightedSample], None]] = None,
    rng: Optional[np.random.Generator] = None,
) -> NSRunResult:
    """Run Nested Sampling until the stopping rule or the iteration cap fires.

    ``initial`` may supply the starting population (otherwise the sampler is
    asked for N unconstrained draws). ``callback`` sees every discarded
    sample right after it is recorded. The run is deterministic given
    ``cfg.rng_seed`` unless an explicit ``rng`` is passed.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    N = cfg.n_objects

    if initial is None:
        objs = [sampler.draw(target, NEG_INF, rng) for _ in range(N)]
        thetas = np.array([np.asarray(o[0], dtype=float) for o in objs])
        log_f = np.array([o[1] for o in objs], dtype=float)
    else:
        if len(initial) != N:
            raise ValueError(f"expected {N} initial objects, got {len(initial)}")
        thetas = np.array([np.asarray(o.theta, dtype=float) for o in initial])
        log_f = np.array([o.log_f for o in initial], dtype=float)

    samples: list[WeightedSample] = []
    log_Z = NEG_INF
    reason = TERMINATION_CAP
    cap = cfg.iteration_cap
    t = 0
    while t < cap:
        t += 1
        worst = int(np.argmin(log_f))  # first index wins ties
        log_g = float(log_f[worst])
        log_A = log_area_element(t, N, cfg.log_W, log_g)
        log_Z = log_add(log_Z, log_A)
        sample = WeightedSample(thetas[worst].copy(), log_g, log_A, t)
        samples.append(sample)
        if callback is not None:
            callback(sample)

        done, why = check_termination(t, log_A, log_Z, cfg)
        if done:
            reason = why
            break
        if t == cap:
            break
        try:
            theta, value = sampler.draw(target, log_g, rng, live=thetas, worst=worst)
        except SamplerExhaustedError as exc:
            raise SamplerExhaustedError(str(exc), iteration=t) from exc
        thetas[worst] = theta
        log_f[worst] = value

    live = [NSObject(thetas[i].copy(), float(log_f[i])) for i in range(N)]
    return NSRunResult(log_Z, samples, t, reason, N, cfg.log_W, live)


def posterior_expectation(result: NSRunResult, h: Callable[[np.ndarray], float]) -> float:
    """Sum_t h(theta_t) A_t / Z over the discarded samples."""
    w = result.weights
    vals = np.array([h(s.theta) for s in result.samples], dtype=float)
    return float(np.dot(w, vals))


class BoxRejectionSampler:
    """Uniform rejection sampling on an axis-aligned box.

    Candidates are drawn in batches and the first one (in draw order)
    satisfying the constraint is returned. ``log_f_batch`` evaluates the
    target on an (n, k) array; when absent the scalar target is mapped
    row by row.
    """

    def __init__(self, lower, upper, log_f_batch=None, max_draws: int = 100_000_000,
                 min_batch: int = 64, max_batch: int = 1 << 20):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape or np.any(self.upper <= self.lower):
            raise ValueError("box bounds must satisfy lower < upper componentwise")
        self.log_f_batch = log_f_batch
        self.max_draws = max_draws
        self.min_batch = min_batch
        self.max_batch = max_batch
        self._batch = min_batch
        self.n_draws = 0

    @property
    def log_volume(self) -> float:
        return float(np.sum(np.log(self.upper - self.lower)))

    def _evaluate(self, target, pts):
        if self.log_f_batch is not None:
            return np.asarray(self.log_f_batch(pts), dtype=float)
        return np.array([target(p) for p in pts], dtype=float)

    def draw(self, target, log_star, rng, live=None, worst=None):
        if log_star == NEG_INF:
            p = self.lower + (self.upper - self.lower) * rng.random(self.lower.shape)
            self.n_draws += 1
            return p, float(self._evaluate(target, p[None, :])[0])
        batch = max(self.min_batch, self._batch // 2)
        used = 0
        while used < self.max_draws:
            pts = self.lower + (self.upper - self.lower) * rng.random((batch, self.lower.size))
            vals = self._evaluate(target, pts)
            ok = np.flatnonzero(vals >= log_star)
            if ok.size:
                i = int(ok[0])
                used += i + 1
                self.n_draws += used
                self._batch = batch
                return pts[i], float(vals[i])
            used += batch
            batch = min(2 * batch, self.max_batch)
        self.n_draws += used
        raise SamplerExhaustedError(f"no point above the constraint after {used} uniform draws")
