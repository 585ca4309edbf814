"""Inner Nested Sampling: a pyramid decomposition of a star-shaped region.

A region {center + r e : r <= R(e)} is explored by running Nested Sampling
over unit directions e with integrand f(e) = R(e)^m / m on the sphere of
measure W = |S^{m-1}|. Every discarded direction becomes a differential
(pyramid) with base dS_q from the shrinkage schedule and volume
R^m/m * dS_q. The resulting atlas can be sampled uniformly, refreshed as the
constraint tightens, and serves as the proposal geometry for the outer run.
"""

from __future__ import annotations

import bisect
import csv
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import CenterBelowConstraintError, ConstraintInversionError, SamplerExhaustedError
from .ns import NSConfig, run_nested_sampling
from .numerics import NEG_INF, log_sphere_surface_area, log_sum
from .sphere import DEFAULT_N_ACCEPTS, constrained_walk, random_directions

log = logging.getLogger(__name__)

MAX_RANDOM_REJECTIONS = 50
SPARE_CAP = 4
REFRESH_WINDOW = 100
REFRESH_THRESHOLD = 0.9
INTERPOLATION_STRIDE = 10
INVERSION_REL_TOL = 1e-9

REFRESH_FULL = "full"
REFRESH_INTERPOLATED = "interpolated"


@dataclass(frozen=True)
class Differential:
    index_q: int
    direction: np.ndarray
    radius: float
    log_dS: float
    log_dV: float


def log_dS(q: int, n_objects: int, m: int) -> float:
    """log of the sphere patch assigned to the q-th discarded direction."""
    if q < 1:
        raise ValueError("q must be >= 1")
    N = n_objects
    return -math.log(N + 1) + (q - 1) * math.log1p(-1.0 / (N + 1)) + log_sphere_surface_area(m)


def _log_pyramid(radii: np.ndarray, log_dS_arr: np.ndarray, m: int) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return m * np.log(radii) - math.log(m) + log_dS_arr


@dataclass
class DifferentialAtlas:
    """Stored differentials plus the geometry needed to turn them into points.

    ``basis`` (ambient x m) maps sphere directions into the ambient space;
    None means the identity. ``safety`` maps a 0-based differential index to
    spare (direction, radius) pairs.
    """

    directions: np.ndarray
    radii: np.ndarray
    log_dS: np.ndarray
    center: np.ndarray
    n_objects: int
    basis: Optional[np.ndarray] = None
    safety: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.directions.shape[1]

    @property
    def Q(self) -> int:
        return self.directions.shape[0]

    @cached_property
    def log_dV(self) -> np.ndarray:
        return _log_pyramid(self.radii, self.log_dS, self.m)

    @cached_property
    def log_V_star(self) -> float:
        return log_sum(self.log_dV)

    @cached_property
    def _cumulative(self) -> np.ndarray:
        # Normalized cumulative volume; last entry forced to exactly 1.
        c = np.cumsum(np.exp(self.log_dV - self.log_V_star))
        return c / c[-1]

    @property
    def differentials(self) -> list[Differential]:
        dV = self.log_dV
        return [
            Differential(q + 1, self.directions[q], float(self.radii[q]), float(self.log_dS[q]), float(dV[q]))
            for q in range(self.Q)
        ]

    def embed(self, e: np.ndarray) -> np.ndarray:
        return e if self.basis is None else self.basis @ e

    def with_radii(self, radii: np.ndarray, safety: dict) -> "DifferentialAtlas":
        return DifferentialAtlas(
            self.directions, np.asarray(radii, dtype=float), self.log_dS, self.center,
            self.n_objects, self.basis, safety, dict(self.info),
        )

    def write_csv(self, path) -> None:
        """Dump (q, e_1..e_m, R, dS, dV) rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q"] + [f"e{i + 1}" for i in range(self.m)] + ["R", "dS", "dV"])
            dV = self.log_dV
            for q in range(self.Q):
                w.writerow(
                    [q + 1] + [repr(float(x)) for x in self.directions[q]]
                    + [repr(float(self.radii[q])), repr(math.exp(self.log_dS[q])), repr(math.exp(dV[q]))]
                )


def _file_spare(radii, safety: dict, e, r: float, cap: int) -> None:
    """Put (e, r) under the differential whose radius is nearest to r (ties: lower q)."""
    if not len(radii):
        return
    j = bisect.bisect_left(radii, r)
    if j == len(radii):
        host = j - 1
    elif j == 0:
        host = 0
    else:
        host = j - 1 if abs(r - radii[j - 1]) <= abs(radii[j] - r) else j
    spares = safety.setdefault(host, [])
    spares.append((np.array(e, dtype=float), float(r)))
    if len(spares) > cap:
        R = radii[host]
        far = max(range(len(spares)), key=lambda i: (abs(spares[i][1] - R), i))
        spares.pop(far)


def store_spare(atlas: DifferentialAtlas, rejected, cap: int = SPARE_CAP) -> DifferentialAtlas:
    """File a rejected (direction, radius) under the nearest-radius differential.

    When the differential already holds ``cap`` spares the one farthest in
    radius from the differential's own radius is evicted.
    """
    e, r = rejected
    if not math.isfinite(r):
        raise ValueError("spare radius must be finite")
    _file_spare(list(atlas.radii), atlas.safety, e, float(r), cap)
    return atlas


class SphereSampler:
    """Constrained sampler over unit directions for f(e) = R(e)^m / m.

    Pure random draws are tried first; after ``max_random_rejections``
    consecutive failures within one replacement it switches permanently to
    the modulated random walk started from a surviving live direction.
    Random-phase rejections are passed to ``on_reject(e, R)``.
    """

    def __init__(self, m: int, radius_fn, max_random_rejections: int = MAX_RANDOM_REJECTIONS,
                 n_accepts: int = DEFAULT_N_ACCEPTS, on_reject=None):
        self.m = m
        self.radius_fn = radius_fn
        self.max_random_rejections = max_random_rejections
        self.n_accepts = n_accepts
        self.on_reject = on_reject
        self.walk_mode = False
        self.random_evaluations = 0
        self.walk_accepted = 0
        self.walk_rejected = 0
        self._log_m = math.log(m)

    def log_f_from_radius(self, r):
        with np.errstate(divide="ignore"):
            return self.m * np.log(r) - self._log_m

    def target(self, e) -> float:
        return float(self.log_f_from_radius(self.radius_fn(e)))

    def _radii(self, E: np.ndarray) -> np.ndarray:
        many = getattr(self.radius_fn, "many", None)
        if many is not None:
            return np.asarray(many(E), dtype=float)
        return np.array([self.radius_fn(e) for e in E], dtype=float)

    def draw(self, target, log_star, rng, live=None, worst=None):
        if log_star == NEG_INF:
            e = random_directions(1, self.m, rng)[0]
            return e, self.target(e)
        if not self.walk_mode:
            found = self._random_phase(log_star, rng)
            if found is not None:
                return found
            self.walk_mode = True
            log.debug("switching to the sphere walk")
        return self._walk(log_star, rng, live, worst)

    def _random_phase(self, log_star, rng):
        E = random_directions(self.max_random_rejections, self.m, rng)
        start = 0
        chunk = 1
        while start < len(E):
            stop = min(start + chunk, len(E))
            R = self._radii(E[start:stop])
            self.random_evaluations += stop - start
            lf = self.log_f_from_radius(R)
            ok = np.flatnonzero(lf >= log_star)
            n_rej = int(ok[0]) if ok.size else stop - start
            if self.on_reject is not None:
                for i in range(n_rej):
                    self.on_reject(E[start + i], float(R[i]))
            if ok.size:
                i = int(ok[0])
                return E[start + i], float(lf[i])
            start = stop
            chunk *= 2
        return None

    def _walk(self, log_star, rng, live, worst):
        if live is None or len(live) < 2:
            raise SamplerExhaustedError("the sphere walk needs a surviving live direction")
        n = len(live)
        j = int(rng.integers(n - 1))
        if worst is not None and j >= worst:
            j += 1
        last = {}

        def accept(e):
            lf = self.target(e)
            if lf >= log_star:
                last["lf"] = lf
                return True
            return False

        start = live[j]
        last["lf"] = self.target(start)
        e, state = constrained_walk(start, accept, self.n_accepts, rng)
        self.walk_accepted += state.accepted
        self.walk_rejected += state.rejected
        return e, last["lf"]


def build_atlas(
    radius_fn,
    m: int,
    cfg: NSConfig,
    center=None,
    basis=None,
    max_random_rejections: int = MAX_RANDOM_REJECTIONS,
    n_accepts: int = DEFAULT_N_ACCEPTS,
    spare_cap: int = SPARE_CAP,
    rng: Optional[np.random.Generator] = None,
) -> DifferentialAtlas:
    """Run Inner Nested Sampling over directions and collect the differentials.

    ``radius_fn(e)`` gives the distance from the center to the constraint
    surface along sphere direction ``e``; an optional ``radius_fn.many(E)``
    is used for batches. ``cfg.log_W`` is replaced by the log sphere area.
    """
    cfg = replace(cfg, log_W=log_sphere_surface_area(m))
    radii_so_far: list[float] = []
    directions: list[np.ndarray] = []
    safety: dict = {}

    def on_reject(e, r):
        if spare_cap > 0:
            _file_spare(radii_so_far, safety, e, r, spare_cap)

    sampler = SphereSampler(m, radius_fn, max_random_rejections, n_accepts, on_reject)

    def on_discard(sample):
        directions.append(sample.theta.copy())
        r = math.exp((sample.log_g + math.log(m)) / m) if sample.log_g > NEG_INF else 0.0
        radii_so_far.append(r)

    result = run_nested_sampling(sampler.target, sampler, cfg, callback=on_discard, rng=rng)

    Q = len(directions)
    lds = np.array([log_dS(q, cfg.n_objects, m) for q in range(1, Q + 1)])
    if center is None:
        center = np.zeros(m if basis is None else np.asarray(basis).shape[0])
    walk_total = sampler.walk_accepted + sampler.walk_rejected
    info = {
        "iterations": result.iterations,
        "termination_reason": result.termination_reason,
        "ns_log_Z": result.log_Z,
        "random_evaluations": sampler.random_evaluations,
        "walk_accepted": sampler.walk_accepted,
        "walk_rejected": sampler.walk_rejected,
        "walk_acceptance": sampler.walk_accepted / walk_total if walk_total else None,
    }
    return DifferentialAtlas(
        np.array(directions), np.array(radii_so_far), lds, np.asarray(center, dtype=float),
        cfg.n_objects, None if basis is None else np.asarray(basis, dtype=float), safety, info,
    )


def radius_from_volume(v: float, log_dS_q: float, m: int) -> float:
    """Height rho of the sub-pyramid of volume v: rho = (m v / dS_q)^(1/m)."""
    if v <= 0.0:
        return 0.0
    return math.exp((math.log(m) + math.log(v) - log_dS_q) / m)


def _draw(atlas: DifferentialAtlas, rng, usage=None):
    cum = atlas._cumulative
    u = rng.random()
    q = int(np.searchsorted(cum, u, side="left"))
    q = min(q, atlas.Q - 1)
    below = cum[q - 1] if q else 0.0
    # residual volume inside differential q, back in absolute units
    v = max(u - below, 0.0) * math.exp(atlas.log_V_star)
    rho = radius_from_volume(v, float(atlas.log_dS[q]), atlas.m)
    R_q = float(atlas.radii[q])
    rho = min(rho, R_q)
    e = atlas.directions[q]
    if usage is not None:
        k = usage.get(q, 0)
        usage[q] = k + 1
        spares = atlas.safety.get(q, ())
        if k >= 1 and k <= len(spares) and R_q > 0.0:
            e, R_s = spares[k - 1]
            rho = rho * R_s / R_q
    return atlas.center + rho * atlas.embed(e), q, rho


def draw_uniform_point(atlas: DifferentialAtlas, rng, usage: Optional[dict] = None) -> np.ndarray:
    """A point uniform over the union of the atlas pyramids.

    Pass a ``usage`` dict (differential index -> times drawn) to switch to a
    stored spare direction when a differential comes up again.
    """
    if atlas.Q == 0:
        raise ValueError("cannot draw from an empty atlas")
    return _draw(atlas, rng, usage)[0]


def _radii_of(radius_fn, E: np.ndarray) -> np.ndarray:
    many = getattr(radius_fn, "many", None)
    if many is not None:
        return np.asarray(many(E), dtype=float)
    return np.array([radius_fn(e) for e in E], dtype=float)


def refresh_radii(atlas: DifferentialAtlas, radius_fn, mode: str = REFRESH_FULL,
                  stride: int = INTERPOLATION_STRIDE) -> DifferentialAtlas:
    """Recompute stored radii against a tighter constraint; returns a new atlas.

    ``interpolated`` recomputes every ``stride``-th differential (and the
    last) and fills the rest by linear interpolation in q; spare radii are
    then scaled with their host.
    """
    Q = atlas.Q
    if mode == REFRESH_FULL:
        new = _radii_of(radius_fn, atlas.directions)
    elif mode == REFRESH_INTERPOLATED:
        if stride < 1:
            raise ValueError("stride must be >= 1")
        idx = np.unique(np.append(np.arange(0, Q, stride), Q - 1))
        at = _radii_of(radius_fn, atlas.directions[idx])
        new = np.interp(np.arange(Q), idx, at)
    else:
        raise ValueError(f"unknown refresh mode {mode!r}")

    old = atlas.radii
    grew = new > old * (1.0 + INVERSION_REL_TOL) + 1e-300
    if np.any(grew):
        q = int(np.flatnonzero(grew)[0])
        raise ConstraintInversionError(
            f"radius of differential {q + 1} grew from {old[q]!r} to {new[q]!r}; contours must shrink"
        )

    safety = {}
    for host, spares in atlas.safety.items():
        if not spares:
            continue
        if mode == REFRESH_FULL:
            rs = _radii_of(radius_fn, np.array([s[0] for s in spares]))
        else:
            scale = new[host] / old[host] if old[host] > 0 else 0.0
            rs = np.array([s[1] * scale for s in spares])
        safety[host] = [(s[0], float(r)) for s, r in zip(spares, rs)]
    out = atlas.with_radii(new, safety)
    out.info["refreshed"] = out.info.get("refreshed", 0) + 1
    return out


class AtlasSampler:
    """Outer-run sampler drawing uniform proposals from an atlas.

    Proposals below the constraint are rejected. When the rejection ratio
    over the last ``window`` proposals exceeds ``threshold`` the atlas radii
    are refreshed against the current constraint via
    ``radius_factory(log_star)``. If the center itself has dropped below the
    constraint, refreshing stops and plain rejection continues on the last
    atlas (which still covers the region).
    """

    def __init__(self, atlas: DifferentialAtlas, radius_factory: Callable[[float], object],
                 mode: str = REFRESH_FULL, stride: int = INTERPOLATION_STRIDE,
                 window: int = REFRESH_WINDOW, threshold: float = REFRESH_THRESHOLD,
                 max_proposals: int = 2_000_000, use_spares: bool = True):
        self.atlas = atlas
        self.radius_factory = radius_factory
        self.mode = mode
        self.stride = stride
        self.window = deque(maxlen=window)
        self.threshold = threshold
        self.max_proposals = max_proposals
        self.usage: Optional[dict] = {} if use_spares else None
        self.refreshes = 0
        self.refresh_enabled = True
        self.proposals = 0

    def _maybe_refresh(self, log_star):
        w = self.window
        if not self.refresh_enabled or len(w) < w.maxlen:
            return
        if (w.maxlen - sum(w)) / w.maxlen <= self.threshold:
            return
        try:
            self.atlas = refresh_radii(self.atlas, self.radius_factory(log_star), self.mode, self.stride)
            self.refreshes += 1
        except CenterBelowConstraintError:
            log.info("atlas center fell below the constraint; refreshing disabled")
            self.refresh_enabled = False
        w.clear()

    def draw(self, target, log_star, rng, live=None, worst=None):
        for _ in range(self.max_proposals):
            theta = draw_uniform_point(self.atlas, rng, self.usage)
            self.proposals += 1
            value = target(theta)
            ok = value >= log_star
            self.window.append(1 if ok else 0)
            if ok:
                return theta, value
            self._maybe_refresh(log_star)
        raise SamplerExhaustedError(f"no atlas proposal above the constraint in {self.max_proposals} tries")


def segment_atlas(radius_fn, center=None, basis=None) -> DifferentialAtlas:
    """Exact atlas for m = 1, where the "sphere" is just the two signs.

    The region is the segment [-R(-1), R(+1)]; each half gets dS = 1.
    """
    E = np.array([[1.0], [-1.0]])
    radii = _radii_of(radius_fn, E)
    if center is None:
        center = np.zeros(1 if basis is None else np.asarray(basis).shape[0])
    info = {"iterations": 2, "termination_reason": "exact", "random_evaluations": 2}
    return DifferentialAtlas(
        E, radii, np.zeros(2), np.asarray(center, dtype=float), 2,
        None if basis is None else np.asarray(basis, dtype=float), {}, info,
    )
