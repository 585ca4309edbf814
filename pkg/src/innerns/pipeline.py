"""End-to-end runs: Dirichlet posterior moments, simplex volume, box integrals.

Each run draws all randomness from one generator seeded by the request,
so equal requests give equal results.
"""

from __future__ import annotations

import csv
import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dirichlet import (
    CENTER_PAPER,
    BoundaryRadius,
    CountTable,
    LikelihoodRadius,
    log_dirichlet_posterior,
    log_simplex_volume,
    simplex_chart,
    uniform_simplex,
)
from .errors import InnerNSError, InputError, NumericError
from .expr import FunctionalExpr, parse_functional
from .inner import REFRESH_FULL, AtlasSampler, DifferentialAtlas, build_atlas, segment_atlas
from .moments import MomentReport, estimate_moments, model_posterior
from .ns import BoxRejectionSampler, NSConfig, NSObject, NSRunResult, run_nested_sampling
from .numerics import NEG_INF

log = logging.getLogger(__name__)

DEFAULT_OBJECTS = 100
DEFAULT_INNER_OBJECTS = 1000
WARMUP_FACTOR = 10

GAUSSIAN_LOG_INTEGRAND = "log(sqrt(1 - 0.7^2)/(2*pi)) - (t1^2 + 1.4*t1*t2 + t2^2)/2"
GAUSSIAN_INTEGRAND = "sqrt(1 - 0.7^2)/(2*pi) * exp(-(t1^2 + 1.4*t1*t2 + t2^2)/2)"


@contextmanager
def stage(name: str):
    """Prefix errors raised inside with the pipeline stage that raised them."""
    try:
        yield
    except InnerNSError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
            exc.args = (f"[{name}] {exc.args[0] if exc.args else ''}",) + exc.args[1:]
        raise


@dataclass(frozen=True)
class DirichletRequest:
    counts: CountTable
    functional: str = "t1"
    n_objects: int = DEFAULT_OBJECTS
    inner_objects: int = DEFAULT_INNER_OBJECTS
    seed: int = 0
    termination_factor: Optional[float] = None
    max_iterations: Optional[int] = None
    center: str = CENTER_PAPER
    warmup_factor: int = WARMUP_FACTOR
    refresh_mode: str = REFRESH_FULL


@dataclass
class DirichletRun:
    result: NSRunResult
    atlas: DifferentialAtlas
    moments: MomentReport
    functional: FunctionalExpr
    log_L0: float
    sampler: AtlasSampler


def _atlas_for(radius_fn, chart, inner_objects: int, seed: int, rng) -> DifferentialAtlas:
    m = chart.M - 1
    if m == 1:
        return segment_atlas(radius_fn, chart.center, chart.W)
    cfg = NSConfig(inner_objects, rng_seed=seed)
    return build_atlas(radius_fn, m, cfg, center=chart.center, basis=chart.W, rng=rng)


def run_dirichlet(req: DirichletRequest) -> DirichletRun:
    """Warm-up, atlas at L*_0, NS proper with atlas proposals, then moments.

    The integrand is the Dirichlet density with respect to area in the
    simplex plane (the usual density divided by sqrt(M)), so log_Z estimates
    the log posterior mass, which is 0 for a proper posterior.
    """
    ct = req.counts
    M = ct.M
    with stage("parse"):
        u = parse_functional(req.functional, M)
    if req.n_objects < 2:
        raise InputError("--objects must be >= 2")
    rng = np.random.default_rng(req.seed)
    half_log_M = 0.5 * math.log(M)

    def target(theta):
        return float(log_dirichlet_posterior(theta, ct)) - half_log_M

    with stage("warm-up"):
        pts = uniform_simplex(req.warmup_factor * req.n_objects, M, rng)
        vals = log_dirichlet_posterior(pts, ct) - half_log_M
        i0 = int(np.argmin(vals))
        log_L0 = float(vals[i0])
        chart = simplex_chart(M, ct, kind=req.center)

    with stage("atlas"):
        radius_fn = LikelihoodRadius(chart, ct, log_L0 + half_log_M)
        atlas = _atlas_for(radius_fn, chart, req.inner_objects, req.seed, rng)
        log.info("atlas: Q=%d log V*=%.6f", atlas.Q, atlas.log_V_star)

    def radius_factory(log_star):
        return LikelihoodRadius(chart, ct, log_star + half_log_M)

    sampler = AtlasSampler(atlas, radius_factory, mode=req.refresh_mode)

    with stage("initial-objects"):
        initial = [NSObject(pts[i0].copy(), log_L0)]
        for _ in range(req.n_objects - 1):
            theta, value = sampler.draw(target, log_L0, rng)
            initial.append(NSObject(theta, value))

    with stage("nested-sampling"):
        cfg = NSConfig(
            req.n_objects,
            log_W=atlas.log_V_star,
            termination_factor=req.termination_factor,
            max_iterations=req.max_iterations,
            rng_seed=req.seed,
        )
        result = run_nested_sampling(target, sampler, cfg, initial=initial, rng=rng)

    with stage("moments"):
        mom = estimate_moments(result, u, seed=req.seed)
    return DirichletRun(result, atlas, mom, u, log_L0, sampler)


def dirichlet_report(run: DirichletRun) -> dict:
    res, atlas = run.result, run.atlas
    return {
        "functional": run.functional.source,
        "moments": run.moments.to_dict(),
        "bounds_kind": "mean +/- one posterior standard deviation",
        "log_Z": res.log_Z,
        "termination_reason": res.termination_reason,
        "T": res.iterations,
        "Q": atlas.Q,
        "log_V_star": atlas.log_V_star,
        "log_L0": run.log_L0,
        "atlas_refreshes": run.sampler.refreshes,
        "proposals": run.sampler.proposals,
        "center": [float(x) for x in atlas.center],
    }


def run_inner_volume(M: int, inner_objects: int = 200, seed: int = 0, counts: Optional[CountTable] = None,
                     center: str = CENTER_PAPER) -> DifferentialAtlas:
    """Atlas over the bare simplex; its log V* estimates 0.5 log M - log Gamma(M)."""
    if M < 2:
        raise InputError("simplex dimension M must be >= 2")
    rng = np.random.default_rng(seed)
    chart = simplex_chart(M, counts, kind=center)
    with stage("atlas"):
        return _atlas_for(BoundaryRadius(chart), chart, inner_objects, seed, rng)


def inner_volume_report(atlas: DifferentialAtlas, M: int) -> dict:
    exact = log_simplex_volume(M)
    info = atlas.info
    return {
        "M": M,
        "log_Z": atlas.log_V_star,
        "log_V_exact": exact,
        "log_V_error": atlas.log_V_star - exact,
        "Q": atlas.Q,
        "termination_reason": info.get("termination_reason"),
        "T": info.get("iterations"),
        "walk_acceptance": info.get("walk_acceptance"),
    }


@dataclass(frozen=True)
class BoxRequest:
    log_integrand: str = GAUSSIAN_LOG_INTEGRAND
    lower: tuple = (-5.0, -5.0)
    upper: tuple = (5.0, 5.0)
    n_objects: int = 500
    seed: int = 0
    termination_factor: Optional[float] = None
    max_iterations: Optional[int] = None
    known_log_max: Optional[float] = None


def run_box(req: BoxRequest) -> tuple[NSRunResult, FunctionalExpr]:
    """Integrate exp(log_integrand) over an axis-aligned box with rejection proposals."""
    k = len(req.lower)
    if len(req.upper) != k:
        raise InputError("lower and upper bounds differ in length")
    with stage("parse"):
        expr = parse_functional(req.log_integrand, k)

    def batch(pts):
        with np.errstate(all="ignore"):
            out = expr.evaluate(pts)
        return np.where(np.isnan(out), NEG_INF, out)

    try:
        sampler = BoxRejectionSampler(req.lower, req.upper, log_f_batch=batch)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    cfg = NSConfig(
        req.n_objects,
        log_W=sampler.log_volume,
        termination_factor=req.termination_factor,
        max_iterations=req.max_iterations,
        rng_seed=req.seed,
        known_log_max_f=req.known_log_max,
    )

    def target(theta):
        return float(batch(np.asarray(theta)[None, :])[0])

    with stage("nested-sampling"):
        return run_nested_sampling(target, sampler, cfg), expr


def box_report(result: NSRunResult) -> dict:
    return {
        "log_Z": result.log_Z,
        "Z": math.exp(result.log_Z),
        "termination_reason": result.termination_reason,
        "T": result.iterations,
        "log_W": result.log_W,
    }


def compare_models(models: Sequence[dict], n_objects: int, inner_objects: int, seed: int,
                   termination_factor: Optional[float] = None) -> dict:
    """Evidence for each model spec, then posterior model probabilities.

    A model is either a box integral (``log_integrand``, ``lower``,
    ``upper``) or a Dirichlet run (``counts``). Failing models are reported
    and skipped; at least two must succeed.
    """
    if len(models) < 2:
        raise InputError("evidence comparison needs at least two models")
    entries, ok = [], []
    for i, spec in enumerate(models):
        name = str(spec.get("name", f"model{i + 1}"))
        entry = {"name": name}
        try:
            if "counts" in spec:
                ct = CountTable(tuple(spec["counts"]), spec.get("shape"))
                run = run_dirichlet(DirichletRequest(
                    ct, spec.get("functional", "t1"), n_objects, inner_objects, seed, termination_factor))
                entry.update(log_Z=run.result.log_Z, T=run.result.iterations)
            else:
                req = BoxRequest(
                    spec["log_integrand"], tuple(spec["lower"]), tuple(spec["upper"]),
                    n_objects, seed, termination_factor,
                )
                result, _ = run_box(req)
                entry.update(log_Z=result.log_Z, T=result.iterations)
            entry["log_prior"] = float(spec.get("log_prior", 0.0))
            ok.append(entry)
        except KeyError as exc:
            entry["error"] = {"code": "input", "detail": f"missing field {exc.args[0]!r}"}
        except InnerNSError as exc:
            entry["error"] = {"code": exc.code, "detail": str(exc)}
        entries.append(entry)
    if len(ok) < 2:
        raise NumericError(f"only {len(ok)} of {len(models)} models succeeded; need at least two")
    post = model_posterior([e["log_Z"] for e in ok], [e["log_prior"] for e in ok])
    for e, p in zip(ok, post):
        e["posterior"] = p
    return {"models": entries, "n_successful": len(ok)}


def write_weighted_values(path, result: NSRunResult, u: FunctionalExpr) -> None:
    """Raw (t, u, weight) points for an external histogram of u."""
    vals = u.evaluate(result.thetas, rows=[s.iteration for s in result.samples])
    w = result.weights
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "u", "weight"])
        for s, v, wi in zip(result.samples, vals, w):
            wr.writerow([s.iteration, repr(float(v)), repr(float(wi))])
