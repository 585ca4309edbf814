"""Acceptance criteria 1-9, each checked at its stated tolerance.

Every test records one PASS/FAIL line; conftest.py prints them in the
terminal summary.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from innerns.dirichlet import CountTable, dirichlet_moments, log_simplex_volume
from innerns.inner import build_atlas
from innerns.ns import NSConfig
from innerns.numerics import OrderStats, expected_w_max, std_w_max
from innerns.oracle import GridSpec, ellipse_pyramid_sum, gaussian_2d, grid_integrate
from innerns.pipeline import BoxRequest, DirichletRequest, run_box, run_dirichlet, run_inner_volume


@pytest.fixture
def record(record_property):
    def _record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        record_property("acceptance", line)
        print(line)
        assert ok, line

    return _record


def test_criterion_1_grid_oracle(record):
    t0 = time.perf_counter()
    v = grid_integrate(gaussian_2d, GridSpec((-5, -5), (5, 5), (20, 20)))
    dt = time.perf_counter() - t0
    record(1, abs(v - 0.9994) <= 5e-4 and dt < 1.0, f"grid integral {v:.7f} (target 0.9994 +/- 5e-4), {dt:.3f} s")


def test_criterion_2_ns_box_gaussian(record):
    t0 = time.perf_counter()
    zs = [math.exp(run_box(BoxRequest(n_objects=500, seed=s))[0].log_Z) for s in range(9)]
    dt = time.perf_counter() - t0
    z = float(np.median(zs))
    record(2, abs(z - 0.9993) <= 0.05 and dt < 30, f"median Z {z:.4f} over 9 seeds (target 0.9993 +/- 0.05), {dt:.1f} s")


def test_criterion_3_pyramid_sectors(record):
    coarse = ellipse_pyramid_sum(0.041, 16)
    fine = ellipse_pyramid_sum(0.041, 10_000)
    ok_coarse = abs(coarse - 8.151) <= 0.005
    ok_fine = abs(fine - 8.162) <= 0.005
    record(3, ok_coarse and ok_fine,
           f"16 sectors {coarse:.5f} (target 8.151 +/- 0.005: {'ok' if ok_coarse else 'miss'}), "
           f"1e4 sectors {fine:.5f} (target 8.162 +/- 0.005: {'ok' if ok_fine else 'miss'})")


def test_criterion_4_simplex_volume(record):
    parts, ok = [], True
    for M in (3, 4, 5):
        t0 = time.perf_counter()
        logs = [run_inner_volume(M, inner_objects=200, seed=s).log_V_star for s in range(5)]
        dt = (time.perf_counter() - t0) / 5
        err = float(np.median(logs)) - log_simplex_volume(M)
        ok &= abs(err) <= 0.1 and dt < 60
        parts.append(f"M={M} error {err:+.4f} ({dt:.1f} s/run)")
    record(4, ok, "; ".join(parts) + " (tolerance 0.1)")


def test_criterion_5_dirichlet_moments(record):
    counts = (5, 3, 2)
    mean, var = dirichlet_moments(counts, 0)
    runs = [run_dirichlet(DirichletRequest(CountTable(counts), "t1", inner_objects=200, seed=s)).moments
            for s in range(5)]
    m1 = float(np.median([r.M1 for r in runs]))
    v = float(np.median([r.variance for r in runs]))
    ok = abs(m1 - mean) <= 0.02 and abs(v - var) <= 0.01
    record(5, ok, f"median M1 {m1:.4f} (target {mean} +/- 0.02), median variance {v:.5f} "
                  f"(target {var:.6f} +/- 0.01)")


class GaussianContourRadius:
    """Distance from the origin to the unit contour of an axis-aligned Gaussian."""

    def __init__(self, sigmas):
        self.sigmas = np.asarray(sigmas, dtype=float)

    def many(self, E):
        return 1.0 / np.sqrt(np.sum((np.atleast_2d(E) / self.sigmas) ** 2, axis=1))

    def __call__(self, e):
        return float(self.many(e)[0])


def test_criterion_6_walk_acceptance(record):
    radius = GaussianContourRadius(np.linspace(0.5, 2.0, 20))
    atlas = build_atlas(radius, 20, NSConfig(100, rng_seed=0))
    frac = atlas.info["walk_acceptance"]
    n = atlas.info["walk_accepted"] + atlas.info["walk_rejected"]
    record(6, 0.5 <= frac <= 0.8, f"long-run walk acceptance {frac:.4f} over {n} proposals (target [0.5, 0.8])")


def test_criterion_7_order_statistics(record):
    rng = np.random.default_rng(2024)
    draws = 100_000
    parts, ok = [], True
    for N in (1, 5, 50):
        w = rng.random((draws, N)).max(axis=1)
        s = OrderStats(N)
        sd = w.std(ddof=1)
        mu4 = np.mean((w - w.mean()) ** 4)
        se_mean = sd / math.sqrt(draws)
        se_sd = math.sqrt(max(mu4 - sd**4, 0.0) / (4 * sd**2 * draws))
        z_mean = (w.mean() - expected_w_max(s)) / se_mean
        z_sd = (sd - std_w_max(s)) / se_sd
        ok &= abs(z_mean) < 4 and abs(z_sd) < 4
        parts.append(f"N={N} z_mean {z_mean:+.2f} z_std {z_sd:+.2f}")
    record(7, ok, "; ".join(parts) + " (limit 4 SE)")


CLI_RUNS = [
    ["integrate", "--objects", "100", "--seed", "3"],
    ["oracle-grid", "--sectors", "16"],
    ["dirichlet", "--counts", "{counts}", "--objects", "40", "--inner-objects", "60", "--seed", "3"],
    ["inner-volume", "--dim", "4", "--inner-objects", "80", "--seed", "3"],
    ["evidence-compare", "--models", "{models}", "--objects", "50", "--seed", "3"],
]


def test_criterion_8_determinism(record, tmp_path):
    counts = tmp_path / "c.csv"
    counts.write_text("5,3\n2,4\n")
    models = tmp_path / "m.json"
    models.write_text('{"models": [{"log_integrand": "0", "lower": [0], "upper": [1]},'
                      ' {"counts": [3, 2]}]}')
    same = []
    for args in CLI_RUNS:
        args = [a.format(counts=counts, models=models) for a in args]
        outs = []
        for _ in range(2):
            proc = subprocess.run([sys.executable, "-m", "innerns.cli", *args], capture_output=True)
            assert proc.returncode == 0, proc.stderr.decode()
            outs.append(proc.stdout)
        same.append((args[0], outs[0] == outs[1]))
    bad = [c for c, s in same if not s]
    record(8, not bad, f"{len(same)} commands byte-identical" if not bad else f"differ: {', '.join(bad)}")


INVARIANT_SUITES = ["test_numerics.py", "test_ns.py", "test_sphere.py", "test_inner.py",
                    "test_dirichlet.py", "test_moments.py", "test_oracle.py"]


def test_criterion_9_invariant_suites(record):
    here = Path(__file__).parent
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *[str(here / f) for f in INVARIANT_SUITES]],
        capture_output=True, text=True,
    )
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()
    record(9, proc.returncode == 0, f"module invariant suites: {tail}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
