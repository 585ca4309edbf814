import math

import numpy as np
import pytest
from scipy import stats

from innerns.dirichlet import (
    BoundaryRadius,
    LikelihoodRadius,
    log_dirichlet_posterior,
    log_simplex_volume,
    simplex_chart,
)
from innerns.errors import ConstraintInversionError
from innerns.inner import (
    REFRESH_FULL,
    REFRESH_INTERPOLATED,
    AtlasSampler,
    DifferentialAtlas,
    _draw,
    build_atlas,
    draw_uniform_point,
    log_dS,
    radius_from_volume,
    refresh_radii,
    segment_atlas,
    store_spare,
)
from innerns.ns import NSConfig
from innerns.numerics import NEG_INF, log_add, log_sphere_surface_area, log_sum
from innerns.oracle import ELLIPSE_NORM, ellipse_area_exact


class ConstantRadius:
    def __init__(self, r):
        self.r = r

    def __call__(self, e):
        return self.r

    def many(self, E):
        return np.full(len(E), self.r)


class EllipseRadius:
    """Contour radius of exp(-(x^2 + xy + y^2)/1.5) / (2 pi sqrt .75) at a fixed level."""

    def __init__(self, level, scale=1.0):
        self.k = 1.5 * math.log(ELLIPSE_NORM / level)
        self.scale = scale

    def many(self, E):
        E = np.atleast_2d(E)
        q = E[:, 0] ** 2 + E[:, 0] * E[:, 1] + E[:, 1] ** 2
        return self.scale * np.sqrt(self.k / q)

    def __call__(self, e):
        return float(self.many(e)[0])


def disc_atlas(R=1.0, N=50, seed=0):
    return build_atlas(ConstantRadius(R), 2, NSConfig(N, rng_seed=seed))


def test_log_dS_examples():
    assert log_dS(1, 1, 2) == pytest.approx(math.log(math.pi))
    assert log_dS(2, 1, 2) == pytest.approx(math.log(math.pi / 2))
    N, m = 7, 3
    total = log_sum([log_dS(q, N, m) for q in range(1, 2000)])
    assert total == pytest.approx(log_sphere_surface_area(m), abs=1e-9)


def test_disc_atlas_area_and_radii():
    atlas = disc_atlas(2.0, N=50)
    assert np.allclose(atlas.radii, 2.0, atol=1e-12)
    assert math.exp(atlas.log_V_star) == pytest.approx(math.pi * 4, rel=0.02)


def test_atlas_record_invariants():
    atlas = build_atlas(EllipseRadius(0.041), 2, NSConfig(100, rng_seed=1))
    m = atlas.m
    assert np.allclose(atlas.log_dV, m * np.log(atlas.radii) - math.log(m) + atlas.log_dS, atol=1e-12)
    assert np.all(np.diff(atlas.radii) >= 0)  # rising constraint
    fold = NEG_INF
    for v in atlas.log_dV:
        fold = log_add(fold, v)
    assert fold == pytest.approx(atlas.log_V_star, abs=1e-9)
    assert np.exp(atlas.log_dV - atlas.log_V_star).sum() == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(np.linalg.norm(atlas.directions, axis=1), 1.0, atol=1e-12)
    d = atlas.differentials[3]
    assert d.index_q == 4 and d.radius == atlas.radii[3]


def test_ellipse_atlas_volume():
    vols = [math.exp(build_atlas(EllipseRadius(0.041), 2, NSConfig(200, rng_seed=s)).log_V_star) for s in range(3)]
    assert abs(np.median(vols) - 8.162) < 0.15
    assert ellipse_area_exact(0.041) == pytest.approx(8.1629, abs=1e-4)


def test_simplex_atlas_volume_M4():
    ch = simplex_chart(4)
    atlas = build_atlas(BoundaryRadius(ch), 3, NSConfig(200, rng_seed=0), center=ch.center, basis=ch.W)
    assert abs(atlas.log_V_star - log_simplex_volume(4)) < 0.1


def test_spares_sit_above_the_previous_constraint():
    atlas = build_atlas(EllipseRadius(0.041), 2, NSConfig(50, rng_seed=2))
    assert atlas.safety
    for host, spares in atlas.safety.items():
        assert len(spares) <= 4
        prev = atlas.radii[host - 1] if host else 0.0
        for e, r in spares:
            assert r >= prev
            assert abs(np.linalg.norm(e) - 1) < 1e-12


def _one_differential(R=1.0):
    return DifferentialAtlas(np.array([[1.0, 0.0]]), np.array([R]), np.array([math.log(math.pi)]),
                             np.zeros(2), 1)


def test_single_pyramid_radius_density():
    atlas = _one_differential()
    rng = np.random.default_rng(0)
    rho = np.array([_draw(atlas, rng)[2] for _ in range(100_000)])
    assert abs(rho.mean() - 2 / 3) < 0.01
    assert np.all(rho <= 1.0)


def test_radius_from_volume_edges():
    lds = math.log(math.pi)
    full = math.exp(2 * math.log(1.7) - math.log(2) + lds)
    assert radius_from_volume(full, lds, 2) == pytest.approx(1.7, abs=1e-12)
    assert radius_from_volume(0.0, lds, 2) == 0.0
    assert radius_from_volume(1e-30, lds, 2) < 1e-14


def test_disc_atlas_draws_are_uniform():
    atlas = disc_atlas(1.5, N=30, seed=4)
    rng = np.random.default_rng(5)
    P = np.array([draw_uniform_point(atlas, rng) for _ in range(100_000)])
    r2 = np.sum(P**2, axis=1)
    assert np.all(r2 <= 1.5**2 * (1 + 1e-12))
    assert stats.kstest(r2 / 1.5**2, "uniform").pvalue > 0.01


def test_draws_stay_inside_the_constraint():
    f = EllipseRadius(0.041)
    atlas = build_atlas(f, 2, NSConfig(100, rng_seed=6))
    rng = np.random.default_rng(7)
    for _ in range(2000):
        p, q, rho = _draw(atlas, rng)
        assert rho <= atlas.radii[q]
        # inside the true ellipse
        assert ELLIPSE_NORM * math.exp(-(p[0] ** 2 + p[0] * p[1] + p[1] ** 2) / 1.5) >= 0.041 * (1 - 1e-9)


def test_refresh_identity_and_scaling():
    f = EllipseRadius(0.041)
    atlas = build_atlas(f, 2, NSConfig(60, rng_seed=8))
    same = refresh_radii(atlas, f)
    assert np.allclose(same.radii, atlas.radii, atol=1e-12)
    half = refresh_radii(atlas, EllipseRadius(0.041, 0.5))
    assert atlas.log_V_star - half.log_V_star == pytest.approx(2 * math.log(2), abs=1e-9)
    a = refresh_radii(atlas, EllipseRadius(0.041, 0.5), REFRESH_INTERPOLATED, stride=1)
    assert np.array_equal(a.radii, half.radii)
    b = refresh_radii(atlas, EllipseRadius(0.041, 0.5), REFRESH_INTERPOLATED, stride=10)
    assert abs(b.log_V_star - half.log_V_star) < 0.05
    assert half.info["refreshed"] == 1


def test_refresh_rejects_growing_radii():
    atlas = disc_atlas(1.0, N=10)
    with pytest.raises(ConstraintInversionError):
        refresh_radii(atlas, ConstantRadius(1.1))


@pytest.mark.parametrize("m", [2, 3, 5, 10])
def test_atlas_volume_homogeneity(m):
    base = build_atlas(ConstantRadius(1.0), m, NSConfig(100, rng_seed=m))
    scaled = build_atlas(ConstantRadius(1.3), m, NSConfig(100, rng_seed=m))
    assert math.exp(scaled.log_V_star - base.log_V_star) == pytest.approx(1.3**m, rel=0.01)


def test_store_spare_nearest_and_eviction():
    atlas = DifferentialAtlas(np.eye(2)[[0, 1, 0]], np.array([1.0, 2.0, 3.0]), np.zeros(3), np.zeros(2), 3)
    store_spare(atlas, (np.array([0.0, 1.0]), 1.9))
    assert list(atlas.safety) == [1]
    store_spare(atlas, (np.array([0.0, 1.0]), 1.5))  # tie between 1.0 and 2.0 goes to the lower index
    assert len(atlas.safety[0]) == 1
    for r in (2.4, 2.3, 2.2):
        store_spare(atlas, (np.array([1.0, 0.0]), r))
    assert [s[1] for s in atlas.safety[1]] == [1.9, 2.4, 2.3, 2.2]
    store_spare(atlas, (np.array([1.0, 0.0]), 2.1))
    assert [s[1] for s in atlas.safety[1]] == [1.9, 2.3, 2.2, 2.1]


def test_repeat_draw_switches_to_spare():
    atlas = DifferentialAtlas(np.array([[1.0, 0.0]]), np.array([1.0]), np.array([math.log(math.pi)]),
                              np.zeros(2), 1)
    spare_dir = np.array([0.0, 1.0])
    store_spare(atlas, (spare_dir, 0.8))
    usage = {}
    rng = np.random.default_rng(9)
    p1 = draw_uniform_point(atlas, rng, usage)
    p2 = draw_uniform_point(atlas, rng, usage)
    assert p1[1] == 0.0 and p1[0] > 0
    assert p2[0] == 0.0 and 0 < p2[1] <= 0.8


def test_segment_atlas_is_exact():
    ch = simplex_chart(2, (3, 7))
    atlas = segment_atlas(BoundaryRadius(ch), ch.center, ch.W)
    assert atlas.log_V_star == pytest.approx(log_simplex_volume(2), abs=1e-12)


def test_atlas_sampler_refreshes_under_pressure():
    counts = (5, 3, 2)
    ch = simplex_chart(3, counts)
    atlas = build_atlas(BoundaryRadius(ch), 2, NSConfig(50, rng_seed=10), center=ch.center, basis=ch.W)
    s = AtlasSampler(atlas, lambda ls: LikelihoodRadius(ch, counts, ls), REFRESH_FULL)

    def target(th):
        return float(log_dirichlet_posterior(th, counts))

    level = target(ch.center) - 0.2
    rng = np.random.default_rng(11)
    for _ in range(30):
        theta, v = s.draw(target, level, rng)
        assert v >= level
        assert abs(theta.sum() - 1) < 1e-12
    assert s.refreshes >= 1
    assert s.atlas.log_V_star < atlas.log_V_star
