import math

import numpy as np
import pytest
from scipy import integrate, stats

from innerns.errors import InputError
from innerns.oracle import (
    ELLIPSE_NORM,
    GridSpec,
    contour_radius,
    curve_integral,
    ellipse_area_exact,
    ellipse_pyramid_sum,
    gaussian_2d,
    grid_integrate,
    sorted_area_curve,
    write_curve_csv,
    write_radii_csv,
    sector_radii,
)

GRID = GridSpec((-5, -5), (5, 5), (20, 20))


def test_grid_spec_validation():
    assert GRID.dw == 0.25 and GRID.dim == 2
    with pytest.raises(InputError):
        GridSpec((0,) * 4, (1,) * 4, (2,) * 4)
    with pytest.raises(InputError):
        GridSpec((0,), (0,), (3,))
    with pytest.raises(InputError):
        GridSpec((0,), (1,), (0,))
    with pytest.raises(InputError):
        GridSpec((0, 0), (1,), (2, 2))


def test_grid_gaussian():
    assert grid_integrate(gaussian_2d, GRID) == pytest.approx(0.9994, abs=5e-4)


def test_true_gaussian_mass_on_box():
    # independent reference: bivariate normal CDF with correlation -0.7 (precision has +0.7)
    cov = np.linalg.inv([[1, 0.7], [0.7, 1]])
    mvn = stats.multivariate_normal([0, 0], cov)
    mass = mvn.cdf([5, 5]) - mvn.cdf([-5, 5]) - mvn.cdf([5, -5]) + mvn.cdf([-5, -5])
    assert mass == pytest.approx(0.9993, abs=5e-4)
    assert mvn.pdf([0.3, -0.2]) == pytest.approx(gaussian_2d(0.3, -0.2), rel=1e-12)


@pytest.mark.parametrize("cells", [(1, 1), (3, 7), (20, 20)])
def test_constant_integrand_is_exact(cells):
    spec = GridSpec((0, 0), (1, 1), cells)
    assert grid_integrate(lambda x, y: np.ones_like(x), spec) == pytest.approx(1.0, abs=1e-15)


def test_grid_refinement_monotone():
    prev = None
    changes = []
    for k in (10, 20, 40, 80, 160, 320):
        v = grid_integrate(gaussian_2d, GridSpec((-5, -5), (5, 5), (k, k)))
        if prev is not None:
            changes.append(abs(v - prev))
        prev = v
    assert all(b < a for a, b in zip(changes, changes[1:]))
    assert changes[-1] < 1e-6


def test_grid_3d_against_quadrature():
    spec = GridSpec((0, 0, 0), (1, 2, 1), (30, 30, 30))
    f = lambda x, y, z: np.exp(-x) * y * (1 + z**2)  # noqa: E731
    ref = integrate.tplquad(lambda z, y, x: math.exp(-x) * y * (1 + z**2), 0, 1, 0, 2, 0, 1)[0]
    assert grid_integrate(f, spec) == pytest.approx(ref, rel=1e-3)


def test_sorted_area_curve():
    curve = sorted_area_curve(gaussian_2d, GRID)
    assert len(curve) == 400
    w = np.array([c[0] for c in curve])
    g = np.array([c[1] for c in curve])
    assert w[-1] == pytest.approx(100.0) and w[0] == pytest.approx(0.25)
    assert np.all(np.diff(g) <= 0)
    assert curve_integral(curve) == pytest.approx(grid_integrate(gaussian_2d, GRID), abs=1e-12)
    flat = sorted_area_curve(lambda x, y: np.full_like(x, 2.5), GridSpec((0, 0), (2, 2), (4, 4)))
    assert all(h == 2.5 for _, h in flat)


def test_pyramid_sum_circle_is_exact():
    # isotropic Gaussian with peak 1 at the level exp(-1/2) has a unit-circle contour
    lik = lambda x, y: math.exp(-(x * x + y * y) / 2)  # noqa: E731
    for n in (1, 4, 16, 1000):
        assert ellipse_pyramid_sum(math.exp(-0.5), n, lik) == pytest.approx(math.pi, abs=1e-10)


def test_pyramid_sum_converges_to_exact_area():
    exact = ellipse_area_exact(0.041)
    assert ellipse_pyramid_sum(0.041, 10_000) == pytest.approx(exact, abs=1e-9)
    # sector sums of a smooth periodic contour converge spectrally along n = 8, 16, 32, 64
    errs = [abs(ellipse_pyramid_sum(0.041, n) - exact) for n in (8, 16, 32, 64)]
    assert all(b < a / 10 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-10


def test_contour_radius_residual():
    for phi in np.linspace(0, 2 * math.pi, 13):
        r = contour_radius(lambda x, y: ELLIPSE_NORM * math.exp(-(x * x + x * y + y * y) / 1.5), 0.041, phi)
        x, y = r * math.cos(phi), r * math.sin(phi)
        assert ELLIPSE_NORM * math.exp(-(x * x + x * y + y * y) / 1.5) == pytest.approx(0.041, rel=1e-10)
    with pytest.raises(InputError):
        contour_radius(lambda x, y: 0.1, 0.5, 0.0)


def test_csv_exports(tmp_path):
    p = tmp_path / "curve.csv"
    write_curve_csv(p, sorted_area_curve(gaussian_2d, GridSpec((-5, -5), (5, 5), (4, 4))))
    lines = p.read_text().splitlines()
    assert lines[0] == "w,g" and len(lines) == 17
    q = tmp_path / "radii.csv"
    write_radii_csv(q, sector_radii(0.041, 8))
    assert q.read_text().splitlines()[0] == "i,phi,R"
