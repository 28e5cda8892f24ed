import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from singpow import laplace_svd as ls
from singpow import numerics as nm
from singpow import targets as tg
from singpow.errors import ParameterError

B10 = ls.Band(1, 10)
GAMMAS = (10.0, 50.0, 250.0)


def test_constant_density_closed_form():
    one = tg.Density(lambda mu: np.ones_like(mu), "one")
    x = np.linspace(0.01, 0.99, 50)
    got = tg.eval_f(one, B10, x)
    want = (x**10 - x) / np.log(x)
    np.testing.assert_allclose(got, want, rtol=1e-14, atol=0)


def test_constant_density_at_one():
    one = tg.Density(lambda mu: np.ones_like(mu), "one")
    assert tg.eval_f(one, B10, 1.0) == pytest.approx(9.0, rel=1e-15)


def test_point_mass_value():
    assert tg.eval_f(tg.PointMass(2.0), B10, 0.5) == 0.25


def test_derivative_point_mass_value():
    got = tg.eval_f(tg.DerivativePointMass(1.0, 1), B10, math.exp(-1))
    assert got == pytest.approx(-math.exp(-1), rel=1e-15)


@settings(max_examples=50, deadline=None)
@given(c=st.floats(1, 10), x=st.floats(0, 1))
def test_point_mass_is_plain_power(c, x):
    # a direct power (no quadrature): within one ulp of the libm result
    want = x**c
    assert abs(tg.eval_f(tg.PointMass(c), B10, x) - want) <= np.spacing(want)


def test_value_at_zero_is_zero():
    for target in tg.TARGET_IDS:
        assert tg.eval_f(tg.named_measure(target, B10), B10, 0.0) == 0


def test_sigma1_panel_refinement():
    m = tg.named_measure("sigma1", B10)
    a, b = tg.eval_f(m, B10, 0.5, panels=64), tg.eval_f(m, B10, 0.5, panels=128)
    assert abs(a - b) <= 1e-14 * abs(b)


@pytest.mark.parametrize("gamma", GAMMAS)
@pytest.mark.parametrize("target", list(tg.DENSITIES))
def test_panel_refinement_on_grid(target, gamma):
    band = ls.Band(1, gamma)
    m = tg.named_measure(target, band)
    x = np.linspace(0, 1, 100)
    f64 = tg.eval_f(m, band, x, panels=64)
    f128 = tg.eval_f(m, band, x, panels=128)
    scale = tg.eval_f(tg.Density(lambda mu: np.abs(m.func(mu)), "abs"), band, x, panels=128)
    assert (np.abs(f64 - f128) <= 1e-14 * np.maximum(np.abs(f128), scale)).all()


def test_converged_density_matches_fine_rule():
    band = ls.Band(1, 250)
    m = tg.named_measure("sigma2", band)
    x = np.linspace(0, 1, 33)
    l1 = tg.eval_f(tg.Density(lambda mu: np.abs(m.func(mu)), "abs"), band, x, panels=256)
    diff = np.abs(tg.eval_f(m, band, x) - tg.eval_f(m, band, x, panels=4096))
    assert (diff <= 1e-14 * l1).all()


def test_complex_argument_uses_principal_branch():
    z = 0.5 + 0.2j
    assert tg.eval_f(tg.PointMass(2.5), B10, z) == pytest.approx(np.exp(2.5 * np.log(z)), rel=1e-15)
    one = tg.Density(lambda mu: np.ones_like(mu), "one")
    want = (np.exp(10 * np.log(z)) - z) / np.log(z)
    assert tg.eval_f(one, B10, z) == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("x", [-0.1, 1.5, np.nan])
def test_real_points_outside_unit_interval_rejected(x):
    with pytest.raises(ParameterError):
        tg.eval_f(tg.PointMass(2.0), B10, x)


def test_named_measure_validation():
    with pytest.raises(ParameterError):
        tg.named_measure("sigma7", B10)
    with pytest.raises(ParameterError):
        tg.named_measure("sigma5", B10, c=15.0)
    with pytest.raises(ParameterError):
        tg.DerivativePointMass(2.0, 0)
    m = tg.named_measure("sigma5", B10, c=15.0, allow_outside=True)
    assert m.outside_band
    assert tg.named_measure("sigma6", B10).c == 5.5


def test_total_variation_sigma1():
    assert tg.total_variation(tg.named_measure("sigma1", B10), B10) == pytest.approx(2.302585092994046, rel=1e-14)


def test_total_variation_sigma3():
    want = (math.exp(-10) - math.exp(-100)) / 10
    assert tg.total_variation(tg.named_measure("sigma3", B10), B10) == pytest.approx(want, rel=1e-13)


def test_total_variation_sigma2_sign_changes():
    # |sin 12 mu| integrated piece by piece between consecutive zeros k pi / 12
    cuts = [1.0] + [k * math.pi / 12 for k in range(4, 39)] + [10.0]
    want = sum(abs(math.cos(12 * lo) - math.cos(12 * hi)) / 12 for lo, hi in zip(cuts[:-1], cuts[1:]))
    assert tg.total_variation(tg.named_measure("sigma2", B10), B10) == pytest.approx(want, rel=1e-13)


def test_total_variation_sigma4_sign_changes():
    F = lambda mu: math.sin(mu) - mu * math.cos(mu)  # antiderivative of mu sin mu
    cuts = [1.0, math.pi, 2 * math.pi, 3 * math.pi, 10.0]
    want = sum(abs(F(hi) - F(lo)) for lo, hi in zip(cuts[:-1], cuts[1:]))
    assert tg.total_variation(tg.named_measure("sigma4", B10), B10) == pytest.approx(want, rel=1e-13)


def test_total_variation_point_masses():
    assert tg.total_variation(tg.PointMass(3.0)) == 1
    assert tg.total_variation(tg.DerivativePointMass(3.0, 4)) == 1


@pytest.fixture(scope="module")
def table(small_svd):
    return tg.derivative_table(small_svd, 3, grid_points=40)


def test_first_derivative_against_finite_difference(small_svd, table):
    # central differences in extended precision on the same grid
    h = "1e-20"
    P = table.grid_points
    with nm.precision(60):
        hh = nm.big(h)
        fd = np.zeros(small_svd.n_max + 1)
        for p in range(P + 1):
            t = nm.big(repr(p / P))
            lo, hi = max(t - hh, nm.big(0)), min(t + hh, nm.big(1))
            up = small_svd.u_matrix([hi], range(small_svd.n_max + 1))[0]
            dn = small_svd.u_matrix([lo], range(small_svd.n_max + 1))[0]
            d = np.abs(nm.to_float((up - dn) / (hi - lo)))
            fd = np.maximum(fd, d / small_svd.band.width)
    np.testing.assert_allclose(table.sups[1], fd, rtol=1e-10)


def test_bound_nondecreasing_in_k(small_svd, table):
    for n in range(1, small_svd.n_max + 2):
        vals = [table.bound(n, k) for k in range(table.kmax + 1)]
        assert all(x <= y for x, y in zip(vals, vals[1:]))


def test_k_zero_is_sup_norm(small_svd):
    n = 5
    P = 50 * n
    grid = [repr(p / P) for p in range(P + 1)]
    direct = np.abs(nm.to_float(small_svd.u_matrix(grid, range(n)))).max()
    assert tg.ck_norm_bound(small_svd, n, 0) == direct
    u_sup, _ = ls.sup_norms(small_svd, range(n))
    assert direct == pytest.approx(u_sup.max(), rel=1e-2)


def test_table_matches_per_n_grid_when_grids_coincide(small_svd):
    n = small_svd.n_max + 1
    t = tg.derivative_table(small_svd, 2, grid_points=50 * n)
    for k in range(3):
        assert t.bound(n, k) == pytest.approx(tg.ck_norm_bound(small_svd, n, k), rel=1e-15)


def test_bound_argument_checks(table):
    with pytest.raises(ParameterError):
        table.bound(0, 1)
    with pytest.raises(ParameterError):
        table.bound(1, table.kmax + 1)
