import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from singpow import laplace_svd as ls
from singpow import scheme as sc
from singpow import targets as tg
from singpow.errors import BranchError, DomainError, ParameterError

B10 = ls.Band(1, 10)


@pytest.fixture(scope="module")
def scheme10(workspace, system10):
    svd, n = system10
    return workspace.scheme(svd, n)


def test_affine_power_endpoints():
    np.testing.assert_array_equal(sc.powers_from_nodes(B10, [0.0, 1.0]), [1.0, 10.0])


def test_collocation_endpoint():
    assert sc.collocation_from_nodes(B10, [0.0])[0] == 1.0


def test_n_near_28_for_gamma_10(scheme10):
    assert 24 <= scheme10.size <= 32
    assert scheme10.size == scheme10.n
    assert scheme10.alpha_n <= scheme10.eps_target < scheme10.alphas[scheme10.n - 1]


def test_scheme_invariants(scheme10):
    t, x = scheme10.powers, scheme10.collocation
    assert (np.diff(t) > 0).all() and t[0] >= 1 and t[-1] <= 10
    assert (np.diff(x) < 0).all() and x[0] < 1 and x[-1] > 0


def test_vandermonde_row_at_one(scheme10):
    # collocation points lie strictly inside (0, 1), so check the row map directly
    x_one = sc._powers_of(np.array([1.0]), scheme10.powers)
    np.testing.assert_array_equal(x_one, np.ones((1, scheme10.size)))


def test_vandermonde_entries_and_monotone_columns(scheme10):
    V = sc.vandermonde(scheme10)
    assert ((V > 0) & (V <= 1)).all()
    assert (np.diff(V, axis=1) <= 0).all()


def test_arc_zero_is_entrywise_real(scheme10):
    np.testing.assert_array_equal(sc.vandermonde(scheme10, sc.Arc(0.0)), sc.vandermonde(scheme10))


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(-1, 1))
def test_arc_fixes_endpoints(alpha):
    arc = sc.Arc(alpha)
    assert arc(0.0) == 0 and arc(1.0) == 1


def test_zero_power_convention():
    np.testing.assert_array_equal(sc._powers_of(np.array([0.0]), np.array([1.5, 2.0])), [[0.0, 0.0]])


def test_branch_cut_rejected():
    with pytest.raises(BranchError):
        sc._powers_of(np.array([-0.5 + 0j]), np.array([1.5]))


def test_in_span_refit(scheme10):
    t1 = scheme10.powers[0]
    res = sc.fit(scheme10, scheme10.collocation**t1)
    x = sc.error_grid(2000)
    assert np.abs(sc.evaluate(res, x) - x**t1).max() <= 1e-13


def test_zero_data_gives_zero_coefficients(scheme10):
    res = sc.fit(scheme10, np.zeros(scheme10.size))
    np.testing.assert_array_equal(res.coefficients, np.zeros(scheme10.size))
    assert res.residual == 0


def test_fit_shape_mismatch(scheme10):
    with pytest.raises(ParameterError):
        sc.fit(scheme10, np.zeros(scheme10.size + 1))


def test_evaluate_endpoints(scheme10):
    res = sc.fit_measure(scheme10, tg.named_measure("sigma3", B10))
    assert sc.evaluate(res, 0.0) == 0
    assert sc.evaluate(res, 1.0) == pytest.approx(res.coefficients.sum(), rel=1e-15)


@pytest.mark.parametrize("x", [-1e-3, 1.0 + 1e-12, math.nan])
def test_no_extrapolation(scheme10, x):
    res = sc.fit(scheme10, np.zeros(scheme10.size))
    with pytest.raises(DomainError):
        sc.evaluate(res, x)


def test_sigma3_midpoint_against_oracle(scheme10):
    m = tg.named_measure("sigma3", B10)
    res = sc.fit_measure(scheme10, m)
    diff = abs(sc.evaluate(res, 0.5) - tg.eval_f(m, B10, 0.5))
    assert diff <= 1e-12 * tg.total_variation(m, B10)


def test_point_mass_at_midpoint(scheme10):
    m = tg.named_measure("sigma5", B10)
    assert sc.sup_error(sc.fit_measure(scheme10, m), m) <= 1e-12


def test_sigma1_sup_error(scheme10):
    m = tg.named_measure("sigma1", B10)
    assert sc.sup_error(sc.fit_measure(scheme10, m), m) <= 1e-12


def test_point_mass_outside_band_is_worse(scheme10):
    grid_max = 0.0
    for c in np.geomspace(1, 10, 100):
        m = tg.PointMass(float(c))
        grid_max = max(grid_max, sc.sup_error(sc.fit_measure(scheme10, m), m, grid=1000))
    out = tg.named_measure("sigma5", B10, c=15.0, allow_outside=True)
    assert sc.sup_error(sc.fit_measure(scheme10, out), out, grid=1000) > grid_max


def test_scheme_json_round_trip(scheme10, tmp_path):
    path = tmp_path / "s.json"
    sc.save_scheme(scheme10, path)
    back = sc.load_scheme(path)
    assert back == scheme10
    data = json.loads(path.read_text())
    assert data["version"] == 1
    assert set(data) == {"version", "a", "b", "n", "eps", "powers", "collocation", "alphas"}
    assert sc.dumps_scheme(back) == sc.dumps_scheme(scheme10)


def test_fit_json_round_trip(scheme10):
    res = sc.fit_measure(scheme10, tg.named_measure("sigma4", B10), arc=sc.Arc(0.4))
    back = sc.fit_from_dict(json.loads(json.dumps(sc.fit_to_dict(res))))
    np.testing.assert_array_equal(back.coefficients, res.coefficients)
    t = np.linspace(0, 1, 7)
    np.testing.assert_array_equal(sc.evaluate(back, t), sc.evaluate(res, t))


def test_scheme_validation():
    with pytest.raises(ParameterError):
        sc.ApproxScheme(B10, 2, 1.0, [3.0, 2.0], [0.9, 0.5], [1.0, 0.5, 0.1])
    with pytest.raises(ParameterError):
        sc.ApproxScheme(B10, 2, 1.0, [2.0, 3.0], [0.5, 0.9], [1.0, 0.5, 0.1])
    with pytest.raises(ParameterError):
        sc.ApproxScheme(B10, 2, 1.0, [0.5, 3.0], [0.9, 0.5], [1.0, 0.5, 0.1])


def test_eps_floor_enforced():
    with pytest.raises(ParameterError):
        sc.build_scheme(B10, 1e-45, digits=60)


def test_build_is_deterministic():
    a = sc.build_scheme(B10, 1e-6, digits=60, mesh_size=200)
    b = sc.build_scheme(B10, 1e-6, digits=60, mesh_size=200)
    assert a == b
    assert sc.dumps_scheme(a) == sc.dumps_scheme(b)
    assert a.alpha_n <= 1e-6 < a.alphas[a.n - 1]
