import math

import numpy as np
import pytest

from oppaoi.moments import expect_P, expect_P2, expect_T, expect_T2, moment_set
from oppaoi.monotonic import find_r_ddagger
from oppaoi.objective import (
    DmProblem,
    MonotonicityError,
    average_aoi,
    aoi_over_p,
    device_coefficients,
    dinkelbach_F,
    dm_split_p,
    dm_split_r,
    p_subintervals,
    per_device_F,
)

from conftest import ORACLE


def test_average_aoi_frozen(params, r0):
    assert average_aoi(0.2, r0, params).delta_bar == pytest.approx(ORACLE["aoi_N3_p0.2_Bln2"], rel=1e-9)
    p5 = params.with_(n_devices=5)
    assert average_aoi(0.2, 2 * r0, p5).delta_bar == pytest.approx(ORACLE["aoi_N5_p0.2_2Bln2"], rel=1e-9)


def test_single_device_formula(params, r0):
    p1 = params.with_(n_devices=1)
    m = moment_set(0.4, r0, 1, p1)
    expect = (2 * m.e_t * m.e_p + m.e_t**2 + 0.5 * m.e_p2 + 0.5 * m.e_t2) / (m.e_t + m.e_p)
    assert average_aoi(0.4, r0, p1).delta_bar == pytest.approx(expect, rel=1e-13)


def test_vanishing_slot_limit(params, r0):
    tiny = params.with_(slot_len=1e-9)
    et, et2 = expect_T(r0, tiny), expect_T2(r0, tiny)
    pure = (et**2 + 0.5 * et2) / et
    assert average_aoi(0.3, r0, tiny).delta_bar == pytest.approx(pure, rel=1e-5)


def test_vectorized_p(params, r0):
    ps = np.linspace(0.05, 0.95, 7)
    np.testing.assert_allclose(aoi_over_p(ps, r0, params),
                               [average_aoi(p, r0, params).delta_bar for p in ps], rtol=1e-13)


def test_dinkelbach_F_identities(params, r0):
    pt = average_aoi(0.3, r0, params)
    assert abs(dinkelbach_F(pt.delta_bar, 0.3, r0, params)) <= 1e-12 * pt.numerator
    assert dinkelbach_F(0.0, 0.3, r0, params) == pytest.approx(pt.numerator, rel=1e-14)
    assert pt.numerator > 0
    f1, f2 = dinkelbach_F(0.01, 0.3, r0, params), dinkelbach_F(0.03, 0.3, r0, params)
    assert f2 - f1 == pytest.approx(-0.02 * pt.denominator, rel=1e-9)


def test_per_device_sum(params):
    rng = np.random.default_rng(2)
    for _ in range(20):
        xi, p, r = rng.uniform(0, 0.05), rng.uniform(0.01, 0.99), rng.uniform(params.r_min, params.r_max)
        total = sum(per_device_F(xi, p, r, n, params)[1] for n in range(1, params.n_devices + 1))
        assert total == pytest.approx(dinkelbach_F(xi, p, r, params), rel=1e-9, abs=1e-15)
        assert device_coefficients(xi, r, params)[0] > 0


def test_per_device_parts_monotone(params, r0):
    A, B, C, D = device_coefficients(0.01, r0, params)
    assert C < 0
    pn = np.linspace(0.01, 1.0, 500)
    assert np.all(np.diff(A / pn**2 + B / pn) < 0)
    assert np.all(np.diff(C / pn + D) > 0)


def test_moments_per_round(params, r0):
    pt = average_aoi(0.3, r0, params)
    et = expect_T(r0, params)
    ep = sum(expect_P(0.3, r0, n, params) for n in range(1, 4))
    assert pt.denominator == pytest.approx(3 * et + ep, rel=1e-13)
    ep2 = sum(expect_P2(0.3, r0, n, params) for n in range(1, 4))
    num = 2 * et * ep + 3 * et**2 + 0.5 * ep2 + 1.5 * expect_T2(r0, params)
    assert pt.numerator == pytest.approx(num, rel=1e-13)


def test_split_r_pieces(params):
    split = find_r_ddagger(params).r
    xi, p = 0.012, 0.35
    lo_piece, hi_piece = dm_split_r(xi, p, split, params)  # audits monotonicity
    rng = np.random.default_rng(4)
    for piece in (lo_piece, hi_piece):
        piece.audit(n=50)
        for r in rng.uniform(piece.lo, piece.hi, 10):
            assert piece.objective(r) == pytest.approx(dinkelbach_F(xi, p, r, params), rel=1e-10)
    assert lo_piece.objective(split) == pytest.approx(hi_piece.objective(split), rel=1e-12)


def test_split_r_boundaries(params):
    a, b = dm_split_r(0.01, 0.3, params.r_min, params)
    assert a is None and b is not None
    a, b = dm_split_r(0.01, 0.3, params.r_max, params)
    assert b is None and a is not None


def test_p_subintervals():
    ivs = p_subintervals(3)
    assert [k for k, _, _ in ivs] == [4, 3, 2]
    assert ivs[0][1:] == (0.0, 1 / 3)
    assert ivs[-1][1:] == (0.5, 1.0)
    assert p_subintervals(1) == [(2, 0.0, 1.0)]


def test_split_p_regrouping(params, r0):
    rng = np.random.default_rng(6)
    for k, lo, hi in p_subintervals(params.n_devices):
        prob = dm_split_p(0.012, r0, k, params)
        assert lo <= prob.lo < prob.hi < hi
        for p in rng.uniform(prob.lo, prob.hi, 10):
            assert prob.objective(p) == pytest.approx(dinkelbach_F(0.012, p, r0, params), rel=1e-10)


def test_split_p_single_device(params, r0):
    p1 = params.with_(n_devices=1)
    prob = dm_split_p(0.01, r0, 2, p1)
    assert prob.lo == pytest.approx(0.0, abs=1e-8) and prob.hi == pytest.approx(1.0, abs=1e-8)
    A, B, C, D = device_coefficients(0.01, r0, p1)
    f, g = prob.both(0.4)
    assert f == pytest.approx(C / 0.4 + D)
    assert g == pytest.approx(-(A / 0.16 + B / 0.4))


def test_split_p_bad_index(params, r0):
    with pytest.raises(ValueError):
        dm_split_p(0.01, r0, 1, params)
    with pytest.raises(ValueError):
        dm_split_p(0.01, r0, params.n_devices + 2, params)


def test_audit_catches_decrease():
    bad = DmProblem(lambda x: -x, lambda x: x, 0.0, 1.0, label="bad")
    with pytest.raises(MonotonicityError):
        bad.audit()
    with pytest.raises(ValueError):
        DmProblem(lambda x: x, lambda x: x, 1.0, 0.0)


def test_dm_problem_csv(tmp_path):
    prob = DmProblem(lambda x: x * x, lambda x: x, 0.0, 1.0)
    prob.to_csv(tmp_path / "dm.csv", n=11)
    rows = (tmp_path / "dm.csv").read_text().splitlines()
    assert rows[0] == "x,f_inc,g_inc" and len(rows) == 12


def test_rejects_r_below_min(params):
    with pytest.raises(ValueError):
        average_aoi(0.3, 0.5 * params.r_min, params)
