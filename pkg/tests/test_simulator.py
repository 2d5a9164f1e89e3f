import math

import numpy as np
import pytest

from oppaoi.channel import accept_prob, contention_success_prob, gain_threshold
from oppaoi.moments import expect_P, expect_P2, expect_T, geometric_moments
from oppaoi.objective import average_aoi
from oppaoi.simulator import (
    CycleTrace,
    aoi_path,
    empirical_moment_suite,
    path_area,
    run_cycle,
    run_round,
    simulate,
)


def test_degenerate_round(params, r0):
    thr = gain_threshold(r0, params.link, params.bandwidth)
    rec = run_round(2, 0.5, r0, np.random.default_rng(0), params, contention_prob=1.0, gain=2 * thr)
    assert rec.competitions == 1 and rec.slots == [1]
    assert rec.contention_time == params.slot_len
    with pytest.raises(ValueError):
        run_round(2, 0.5, r0, np.random.default_rng(0), params, gain=0.5 * thr)
    with pytest.raises(ValueError):
        run_round(params.n_devices + 1, 0.5, r0, np.random.default_rng(0), params)


def test_rounds_accept_above_threshold(params):
    rng = np.random.default_rng(1)
    r = 2e6
    thr = gain_threshold(r, params.link, params.bandwidth)
    for _ in range(200):
        rec = run_round(3, 0.3, r, rng, params, slot_by_slot=True)
        assert rec.accepted_gain >= thr


def test_competitions_geometric(params):
    r = 2e6
    q = accept_prob(r, params.gain_rate, params.link, params.bandwidth)
    emp = empirical_moment_suite(0.3, r, 1_000_000, 4, params, n=2)
    assert abs(emp["K"][0] * q - 1) < 0.01
    assert emp["accepted_gain_min"] >= gain_threshold(r, params.link, params.bandwidth)


def test_deterministic_cycle_areas(params, r0):
    thr = gain_threshold(r0, params.link, params.bandwidth)
    g = 3 * thr
    tr = run_cycle(0.5, r0, np.random.default_rng(0), params, prev_last_T=0.01,
                   contention_prob=1.0, gain=g)
    T = params.data_nats / (params.bandwidth * math.log1p(params.snr_scale * g))
    busy = params.slot_len + T
    # first trapezoid starts at the previous cycle's T, later ones at this T
    expect = 0.5 * (0.02 + busy) * busy + (params.n_devices - 1) * 0.5 * (2 * T + busy) * busy
    assert tr.area == pytest.approx(expect, rel=1e-13)
    assert tr.cycle_len == sum(x.contention_time + x.offload_time for x in tr.rounds)
    assert path_area(aoi_path(tr)) == pytest.approx(tr.area, rel=1e-13)
    with pytest.raises(ValueError):
        run_cycle(0.5, r0, np.random.default_rng(0), params, prev_last_T=-1.0)


def test_cycle_bookkeeping(params, r0):
    tr = run_cycle(0.3, r0, np.random.default_rng(5), params, prev_last_T=0.0)
    assert isinstance(tr, CycleTrace)
    assert [x.n for x in tr.rounds] == list(range(params.n_devices, 0, -1))
    assert tr.cycle_len == sum(x.contention_time + x.offload_time for x in tr.rounds)
    assert tr.area == pytest.approx(sum(tr.round_areas()))


def test_renewal_ratio_matches_analytic(params, r0):
    sim = simulate(0.2, r0, 100_000, 7, params)
    ana = average_aoi(0.2, r0, params).delta_bar
    assert abs(sim.mean_aoi / ana - 1) < 0.02
    assert abs(sim.mean_aoi - ana) < 4 * sim.ci95


def test_slot_by_slot_agrees(params, r0):
    sim = simulate(0.3, r0, 4000, 3, params, slot_by_slot=True)
    ana = average_aoi(0.3, r0, params).delta_bar
    assert abs(sim.mean_aoi / ana - 1) < 0.05


def test_seed_reproducible(params, r0):
    a = simulate(0.3, r0, 5000, 42, params, keep_cycles=True)
    b = simulate(0.3, r0, 5000, 42, params, keep_cycles=True)
    assert a.to_dict() == b.to_dict()
    assert np.array_equal(a.cycle_area, b.cycle_area)
    c = simulate(0.3, r0, 5000, 43, params)
    assert c.mean_aoi != a.mean_aoi


def test_contention_second_moment(params, r0):
    emp = empirical_moment_suite(0.3, r0, 1_000_000, 12, params, n=3)
    assert abs(emp["P"][0] / expect_P(0.3, r0, 3, params) - 1) < 0.01
    assert abs(emp["P2"][0] / expect_P2(0.3, r0, 3, params) - 1) < 0.02


def test_ci_shrinks_like_sqrt(params, r0):
    a = simulate(0.3, r0, 50_000, 1, params)
    b = simulate(0.3, r0, 100_000, 2, params)
    assert a.ci95 / b.ci95 == pytest.approx(math.sqrt(2), rel=0.2)


def test_sample_moments(params, r0):
    p, n = 0.3, 3
    pn = contention_success_prob(p, n)
    q = accept_prob(r0, params.gain_rate, params.link, params.bandwidth)
    emp = empirical_moment_suite(p, r0, 1_000_000, 9, params, n=n)
    m1, _ = map(float, geometric_moments(pn))
    assert abs(emp["J"][0] - m1) <= 3 * emp["J"][1]
    _, k2 = map(float, geometric_moments(q))
    assert abs(emp["K2"][0] - k2) <= 3 * emp["K2"][1]
    assert abs(emp["T"][0] / expect_T(r0, params) - 1) < 0.01


def test_simulate_moment_dict(params, r0):
    sim = simulate(0.3, r0, 20_000, 0, params)
    assert set(sim.moments) == {"T", "T2", "P", "P2", "K", "K2", "J"}
    assert set(sim.moments["P"]) == set(range(1, params.n_devices + 1))


def test_cycles_csv(tmp_path, params, r0):
    sim = simulate(0.3, r0, 100, 0, params, keep_cycles=True)
    sim.write_cycles_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "cycle,Q,C" and len(lines) == 101
    with pytest.raises(ValueError):
        simulate(0.3, r0, 100, 0, params).write_cycles_csv(tmp_path / "x.csv")
    with pytest.raises(ValueError):
        simulate(0.3, r0, 0, 0, params)
