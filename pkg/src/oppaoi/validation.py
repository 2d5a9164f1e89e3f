"""Analytic-vs-simulation and solver-vs-grid oracle checks.

Each check returns a dict with ``name``, ``passed``, the observed discrepancy and
the tolerance it was judged against. ``q_bias`` multiplies the analytic acceptance
probability everywhere it enters a moment check (mutation hook).
"""

from __future__ import annotations

import math

import numpy as np

from .channel import (
    SystemParams,
    accept_prob,
    contention_success_prob,
    rate_of_gain,
    sample_accepted_gain,
)
from .moments import (
    expect_P,
    expect_P2,
    expect_T,
    expect_T2,
    geometric_moments,
)
from .monotonic import find_r_ddagger
from .objective import average_aoi
from .optimizer import SolverConfig, dinkelbach_solve, grid_search_oracle
from .simulator import empirical_moment_suite, simulate


def _check(name, observed, tol, kind, **extra):
    return {"name": name, "observed": float(observed), "tolerance": float(tol),
            "kind": kind, "passed": bool(observed <= tol), **extra}


def _rel(a, b):
    return abs(a - b) / abs(b)


def moment_checks(params: SystemParams, p: float, r: float, n: int, n_samples: int,
                  seed: int, q_bias: float = 1.0, n_mc: int | None = None):
    """Closed forms and geometric moments against ``n_samples`` simulated rounds,
    quadrature moments of T against ``n_mc`` accepted-gain draws."""
    q = accept_prob(r, params.gain_rate, params.link, params.bandwidth) * q_bias
    pn = contention_success_prob(p, n)
    emp = empirical_moment_suite(p, r, n_samples, seed, params, n=n)
    g = sample_accepted_gain(np.random.default_rng([seed, 1]), r, params.gain_rate, params.link,
                             params.bandwidth, size=n_mc or n_samples)
    t = params.data_nats / rate_of_gain(g, params.link, params.bandwidth)
    mc_t, mc_t2 = float(t.mean()), float((t * t).mean())
    del g, t
    d = params.slot_len
    e_p = expect_P(p, r, n, params) / q_bias
    # second moment rebuilt from the biased q so the mutation propagates
    e_p2 = ((2.0 - q) / (pn**2 * q**2) + (1.0 - pn) / (q * pn**2)) * d**2
    out = []
    m = emp["accept"][0]
    sigma = math.sqrt(q * (1 - q) / n_samples)
    out.append(_check("accept_prob_vs_sampling", abs(m - q) / sigma, 3.0, "sigmas"))
    out.append(_check("E[T]_quadrature_vs_mc", _rel(mc_t, expect_T(r, params)), 5e-3, "relative"))
    out.append(_check("E[T^2]_quadrature_vs_mc", _rel(mc_t2, expect_T2(r, params)), 1e-2, "relative"))
    out.append(_check("E[P]_closed_form_vs_sim", _rel(emp["P"][0], e_p), 1e-2, "relative"))
    out.append(_check("E[P^2]_closed_form_vs_sim", _rel(emp["P2"][0], e_p2), 2e-2, "relative"))
    for key, theta in (("J", pn), ("K", q)):
        m1, m2 = geometric_moments(min(theta, 1.0))
        out.append(_check(f"E[{key}]_geometric", abs(emp[key][0] - m1) / emp[key][1], 3.0, "sigmas"))
        out.append(_check(f"E[{key}^2]_geometric", abs(emp[key + "2"][0] - m2) / emp[key + "2"][1],
                          3.0, "sigmas"))
    return out


def renewal_checks(params: SystemParams, points, n_cycles: int, seed: int):
    out = []
    for i, (p, r) in enumerate(points):
        sim = simulate(p, r, n_cycles, seed + i, params)
        ana = average_aoi(p, r, params).delta_bar
        out.append(_check(f"renewal_N{params.n_devices}_p{p:.3g}_r{r:.4g}",
                          _rel(sim.mean_aoi, ana), 2e-2, "relative",
                          simulated=sim.mean_aoi, analytic=ana))
    return out


def shape_checks(params: SystemParams):
    out = []
    rs = np.geomspace(params.r_min, params.r_max, 50)
    et, et2 = expect_T(rs, params), expect_T2(rs, params)
    p = 0.5
    ep = np.array([expect_P(p, r, params.n_devices, params) for r in rs])
    ep2 = np.array([expect_P2(p, r, params.n_devices, params) for r in rs])
    viol = int(np.sum(np.diff(et) >= 0) + np.sum(np.diff(et2) >= 0)
               + np.sum(np.diff(ep) <= 0) + np.sum(np.diff(ep2) <= 0))
    out.append(_check("moment_monotonicity_violations", viol, 0, "count"))
    rs = np.geomspace(params.r_min, params.r_max, 200)
    prod = expect_T(rs, params) / accept_prob(rs, params.gain_rate, params.link, params.bandwidth)
    s = np.sign(np.diff(prod))
    changes = int(np.sum(s[1:] != s[:-1]))
    out.append(_check("product_sign_changes_minus_one", abs(changes - 1), 0, "count"))
    split = find_r_ddagger(params)
    i = int(np.argmin(prod))
    lo, hi = rs[max(i - 1, 0)], rs[min(i + 1, rs.size - 1)]
    inside = lo <= split.r <= hi
    out.append(_check("r_split_within_grid_resolution", 0 if inside else 1, 0, "flag",
                      r_split=split.r, grid_argmin=float(rs[i])))
    return out


def solver_checks(params: SystemParams, grid: int, cfg: SolverConfig = SolverConfig()):
    rep = dinkelbach_solve(params, cfg)
    g = grid_search_oracle(params, grid, grid)
    out = [
        _check(f"solver_vs_grid_N{params.n_devices}", (rep.delta_star - g.delta) / g.delta,
               1e-3, "relative_excess", solver=rep.delta_star, grid=g.delta),
        _check(f"dinkelbach_certificate_N{params.n_devices}",
               abs(rep.gamma_final) / rep.denominator, 1e-7, "seconds"),
    ]
    dec = all(b < a for a, b in zip(rep.xi_trace, rep.xi_trace[1:]))
    out.append(_check(f"xi_trace_decreasing_N{params.n_devices}", 0 if dec else 1, 0, "flag"))
    return out


def run_suite(params: SystemParams, seed: int = 0, n_samples: int = 1_000_000,
              n_mc: int = 10_000_000, n_cycles: int = 100_000, grid: int = 200, q_bias: float = 1.0,
              n_list=(3, 5)) -> dict:
    checks = []
    r0 = params.bandwidth * math.log(2.0)
    for N in n_list:
        P = params.with_(n_devices=N)
        checks += moment_checks(P, 1.0 / N, r0, N, n_samples, seed, q_bias, n_mc)
        pts = [(0.1, 0.5 * r0), (0.2, r0), (1.0 / N, 1.5 * r0), (0.4, 2.5 * r0), (0.7, 2.0 * r0)]
        checks += renewal_checks(P, pts, n_cycles, seed)
        checks += solver_checks(P, grid)
    checks += shape_checks(params)
    return {
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
        "seed": seed,
        "n_samples": n_samples,
        "n_mc": n_mc,
        "n_cycles": n_cycles,
        "grid": grid,
        "q_bias": q_bias,
        "params": params.to_dict(),
    }
