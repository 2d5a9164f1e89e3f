"""Experiment driver: ``oppaoi {fig3,fig4,validate,optimize,simulate,moments}``.

Every run writes its outputs under ``--out`` and embeds the resolved parameters
and the seed, so a run is reproducible from (config file, seed) alone. Parameters
come from the defaults, then ``--config``, then ``AOI_<FIELD>`` environment
variables (for example ``AOI_TX_POWER=0.5`` or ``AOI_NOISE_PSD_DBM_HZ=-140``).
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .channel import SystemParams, accept_prob, load_params
from .moments import expect_P, expect_P2, expect_T, expect_T2
from .objective import average_aoi
from .optimizer import SolverConfig, dinkelbach_solve, multistart_spread, optimize_r_at_p
from .simulator import simulate
from .validation import run_suite

log = logging.getLogger("oppaoi")

KINDS = ("fig3", "fig4", "validate", "optimize", "simulate", "moments")
DEFAULT_PTX = (0.1, 0.2, 0.5, 1.0, 2.0)
DEFAULT_NS = (3, 4, 5, 6, 7)
# relative slack in the monotone-trend checks (solver tolerance is far below it)
TREND_RTOL = 1e-9


@dataclass
class ExperimentSpec:
    kind: str
    out: Path
    seed: int = 0
    ptx: list = field(default_factory=lambda: list(DEFAULT_PTX))
    n_list: list = field(default_factory=lambda: list(DEFAULT_NS))
    grid: int = 200

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not self.ptx or not self.n_list:
            raise ValueError("sweep lists must be non-empty")
        if any(not v > 0 for v in self.ptx):
            raise ValueError("transmit powers must be positive")
        if any(int(n) != n or n < 1 for n in self.n_list):
            raise ValueError("device counts must be integers >= 1")
        if self.grid < 2:
            raise ValueError("grid needs at least two points")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.out = Path(self.out)
        self.out.mkdir(parents=True, exist_ok=True)
        if not os.access(self.out, os.W_OK):
            raise PermissionError(f"output directory {self.out} is not writable")


def _meta(kind, params, seed, **extra):
    return {"command": kind, "seed": seed, "params": params.to_dict(), **extra}


def _pool_map(fn, items, workers):
    # results come back in submission order, so output is independent of workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _nonincreasing(v):
    return all(b <= a * (1 + TREND_RTOL) for a, b in zip(v, v[1:]))


def _increasing(v):
    return all(b > a for a, b in zip(v, v[1:]))


# ---- fig3 -----------------------------------------------------------------


def _fig3_cell(job):
    params, N, ptx = job
    rep = dinkelbach_solve(params.with_(n_devices=N, tx_power=ptx))
    return {"N": N, "p_T_watts": ptx, "p_star": rep.p_star, "r_star": rep.r_star,
            "delta_star_seconds": rep.delta_star, "converged": rep.converged,
            "multistart_spread": multistart_spread(rep)}


FIG3_COLS = ["N", "p_T_watts", "p_star", "r_star", "delta_star_seconds", "converged"]
FIG3_UNITS = {"N": "devices", "p_T_watts": "W", "p_star": "probability",
              "r_star": "nats/s", "delta_star_seconds": "s", "converged": "flag"}


def fig3_checks(rows):
    checks = []
    ns = sorted({r["N"] for r in rows})
    ptx = sorted({r["p_T_watts"] for r in rows})
    cell = {(r["N"], r["p_T_watts"]): r["delta_star_seconds"] for r in rows}
    for N in ns:
        v = [cell[N, p] for p in ptx if (N, p) in cell]
        checks.append({"name": f"nonincreasing_in_p_T_N{N}", "passed": _nonincreasing(v)})
    for p in ptx:
        v = [cell[N, p] for N in ns if (N, p) in cell]
        checks.append({"name": f"increasing_in_N_p_T{p!r}", "passed": _increasing(v)})
    bad = [[r["N"], r["p_T_watts"]] for r in rows if not r["converged"]]
    checks.append({"name": "all_cells_converged", "passed": not bad, "flagged": bad})
    return checks


def run_fig3(spec: ExperimentSpec, params: SystemParams, workers: int = 1):
    jobs = [(params, int(N), float(p)) for N in sorted(spec.n_list) for p in sorted(spec.ptx)]
    rows = _pool_map(_fig3_cell, jobs, workers)
    meta = _meta("fig3", params, spec.seed, ptx=sorted(spec.ptx), n_list=sorted(spec.n_list))
    csv_path = spec.out / "fig3.csv"
    io.write_table(csv_path, FIG3_COLS, rows, FIG3_UNITS, meta,
                   title="minimum average AoI versus transmit power")
    io.plot_fig3(csv_path, spec.out / "fig3.svg")
    checks = fig3_checks(rows)
    report = {**meta, "checks": checks, "passed": all(c["passed"] for c in checks),
              "multistart_spread": {f"{r['N']},{r['p_T_watts']!r}": r["multistart_spread"]
                                    for r in rows}}
    io.write_json(spec.out / "fig3.json", report)
    return report


# ---- fig4 -----------------------------------------------------------------


def fig4_grid(g: int):
    """Cell-centered p grid of ``g`` points inside (0, 1)."""
    return np.linspace(1.0 / (2 * g), 1.0 - 1.0 / (2 * g), g)


def _fig4_curve(job):
    params, N, g = job
    P = params.with_(n_devices=N)
    rows, r = [], None
    for p in fig4_grid(g):
        pt = optimize_r_at_p(float(p), P, r0=r)
        r = pt.r_star  # warm start the next grid point
        rows.append({"N": N, "p": pt.p, "r_star": pt.r_star, "delta_seconds": pt.delta,
                     "converged": pt.converged})
    rep = dinkelbach_solve(P)
    opt = {"N": N, "p_star": rep.p_star, "r_star": rep.r_star,
           "delta_star_seconds": rep.delta_star, "converged": rep.converged}
    return rows, opt


FIG4_CURVE_COLS = ["N", "p", "r_star", "delta_seconds", "converged"]
FIG4_CURVE_UNITS = {"N": "devices", "p": "probability", "r_star": "nats/s",
                    "delta_seconds": "s", "converged": "flag"}
FIG4_OPT_COLS = ["N", "p_star", "r_star", "delta_star_seconds", "converged"]
FIG4_OPT_UNITS = {"N": "devices", "p_star": "probability", "r_star": "nats/s",
                  "delta_star_seconds": "s", "converged": "flag"}


def fig4_checks(curves, optima, g):
    step = 1.0 / g
    checks = []
    for o in optima:
        N = o["N"]
        c = [r for r in curves if r["N"] == N]
        d = np.array([r["delta_seconds"] for r in c])
        i = int(np.argmin(d))
        checks.append({"name": f"marker_on_minimum_N{N}",
                       "passed": bool(abs(o["p_star"] - c[i]["p"]) <= step * (1 + 1e-9)),
                       "p_star": o["p_star"], "curve_argmin": c[i]["p"], "grid_step": step})
        checks.append({"name": f"curve_finite_positive_N{N}",
                       "passed": bool(np.all(np.isfinite(d)) and np.all(d > 0))})
        rel = abs(d[i] - o["delta_star_seconds"]) / o["delta_star_seconds"]
        checks.append({"name": f"curve_min_matches_optimum_N{N}", "passed": bool(rel <= 1e-3),
                       "relative_difference": float(rel), "tolerance": 1e-3})
    bad = [[r["N"], r["p"]] for r in curves if not r["converged"]]
    bad += [[o["N"], "optimum"] for o in optima if not o["converged"]]
    checks.append({"name": "all_cells_converged", "passed": not bad, "flagged": bad})
    return checks


def run_fig4(spec: ExperimentSpec, params: SystemParams, workers: int = 1):
    jobs = [(params, int(N), spec.grid) for N in sorted(spec.n_list)]
    results = _pool_map(_fig4_curve, jobs, workers)
    curves = [row for rows, _ in results for row in rows]
    optima = [opt for _, opt in results]
    meta = _meta("fig4", params, spec.seed, grid=spec.grid, n_list=sorted(spec.n_list))
    io.write_table(spec.out / "fig4_curves.csv", FIG4_CURVE_COLS, curves, FIG4_CURVE_UNITS,
                   meta, title="average AoI with r optimized at each fixed p")
    io.write_table(spec.out / "fig4_optimum.csv", FIG4_OPT_COLS, optima, FIG4_OPT_UNITS,
                   meta, title="joint optimum from the full optimizer")
    io.plot_fig4(spec.out / "fig4_curves.csv", spec.out / "fig4_optimum.csv",
                 spec.out / "fig4.svg")
    checks = fig4_checks(curves, optima, spec.grid)
    report = {**meta, "checks": checks, "passed": all(c["passed"] for c in checks)}
    io.write_json(spec.out / "fig4.json", report)
    return report


# ---- single-shot commands ---------------------------------------------------


def run_validate(spec, params, cycles, q_bias=1.0, n_list=(3, 5)):
    report = run_suite(params, seed=spec.seed, n_cycles=cycles, grid=spec.grid,
                       q_bias=q_bias, n_list=tuple(n_list))
    report["command"] = "validate"
    io.write_json(spec.out / "validate.json", report)
    return report


def run_optimize(spec, params):
    rep = dinkelbach_solve(params)
    report = {**_meta("optimize", params, spec.seed), **rep.to_dict(),
              "multistart_spread": multistart_spread(rep), "passed": rep.converged}
    io.write_json(spec.out / "optimize.json", report)
    return report


def run_simulate(spec, params, p, r, cycles):
    res = simulate(p, r, cycles, spec.seed, params, keep_cycles=True)
    ana = average_aoi(p, r, params).delta_bar
    report = {**_meta("simulate", params, spec.seed), **res.to_dict(), "analytic_aoi": ana,
              "relative_difference": abs(res.mean_aoi - ana) / ana, "passed": True}
    io.write_json(spec.out / "simulate.json", report)
    res.write_cycles_csv(spec.out / "simulate_cycles.csv")
    return report


MOMENT_COLS = ["r", "q", "E_T", "E_T2", "E_P", "E_P2"]
MOMENT_UNITS = {"r": "nats/s", "q": "probability", "E_T": "s", "E_T2": "s^2",
                "E_P": "s", "E_P2": "s^2"}


def run_moments(spec, params, p, n):
    rs = np.geomspace(params.r_min, params.r_max, spec.grid)
    et, et2 = expect_T(rs, params), expect_T2(rs, params)
    q = accept_prob(rs, params.gain_rate, params.link, params.bandwidth)
    rows = [{"r": float(r), "q": float(q[i]), "E_T": float(et[i]), "E_T2": float(et2[i]),
             "E_P": expect_P(p, float(r), n, params), "E_P2": expect_P2(p, float(r), n, params)}
            for i, r in enumerate(rs)]
    meta = _meta("moments", params, spec.seed, p=p, n=n, grid=spec.grid)
    io.write_table(spec.out / "moments.csv", MOMENT_COLS, rows, MOMENT_UNITS, meta,
                   title="offloading and contention moments over the rate threshold")
    return {**meta, "passed": True}


# ---- argument handling --------------------------------------------------------


def _floats(s):
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s):
    return [int(x) for x in s.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value parameter file")
    common.add_argument("--seed", type=int, default=0, help="RNG seed (unsigned 64-bit)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--strict", action="store_true",
                        help="exit nonzero when a trend check fails or a cell does not converge")
    common.add_argument("--no-pathloss", action="store_true",
                        help="ignore free-space path loss (sensitivity check)")
    common.add_argument("--grid", type=int, default=None, help="grid size (p grid, r grid)")
    common.add_argument("--cycles", type=int, default=100_000, help="simulated cycles")
    common.add_argument("--workers", type=int, default=1, help="process pool size")
    common.add_argument("--corrupt-q", type=float, default=0.0, help=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="oppaoi", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="kind", required=True)
    s = sub.add_parser("fig3", parents=[common], help="minimum AoI versus transmit power")
    s.add_argument("--ptx", type=_floats, default=list(DEFAULT_PTX), help="watts, comma separated")
    s.add_argument("--n-list", type=_ints, default=list(DEFAULT_NS))
    s.add_argument("--from-csv", action="store_true", help="only re-plot an existing fig3.csv")
    s = sub.add_parser("fig4", parents=[common], help="AoI versus p with r optimized")
    s.add_argument("--n-list", type=_ints, default=list(DEFAULT_NS))
    s.add_argument("--from-csv", action="store_true", help="only re-plot existing fig4 CSVs")
    s = sub.add_parser("validate", parents=[common], help="oracle suites")
    s.add_argument("--n-list", type=_ints, default=[3, 5])
    sub.add_parser("optimize", parents=[common], help="joint (p, r) optimum")
    for name, hlp in (("simulate", "Monte Carlo average AoI"), ("moments", "moment tables")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("--p", type=float, default=None, help="contention probability")
        if name == "simulate":
            s.add_argument("--r", type=float, default=None, help="rate threshold, nats/s")
        else:
            s.add_argument("--n", type=int, default=None, help="active devices in the round")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    params = load_params(args.config)
    if args.no_pathloss:
        params = params.with_(path_loss=False)
    default_grid = {"validate": 200, "moments": 50}.get(args.kind, 200)
    spec = ExperimentSpec(
        kind=args.kind, out=Path(args.out), seed=args.seed,
        ptx=getattr(args, "ptx", list(DEFAULT_PTX)),
        n_list=getattr(args, "n_list", list(DEFAULT_NS)),
        grid=args.grid or default_grid,
    )

    if args.kind == "fig3":
        if args.from_csv:
            io.plot_fig3(spec.out / "fig3.csv", spec.out / "fig3.svg")
            return 0
        report = run_fig3(spec, params, args.workers)
    elif args.kind == "fig4":
        if args.from_csv:
            io.plot_fig4(spec.out / "fig4_curves.csv", spec.out / "fig4_optimum.csv",
                         spec.out / "fig4.svg")
            return 0
        report = run_fig4(spec, params, args.workers)
    elif args.kind == "validate":
        report = run_validate(spec, params, args.cycles, 1.0 + args.corrupt_q, args.n_list)
    elif args.kind == "optimize":
        report = run_optimize(spec, params)
    elif args.kind == "simulate":
        p = 1.0 / params.n_devices if args.p is None else args.p
        r = params.bandwidth * math.log(2.0) if args.r is None else args.r
        report = run_simulate(spec, params, p, r, args.cycles)
    else:
        p = 1.0 / params.n_devices if args.p is None else args.p
        n = params.n_devices if args.n is None else args.n
        report = run_moments(spec, params, p, n)

    for c in report.get("checks", []):
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}")
    if report["passed"]:
        return 0
    print(f"{args.kind}: some checks failed", file=sys.stderr)
    # validation failures are always fatal, trend checks only in strict mode
    return 1 if (args.kind == "validate" or args.strict) else 0


if __name__ == "__main__":
    sys.exit(main())
