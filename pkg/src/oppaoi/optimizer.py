"""Dinkelbach outer loop with block coordinate descent over (p, r)."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import SystemParams
from .moments import DEFAULT_QUAD, QuadratureSpec, expect_T, expect_T2
from .monotonic import minimize_over_p, minimize_over_r
from .objective import EDGE, aoi_over_p, average_aoi, dinkelbach_F

log = logging.getLogger(__name__)


class DescentError(RuntimeError):
    """BCD produced an increase of the surrogate objective."""


@dataclass(frozen=True)
class SolverConfig:
    dinkelbach_tol: float = 1e-7  # |Gamma| / denominator, seconds
    bcd_tol: float = 1e-8  # relative to the AoI numerator
    max_outer: int = 50
    max_inner: int = 100
    eps_rel: float = 1e-6  # DM certificate gap, relative to the AoI numerator
    p0: float | None = None
    r0: float | None = None
    xi0: float | None = None
    multistart: bool = True

    def __post_init__(self):
        if min(self.dinkelbach_tol, self.bcd_tol, self.eps_rel) <= 0:
            raise ValueError("tolerances must be positive")
        if min(self.max_outer, self.max_inner) < 1:
            raise ValueError("iteration limits must be >= 1")


@dataclass
class OptimizerReport:
    p_star: float
    r_star: float
    delta_star: float
    xi_trace: list
    bcd_trace: list
    converged: bool
    gamma_final: float
    denominator: float
    n_devices: int
    p0: float
    r0: float
    starts: list = field(default_factory=list)
    boundary_hit: bool = False
    wall_time: float = 0.0

    def to_dict(self, timing: bool = False) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return d


def _clip_p(p):
    return float(min(max(p, 1e-3), 1.0 - 1e-3))


def bcd_solve(xi: float, p0: float, r0: float, params: SystemParams,
              cfg: SolverConfig = SolverConfig(), quad: QuadratureSpec = DEFAULT_QUAD):
    """Alternate global minimization over p and r of F(xi, ., .).

    Returns (p, r, F, trace) where ``trace`` is the objective after every
    coordinate update, starting from F(xi, p0, r0).
    """
    p, r = p0, r0
    F = dinkelbach_F(xi, p, r, params, quad)
    trace = [F]
    for _ in range(cfg.max_inner):
        F_sweep = F
        scale = average_aoi(p, r, params, quad).numerator
        # a coordinate solve may return a point up to eps worse than the current
        # one; keep the current point then so the trace never increases
        res = minimize_over_p(xi, r, params, quad, cfg.eps_rel, scale=scale)
        if res.value < F:
            p, F = res.x, res.value
        trace.append(F)
        res = minimize_over_r(xi, p, params, quad, cfg.eps_rel, scale=scale)
        if res.value < F:
            r, F = res.x, res.value
        trace.append(F)
        if F_sweep - F <= cfg.bcd_tol * (abs(F) + scale):
            break
    if any(b > a for a, b in zip(trace, trace[1:])):
        raise DescentError(f"BCD trace increased: {trace}")
    return p, r, float(F), trace


def _chain(params, cfg, quad, p0, r0, xi0=None):
    p, r = p0, r0
    xi = average_aoi(p, r, params, quad).delta_bar if xi0 is None else xi0
    xi_trace, bcd_trace = [xi], []
    converged = False
    gamma = math.nan
    den = math.nan
    for _ in range(cfg.max_outer):
        p, r, gamma, tr = bcd_solve(xi, p, r, params, cfg, quad)
        bcd_trace.append(tr)
        pt = average_aoi(p, r, params, quad)
        den = pt.denominator
        if abs(gamma) <= cfg.dinkelbach_tol * den:
            converged = True
            break
        if not pt.delta_bar < xi:
            # Gamma(xi) > 0 cannot happen from a feasible warm start
            log.warning("Dinkelbach stalled at xi=%r (Gamma=%r)", xi, gamma)
            break
        xi = pt.delta_bar
        xi_trace.append(xi)
    final = average_aoi(p, r, params, quad)
    if final.delta_bar < xi_trace[-1]:
        xi_trace.append(final.delta_bar)
    return OptimizerReport(
        p_star=float(p), r_star=float(r), delta_star=final.delta_bar,
        xi_trace=[float(x) for x in xi_trace],
        bcd_trace=[[float(v) for v in tr] for tr in bcd_trace],
        converged=converged, gamma_final=float(gamma), denominator=float(den),
        n_devices=params.n_devices, p0=float(p0), r0=float(r0),
    )


def _at_boundary(p, r, params):
    # r within 1% of either end of its range, or p within 1e-3 of 0 or 1
    return bool(r >= 0.99 * params.r_max or r <= 1.01 * params.r_min
                or p <= 1e-3 or p >= 1.0 - 1e-3)


def default_starts(n_devices: int):
    """Deterministic multistart contention probabilities."""
    N = n_devices
    cands = [1.0 / N, 0.5 / N, 2.0 / N, 0.3, 0.7]
    out = []
    for c in cands:
        c = _clip_p(c)
        if all(abs(c - o) > 1e-12 for o in out):
            out.append(c)
    return out


def dinkelbach_solve(params: SystemParams, cfg: SolverConfig = SolverConfig(),
                     quad: QuadratureSpec = DEFAULT_QUAD) -> OptimizerReport:
    """Minimize the average AoI over (p, r).

    The first chain starts at p0 = 1/N (clipped into (0, 1)) and r0 = B ln 2 unless
    configured; with ``multistart`` four more starting p are tried and the best
    chain is reported, the others summarized in ``starts``.
    """
    t0 = time.perf_counter()
    r0 = params.bandwidth * math.log(2.0) if cfg.r0 is None else cfg.r0
    starts = default_starts(params.n_devices)
    if cfg.p0 is not None:
        starts = [cfg.p0] + [s for s in starts if s != cfg.p0]
    if not cfg.multistart:
        starts = starts[:1]
    reports = []
    for i, p0 in enumerate(starts):
        xi0 = cfg.xi0 if i == 0 else None
        reports.append(_chain(params, cfg, quad, p0, r0, xi0))
    best = min(reports, key=lambda rep: rep.delta_star)
    best.starts = [
        {"p0": rep.p0, "p_star": rep.p_star, "r_star": rep.r_star,
         "delta_star": rep.delta_star, "converged": rep.converged}
        for rep in reports
    ]
    best.boundary_hit = _at_boundary(best.p_star, best.r_star, params)
    if best.boundary_hit:
        log.warning("optimum on the feasible-set boundary: p=%r r=%r", best.p_star, best.r_star)
    best.wall_time = time.perf_counter() - t0
    return best


def multistart_spread(report: OptimizerReport) -> float:
    """Largest relative excess of any start's result over the best one."""
    vals = [s["delta_star"] for s in report.starts]
    return (max(vals) - min(vals)) / min(vals) if vals else 0.0


@dataclass
class RCurvePoint:
    p: float
    r_star: float
    delta: float
    converged: bool


def optimize_r_at_p(p: float, params: SystemParams, cfg: SolverConfig = SolverConfig(),
                    quad: QuadratureSpec = DEFAULT_QUAD, r0: float | None = None) -> RCurvePoint:
    """Single-variable Dinkelbach over r at fixed p: min_r AoI(p, r)."""
    r = params.bandwidth * math.log(2.0) if r0 is None else r0
    pt = average_aoi(p, r, params, quad)
    xi = pt.delta_bar
    converged = False
    for _ in range(cfg.max_outer):
        res = minimize_over_r(xi, p, params, quad, cfg.eps_rel, scale=pt.numerator)
        if res.value < dinkelbach_F(xi, p, r, params, quad):
            r = res.x
        pt = average_aoi(p, r, params, quad)
        gamma = pt.numerator - xi * pt.denominator
        if abs(gamma) <= cfg.dinkelbach_tol * pt.denominator:
            converged = True
            break
        if not pt.delta_bar < xi:
            break
        xi = pt.delta_bar
    return RCurvePoint(float(p), float(r), pt.delta_bar, converged)


@dataclass
class GridResult:
    p: float
    r: float
    delta: float
    p_grid: np.ndarray = field(repr=False)
    r_grid: np.ndarray = field(repr=False)
    surface: np.ndarray = field(repr=False)


def grid_axes(params: SystemParams, grid_p: int, grid_r: int):
    if grid_p < 2 or grid_r < 2:
        raise ValueError("grids need at least two points")
    p_grid = np.linspace(EDGE, 1.0 - EDGE, grid_p)
    r_grid = np.geomspace(params.r_min, params.r_max, grid_r)
    return p_grid, r_grid


def grid_search_oracle(params: SystemParams, grid_p: int = 200, grid_r: int = 200,
                       quad: QuadratureSpec = DEFAULT_QUAD) -> GridResult:
    """Exhaustive evaluation of the average AoI on a p-linear, r-log grid."""
    p_grid, r_grid = grid_axes(params, grid_p, grid_r)
    surface = np.empty((grid_p, grid_r))
    for j, r in enumerate(r_grid):
        surface[:, j] = aoi_over_p(p_grid, float(r), params, quad)
    i, j = np.unravel_index(np.argmin(surface), surface.shape)
    return GridResult(float(p_grid[i]), float(r_grid[j]), float(surface[i, j]),
                      p_grid, r_grid, surface)


def moments_on_grid(r_grid, params: SystemParams, quad: QuadratureSpec = DEFAULT_QUAD):
    return expect_T(r_grid, params, quad), expect_T2(r_grid, params, quad)
