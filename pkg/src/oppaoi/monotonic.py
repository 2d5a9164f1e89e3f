"""Global one-dimensional solvers.

``minimize_dm`` is the one-dimensional form of the polyblock outer approximation
for monotonic programs: in 1-D the polyblock vertices are interval endpoints, and
for f, g nondecreasing on [lo, hi]

    min_{[lo, hi]} (f - g) >= f(lo) - g(hi),

so best-first bisection on that bound returns an eps-global minimizer with a
certificate.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

from .channel import SystemParams, accept_prob, contention_success_prob
from .moments import DEFAULT_QUAD, QuadratureSpec, expect_T, expect_T_error
from .objective import (
    DmProblem,
    _num_den,
    dm_split_p,
    dm_split_r,
    p_subintervals,
)


@dataclass
class DmSolution:
    x_star: float
    f_star: float
    gap: float
    evals: int
    converged: bool = True
    trace: list = field(default_factory=list, repr=False)


def minimize_dm(problem: DmProblem, eps: float, max_evals: int = 1_000_000,
                record_trace: bool = False) -> DmSolution:
    """eps-global minimum of ``problem.f_inc - problem.g_inc`` on [lo, hi]."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    both = problem.both
    evals = 0

    def ev(x):
        nonlocal evals
        evals += 1
        return both(x)

    lo, hi = problem.lo, problem.hi
    flo, glo = ev(lo)
    if hi == lo:
        return DmSolution(lo, flo - glo, 0.0, evals)
    fhi, ghi = ev(hi)
    best_x, best = (lo, flo - glo) if flo - glo <= fhi - ghi else (hi, fhi - ghi)

    # heap entries carry f(lo) and g(hi) so children reuse them
    heap = [(flo - ghi, lo, hi, flo, ghi)]
    stuck_lb = math.inf
    trace = []
    it = 0
    converged = True
    while heap:
        lb, a, b, fa, gb = heapq.heappop(heap)
        if record_trace:
            trace.append((it, a, b, lb, best))
        it += 1
        if lb >= best - eps:
            heapq.heappush(heap, (lb, a, b, fa, gb))
            break
        if evals >= max_evals:
            heapq.heappush(heap, (lb, a, b, fa, gb))
            converged = False
            break
        m = 0.5 * (a + b)
        if not a < m < b:
            # interval at float resolution; its bound cannot be tightened
            stuck_lb = min(stuck_lb, lb)
            continue
        fm, gm = ev(m)
        if fm - gm < best:
            best_x, best = m, fm - gm
        for child in ((fa - gm, a, m, fa, gm), (fm - gb, m, b, fm, gb)):
            if child[0] < best - eps:
                heapq.heappush(heap, child)
    floor = min(heap[0][0] if heap else math.inf, stuck_lb)
    gap = max(0.0, best - floor) if math.isfinite(floor) else 0.0
    if gap > eps:
        converged = False
    return DmSolution(best_x, best, gap, evals, converged, trace)


def write_trace(solution: DmSolution, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "lo", "hi", "lower_bound", "incumbent"])
        for row in solution.trace:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


class SplitPoint(NamedTuple):
    r: float
    boundary: bool  # True when the product is monotone on [r_min, r_max]


def _product(r, p, n, params, quad):
    """E[T] E[P_n]; with p=None the positive factor delta/p_n is dropped."""
    q = accept_prob(r, params.gain_rate, params.link, params.bandwidth)
    scale = 1.0
    if p is not None:
        scale = params.slot_len / contention_success_prob(p, n)
    return scale * expect_T(r, params, quad) / q, scale


def _fd_sign(r, p, n, params, quad, lo, hi):
    h = max(1e-4 * r, 1e-3)
    a, b = max(lo, r - h), min(hi, r + h)
    fa, _ = _product(a, p, n, params, quad)
    fb, _ = _product(b, p, n, params, quad)
    noise = fa * expect_T_error(a, params, quad)[0] / expect_T(a, params, quad) \
        + fb * expect_T_error(b, params, quad)[0] / expect_T(b, params, quad)
    diff = fb - fa
    if abs(diff) <= 10.0 * noise:
        return 0
    return 1 if diff > 0 else -1


def find_r_ddagger(params: SystemParams, quad: QuadratureSpec = DEFAULT_QUAD,
                   tol: float | None = None, p: float | None = None,
                   n: int | None = None) -> SplitPoint:
    """Minimizer of E[T]E[P_n] over [r_min, r_max] by derivative-sign bisection.

    The product is unimodal in r and depends on p only through a positive factor,
    so the result does not depend on ``p``.
    """
    tol = 1e-6 * params.bandwidth * math.log(2.0) if tol is None else tol
    n = params.n_devices if n is None else n
    lo, hi = params.r_min, params.r_max
    a, b = lo, hi
    if _fd_sign(a, p, n, params, quad, lo, hi) >= 0:
        return SplitPoint(a, True)
    if _fd_sign(b, p, n, params, quad, lo, hi) <= 0:
        return SplitPoint(b, True)
    while b - a > tol:
        m = 0.5 * (a + b)
        s = _fd_sign(m, p, n, params, quad, lo, hi)
        if s > 0:
            b = m
        elif s < 0:
            a = m
        else:
            # slope indistinguishable from quadrature noise: shrink both ends
            w = 0.25 * (b - a)
            a, b = a + w, b - w
    return SplitPoint(0.5 * (a + b), False)


_r_split_cache = lru_cache(maxsize=256)(find_r_ddagger)


class CoordMin(NamedTuple):
    x: float
    value: float
    gap: float
    evals: int
    converged: bool


def _best(solutions):
    sols = [s for s in solutions if s is not None]
    best = min(sols, key=lambda s: s.f_star)
    return CoordMin(best.x_star, best.f_star, max(s.gap for s in sols),
                    sum(s.evals for s in sols), all(s.converged for s in sols))


def minimize_over_r(xi: float, p: float, params: SystemParams,
                    quad: QuadratureSpec = DEFAULT_QUAD, eps_rel: float = 1e-6,
                    scale: float | None = None, audit: bool = True) -> CoordMin:
    """Global minimizer of F(xi, p, .) over [r_min, r_max].

    ``eps_rel`` is relative to ``scale`` (default: the AoI numerator at r_split).
    """
    split = _r_split_cache(params, quad)
    if scale is None:
        scale = float(_num_den(p, split.r, params, quad)[0])
    eps = eps_rel * scale
    pieces = dm_split_r(xi, p, split.r, params, quad, audit=audit)
    return _best(minimize_dm(pr, eps) if pr is not None else None for pr in pieces)


def minimize_over_p(xi: float, r: float, params: SystemParams,
                    quad: QuadratureSpec = DEFAULT_QUAD, eps_rel: float = 1e-6,
                    scale: float | None = None, audit: bool = True) -> CoordMin:
    """Global minimizer of F(xi, ., r) over (0, 1), one DM solve per subinterval."""
    N = params.n_devices
    if scale is None:
        p_ref = 0.5 if N == 1 else 1.0 / N
        scale = float(_num_den(p_ref, r, params, quad)[0])
    eps = eps_rel * scale
    sols = [minimize_dm(dm_split_p(xi, r, k, params, quad, audit=audit), eps)
            for k, _, _ in p_subintervals(N)]
    return _best(sols)

