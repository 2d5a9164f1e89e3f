"""Average-AoI ratio, its Dinkelbach surrogate, and difference-of-monotonic splits.

Per round ``n`` the surrogate contributes

    F_n = 2 E[T]E[P_n] + E[T]^2 + E[P_n^2]/2 + E[T^2]/2 - xi (E[T] + E[P_n])

and F(xi, p, r) = sum_n F_n = numerator(p, r) - xi * denominator(p, r).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel import SystemParams, accept_prob, contention_success_prob
from .moments import DEFAULT_QUAD, QuadratureSpec, _t_moment_fn, expect_T, expect_T2

# relative offset from the boundary of an open interval
EDGE = 1e-9


class MonotonicityError(RuntimeError):
    """A component declared increasing failed the finite-difference audit."""


@dataclass(frozen=True)
class AoiPoint:
    p: float
    r: float
    delta_bar: float
    numerator: float
    denominator: float


@dataclass(frozen=True)
class DmProblem:
    """Minimize f_inc(x) - g_inc(x) on [lo, hi], both components nondecreasing."""

    f_inc: Callable[[float], float]
    g_inc: Callable[[float], float]
    lo: float
    hi: float
    label: str = ""
    # optional joint evaluation returning (f_inc(x), g_inc(x)) in one pass
    fg: Callable[[float], tuple] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def objective(self, x: float) -> float:
        f, g = self.both(x)
        return f - g

    def both(self, x: float):
        if self.fg is not None:
            return self.fg(x)
        return self.f_inc(x), self.g_inc(x)

    def audit(self, n: int = 50, rtol: float = 1e-9) -> None:
        """Raise ``MonotonicityError`` unless both components are nondecreasing on a grid."""
        if self.hi == self.lo:
            return
        xs = np.linspace(self.lo, self.hi, n)
        for name, fn in (("f_inc", self.f_inc), ("g_inc", self.g_inc)):
            v = np.array([fn(float(x)) for x in xs])
            if not np.all(np.isfinite(v)):
                raise MonotonicityError(f"{self.label} {name}: non-finite values")
            # quadrature noise allowance, scaled by the local magnitude
            slack = rtol * np.maximum(np.abs(v[1:]), np.abs(v[:-1]))
            bad = np.flatnonzero(np.diff(v) < -slack)
            if bad.size:
                i = bad[0]
                raise MonotonicityError(
                    f"{self.label} {name} decreases between x={xs[i]!r} and x={xs[i + 1]!r}"
                    f" ({v[i]!r} -> {v[i + 1]!r})"
                )

    def to_csv(self, path, n: int = 200) -> None:
        xs = np.linspace(self.lo, self.hi, n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "f_inc", "g_inc"])
            for x in xs:
                w.writerow([repr(float(x)), repr(self.f_inc(float(x))), repr(self.g_inc(float(x)))])


def _pn_sums(p, n_devices):
    """Sums over rounds of 1/p_n, 1/p_n^2 and (1 - p_n)/p_n^2."""
    pn = np.array([contention_success_prob(p, n) for n in range(1, n_devices + 1)])
    inv = 1.0 / pn
    return inv.sum(axis=0), (inv**2).sum(axis=0), ((1.0 - pn) * inv**2).sum(axis=0)


def _q(r, params):
    if type(r) is float:
        return math.exp(-params.gain_rate * math.expm1(r / params.bandwidth) / params.snr_scale)
    return accept_prob(r, params.gain_rate, params.link, params.bandwidth)


def _num_den(p, r, params, quad, pn_sums=None):
    et = expect_T(r, params, quad)
    et2 = expect_T2(r, params, quad)
    q = _q(r, params)
    d = params.slot_len
    N = params.n_devices
    s1, s2, s3 = _pn_sums(p, N) if pn_sums is None else pn_sums
    sum_p = d / q * s1
    sum_p2 = d**2 * ((2.0 - q) / q**2 * s2 + s3 / q)
    num = 2.0 * et * sum_p + N * et**2 + 0.5 * sum_p2 + 0.5 * N * et2
    den = N * et + sum_p
    return num, den


def average_aoi(p: float, r: float, params: SystemParams,
                quad: QuadratureSpec = DEFAULT_QUAD) -> AoiPoint:
    """Long-run average AoI E[Q]/E[C] at contention probability p and threshold r."""
    if r < params.r_min * (1 - 1e-12):
        raise ValueError(f"r={r} below r_min={params.r_min}")
    num, den = _num_den(p, r, params, quad)
    return AoiPoint(p=float(p), r=float(r), delta_bar=float(num / den),
                    numerator=float(num), denominator=float(den))


def aoi_over_p(p, r: float, params: SystemParams, quad: QuadratureSpec = DEFAULT_QUAD):
    """Vectorized average AoI over an array of p at fixed r."""
    num, den = _num_den(np.asarray(p, dtype=float), r, params, quad)
    return num / den


def dinkelbach_F(xi: float, p: float, r: float, params: SystemParams,
                 quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    num, den = _num_den(p, r, params, quad)
    return float(num - xi * den)


def device_coefficients(xi: float, r: float, params: SystemParams,
                        quad: QuadratureSpec = DEFAULT_QUAD):
    """(A, B, C, D) with F_n = A/p_n^2 + (B + C)/p_n + D; identical for every round."""
    et = expect_T(r, params, quad)
    et2 = expect_T2(r, params, quad)
    q = _q(r, params)
    d = params.slot_len
    A = d**2 / q**2
    B = 2.0 * d * et / q
    C = -(d**2) / (2.0 * q) - xi * d / q
    D = 0.5 * et2 + et**2 - xi * et
    return A, B, C, D


def per_device_F(xi: float, p: float, r: float, n: int, params: SystemParams,
                 quad: QuadratureSpec = DEFAULT_QUAD):
    """Coefficients of round ``n`` and its surrogate value F_n."""
    A, B, C, D = device_coefficients(xi, r, params, quad)
    pn = contention_success_prob(p, n)
    return (A, B, C, D), A / pn**2 + (B + C) / pn + D


def _open_clamp(lo, hi, lo_open=True, hi_open=True):
    w = hi - lo
    return lo + (EDGE * w if lo_open else 0.0), hi - (EDGE * w if hi_open else 0.0)


def dm_split_r(xi: float, p: float, r_split: float, params: SystemParams,
               quad: QuadratureSpec = DEFAULT_QUAD, audit: bool = True):
    """Split F(xi, p, .) into two DM problems on [r_min, r_split] and (r_split, r_max].

    Either piece is ``None`` when ``r_split`` sits on that boundary.
    """
    N = params.n_devices
    d = params.slot_len
    s1, s2, s3 = (float(x) for x in _pn_sums(p, N))

    t_moments = _t_moment_fn(params, quad)

    def parts(r):
        et, et2 = t_moments(r)
        q = _q(r, params)
        sum_p = d / q * s1
        sum_p2 = d**2 * ((2.0 - q) / q**2 * s2 + s3 / q)
        return et, et2, sum_p, sum_p2

    def fg1(r):
        et, et2, sp, sp2 = parts(r)
        return (0.5 * sp2 - xi * N * et,
                -(2.0 * et * sp + N * et**2 + 0.5 * N * et2 - xi * sp))

    def fg2(r):
        et, et2, sp, sp2 = parts(r)
        return (0.5 * sp2 - xi * N * et + 2.0 * et * sp,
                -(N * et**2 + 0.5 * N * et2 - xi * sp))

    def f1(r):
        return fg1(r)[0]

    def g1(r):
        return fg1(r)[1]

    def f2(r):
        return fg2(r)[0]

    def g2(r):
        return fg2(r)[1]

    r_min, r_max = params.r_min, params.r_max
    pieces = []
    if r_split > r_min:
        pieces.append(DmProblem(f1, g1, r_min, min(r_split, r_max), label="r<=r_split", fg=fg1))
    else:
        pieces.append(None)
    if r_split < r_max:
        lo, hi = _open_clamp(max(r_split, r_min), r_max, lo_open=r_split > r_min, hi_open=False)
        pieces.append(DmProblem(f2, g2, lo, hi, label="r>r_split", fg=fg2))
    else:
        pieces.append(None)
    if audit:
        for pr in pieces:
            if pr is not None:
                pr.audit()
    return tuple(pieces)


def p_subintervals(n_devices: int):
    """Split points n'' = N+1, N, ..., 2 with their intervals.

    n'' = N+1 stands for (0, 1/N); n'' in 2..N for [1/n'', 1/(n''-1)).
    """
    out = []
    for k in range(n_devices + 1, 1, -1):
        lo = 0.0 if k == n_devices + 1 else 1.0 / k
        out.append((k, lo, 1.0 / (k - 1)))
    return out


def dm_split_p(xi: float, r: float, split: int, params: SystemParams,
               quad: QuadratureSpec = DEFAULT_QUAD, audit: bool = True) -> DmProblem:
    """DM problem in p on the subinterval selected by ``split`` (see ``p_subintervals``)."""
    N = params.n_devices
    if not 2 <= split <= N + 1:
        raise ValueError(f"split must lie in 2..{N + 1}, got {split}")
    A, B, C, D = device_coefficients(xi, r, params, quad)
    rising = np.arange(1, N + 1) < split  # p_n increasing in p on this subinterval

    rising = [bool(x) for x in rising]

    def fg(p):
        f = g = 0.0
        for n in range(1, N + 1):
            inv = 1.0 / (n * p * (1.0 - p) ** (n - 1))
            f1 = (A * inv + B) * inv
            f2 = C * inv + D
            if rising[n - 1]:
                f += f2
                g -= f1
            else:
                f += f1
                g -= f2
        return f, g

    def f_inc(p):
        return fg(p)[0]

    def g_inc(p):
        return fg(p)[1]

    lo = 0.0 if split == N + 1 else 1.0 / split
    hi = 1.0 / (split - 1)
    # (0, 1/N) is open at both ends, [1/n'', 1/(n''-1)) only on the right;
    # the right end of every subinterval is clamped so p stays below 1
    lo, hi = _open_clamp(lo, hi, lo_open=split == N + 1, hi_open=True)
    prob = DmProblem(f_inc, g_inc, lo, hi, label=f"p split {split}", fg=fg)
    if audit:
        prob.audit()
    return prob
