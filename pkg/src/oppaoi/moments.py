"""Closed-form and quadrature moments of the per-round offload and contention times.

``T`` is the offload time of the accepted transmission, ``P`` the total contention
time of a round. ``T`` moments depend on the rate threshold only; ``P`` moments on
(p, r, n) in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad as _quad

from .channel import SystemParams, accept_prob, contention_success_prob


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, estimate, error):
        super().__init__(f"{message} (estimate={estimate!r}, error bound={error!r})")
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-9
    tail_cut: float = 1e-12
    limit: int = 200

    def __post_init__(self):
        if not 0 < self.rel_tol <= 1e-3:
            raise ValueError("rel_tol must lie in (0, 1e-3]")
        if not 0 < self.tail_cut <= 1e-9:
            raise ValueError("tail_cut must lie in (0, 1e-9]")


DEFAULT_QUAD = QuadratureSpec()


@dataclass(frozen=True)
class MomentSet:
    e_t: float
    e_t2: float
    e_p: float
    e_p2: float
    n: int

    @property
    def e_tp(self) -> float:
        return self.e_t * self.e_p


def geometric_moments(theta):
    """Mean and second moment of a Geo(theta) variable on {1, 2, ...}."""
    theta = np.asarray(theta, dtype=float)
    if np.any(~((theta > 0) & (theta <= 1))):
        raise ValueError("geometric parameter must lie in (0, 1]")
    m1 = 1.0 / theta
    m2 = (2.0 - theta) / theta**2
    if m1.ndim == 0:
        return float(m1), float(m2)
    return m1, m2


def _check_r(r, params: SystemParams):
    if not r > 0:
        raise ValueError(f"rate threshold must be positive, got {r}")
    # tolerate round-off from callers that land exactly on the guard
    if r < params.r_min * (1 - 1e-12):
        raise ValueError(f"rate threshold {r} below r_min={params.r_min}")


def _t_moment(r: float, power: int, params: SystemParams, quad: QuadratureSpec):
    _check_r(r, params)
    # keyed on the physical scalars only, so sweeps over N share evaluations
    return _t_moment_cached(r, power, params.gain_rate, params.snr_scale,
                            params.bandwidth, params.data_nats, quad)


def _integrand_py(v, thr, s, B, D, lam, power):
    g = math.exp(v)
    return (D / (B * math.log1p(s * g))) ** power * lam * math.exp(-lam * (g - thr)) * g


try:
    from numba import cfunc, types
    from scipy import LowLevelCallable

    @cfunc(types.float64(types.intc, types.CPointer(types.float64)), cache=True)
    def _integrand_c(n, xx):
        v, thr, s, B, D, lam, power = xx[0], xx[1], xx[2], xx[3], xx[4], xx[5], xx[6]
        g = math.exp(v)
        return (D / (B * math.log1p(s * g))) ** power * lam * math.exp(-lam * (g - thr)) * g

    _INTEGRAND = LowLevelCallable(_integrand_c.ctypes)
except ImportError:  # pragma: no cover
    _INTEGRAND = _integrand_py


@lru_cache(maxsize=1 << 20)
def _t_moment_cached(r, power, lam, s, B, D, quad):
    thr = math.expm1(r / B) / s
    u_max = math.log(1.0 / quad.tail_cut) / lam
    # integrate over v = ln g on [ln G, ln(G + u_max)]; the integrand peaks like
    # g^-power near g = G for small thresholds and is smooth in v
    val, err, info, *rest = _quad(_INTEGRAND, math.log(thr), math.log(thr + u_max),
                                  args=(thr, s, B, D, lam, float(power)), epsabs=0.0,
                                  epsrel=quad.rel_tol, limit=quad.limit, full_output=1)
    if rest and err > quad.rel_tol * abs(val) * 10:
        raise QuadratureError(f"E[T^{power}] at r={r} did not converge", val, err)
    return val, err


def _t_moment_fn(params: SystemParams, quad: QuadratureSpec):
    """Fast scalar r -> (E[T], E[T^2]) for solver inner loops (no validation)."""
    key = (params.gain_rate, params.snr_scale, params.bandwidth, params.data_nats, quad)

    def fn(r):
        return _t_moment_cached(r, 1, *key)[0], _t_moment_cached(r, 2, *key)[0]

    return fn


def _map_r(r, fn):
    if np.ndim(r) == 0:
        return fn(float(r))
    return np.array([fn(float(x)) for x in np.ravel(r)]).reshape(np.shape(r))


def expect_T(r, params: SystemParams, quad: QuadratureSpec = DEFAULT_QUAD):
    """Mean offload time E[D / R | R >= r] in seconds."""
    if type(r) is float:
        return _t_moment(r, 1, params, quad)[0]
    return _map_r(r, lambda x: _t_moment(x, 1, params, quad)[0])


def expect_T2(r, params: SystemParams, quad: QuadratureSpec = DEFAULT_QUAD):
    """Second moment of the offload time in seconds^2."""
    if type(r) is float:
        return _t_moment(r, 2, params, quad)[0]
    return _map_r(r, lambda x: _t_moment(x, 2, params, quad)[0])


def expect_T_error(r, params: SystemParams, quad: QuadratureSpec = DEFAULT_QUAD):
    """Quadrature error bounds (E[T], E[T^2]) at ``r``."""
    return _t_moment(float(r), 1, params, quad)[1], _t_moment(float(r), 2, params, quad)[1]


def _pq(p, r, n, params):
    if not 1 <= n <= params.n_devices:
        raise ValueError(f"round index n={n} outside 1..{params.n_devices}")
    pn = contention_success_prob(p, n)
    q = accept_prob(r, params.gain_rate, params.link, params.bandwidth)
    return pn, q


def expect_P(p, r, n: int, params: SystemParams):
    """Mean contention time of round ``n``: delta / (p_n(p) q(r))."""
    pn, q = _pq(p, r, n, params)
    return params.slot_len / (pn * q)


def expect_P2(p, r, n: int, params: SystemParams):
    """Second moment of the contention time of round ``n``."""
    pn, q = _pq(p, r, n, params)
    return ((2.0 - q) / (pn**2 * q**2) + (1.0 - pn) / (q * pn**2)) * params.slot_len**2


@lru_cache(maxsize=1 << 16)
def moment_set(p: float, r: float, n: int, params: SystemParams,
               quad: QuadratureSpec = DEFAULT_QUAD) -> MomentSet:
    return MomentSet(
        e_t=expect_T(r, params, quad),
        e_t2=expect_T2(r, params, quad),
        e_p=expect_P(p, r, n, params),
        e_p2=expect_P2(p, r, n, params),
        n=n,
    )


def clear_caches():
    _t_moment_cached.cache_clear()
    moment_set.cache_clear()
