"""Monte Carlo replay of the contention / opportunistic-access protocol.

One observation cycle is N rounds with n = N, N-1, ..., 1 active devices. A round
repeats competitions (each lasting Geo(p_n(p)) slots) until the winner's channel
supports rate >= r; the winner then offloads for T = D / R. The system AoI rises
with slope one and drops to T when an offload completes, so the area of round n
is the trapezoid (T_prev + (T_prev + P_n + T_n)) (P_n + T_n) / 2.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .channel import (
    SystemParams,
    accept_prob,
    contention_success_prob,
    gain_threshold,
    rate_of_gain,
    sample_accepted_gain,
    sample_gain,
)


@dataclass
class RoundRecord:
    n: int
    competitions: int
    slots: list
    accepted_gain: float
    offload_time: float
    contention_time: float


@dataclass
class CycleTrace:
    rounds: list  # RoundRecords in time order, n = N first
    prev_last_T: float
    cycle_len: float
    area: float

    def round_areas(self):
        out, t_prev = [], self.prev_last_T
        for rec in self.rounds:
            busy = rec.contention_time + rec.offload_time
            out.append(0.5 * (2.0 * t_prev + busy) * busy)
            t_prev = rec.offload_time
        return out


@dataclass
class SimResult:
    cycles: int
    mean_aoi: float
    ci95: float
    seed: int
    n_devices: int
    p: float
    r: float
    warmup: int
    batches: int
    moments: dict = field(default_factory=dict)
    cycle_area: np.ndarray | None = field(default=None, repr=False)
    cycle_len: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("cycle_area")
        d.pop("cycle_len")
        return d

    def write_cycles_csv(self, path) -> None:
        if self.cycle_area is None:
            raise ValueError("simulate(..., keep_cycles=True) is needed for a cycle trace")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cycle", "Q", "C"])
            for i, (q, c) in enumerate(zip(self.cycle_area, self.cycle_len)):
                w.writerow([i, repr(float(q)), repr(float(c))])


def _offload_time(g, params):
    return params.data_nats / rate_of_gain(g, params.link, params.bandwidth)


def _slots_bernoulli(n, p, rng):
    """Slots until exactly one of n devices broadcasts, drawn slot by slot."""
    j = 1
    while rng.binomial(n, p) != 1:
        j += 1
    return j


def run_round(n: int, p: float, r: float, rng: np.random.Generator, params: SystemParams,
              *, slot_by_slot: bool = False, contention_prob: float | None = None,
              gain: float | None = None) -> RoundRecord:
    """Simulate one round with ``n`` active devices.

    ``contention_prob`` overrides p_n(p) and ``gain`` fixes the channel gain of every
    winner (test hooks); a fixed gain below G(r) would never be accepted.
    """
    if not 1 <= n <= params.n_devices:
        raise ValueError(f"round index n={n} outside 1..{params.n_devices}")
    pn = contention_success_prob(p, n) if contention_prob is None else contention_prob
    thr = gain_threshold(r, params.link, params.bandwidth)
    if gain is not None and gain < thr:
        raise ValueError("fixed gain below the acceptance threshold")
    slots = []
    while True:
        if slot_by_slot and contention_prob is None:
            slots.append(_slots_bernoulli(n, p, rng))
        else:
            slots.append(int(rng.geometric(pn)))
        g = sample_gain(rng, params.gain_rate) if gain is None else gain
        if g >= thr:
            break
    return RoundRecord(
        n=n,
        competitions=len(slots),
        slots=slots,
        accepted_gain=float(g),
        offload_time=float(_offload_time(g, params)),
        contention_time=params.slot_len * sum(slots),
    )


def run_cycle(p: float, r: float, rng: np.random.Generator, params: SystemParams,
              prev_last_T: float, **round_kw) -> CycleTrace:
    """One observation cycle; ``prev_last_T`` is the last offload time of the previous cycle."""
    if prev_last_T < 0:
        raise ValueError("prev_last_T must be non-negative")
    rounds = [run_round(n, p, r, rng, params, **round_kw)
              for n in range(params.n_devices, 0, -1)]
    trace = CycleTrace(rounds, float(prev_last_T), 0.0, 0.0)
    trace.cycle_len = sum(rec.contention_time + rec.offload_time for rec in rounds)
    trace.area = sum(trace.round_areas())
    return trace


def _batch_ci(area, length, batches):
    k = min(batches, len(area))
    if k < 2:
        return math.nan
    a = np.array_split(area, k)
    c = np.array_split(length, k)
    ratios = np.array([x.sum() / y.sum() for x, y in zip(a, c)])
    return float(stats.t.ppf(0.975, k - 1) * ratios.std(ddof=1) / math.sqrt(k))


def _draw_rounds(p, r, n, size, rng, params):
    """Vectorized (K, total slots, accepted gain) for ``size`` rounds with n active."""
    pn = contention_success_prob(p, n)
    q = accept_prob(r, params.gain_rate, params.link, params.bandwidth)
    k = rng.geometric(q, size=size)
    # sum of k Geo(pn) trials = k successes plus NegBin(k, pn) failures
    slots = k + rng.negative_binomial(k, pn)
    g = sample_accepted_gain(rng, r, params.gain_rate, params.link, params.bandwidth, size=size)
    return k, slots, g


def simulate(p: float, r: float, n_cycles: int, seed: int, params: SystemParams,
             warmup: int = 100, batches: int = 100, slot_by_slot: bool = False,
             keep_cycles: bool = False) -> SimResult:
    """Time-average AoI over ``n_cycles`` cycles after ``warmup`` discarded ones.

    The estimate is sum(Q) / sum(C) over the kept cycles; the first cycle's
    predecessor offload time is drawn from the accepted-offload law.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    rng = np.random.default_rng(seed)
    N = params.n_devices
    total = warmup + n_cycles
    t_init = float(_offload_time(
        sample_accepted_gain(rng, r, params.gain_rate, params.link, params.bandwidth), params))

    if slot_by_slot:
        K = np.zeros((total, N), dtype=np.int64)
        S = np.zeros((total, N), dtype=np.int64)
        T = np.zeros((total, N))
        t_prev = t_init
        for m in range(total):
            tr = run_cycle(p, r, rng, params, t_prev, slot_by_slot=True)
            for i, rec in enumerate(tr.rounds):
                K[m, i], S[m, i], T[m, i] = rec.competitions, sum(rec.slots), rec.offload_time
            t_prev = tr.rounds[-1].offload_time
    else:
        K = np.empty((total, N), dtype=np.int64)
        S = np.empty((total, N), dtype=np.int64)
        G = np.empty((total, N))
        for i, n in enumerate(range(N, 0, -1)):
            K[:, i], S[:, i], G[:, i] = _draw_rounds(p, r, n, total, rng, params)
        T = _offload_time(G, params)

    P = params.slot_len * S
    t_flat = T.ravel()
    t_prev = np.concatenate(([t_init], t_flat[:-1])).reshape(T.shape)
    busy = P + T
    area = (0.5 * (2.0 * t_prev + busy) * busy).sum(axis=1)[warmup:]
    length = busy.sum(axis=1)[warmup:]
    mean_aoi = float(area.sum() / length.sum())

    Tk, Pk, Kk, Sk = T[warmup:], P[warmup:], K[warmup:], S[warmup:]
    ns = list(range(N, 0, -1))
    moments = {
        "T": float(Tk.mean()),
        "T2": float((Tk**2).mean()),
        "P": {n: float(Pk[:, i].mean()) for i, n in enumerate(ns)},
        "P2": {n: float((Pk[:, i] ** 2).mean()) for i, n in enumerate(ns)},
        "K": float(Kk.mean()),
        "K2": float((Kk.astype(float) ** 2).mean()),
        "J": {n: float(Sk[:, i].sum() / Kk[:, i].sum()) for i, n in enumerate(ns)},
    }
    return SimResult(
        cycles=n_cycles, mean_aoi=mean_aoi, ci95=_batch_ci(area, length, batches),
        seed=int(seed), n_devices=N, p=float(p), r=float(r), warmup=warmup,
        batches=batches, moments=moments,
        cycle_area=area if keep_cycles else None,
        cycle_len=length if keep_cycles else None,
    )


def empirical_moment_suite(p: float, r: float, n_samples: int, seed: int,
                           params: SystemParams, n: int | None = None) -> dict:
    """Sample means and standard errors of J, K, gains, T and P for round ``n``.

    Each entry is ``(mean, stderr)``; ``accept`` is the fraction of unconditioned
    gains at or above G(r).
    """
    n = params.n_devices if n is None else n
    rng = np.random.default_rng(seed)
    pn = contention_success_prob(p, n)
    thr = gain_threshold(r, params.link, params.bandwidth)

    def ms(x):
        x = np.asarray(x, dtype=float)
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))

    j = rng.geometric(pn, size=n_samples)
    raw = sample_gain(rng, params.gain_rate, size=n_samples)
    k, slots, g = _draw_rounds(p, r, n, n_samples, rng, params)
    t = _offload_time(g, params)
    pc = params.slot_len * slots
    return {
        "J": ms(j), "J2": ms(j.astype(float) ** 2),
        "K": ms(k), "K2": ms(k.astype(float) ** 2),
        "gain": ms(raw), "accept": ms(raw >= thr),
        "accepted_gain_min": float(g.min()),
        "T": ms(t), "T2": ms(t**2),
        "P": ms(pc), "P2": ms(pc**2),
    }


def aoi_path(trace: CycleTrace):
    """Breakpoints (t, age_before, age_after) of the sawtooth over one cycle.

    Time starts at 0 at the beginning of the cycle; the age starts at
    ``prev_last_T`` and resets to T_n at each offload completion.
    """
    t, age = 0.0, trace.prev_last_T
    pts = [(0.0, age, age)]
    for rec in trace.rounds:
        busy = rec.contention_time + rec.offload_time
        t += busy
        pts.append((t, age + busy, rec.offload_time))
        age = rec.offload_time
    return pts


def path_area(points) -> float:
    """Integral of a slope-one sawtooth given by ``aoi_path`` breakpoints."""
    area = 0.0
    for (t0, _, a0), (t1, b1, _) in zip(points, points[1:]):
        area += 0.5 * (a0 + b1) * (t1 - t0)
    return area
