"""Physical-layer model: Rayleigh gains, rate threshold, acceptance and contention.

All rates are in nats/s (natural log), data sizes in nats.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np


def dbm_to_watts(x_dbm):
    return 10.0 ** ((np.asarray(x_dbm, dtype=float) - 30.0) / 10.0)


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def path_loss_db(distance_km, carrier_mhz):
    """Free-space path loss in dB, distance in km and carrier in MHz."""
    d = np.asarray(distance_km, dtype=float)
    f = np.asarray(carrier_mhz, dtype=float)
    if np.any(d <= 0) or np.any(f <= 0):
        raise ValueError("distance and carrier frequency must be positive")
    out = 32.4 + 20.0 * np.log10(d) + 20.0 * np.log10(f)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EffectiveLink:
    """Coefficient multiplying the gain inside the log of the rate formula."""

    snr_scale: float

    def __post_init__(self):
        if not self.snr_scale > 0:
            raise ValueError(f"snr_scale must be positive, got {self.snr_scale}")


@dataclass(frozen=True)
class SystemParams:
    n_devices: int = 3
    bandwidth: float = 1e6  # Hz
    tx_power: float = 1.0  # W
    noise_psd: float = 1e-17  # W/Hz  (-140 dBm/Hz)
    gain_rate: float = 1.0  # exponential rate, mean gain 1/gain_rate
    slot_len: float = 1e-3  # s
    data_nats: float = 1.5e4
    distance_km: float = 0.5
    carrier_mhz: float = 4800.0
    path_loss: bool = True
    link: EffectiveLink = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_devices) != self.n_devices or self.n_devices < 1:
            raise ValueError(f"n_devices must be an integer >= 1, got {self.n_devices}")
        for f in fields(self):
            if f.name in ("n_devices", "path_loss", "link"):
                continue
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{f.name} must be finite and positive, got {v!r}")
        object.__setattr__(self, "n_devices", int(self.n_devices))
        p_eff = self.tx_power
        if self.path_loss:
            p_eff = p_eff / db_to_linear(path_loss_db(self.distance_km, self.carrier_mhz))
        object.__setattr__(
            self, "link", EffectiveLink(float(p_eff / (self.bandwidth * self.noise_psd)))
        )

    @property
    def snr_scale(self) -> float:
        return self.link.snr_scale

    @property
    def r_min(self) -> float:
        """Smallest admissible rate threshold."""
        return 1e-3 * self.bandwidth * math.log(2.0)

    @property
    def r_max(self) -> float:
        """Rate threshold at which the acceptance probability drops to 1e-4."""
        g = math.log(1e4) / self.gain_rate
        return self.bandwidth * math.log1p(self.snr_scale * g)

    def with_(self, **kw) -> "SystemParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.init}


_FIELD_TYPES = {f.name: f.type for f in fields(SystemParams) if f.init}


def _parse_bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def params_from_mapping(mapping, base: SystemParams | None = None) -> SystemParams:
    """Build params from flat string/number keys.

    Keys ending in ``_dbm_hz`` are converted from dBm/Hz to W/Hz, keys ending in
    ``_db``/``_dbw`` from dB to linear (``tx_power_dbm`` is also accepted).
    Unknown keys raise ``KeyError``.
    """
    kw = {}
    for key, raw in mapping.items():
        key = key.strip().lower()
        if key.endswith("_dbm_hz"):
            name, value = key[: -len("_dbm_hz")], float(dbm_to_watts(float(raw)))
        elif key.endswith("_dbm"):
            name, value = key[: -len("_dbm")], float(dbm_to_watts(float(raw)))
        elif key.endswith("_db"):
            name, value = key[: -len("_db")], float(db_to_linear(float(raw)))
        else:
            name, value = key, raw
        if name not in _FIELD_TYPES:
            raise KeyError(f"unknown parameter {key!r}")
        if name == "path_loss":
            value = value if isinstance(value, bool) else _parse_bool(str(value))
        elif name == "n_devices":
            value = int(value)
        else:
            value = float(value)
        kw[name] = value
    return replace(base or SystemParams(), **kw)


def load_params(path=None, env=None, base: SystemParams | None = None) -> SystemParams:
    """Load params from a flat ``key = value`` file, then apply ``AOI_*`` env overrides.

    The file may omit a section header; ``#`` and ``;`` start comments.
    """
    params = base or SystemParams()
    if path is not None:
        text = Path(path).read_text()
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        if not text.lstrip().startswith("["):
            text = "[params]\n" + text
        cp.read_string(text)
        flat = {}
        for section in cp.sections():
            flat.update(cp[section])
        params = params_from_mapping(flat, params)
    env = os.environ if env is None else env
    overrides = {k[4:].lower(): v for k, v in env.items() if k.startswith("AOI_")}
    if overrides:
        params = params_from_mapping(overrides, params)
    return params


def dump_params(params: SystemParams) -> str:
    lines = [f"{k} = {v}" for k, v in params.to_dict().items()]
    return "\n".join(lines) + "\n"


def rate_of_gain(g, link: EffectiveLink, bandwidth: float):
    """Achievable rate B ln(1 + snr_scale g) in nats/s."""
    g = np.asarray(g, dtype=float)
    if np.any(g < 0):
        raise ValueError("channel gain must be non-negative")
    out = bandwidth * np.log1p(link.snr_scale * g)
    return float(out) if out.ndim == 0 else out


def _check_rate(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("rate threshold must be positive")
    return r


def gain_threshold(r, link: EffectiveLink, bandwidth: float):
    """Smallest gain whose rate reaches ``r``."""
    r = _check_rate(r)
    out = np.expm1(r / bandwidth) / link.snr_scale
    return float(out) if out.ndim == 0 else out


def accept_prob(r, gain_rate: float, link: EffectiveLink, bandwidth: float):
    """Probability that a contention winner sees rate >= r."""
    out = np.exp(-gain_rate * np.asarray(gain_threshold(r, link, bandwidth)))
    return float(out) if out.ndim == 0 else out


def truncated_gain_pdf(g, r, gain_rate: float, link: EffectiveLink, bandwidth: float):
    """Density of the accepted gain: exponential conditioned on g >= G(r)."""
    g = np.asarray(g, dtype=float)
    thr = gain_threshold(r, link, bandwidth)
    # e^{-lam g} / q = e^{-lam (g - G)}, avoids dividing by a tiny q
    out = np.where(g >= thr, gain_rate * np.exp(-gain_rate * (g - thr)), 0.0)
    return float(out) if out.ndim == 0 else out


def contention_success_prob(p, n):
    """Probability that exactly one of ``n`` devices broadcasts: n p (1-p)^(n-1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise ValueError("contention probability must lie in (0, 1)")
    if int(n) != n or n < 1:
        raise ValueError(f"active-device count must be an integer >= 1, got {n}")
    out = n * p * (1.0 - p) ** (n - 1)
    return float(out) if out.ndim == 0 else out


def sample_gain(rng: np.random.Generator, gain_rate: float, size=None):
    return rng.exponential(1.0 / gain_rate, size=size)


def sample_accepted_gain(rng: np.random.Generator, r, gain_rate: float,
                         link: EffectiveLink, bandwidth: float, size=None):
    """Draw from the truncated gain law by inverting its CDF."""
    u = rng.random(size=size)
    # 1 - u lies in (0, 1], keeps the log finite
    return gain_threshold(r, link, bandwidth) - np.log1p(-u) / gain_rate
