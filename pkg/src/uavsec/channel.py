"""Channel gains, combined SNRs and secrecy rates.

All functions are pure and operate in linear units.  Ground receivers
combine coherently, so their SNRs add; eavesdroppers contribute either
the strongest individual SNR (non-colluding) or the sum (colluding).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario

_LN2 = math.log(2.0)


class ColludeMode(enum.Enum):
    NONCOLLUDING = "noncolluding"
    COLLUDING = "colluding"


@dataclass
class Placement:
    """One fixed UAV decision: horizontal position, altitude, transmit power."""

    q: np.ndarray   # (2,) m
    z: float        # m
    p: float        # mW

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(2)
        if not self.z > 0:
            raise ValueError("placement altitude must be positive")
        if self.p < 0:
            raise ValueError("placement power must be non-negative")


def log2_1p(x):
    """log2(1 + x), accurate for small x."""
    return np.log1p(x) / _LN2


def link_gain(s: Scenario, q, z, w):
    """Channel-power-to-noise ratio (per mW) between UAV (q, z) and ground node w.

    Vectorized over trailing shapes: q may be (..., 2), z (...,), w (2,) or (M, 2).
    """
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    d2 = np.sum((q - w) ** 2, axis=-1) + np.asarray(z, dtype=float) ** 2
    return s.beta0 / (s.sigma2 * d2 ** (s.alpha / 2.0))


def gr_gains(s: Scenario, q, z):
    """Per-receiver gains, shape (K,) (or (K, ...) for vectorized q/z)."""
    return np.stack([link_gain(s, q, z, w) for w in s.gr_positions])


def eav_gains(s: Scenario, q, z):
    """Per-eavesdropper gains, shape (J,) (or (J, ...))."""
    return np.stack([link_gain(s, q, z, w) for w in s.eav_positions])


def legit_snr(s: Scenario, q, z, p):
    """Combined SNR at the cooperating receivers (branch SNRs add)."""
    return np.sum(gr_gains(s, q, z), axis=0) * p


def eav_snr(s: Scenario, q, z, p, mode: ColludeMode):
    """Effective eavesdropping SNR: max over eavesdroppers, or sum if colluding."""
    g = eav_gains(s, q, z)
    if mode is ColludeMode.NONCOLLUDING:
        return np.max(g, axis=0) * p
    return np.sum(g, axis=0) * p


def secrecy_rate(s: Scenario, q, z, p, mode: ColludeMode, clamp: bool = True):
    """Secrecy rate in bps/Hz; ``clamp=False`` returns the signed difference."""
    rate = log2_1p(legit_snr(s, q, z, p)) - log2_1p(eav_snr(s, q, z, p, mode))
    if clamp:
        return np.maximum(rate, 0.0)
    return rate


def placement_rate(s: Scenario, pl: Placement, mode: ColludeMode, clamp: bool = True):
    return float(secrecy_rate(s, pl.q, pl.z, pl.p, mode, clamp=clamp))
