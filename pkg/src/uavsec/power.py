"""Optimal per-slot transmit power for a fixed trajectory.

Power is spent only on slots where the combined receiver gain beats the
effective eavesdropper gain.  On that active set the optimum follows a
closed form in a single dual variable, tuned by bisection until the
average-power budget is met.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ColludeMode, log2_1p
from .scenario import Scenario, Trajectory

_LN2 = math.log(2.0)

BUDGET_REL_TOL = 1e-8    # relative tolerance on the average-power equation
MAX_BISECT_STEPS = 200


@dataclass
class SlotGains:
    """Per-slot combined gains (per mW): a for the receivers, b effective eavesdropper."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.a.shape != self.b.shape or self.a.ndim != 1:
            raise ValueError("a and b must be 1-D arrays of equal length")
        if np.any(self.a <= 0) or np.any(self.b < 0):
            raise ValueError("need a[n] > 0 and b[n] >= 0")

    @property
    def n_slots(self) -> int:
        return self.a.shape[0]


@dataclass
class PowerSchedule:
    """Per-slot transmit powers, mW."""

    p: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)

    @property
    def n_slots(self) -> int:
        return self.p.shape[0]

    def validate(self, p_ave: float, p_peak: float):
        """Returns (True, None) or (False, first violation)."""
        if np.any(self.p < -1e-12):
            return False, "negative power entry"
        if np.any(self.p > p_peak * (1 + 1e-12) + 1e-12):
            return False, "peak power exceeded"
        if float(np.mean(self.p)) > p_ave + 1e-9:
            return False, "average power budget exceeded"
        return True, None


def slot_gains(s: Scenario, traj: Trajectory, mode: ColludeMode) -> SlotGains:
    """Combined gains per interior slot (endpoints excluded)."""
    q = traj.q[1:-1]
    z = traj.z[1:-1]
    c = s.beta0 / s.sigma2
    db2 = np.sum((q[None, :, :] - s.gr_positions[:, None, :]) ** 2, axis=-1)
    de2 = np.sum((q[None, :, :] - s.eav_positions[:, None, :]) ** 2, axis=-1)
    gb = c * (db2 + z ** 2) ** (-s.alpha / 2.0)
    ge = c * (de2 + z ** 2) ** (-s.alpha / 2.0)
    a = np.sum(gb, axis=0)
    if mode is ColludeMode.NONCOLLUDING:
        b = np.max(ge, axis=0)
    else:
        b = np.sum(ge, axis=0)
    return SlotGains(a=a, b=b)


def active_slots(g: SlotGains) -> np.ndarray:
    """Indices of slots where the receivers strictly out-gain the eavesdroppers."""
    return np.nonzero(g.a > g.b)[0]


def slot_rates(g: SlotGains, p, clamp: bool = True):
    """Per-slot rate terms log2(1+a p) - log2(1+b p)."""
    r = log2_1p(g.a * p) - log2_1p(g.b * p)
    return np.maximum(r, 0.0) if clamp else r


def _stationary_power(a, b, nu):
    """Positive root of a/(1+ap) - b/(1+bp) = nu*ln2, clamped at zero.

    Limit form 1/(nu ln2) - 1/a where b = 0.
    """
    nl = nu * _LN2
    out = np.empty_like(a)
    pos = b > 0.0
    if np.any(pos):
        ap, bp = a[pos], b[pos]
        disc = (ap - bp) ** 2 + 4.0 * ap * bp * (ap - bp) / nl
        out[pos] = (-(ap + bp) + np.sqrt(disc)) / (2.0 * ap * bp)
    if np.any(~pos):
        out[~pos] = 1.0 / nl - 1.0 / a[~pos]
    return np.maximum(out, 0.0)


def kkt_power(g: SlotGains, p_ave: float, p_peak: float, n_slots: int | None = None) -> PowerSchedule:
    """Budget-constrained optimal powers over the active set.

    Inactive slots get zero.  If the peak cap already satisfies the average
    budget the active slots transmit at peak; otherwise the dual variable is
    bisected until the average equals ``p_ave`` within BUDGET_REL_TOL.
    """
    if p_ave > p_peak:
        raise ValueError("p_ave must not exceed p_peak")
    n = g.n_slots if n_slots is None else int(n_slots)
    act = active_slots(g)
    p = np.zeros(g.n_slots)
    if act.size == 0:
        return PowerSchedule(p=p)
    a = g.a[act]
    b = g.b[act]
    budget = n * p_ave
    if act.size * p_peak <= budget + 1e-12:
        p[act] = p_peak
        return PowerSchedule(p=p)

    def total(nu):
        return float(np.sum(np.minimum(p_peak, _stationary_power(a, b, nu))))

    # bracket: total(nu_lo) > budget (tiny dual), total(nu_hi) <= budget
    nu_hi = 1.0
    while total(nu_hi) > budget:
        nu_hi *= 2.0
    nu_lo = 1e-18
    for _ in range(MAX_BISECT_STEPS):
        nu_mid = 0.5 * (nu_lo + nu_hi)
        tot = total(nu_mid)
        if tot > budget:
            nu_lo = nu_mid
        else:
            nu_hi = nu_mid
        if abs(tot - budget) <= BUDGET_REL_TOL * budget:
            break
    # the feasible endpoint of the bracket meets the budget from below
    p[act] = np.minimum(p_peak, _stationary_power(a, b, nu_hi))
    return PowerSchedule(p=p)
