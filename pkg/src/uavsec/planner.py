"""Top-level mission planning: initializer, alternating optimization, benchmarks.

The alternating loop interleaves the closed-form power allocation with one
SCA trajectory pass, starting from a fly-hover-fly path over the most
central ground receiver.  Benchmarks mirror the comparison schemes: a
fixed-altitude 2D variant, and the fly-hover-fly path with adaptive or
constant power.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sca
from .channel import ColludeMode, secrecy_rate
from .power import PowerSchedule, kkt_power, slot_gains
from .scenario import Scenario, Trajectory, validate_trajectory

OUTER_REL_TOL = 1e-4
MAX_OUTER_ITERS = 20
FIXED_2D_ALTITUDE = 200.0

SCHEME_FULL3D = "full3d"
SCHEME_2D = "2d"
SCHEME_FHF_ADAPTIVE = "fhf-adaptive"
SCHEME_FHF_CONSTANT = "fhf-constant"
ALL_SCHEMES = (SCHEME_FULL3D, SCHEME_2D, SCHEME_FHF_ADAPTIVE, SCHEME_FHF_CONSTANT)


@dataclass
class PlanResult:
    trajectory: Trajectory
    power: PowerSchedule
    per_slot_rate: np.ndarray   # bps/Hz, clamped, slots 1..N
    avg_rate: float
    mode: ColludeMode
    scheme: str
    outer_iterations: int


def _finish(s, traj, p, mode, scheme, outer):
    q = traj.q[1:-1]
    z = traj.z[1:-1]
    rates = np.array([float(secrecy_rate(s, q[i], z[i], p.p[i], mode))
                      for i in range(s.n_slots)])
    return PlanResult(trajectory=traj, power=p, per_slot_rate=rates,
                      avg_rate=float(np.mean(rates)), mode=mode,
                      scheme=scheme, outer_iterations=outer)


def medoid_gr(s: Scenario) -> int:
    """Index of the receiver minimizing the summed distance to all receivers."""
    d = np.linalg.norm(s.gr_positions[:, None, :] - s.gr_positions[None, :, :], axis=-1)
    return int(np.argmin(d.sum(axis=1)))  # argmin takes the lowest index on ties


def fly_hover_fly_init(s: Scenario) -> Trajectory:
    """Max-speed flight to above the medoid receiver, hover, max-speed exit.

    The departure from the hover point happens as late as the remaining
    slots allow.  Altitude ramps to the final altitude at full vertical
    speed and then holds.
    """
    n = s.n_slots
    steps = n + 1
    hover = s.gr_positions[medoid_gr(s)]
    v = s.step_h

    def toward(a, b, dist):
        gap = np.linalg.norm(b - a)
        if gap <= dist or gap == 0.0:
            return np.array(b, dtype=float)
        return a + (dist / gap) * (b - a)

    # largest head-leg slot count tau that still lets the tail reach the end
    tau = 0
    for cand in range(steps + 1):
        pos = toward(s.q_start, hover, cand * v)
        if np.linalg.norm(s.q_end - pos) <= (steps - cand) * v + 1e-9:
            tau = cand
        else:
            break
    q = np.empty((n + 2, 2))
    q[0] = s.q_start
    for i in range(1, n + 2):
        if i <= tau:
            q[i] = toward(s.q_start, hover, i * v)
        else:
            q[i] = toward(q[tau], s.q_end, (i - tau) * v)
    q[-1] = s.q_end

    z = np.empty(n + 2)
    z[0] = s.z_start
    for i in range(1, n + 2):
        dz = s.z_end - z[i - 1]
        step = min(dz, s.step_up) if dz >= 0 else max(dz, -s.step_down)
        z[i] = min(max(z[i - 1] + step, s.z_min), s.z_max)
    z[-1] = s.z_end

    traj = Trajectory(q=q, z=z)
    ok, why = validate_trajectory(s, traj)
    if not ok:
        raise AssertionError(f"initializer produced an invalid trajectory: {why}")
    return traj


def alternate(s: Scenario, mode: ColludeMode, traj_init: Trajectory,
              outer_rel_tol: float = OUTER_REL_TOL,
              max_outer: int = MAX_OUTER_ITERS,
              sca_kwargs: dict | None = None,
              altitude_fixed=None, scheme: str = SCHEME_FULL3D,
              trace_hook=None) -> PlanResult:
    """Alternate the power and trajectory half-steps; returns the best iterate."""
    sca_kwargs = dict(sca_kwargs or {})
    traj = traj_init.copy()
    best = None   # (rate, traj, p)
    prev = None
    outer_done = 0
    for outer in range(1, max_outer + 1):
        p = kkt_power(slot_gains(s, traj, mode), s.p_ave, s.p_peak, s.n_slots)
        rate_p = sca.true_average_rate(s, traj, p, mode)
        if best is None or rate_p > best[0]:
            best = (rate_p, traj, p)
        traj = sca.sca_optimize_traj(s, p, traj, mode,
                                     altitude_fixed=altitude_fixed,
                                     trace_hook=trace_hook, **sca_kwargs)
        rate = sca.true_average_rate(s, traj, p, mode)
        if rate > best[0]:
            best = (rate, traj, p)
        outer_done = outer
        if prev is not None and rate - prev < outer_rel_tol * max(abs(prev), 1e-9):
            break
        prev = rate
    _, traj_b, p_b = best
    return _finish(s, traj_b, p_b, mode, scheme, outer_done)


def plan_full3d(s: Scenario, mode: ColludeMode, traj_init=None, **kw) -> PlanResult:
    traj_init = fly_hover_fly_init(s) if traj_init is None else traj_init
    return alternate(s, mode, traj_init, scheme=SCHEME_FULL3D, **kw)


def plan_benchmark(s: Scenario, mode: ColludeMode, scheme: str,
                   traj_init=None, **kw) -> PlanResult:
    """One of the comparison schemes (see ALL_SCHEMES)."""
    if scheme == SCHEME_FULL3D:
        return plan_full3d(s, mode, traj_init=traj_init, **kw)
    fhf = fly_hover_fly_init(s) if traj_init is None else traj_init
    if scheme == SCHEME_2D:
        zfix = _fixed_altitude_profile(s)
        traj0 = Trajectory(q=fhf.q.copy(), z=zfix.copy())
        return alternate(s, mode, traj0, altitude_fixed=zfix,
                         scheme=SCHEME_2D, **kw)
    if scheme == SCHEME_FHF_ADAPTIVE:
        p = kkt_power(slot_gains(s, fhf, mode), s.p_ave, s.p_peak, s.n_slots)
        return _finish(s, fhf, p, mode, SCHEME_FHF_ADAPTIVE, 1)
    if scheme == SCHEME_FHF_CONSTANT:
        p = PowerSchedule(p=np.full(s.n_slots, s.p_ave))
        return _finish(s, fhf, p, mode, SCHEME_FHF_CONSTANT, 1)
    raise ValueError(f"unknown scheme {scheme!r}")


def _fixed_altitude_profile(s: Scenario) -> np.ndarray:
    """Feasible altitude profile holding FIXED_2D_ALTITUDE as long as possible.

    Falls back to the initializer's altitude rule when the up-and-back
    detour does not fit into the slot budget.
    """
    zf = min(max(FIXED_2D_ALTITUDE, s.z_min), s.z_max)
    n2 = s.n_slots + 2
    z = np.empty(n2)
    z[0] = s.z_start
    # ramp to the hold altitude at full vertical speed
    for i in range(1, n2):
        dz = zf - z[i - 1]
        step = min(dz, s.step_up) if dz >= 0 else max(dz, -s.step_down)
        z[i] = z[i - 1] + step
    # latest-departure ramp from the hold altitude onto the final altitude
    z[-1] = s.z_end
    for i in range(n2 - 2, 0, -1):
        dz = z[i] - z[i + 1]
        if dz > s.step_down:
            z[i] = z[i + 1] + s.step_down
        elif -dz > s.step_up:
            z[i] = z[i + 1] - s.step_up
        else:
            break
    dz = np.diff(z)
    if np.any(dz > s.step_up + 1e-9) or np.any(-dz > s.step_down + 1e-9):
        return fly_hover_fly_init(s).z
    return z
