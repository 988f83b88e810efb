"""Trajectory improvement for fixed power via successive convex surrogates.

Each round linearizes the non-convex pieces of the average-rate objective
around the current trajectory: distances to receivers enter through upper
proxies (zeta), distances to eavesdroppers through affine Taylor lower
bounds (eta), and the receiver log term through its tangent.  The result
is one concave program per round, handed to the barrier solver; the loop
accepts a new trajectory only if the true (clamped) average secrecy rate
does not decrease.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import barrier
from .barrier import ConcaveProgram, ConstraintBlock, SolveStatus
from .channel import ColludeMode, log2_1p
from .power import PowerSchedule, slot_gains, slot_rates
from .scenario import Scenario, Trajectory

_LN2 = math.log(2.0)

POS_SCALE = 100.0        # meters; solver-side scale for q and z variables
SHIFT = 1e-6             # relative interior shift for the proxy start values
DEFAULT_REL_TOL = 1e-4
DEFAULT_MAX_ITERS = 50
DEFAULT_SOLVER_TOL = 1e-5


class ExpansionError(RuntimeError):
    """The expansion trajectory admits no strictly feasible start point."""


class SolverFailure(RuntimeError):
    """Inner solver reported a numeric failure; carries the round index."""

    def __init__(self, round_index, report):
        super().__init__(f"convex subproblem failed at round {round_index}")
        self.round_index = round_index
        self.report = report


# ---------------------------------------------------------------------------
# Taylor bounds and surrogate rate (also used stand-alone by the audits)

def eav_dist_lb(expansion, w_ej, alpha):
    """Affine global under-estimator of (|q - w|^2 + z^2)^(alpha/2).

    ``expansion`` is the (q0, z0) anchor.  Returns (c0, grad) with
    grad = (gx, gy, gz) such that the bound at (q, z) is
    c0 + gx*q[0] + gy*q[1] + gz*z; it equals the true value at the anchor.
    """
    q0, z0 = expansion
    q0 = np.asarray(q0, dtype=float)
    w = np.asarray(w_ej, dtype=float)
    u0 = float(np.sum((q0 - w) ** 2) + z0 ** 2)
    h0 = u0 ** (alpha / 2.0)
    fac = alpha * u0 ** (alpha / 2.0 - 1.0)
    grad = np.array([fac * (q0[0] - w[0]), fac * (q0[1] - w[1]), fac * z0])
    c0 = h0 - grad[0] * q0[0] - grad[1] * q0[1] - grad[2] * z0
    return c0, grad


def eval_affine(c0, grad, q, z):
    """Value of an affine bound produced by eav_dist_lb."""
    return c0 + grad[0] * q[..., 0] + grad[1] * q[..., 1] + grad[2] * z


def rate_in_proxy_vars(s: Scenario, zeta, eta, p, mode: ColludeMode, j=None):
    """Exact per-slot rate expressed in the proxy distance variables."""
    a = s.beta0 * p / s.sigma2
    lead = log2_1p(np.sum(a / np.asarray(zeta, dtype=float)))
    eta = np.asarray(eta, dtype=float)
    if mode is ColludeMode.NONCOLLUDING:
        if j is None:
            raise ValueError("non-colluding form needs an eavesdropper index")
        tail = log2_1p(a / eta[j])
    else:
        tail = log2_1p(np.sum(a / eta))
    return lead - tail


def rate_lb_value(s: Scenario, zeta, eta, zeta_exp, p, mode: ColludeMode, j=None):
    """Concave surrogate of the proxy-variable rate, anchored at zeta_exp.

    The receiver log term is replaced by its tangent at the anchor; the
    eavesdropper term is kept exact.  Equals rate_in_proxy_vars at
    zeta == zeta_exp and never exceeds it elsewhere.
    """
    a = s.beta0 * p / s.sigma2
    zeta = np.asarray(zeta, dtype=float)
    zeta_exp = np.asarray(zeta_exp, dtype=float)
    eta = np.asarray(eta, dtype=float)
    s0 = np.sum(a / zeta_exp)
    lead = log2_1p(s0)
    lin = np.sum((a / zeta_exp ** 2) * (zeta - zeta_exp)) / (_LN2 * (1.0 + s0))
    if mode is ColludeMode.NONCOLLUDING:
        if j is None:
            raise ValueError("non-colluding form needs an eavesdropper index")
        tail = log2_1p(a / eta[j])
    else:
        tail = log2_1p(np.sum(a / eta))
    return lead - lin - tail


# ---------------------------------------------------------------------------
# variable layout

@dataclass
class Layout:
    """Flat packing of one round's variables."""

    n: int
    k: int
    j: int
    with_slack: bool       # per-slot rate slack present (non-colluding)
    with_altitude: bool    # altitude is a variable (False when frozen)

    def __post_init__(self):
        off = 0
        self.qx = off; off += self.n
        self.qy = off; off += self.n
        if self.with_altitude:
            self.z = off; off += self.n
        else:
            self.z = None
        if self.with_slack:
            self.r = off; off += self.n
        else:
            self.r = None
        self.zeta = off; off += self.k * self.n
        self.eta = off; off += self.j * self.n
        self.dim = off

    def get_q(self, x):
        return x[self.qx:self.qx + self.n], x[self.qy:self.qy + self.n]

    def get_z(self, x, frozen=None):
        if self.with_altitude:
            return x[self.z:self.z + self.n]
        return frozen

    def get_r(self, x):
        return x[self.r:self.r + self.n]

    def get_zeta(self, x):
        return x[self.zeta:self.zeta + self.k * self.n].reshape(self.k, self.n)

    def get_eta(self, x):
        return x[self.eta:self.eta + self.j * self.n].reshape(self.j, self.n)


def subproblem_dim(s: Scenario, mode: ColludeMode, altitude_frozen: bool = False) -> int:
    """Variable count of one SCA round."""
    lay = Layout(n=s.n_slots, k=s.n_gr, j=s.n_eav,
                 with_slack=(mode is ColludeMode.NONCOLLUDING),
                 with_altitude=not altitude_frozen)
    return lay.dim


# ---------------------------------------------------------------------------
# constraint blocks (vectorized)

class _RateSlackBlock(ConstraintBlock):
    """r[n] - surrogate_rate(j, n) <= 0 for every eavesdropper and slot."""

    def __init__(self, lay: Layout, a_n, c0_n, coefz, zeta_m):
        self.lay = lay
        self.a = a_n                # (N,) beta0*p/sigma2
        self.c0 = c0_n              # (N,) receiver log at the anchor
        self.coefz = coefz          # (K, N) tangent coefficients
        self.zeta_m = zeta_m        # (K, N)
        self.count = lay.j * lay.n

    def values(self, x):
        lay = self.lay
        r = lay.get_r(x)
        zeta = lay.get_zeta(x)
        eta = lay.get_eta(x)
        lin = np.sum(self.coefz * (zeta - self.zeta_m), axis=0)
        le = log2_1p(self.a[None, :] / eta)
        return (r[None, :] - self.c0[None, :] + lin[None, :] + le).ravel()

    def wgrad(self, x, w):
        lay = self.lay
        w = w.reshape(lay.j, lay.n)
        eta = lay.get_eta(x)
        g = np.zeros(lay.dim)
        wsum = np.sum(w, axis=0)
        g[lay.r:lay.r + lay.n] = wsum
        g[lay.zeta:lay.zeta + lay.k * lay.n] = (self.coefz * wsum[None, :]).ravel()
        dle = -(self.a[None, :] / (eta ** 2 + self.a[None, :] * eta)) / _LN2
        g[lay.eta:lay.eta + lay.j * lay.n] = (w * dle).ravel()
        return g


class _ZetaBlock(ConstraintBlock):
    """(|q - w_bk|^2 + z^2)^(alpha/2) - zeta <= 0 per receiver and slot."""

    def __init__(self, lay: Layout, w_b, alpha, z_fixed=None):
        self.lay = lay
        self.wx = w_b[:, 0][:, None]
        self.wy = w_b[:, 1][:, None]
        self.alpha = alpha
        self.z_fixed = z_fixed
        self.count = lay.k * lay.n

    def _u(self, x):
        lay = self.lay
        qx, qy = lay.get_q(x)
        z = lay.get_z(x, self.z_fixed)
        dx = qx[None, :] - self.wx
        dy = qy[None, :] - self.wy
        return dx, dy, z, dx ** 2 + dy ** 2 + z[None, :] ** 2

    def values(self, x):
        _, _, _, u = self._u(x)
        return (u ** (self.alpha / 2.0) - self.lay.get_zeta(x)).ravel()

    def wgrad(self, x, w):
        lay = self.lay
        w = w.reshape(lay.k, lay.n)
        dx, dy, z, u = self._u(x)
        fac = w * self.alpha * u ** (self.alpha / 2.0 - 1.0)
        g = np.zeros(lay.dim)
        g[lay.qx:lay.qx + lay.n] = np.sum(fac * dx, axis=0)
        g[lay.qy:lay.qy + lay.n] = np.sum(fac * dy, axis=0)
        if lay.with_altitude:
            g[lay.z:lay.z + lay.n] = np.sum(fac, axis=0) * z
        g[lay.zeta:lay.zeta + lay.k * lay.n] = -w.ravel()
        return g


class _EtaBlock(ConstraintBlock):
    """eta <= affine Taylor lower bound of the eavesdropper distance power."""

    def __init__(self, lay: Layout, e0, gx, gy, gz, z_fixed=None):
        self.lay = lay
        # fold a frozen altitude into the constant term
        if not lay.with_altitude:
            e0 = e0 + gz * z_fixed[None, :]
        self.e0 = e0      # (J, N)
        self.gx = gx
        self.gy = gy
        self.gz = gz
        self.count = lay.j * lay.n

    def values(self, x):
        lay = self.lay
        qx, qy = lay.get_q(x)
        bound = self.e0 + self.gx * qx[None, :] + self.gy * qy[None, :]
        if lay.with_altitude:
            bound = bound + self.gz * lay.get_z(x)[None, :]
        return (lay.get_eta(x) - bound).ravel()

    def wgrad(self, x, w):
        lay = self.lay
        w = w.reshape(lay.j, lay.n)
        g = np.zeros(lay.dim)
        g[lay.qx:lay.qx + lay.n] = -np.sum(w * self.gx, axis=0)
        g[lay.qy:lay.qy + lay.n] = -np.sum(w * self.gy, axis=0)
        if lay.with_altitude:
            g[lay.z:lay.z + lay.n] = -np.sum(w * self.gz, axis=0)
        g[lay.eta:lay.eta + lay.j * lay.n] = w.ravel()
        return g


class _MobilityBlock(ConstraintBlock):
    """|q[i+1] - q[i]|^2 <= step^2 over the N+1 displacement steps."""

    def __init__(self, lay: Layout, q_start, q_end, step):
        self.lay = lay
        self.q0 = np.asarray(q_start, dtype=float)
        self.q1 = np.asarray(q_end, dtype=float)
        self.cap = float(step) ** 2
        self.count = lay.n + 1

    def _diffs(self, x):
        qx, qy = self.lay.get_q(x)
        fx = np.concatenate([[self.q0[0]], qx, [self.q1[0]]])
        fy = np.concatenate([[self.q0[1]], qy, [self.q1[1]]])
        return np.diff(fx), np.diff(fy)

    def values(self, x):
        dx, dy = self._diffs(x)
        return dx ** 2 + dy ** 2 - self.cap

    def wgrad(self, x, w):
        lay = self.lay
        dx, dy = self._diffs(x)
        tx = 2.0 * w * dx
        ty = 2.0 * w * dy
        g = np.zeros(lay.dim)
        g[lay.qx:lay.qx + lay.n] = tx[:-1] - tx[1:]
        g[lay.qy:lay.qy + lay.n] = ty[:-1] - ty[1:]
        return g


class _VerticalBlock(ConstraintBlock):
    """Signed altitude steps within the climb (+1) or descent (-1) cap."""

    def __init__(self, lay: Layout, z_start, z_end, cap, sign):
        self.lay = lay
        self.z0 = float(z_start)
        self.z1 = float(z_end)
        self.cap = float(cap)
        self.sign = sign
        self.count = lay.n + 1

    def values(self, x):
        z = np.concatenate([[self.z0], self.lay.get_z(x), [self.z1]])
        return self.sign * np.diff(z) - self.cap

    def wgrad(self, x, w):
        lay = self.lay
        t = self.sign * w
        g = np.zeros(lay.dim)
        g[lay.z:lay.z + lay.n] = t[:-1] - t[1:]
        return g


# ---------------------------------------------------------------------------
# objectives

class _SlackObjective:
    """(1/N) * sum r[n]."""

    def __init__(self, lay: Layout):
        self.lay = lay
        self.g = np.zeros(lay.dim)
        self.g[lay.r:lay.r + lay.n] = 1.0 / lay.n

    def __call__(self, x):
        return float(np.mean(self.lay.get_r(x))), self.g


class _ColludingObjective:
    """(1/N) * sum of colluding surrogate rates."""

    def __init__(self, lay: Layout, a_n, c0_n, coefz, zeta_m):
        self.lay = lay
        self.a = a_n
        self.c0 = c0_n
        self.coefz = coefz
        self.zeta_m = zeta_m
        self.gz_lin = -(coefz / lay.n).ravel()

    def __call__(self, x):
        lay = self.lay
        zeta = lay.get_zeta(x)
        eta = lay.get_eta(x)
        lin = np.sum(self.coefz * (zeta - self.zeta_m), axis=0)
        se = np.sum(self.a[None, :] / eta, axis=0)
        vals = self.c0 - lin - log2_1p(se)
        g = np.zeros(lay.dim)
        g[lay.zeta:lay.zeta + lay.k * lay.n] = self.gz_lin
        de = (self.a[None, :] / eta ** 2) / (_LN2 * (1.0 + se[None, :]))
        g[lay.eta:lay.eta + lay.j * lay.n] = (de / lay.n).ravel()
        return float(np.sum(vals)) / lay.n, g


# ---------------------------------------------------------------------------
# interior start trajectory

def _interior_trajectory(s: Scenario, traj: Trajectory) -> Trajectory:
    """Blend toward the uniform straight path until strictly inside the
    mobility, vertical-speed and altitude-box constraints."""
    n2 = s.n_slots + 2
    tgrid = np.linspace(0.0, 1.0, n2)
    qline = s.q_start[None, :] + tgrid[:, None] * (s.q_end - s.q_start)[None, :]
    zline = s.z_start + tgrid * (s.z_end - s.z_start)

    for lam in (1e-3, 8e-3, 6e-2, 0.5, 1.0):
        q = (1.0 - lam) * traj.q + lam * qline
        z = (1.0 - lam) * traj.z + lam * zline
        # nudge interior slots off the altitude box if they sit on it
        eps_z = min(1e-4, 0.25 * min(s.step_up, s.step_down) if min(s.step_up, s.step_down) > 0 else 1e-4,
                    0.25 * (s.z_max - s.z_min) if s.z_max > s.z_min else 0.0)
        if eps_z > 0:
            z[1:-1] = np.clip(z[1:-1], s.z_min + eps_z, s.z_max - eps_z)
        steps = np.linalg.norm(np.diff(q, axis=0), axis=1)
        dz = np.diff(z)
        ok = (np.all(steps < s.step_h * (1 - 1e-9)) and
              np.all(dz < s.step_up - 1e-12) and
              np.all(-dz < s.step_down - 1e-12) and
              (s.z_max == s.z_min or
               np.all((z[1:-1] > s.z_min) & (z[1:-1] < s.z_max))))
        if ok:
            return Trajectory(q=q, z=z)
    raise ExpansionError("no strictly feasible start exists for this mission "
                         "(endpoints may be exactly at the reachability limit)")


# ---------------------------------------------------------------------------
# subproblem assembly

def build_subproblem(s: Scenario, traj_m: Trajectory, p: PowerSchedule,
                     mode: ColludeMode, altitude_fixed=None) -> ConcaveProgram:
    """Assemble one concave round around the expansion trajectory ``traj_m``.

    ``altitude_fixed``: optional (N+2,) altitude profile; when given the
    altitude is held constant and removed from the variables.
    """
    n, k, j = s.n_slots, s.n_gr, s.n_eav
    frozen = altitude_fixed is not None
    lay = Layout(n=n, k=k, j=j,
                 with_slack=(mode is ColludeMode.NONCOLLUDING),
                 with_altitude=not frozen)

    q_m = traj_m.q[1:-1]
    z_m = (np.asarray(altitude_fixed, dtype=float)[1:-1] if frozen
           else traj_m.z[1:-1])
    a_n = s.beta0 * np.asarray(p.p, dtype=float) / s.sigma2    # (N,)

    # anchor quantities
    db2 = np.sum((q_m[None, :, :] - s.gr_positions[:, None, :]) ** 2, axis=-1)
    zeta_m = (db2 + z_m[None, :] ** 2) ** (s.alpha / 2.0)       # (K, N)
    s0 = np.sum(a_n[None, :] / zeta_m, axis=0)
    c0_n = log2_1p(s0)
    coefz = (a_n[None, :] / zeta_m ** 2) / (_LN2 * (1.0 + s0[None, :]))

    e0 = np.empty((j, n)); egx = np.empty((j, n)); egy = np.empty((j, n)); egz = np.empty((j, n))
    for jj, w in enumerate(s.eav_positions):
        for nn in range(n):
            c0, grad = eav_dist_lb((q_m[nn], z_m[nn]), w, s.alpha)
            e0[jj, nn] = c0
            egx[jj, nn], egy[jj, nn], egz[jj, nn] = grad

    blocks = [
        _ZetaBlock(lay, s.gr_positions, s.alpha, z_fixed=z_m if frozen else None),
        _EtaBlock(lay, e0, egx, egy, egz, z_fixed=z_m if frozen else None),
        _MobilityBlock(lay, s.q_start, s.q_end, s.step_h),
    ]
    if not frozen:
        blocks.append(_VerticalBlock(lay, s.z_start, s.z_end, s.step_up, +1.0))
        blocks.append(_VerticalBlock(lay, s.z_start, s.z_end, s.step_down, -1.0))
    if mode is ColludeMode.NONCOLLUDING:
        blocks.insert(0, _RateSlackBlock(lay, a_n, c0_n, coefz, zeta_m))
        objective = _SlackObjective(lay)
    else:
        objective = _ColludingObjective(lay, a_n, c0_n, coefz, zeta_m)

    # box: altitude bounds, eta floor, generous zeta ceiling
    lb = np.full(lay.dim, -np.inf)
    ub = np.full(lay.dim, np.inf)
    if not frozen:
        lb[lay.z:lay.z + n] = s.z_min
        ub[lay.z:lay.z + n] = s.z_max
    eta_floor = s.z_min ** s.alpha
    lb[lay.eta:lay.eta + j * n] = eta_floor
    nodes = np.vstack([s.gr_positions, s.eav_positions])
    reach = max(np.linalg.norm(nodes - s.q_start, axis=1).max(),
                np.linalg.norm(nodes - s.q_end, axis=1).max()) + (n + 1) * s.step_h
    zeta_cap = 2.0 * (reach ** 2 + s.z_max ** 2) ** (s.alpha / 2.0)
    ub[lay.zeta:lay.zeta + k * n] = zeta_cap

    # strictly interior start point
    ti = _interior_trajectory(s, Trajectory(q=traj_m.q,
                                            z=np.asarray(altitude_fixed, dtype=float)
                                            if frozen else traj_m.z))
    q0 = ti.q[1:-1]
    z0 = z_m if frozen else ti.z[1:-1]
    x0 = np.empty(lay.dim)
    x0[lay.qx:lay.qx + n] = q0[:, 0]
    x0[lay.qy:lay.qy + n] = q0[:, 1]
    if not frozen:
        x0[lay.z:lay.z + n] = z0
    d0b = np.sum((q0[None, :, :] - s.gr_positions[:, None, :]) ** 2, axis=-1)
    zeta0 = (d0b + z0[None, :] ** 2) ** (s.alpha / 2.0) * (1.0 + SHIFT)
    x0[lay.zeta:lay.zeta + k * n] = zeta0.ravel()
    ebound = e0 + egx * q0[:, 0][None, :] + egy * q0[:, 1][None, :] + egz * z0[None, :]
    eta0 = ebound * (1.0 - SHIFT)
    low = eta0 <= eta_floor
    eta0[low] = 0.5 * (eta_floor + ebound[low])
    x0[lay.eta:lay.eta + j * n] = eta0.ravel()
    if mode is ColludeMode.NONCOLLUDING:
        rate0 = np.stack([
            [rate_lb_value(s, zeta0[:, nn], eta0[:, nn], zeta_m[:, nn],
                           p.p[nn], mode, j=jj) for nn in range(n)]
            for jj in range(j)
        ])
        x0[lay.r:lay.r + n] = np.min(rate0, axis=0) - max(1e-6, SHIFT)

    scale = np.ones(lay.dim)
    scale[lay.qx:lay.qx + n] = POS_SCALE
    scale[lay.qy:lay.qy + n] = POS_SCALE
    if not frozen:
        scale[lay.z:lay.z + n] = POS_SCALE
    scale[lay.zeta:lay.zeta + k * n] = zeta_m.ravel()
    scale[lay.eta:lay.eta + j * n] = np.maximum(eta0, eta_floor).ravel()

    return ConcaveProgram(dim=lay.dim, objective=objective, constraints=blocks,
                          box=(lb, ub), x0=x0, var_scale=scale)


def extract_trajectory(s: Scenario, x, mode: ColludeMode,
                       altitude_fixed=None) -> Trajectory:
    """Read the trajectory out of a solver point for this scenario/mode."""
    frozen = altitude_fixed is not None
    lay = Layout(n=s.n_slots, k=s.n_gr, j=s.n_eav,
                 with_slack=(mode is ColludeMode.NONCOLLUDING),
                 with_altitude=not frozen)
    qx, qy = lay.get_q(x)
    q = np.vstack([s.q_start, np.column_stack([qx, qy]), s.q_end])
    if frozen:
        z = np.asarray(altitude_fixed, dtype=float).copy()
    else:
        zi = lay.get_z(x)
        z = np.concatenate([[s.z_start], zi, [s.z_end]])
    return Trajectory(q=q, z=z)


def true_average_rate(s: Scenario, traj: Trajectory, p: PowerSchedule,
                      mode: ColludeMode) -> float:
    """Mean clamped secrecy rate over the interior slots."""
    g = slot_gains(s, traj, mode)
    return float(np.mean(slot_rates(g, p.p, clamp=True)))


def sca_optimize_traj(s: Scenario, p: PowerSchedule, traj_init: Trajectory,
                      mode: ColludeMode, max_iters: int = DEFAULT_MAX_ITERS,
                      rel_tol: float = DEFAULT_REL_TOL,
                      solver_tol: float = DEFAULT_SOLVER_TOL,
                      solver_max_iters: int = barrier.DEFAULT_MAX_ITERS,
                      altitude_fixed=None, trace_hook=None) -> Trajectory:
    """Iterate convex rounds from ``traj_init``; returns the best iterate.

    A candidate that lowers the true average rate is discarded and stops
    the loop, so the accepted sequence is non-decreasing.
    """
    traj = traj_init.copy()
    rate = true_average_rate(s, traj, p, mode)
    best_traj, best_rate = traj, rate
    for it in range(1, max_iters + 1):
        prog = build_subproblem(s, traj, p, mode, altitude_fixed=altitude_fixed)
        rep = barrier.solve(prog, tol=solver_tol, max_iters=solver_max_iters)
        if rep.status is SolveStatus.NUMERIC_FAILURE:
            raise SolverFailure(it, rep)
        cand = extract_trajectory(s, rep.x_star, mode, altitude_fixed=altitude_fixed)
        cand_rate = true_average_rate(s, cand, p, mode)
        if trace_hook is not None:
            trace_hook({"iter": it, "true_avg_rate": cand_rate,
                        "surrogate_value": rep.objective_value,
                        "solver_iters": rep.barrier_iterations})
        if cand_rate < rate - 1e-12 * max(1.0, abs(rate)):
            break
        gain = cand_rate - rate
        traj, rate = cand, cand_rate
        if rate > best_rate:
            best_traj, best_rate = traj, rate
        if gain < rel_tol * max(abs(rate), 1e-9):
            break
    return best_traj
