"""Fixed-placement solvers: best altitude per horizontal point, the
full-power-or-off rule, and a multi-resolution horizontal search.

The altitude subproblem is solved on the sign of the analytic rate
derivative in z.  Under non-colluding eavesdroppers the unclamped rate is
unimodal in altitude, so a single sign bisection suffices; under colluding
eavesdroppers the derivative may have several roots, which are bracketed
on a uniform scan and refined by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ColludeMode, Placement, log2_1p, placement_rate
from .scenario import Scenario

_LN2 = math.log(2.0)

ALT_BRACKET_TOL = 1e-3   # meters, bisection bracket width
SCAN_POINTS = 512        # derivative scan density for the colluding case
FINAL_GRID_STEP = 0.5    # meters, horizontal refinement stops at this step
REGION_PAD = 200.0       # meters, default search box inflation around the nodes


@dataclass
class StaticSolution:
    placement: Placement
    rate: float              # bps/Hz, clamped
    mode: ColludeMode
    altitude_profile: np.ndarray | None = None  # rows: x, y, z_star, p_star, rate


def _hdist2(s: Scenario, qs):
    """Squared horizontal distances, shapes (K, M) and (J, M) for qs (M, 2)."""
    qs = np.atleast_2d(np.asarray(qs, dtype=float))
    db = np.sum((qs[None, :, :] - s.gr_positions[:, None, :]) ** 2, axis=-1)
    de = np.sum((qs[None, :, :] - s.eav_positions[:, None, :]) ** 2, axis=-1)
    return db, de


def _ab_terms(s: Scenario, db2, de2, z, mode: ColludeMode):
    """Combined legit gain A, eavesdropper gain B and their z-derivatives.

    db2, de2: (K, ...) and (J, ...) squared horizontal distances; z broadcasts.
    """
    c = s.beta0 / s.sigma2
    ub = db2 + z ** 2
    ue = de2 + z ** 2
    gb = c * ub ** (-s.alpha / 2.0)
    ge = c * ue ** (-s.alpha / 2.0)
    a = np.sum(gb, axis=0)
    da = -s.alpha * z * np.sum(gb / ub, axis=0)
    if mode is ColludeMode.NONCOLLUDING:
        # the strongest eavesdropper is the horizontally nearest one at any z
        jstar = np.argmax(ge, axis=0)
        gsel = np.take_along_axis(ge, jstar[None, ...], axis=0)[0]
        usel = np.take_along_axis(ue, jstar[None, ...], axis=0)[0]
        b = gsel
        dbv = -s.alpha * z * gsel / usel
    else:
        b = np.sum(ge, axis=0)
        dbv = -s.alpha * z * np.sum(ge / ue, axis=0)
    return a, b, da, dbv


def rate_unclamped(s: Scenario, q, z, p, mode: ColludeMode):
    """Signed secrecy rate at full generality (vectorized over q rows / z)."""
    scalar = np.asarray(q).ndim == 1
    db2, de2 = _hdist2(s, q)
    a, b, _, _ = _ab_terms(s, db2, de2, np.asarray(z, dtype=float), mode)
    out = log2_1p(a * p) - log2_1p(b * p)
    return float(out[0]) if scalar else out


def rate_altitude_derivative(s: Scenario, q, z, p, mode: ColludeMode):
    """Analytic d/dz of the signed secrecy rate at fixed q and power."""
    scalar = np.asarray(q).ndim == 1
    db2, de2 = _hdist2(s, q)
    a, b, da, dbv = _ab_terms(s, db2, de2, np.asarray(z, dtype=float), mode)
    out = (p / _LN2) * (da / (1.0 + p * a) - dbv / (1.0 + p * b))
    return float(out[0]) if scalar else out


def _deriv_batch(s, db2, de2, z, mode):
    a, b, da, dbv = _ab_terms(s, db2, de2, z, mode)
    return (s.p_static / _LN2) * (da / (1.0 + s.p_static * a) - dbv / (1.0 + s.p_static * b))


def _alt_opt_noncolluding_batch(s: Scenario, qs):
    """Vectorized unimodal altitude bisection; qs (M, 2) -> z* (M,)."""
    db2, de2 = _hdist2(s, qs)
    m = db2.shape[1]
    zlo = np.full(m, s.z_min)
    zhi = np.full(m, s.z_max)
    d_lo = _deriv_batch(s, db2, de2, zlo, ColludeMode.NONCOLLUDING)
    d_hi = _deriv_batch(s, db2, de2, zhi, ColludeMode.NONCOLLUDING)
    out = np.where(d_lo <= 0.0, s.z_min, np.where(d_hi >= 0.0, s.z_max, np.nan))
    todo = np.isnan(out)
    if todo.any():
        lo = zlo[todo].copy()
        hi = zhi[todo].copy()
        dbt, det = db2[:, todo], de2[:, todo]
        while np.max(hi - lo) > ALT_BRACKET_TOL:
            mid = 0.5 * (lo + hi)
            d_mid = _deriv_batch(s, dbt, det, mid, ColludeMode.NONCOLLUDING)
            up = d_mid > 0.0
            lo = np.where(up, mid, lo)
            hi = np.where(up, hi, mid)
        out[todo] = 0.5 * (lo + hi)
    return out


def _alt_opt_colluding_batch(s: Scenario, qs):
    """Vectorized scan + bracket bisection; qs (M, 2) -> z** (M,)."""
    mode = ColludeMode.COLLUDING
    db2, de2 = _hdist2(s, qs)
    m = db2.shape[1]
    if s.z_max - s.z_min <= ALT_BRACKET_TOL:
        return np.full(m, 0.5 * (s.z_min + s.z_max))
    zs = np.linspace(s.z_min, s.z_max, SCAN_POINTS)
    deriv = _deriv_batch(s, db2[:, :, None], de2[:, :, None], zs[None, :], mode)  # (M, S)
    sign = deriv > 0.0
    flips = sign[:, :-1] != sign[:, 1:]
    pidx, iidx = np.nonzero(flips)

    # refine every bracket simultaneously
    lo = zs[iidx].copy()
    hi = zs[iidx + 1].copy()
    dbt, det = db2[:, pidx], de2[:, pidx]
    d_lo = deriv[pidx, iidx]
    while lo.size and np.max(hi - lo) > ALT_BRACKET_TOL:
        mid = 0.5 * (lo + hi)
        d_mid = _deriv_batch(s, dbt, det, mid, mode)
        same = (d_mid > 0.0) == (d_lo > 0.0)
        lo = np.where(same, mid, lo)
        d_lo = np.where(same, d_mid, d_lo)
        hi = np.where(same, hi, mid)
    roots = 0.5 * (lo + hi)

    # candidates: interval endpoints plus refined stationary points
    cand_p = np.concatenate([np.arange(m), np.arange(m), pidx])
    cand_z = np.concatenate([np.full(m, s.z_min), np.full(m, s.z_max), roots])
    a, b, _, _ = _ab_terms(s, db2[:, cand_p], de2[:, cand_p], cand_z, mode)
    cand_r = log2_1p(a * s.p_static) - log2_1p(b * s.p_static)
    # per point: best rate, ties broken toward the lowest altitude
    order = np.lexsort((cand_z, -cand_r, cand_p))
    first = np.unique(cand_p[order], return_index=True)[1]
    return cand_z[order][first]


def altitude_opt_noncolluding(s: Scenario, q) -> float:
    """Altitude maximizing the signed rate at full power, non-colluding model."""
    return float(_alt_opt_noncolluding_batch(s, np.asarray(q, dtype=float).reshape(1, 2))[0])


def altitude_opt_colluding(s: Scenario, q) -> float:
    """Altitude maximizing the signed rate at full power, colluding model."""
    return float(_alt_opt_colluding_batch(s, np.asarray(q, dtype=float).reshape(1, 2))[0])


def altitude_opt(s: Scenario, q, mode: ColludeMode) -> float:
    if mode is ColludeMode.NONCOLLUDING:
        return altitude_opt_noncolluding(s, q)
    return altitude_opt_colluding(s, q)


def power_threshold(s: Scenario, q, z_candidate, mode: ColludeMode):
    """Full power if the best-altitude rate is positive, else off at z_min."""
    rbar = float(rate_unclamped(s, np.asarray(q, dtype=float).reshape(1, 2),
                                z_candidate, s.p_static, mode)[0])
    if rbar > 0.0:
        return s.p_static, float(z_candidate)
    return 0.0, s.z_min


def default_region(s: Scenario, pad: float = REGION_PAD):
    """Bounding box of all ground nodes inflated by ``pad`` meters."""
    nodes = np.vstack([s.gr_positions, s.eav_positions])
    return (float(nodes[:, 0].min() - pad), float(nodes[:, 0].max() + pad),
            float(nodes[:, 1].min() - pad), float(nodes[:, 1].max() + pad))


def _evaluate_points(s: Scenario, mode: ColludeMode, qs, chunk=4096):
    """Per point: best altitude, thresholded power/altitude and clamped rate.

    Returns (z_star, p_star, z_used, rate) arrays; ``z_star`` is the raw
    altitude optimum, ``z_used``/``p_star`` apply the on/off rule.
    """
    qs = np.asarray(qs, dtype=float)
    m = qs.shape[0]
    z_star = np.empty(m)
    rbar = np.empty(m)
    opt = (_alt_opt_noncolluding_batch if mode is ColludeMode.NONCOLLUDING
           else _alt_opt_colluding_batch)
    for i in range(0, m, chunk):
        sl = slice(i, min(i + chunk, m))
        z_star[sl] = opt(s, qs[sl])
        rbar[sl] = rate_unclamped(s, qs[sl], z_star[sl], s.p_static, mode)
    on = rbar > 0.0
    p_star = np.where(on, s.p_static, 0.0)
    z_used = np.where(on, z_star, s.z_min)
    rate = np.where(on, rbar, 0.0)
    return z_star, p_star, z_used, rate


def _grid_axes(lo, hi, step):
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def field_map(s: Scenario, mode: ColludeMode, region=None, step: float = 5.0):
    """Evaluate the placement rule on a regular grid.

    Returns an (n, 5) array with rows ``x, y, z_star, p_star, rate`` in
    x-major, y-minor order.  ``z_star`` is z_min at zero-power points.
    """
    if region is None:
        region = default_region(s)
    x0, x1, y0, y1 = region
    xs = _grid_axes(x0, x1, step)
    ys = _grid_axes(y0, y1, step)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    qs = np.column_stack([gx.ravel(), gy.ravel()])
    _, p_star, z_used, rate = _evaluate_points(s, mode, qs)
    return np.column_stack([qs, z_used, p_star, rate])


def solve_static(s: Scenario, mode: ColludeMode, region=None,
                 coarse_step: float = 5.0, keep_field: bool = False) -> StaticSolution:
    """Multi-resolution horizontal search for the best placement.

    The coarse grid covers ``region``; each refinement re-grids a
    3x3-coarse-cell neighborhood of the incumbent at a tenth of the step
    until the step reaches ``FINAL_GRID_STEP``.  Rate ties resolve to the
    lexicographically smallest (x, y).
    """
    if region is None:
        region = default_region(s)
    x0, x1, y0, y1 = region
    if not (x1 >= x0 and y1 >= y0):
        raise ValueError("empty search region")
    if not coarse_step > 0:
        raise ValueError("coarse_step must be positive")

    best = None   # (rate, x, y, p, z)
    profile = None
    step = float(coarse_step)
    xs = _grid_axes(x0, x1, step)
    ys = _grid_axes(y0, y1, step)
    while True:
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        qs = np.column_stack([gx.ravel(), gy.ravel()])
        z_star, p_star, z_used, rate = _evaluate_points(s, mode, qs)
        if keep_field and profile is None:
            profile = np.column_stack([qs, z_used, p_star, rate])
        # first maximum in x-major order = lexicographically smallest (x, y)
        i = int(np.argmax(rate))
        cand = (float(rate[i]), float(qs[i, 0]), float(qs[i, 1]),
                float(p_star[i]), float(z_used[i]))
        if best is None or cand[0] > best[0]:
            best = cand
        if step <= FINAL_GRID_STEP:
            break
        # 3x3-coarse-cell neighborhood of the incumbent at a tenth of the step
        step /= 10.0
        offs = step * np.arange(-15, 16)
        xs = best[1] + offs
        ys = best[2] + offs
        xs = xs[(xs >= x0 - 1e-9) & (xs <= x1 + 1e-9)]
        ys = ys[(ys >= y0 - 1e-9) & (ys <= y1 + 1e-9)]

    _, x, y, p, z = best
    pl = Placement(q=np.array([x, y]), z=z, p=p)
    return StaticSolution(placement=pl, rate=placement_rate(s, pl, mode),
                         mode=mode, altitude_profile=profile)
