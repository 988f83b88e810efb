"""Smooth concave maximization under convex inequality constraints.

Log-barrier interior-point scheme: maximize f(x) + (1/t) * sum_i log(-c_i(x))
by gradient ascent (Barzilai-Borwein trial steps, Armijo backtracking with
shrink 0.5 and slope factor 1e-4), multiplying t by 10 from t = 1 until the
duality-gap bound m/t drops below the requested tolerance.  Every iterate
stays strictly feasible.

Constraints are supplied either as scalar oracles ``x -> (value, grad)`` for
``c(x) <= 0`` or as vectorized blocks (many constraints evaluated at once);
box bounds are folded in as linear constraints.  An optional per-variable
scale vector lets callers precondition badly scaled problems; the ascent
then runs in the scaled coordinates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

ARMIJO_SLOPE = 1e-4
ARMIJO_SHRINK = 0.5
MIN_STEP = 1e-14
DEFAULT_MAX_ITERS = 10_000
DEFAULT_TOL = 1e-6


class SolveStatus(enum.Enum):
    CONVERGED = "converged"
    ITERATION_LIMIT = "iteration_limit"
    NUMERIC_FAILURE = "numeric_failure"


class ConstraintBlock:
    """A batch of inequality constraints c_i(x) <= 0 evaluated together.

    Subclasses implement ``values(x) -> (count,)`` and
    ``wgrad(x, w) -> (dim,)`` returning sum_i w_i * grad c_i(x).
    """

    count: int = 0

    def values(self, x):
        raise NotImplementedError

    def wgrad(self, x, w):
        raise NotImplementedError


class _ScalarOracleBlock(ConstraintBlock):
    count = 1

    def __init__(self, fn):
        self.fn = fn

    def values(self, x):
        v, _ = self.fn(x)
        return np.array([v], dtype=float)

    def wgrad(self, x, w):
        _, g = self.fn(x)
        return w[0] * np.asarray(g, dtype=float)


class _BoxBlock(ConstraintBlock):
    """lb <= x <= ub as linear rows (only finite bounds contribute)."""

    def __init__(self, dim, lb, ub):
        lb = np.full(dim, -np.inf) if lb is None else np.asarray(lb, dtype=float)
        ub = np.full(dim, np.inf) if ub is None else np.asarray(ub, dtype=float)
        self.ilb = np.nonzero(np.isfinite(lb))[0]
        self.iub = np.nonzero(np.isfinite(ub))[0]
        self.lb = lb[self.ilb]
        self.ub = ub[self.iub]
        self.dim = dim
        self.count = self.ilb.size + self.iub.size

    def values(self, x):
        return np.concatenate([self.lb - x[self.ilb], x[self.iub] - self.ub])

    def wgrad(self, x, w):
        g = np.zeros(self.dim)
        np.subtract.at(g, self.ilb, w[: self.ilb.size])
        np.add.at(g, self.iub, w[self.ilb.size:])
        return g


@dataclass
class ConcaveProgram:
    """One concave maximization instance with convex <=0 constraints.

    ``objective`` maps x to (value, gradient).  ``constraints`` entries are
    scalar oracles or ConstraintBlock instances.  ``x0`` must satisfy every
    constraint and box bound strictly.
    """

    dim: int
    objective: object
    constraints: list = field(default_factory=list)
    box: tuple | None = None          # (lb, ub) arrays, entries may be +-inf
    x0: np.ndarray | None = None
    var_scale: np.ndarray | None = None


@dataclass
class SolverReport:
    x_star: np.ndarray
    objective_value: float
    kkt_residual: float
    barrier_iterations: int
    status: SolveStatus


def _as_blocks(prog: ConcaveProgram):
    blocks = []
    for c in prog.constraints:
        blocks.append(c if isinstance(c, ConstraintBlock) else _ScalarOracleBlock(c))
    if prog.box is not None:
        bb = _BoxBlock(prog.dim, prog.box[0], prog.box[1])
        if bb.count:
            blocks.append(bb)
    return blocks


def max_constraint(prog: ConcaveProgram, x) -> float:
    """Largest constraint value at x (-inf when unconstrained)."""
    blocks = _as_blocks(prog)
    if not blocks:
        return -math.inf
    return max(float(np.max(b.values(x))) for b in blocks)


def solve(prog: ConcaveProgram, tol: float = DEFAULT_TOL,
          max_iters: int = DEFAULT_MAX_ITERS) -> SolverReport:
    """Run the barrier method; returns a feasible point with gap bound m/t <= tol."""
    blocks = _as_blocks(prog)
    m = sum(b.count for b in blocks)
    sc = (np.ones(prog.dim) if prog.var_scale is None
          else np.asarray(prog.var_scale, dtype=float))
    if np.any(sc <= 0):
        raise ValueError("var_scale entries must be positive")
    if prog.x0 is None:
        raise ValueError("x0 of shape (dim,) required")
    x0 = np.asarray(prog.x0, dtype=float)
    if x0.shape != (prog.dim,):
        raise ValueError("x0 of shape (dim,) required")
    for b in blocks:
        worst = float(np.max(b.values(x0))) if b.count else -math.inf
        if worst >= 0:
            raise ValueError(f"x0 is not strictly feasible (constraint value {worst:.3g})")

    def phi(y, t):
        """Barrier objective; -inf outside the interior."""
        x = y * sc
        fv, _ = prog.objective(x)
        acc = float(fv)
        for b in blocks:
            v = b.values(x)
            if np.any(v >= 0):
                return -math.inf
            acc += float(np.sum(np.log(-v))) / t
        return acc

    def phi_grad(y, t):
        x = y * sc
        fv, gf = prog.objective(x)
        g = np.asarray(gf, dtype=float).copy()
        acc = float(fv)
        for b in blocks:
            v = b.values(x)
            acc += float(np.sum(np.log(-v))) / t
            g -= b.wgrad(x, 1.0 / (-v)) / t
        return acc, g * sc

    y = x0 / sc
    t = 1.0
    total = 0
    status = SolveStatus.CONVERGED
    gnorm = math.inf
    while True:
        gtol = max(tol, 0.03 * m / t) if m else tol
        fv, g = phi_grad(y, t)
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        alpha = 1.0 / (float(np.linalg.norm(g)) + 1e-12)
        stage_steps = 0
        stalled = False
        while gnorm > gtol and total < max_iters:
            slope = float(np.dot(g, g))
            a = min(alpha, 1e16)
            while True:
                ft = phi(y + a * g, t)
                if ft >= fv + ARMIJO_SLOPE * a * slope:
                    break
                a *= ARMIJO_SHRINK
                if a < MIN_STEP:
                    stalled = True
                    break
            if stalled:
                break
            y_new = y + a * g
            f_new, g_new = phi_grad(y_new, t)
            s = y_new - y
            dg = g - g_new
            sy = float(np.dot(s, dg))
            alpha = float(np.dot(s, s)) / sy if sy > 1e-300 else a * 2.0
            alpha = min(max(alpha, 1e-16), 1e16)
            y, fv, g = y_new, f_new, g_new
            gnorm = float(np.max(np.abs(g))) if g.size else 0.0
            total += 1
            stage_steps += 1
        if stalled and gnorm > 1e3 * gtol and stage_steps == 0:
            status = SolveStatus.NUMERIC_FAILURE
            break
        if total >= max_iters and gnorm > gtol:
            status = SolveStatus.ITERATION_LIMIT
            break
        if m == 0 or m / t <= tol:
            break
        t *= 10.0

    if status is SolveStatus.CONVERGED and gnorm > tol:
        status = SolveStatus.ITERATION_LIMIT
    x = y * sc
    fv, _ = prog.objective(x)
    return SolverReport(x_star=x, objective_value=float(fv),
                        kkt_residual=gnorm, barrier_iterations=total,
                        status=status)
