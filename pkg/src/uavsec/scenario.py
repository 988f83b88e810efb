"""Problem instances: node geometry, channel constants, UAV limits, slot grid.

A scenario is loaded from a flat ``key = value`` text file (one key per
line, ``#`` comments).  Power and gain keys may be given either in linear
units or with a ``_dbm``/``_db`` suffix; everything is converted to linear
units (mW, meters, dimensionless gains) at ingestion and stays linear
inside the library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np


class ScenarioError(ValueError):
    """Base class for scenario ingestion problems."""


class ParseError(ScenarioError):
    """Malformed scenario file."""


class ValidationError(ScenarioError):
    """A scenario invariant is violated; message names the invariant."""


class InfeasibilityError(ValidationError):
    """Mission endpoints are not reachable within the slot budget."""


def db_to_linear(x_db):
    return 10.0 ** (x_db / 10.0)


# keys that accept a _db / _dbm suffixed alternative
_DB_KEYS = {
    "beta0": "beta0_db",
    "sigma2": "sigma2_dbm",
    "p_static": "p_static_dbm",
    "p_ave": "p_ave_dbm",
    "p_peak": "p_peak_dbm",
}

_SCALAR_KEYS = (
    "alpha", "beta0", "sigma2", "z_min", "z_max", "p_static", "p_ave",
    "p_peak", "v_h", "v_up", "v_down", "t_s", "z_start", "z_end",
)
_PAIR_KEYS = ("q_start", "q_end")
_LIST_KEYS = ("gr_positions", "eav_positions")
_INT_KEYS = ("n_slots",)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable problem instance. All values in linear units."""

    gr_positions: np.ndarray        # (K, 2) meters
    eav_positions: np.ndarray       # (J, 2) meters
    alpha: float                    # path-loss exponent
    beta0: float                    # reference channel gain at 1 m, linear
    sigma2: float                   # receiver noise power, mW
    z_min: float
    z_max: float
    p_static: float                 # max power in the fixed-placement setting, mW
    p_ave: float                    # average power budget, mW
    p_peak: float                   # peak power budget, mW
    v_h: float                      # max horizontal speed, m/s
    v_up: float                     # max ascending speed, m/s
    v_down: float                   # max descending speed, m/s
    t_s: float                      # slot duration, s
    n_slots: int
    q_start: np.ndarray             # (2,)
    q_end: np.ndarray               # (2,)
    z_start: float
    z_end: float

    def __post_init__(self):
        for name in ("gr_positions", "eav_positions", "q_start", "q_end"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if name in _LIST_KEYS:
                arr = arr.reshape(-1, 2)
            else:
                arr = arr.reshape(2)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        _validate(self)

    @property
    def n_gr(self) -> int:
        return self.gr_positions.shape[0]

    @property
    def n_eav(self) -> int:
        return self.eav_positions.shape[0]

    @property
    def duration(self) -> float:
        """Total mission time T, seconds (derived: N * t_s)."""
        return self.n_slots * self.t_s

    @property
    def step_h(self) -> float:
        """Max horizontal displacement per slot, meters."""
        return self.v_h * self.t_s

    @property
    def step_up(self) -> float:
        return self.v_up * self.t_s

    @property
    def step_down(self) -> float:
        return self.v_down * self.t_s

    def with_slots(self, n_slots: int) -> "Scenario":
        """Copy of this scenario with a different slot count (re-validated)."""
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw["n_slots"] = int(n_slots)
        return Scenario(**kw)


def _validate(s: Scenario):
    if s.n_gr < 1:
        raise ValidationError("K >= 1: at least one ground receiver required")
    if s.n_eav < 1:
        raise ValidationError("J >= 1: at least one eavesdropper required")
    if not (2.0 <= s.alpha <= 4.0):
        raise ValidationError(f"2 <= alpha <= 4 violated (alpha={s.alpha})")
    if not (s.beta0 > 0):
        raise ValidationError("beta0 > 0 violated")
    if not (s.sigma2 > 0):
        raise ValidationError("sigma2 > 0 violated")
    if not (0 < s.z_min <= s.z_max):
        raise ValidationError(
            f"0 < z_min <= z_max violated (z_min={s.z_min}, z_max={s.z_max})")
    if not (s.z_min <= s.z_start <= s.z_max):
        raise ValidationError("z_min <= z_start <= z_max violated")
    if not (s.z_min <= s.z_end <= s.z_max):
        raise ValidationError("z_min <= z_end <= z_max violated")
    if not (s.p_static > 0):
        raise ValidationError("p_static > 0 violated")
    if not (0 < s.p_ave <= s.p_peak):
        raise ValidationError(
            f"0 < p_ave <= p_peak violated (p_ave={s.p_ave}, p_peak={s.p_peak})")
    if not (s.v_h > 0 and s.t_s > 0):
        raise ValidationError("v_h > 0 and t_s > 0 required")
    if s.v_up < 0 or s.v_down < 0:
        raise ValidationError("v_up, v_down must be non-negative")
    if s.n_slots < 1:
        raise ValidationError("n_slots >= 1 required")
    # endpoint reachability over N+1 displacement steps
    steps = s.n_slots + 1
    horiz = float(np.linalg.norm(s.q_end - s.q_start))
    if horiz > steps * s.step_h + 1e-9:
        raise InfeasibilityError(
            f"endpoints unreachable: |q_end - q_start| = {horiz:.6g} m exceeds "
            f"(N+1)*v_h*t_s = {steps * s.step_h:.6g} m")
    dz = s.z_end - s.z_start
    if dz > steps * s.step_up + 1e-9 or -dz > steps * s.step_down + 1e-9:
        raise InfeasibilityError(
            f"altitude change {dz:.6g} m unreachable within "
            f"(N+1) slots at the vertical speed limits")


def _parse_pair(text, key):
    parts = text.split(",")
    if len(parts) != 2:
        raise ParseError(f"{key}: expected 'x,y', got {text!r}")
    try:
        return [float(parts[0]), float(parts[1])]
    except ValueError as e:
        raise ParseError(f"{key}: {e}") from None


def loads_scenario(text: str) -> Scenario:
    """Parse scenario file content."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip().lower()
        val = val.strip()
        if key in raw:
            raise ParseError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = val

    kw = {}
    for key, dbkey in _DB_KEYS.items():
        if key in raw and dbkey in raw:
            raise ParseError(f"give either {key!r} or {dbkey!r}, not both")
        if dbkey in raw:
            try:
                kw[key] = db_to_linear(float(raw.pop(dbkey)))
            except ValueError as e:
                raise ParseError(f"{dbkey}: {e}") from None

    for key, val in raw.items():
        if key in _SCALAR_KEYS:
            if key in kw:
                raise ParseError(f"give either {key!r} or its dB form, not both")
            try:
                kw[key] = float(val)
            except ValueError as e:
                raise ParseError(f"{key}: {e}") from None
        elif key in _INT_KEYS:
            try:
                kw[key] = int(val)
            except ValueError as e:
                raise ParseError(f"{key}: {e}") from None
        elif key in _PAIR_KEYS:
            kw[key] = _parse_pair(val, key)
        elif key in _LIST_KEYS:
            items = [p for p in val.split(";") if p.strip()]
            kw[key] = [_parse_pair(p.strip(), key) for p in items]
        else:
            raise ParseError(f"unknown key {key!r}")

    missing = [f.name for f in fields(Scenario) if f.name not in kw]
    if missing:
        raise ParseError(f"missing keys: {', '.join(sorted(missing))}")
    return Scenario(**kw)


def load_scenario(path) -> Scenario:
    """Load and validate a scenario file."""
    with open(path, "r", encoding="utf-8") as fh:
        return loads_scenario(fh.read())


def dumps_scenario(s: Scenario) -> str:
    """Serialize in the flat key=value format, linear units, full precision.

    Round-trips exactly: loads_scenario(dumps_scenario(s)) == s field-wise.
    """
    def pair(a):
        return f"{a[0]!r},{a[1]!r}"

    lines = [
        "gr_positions = " + "; ".join(pair(w) for w in s.gr_positions),
        "eav_positions = " + "; ".join(pair(w) for w in s.eav_positions),
    ]
    for key in _SCALAR_KEYS:
        lines.append(f"{key} = {getattr(s, key)!r}")
    lines.append(f"n_slots = {s.n_slots}")
    lines.append("q_start = " + pair(s.q_start))
    lines.append("q_end = " + pair(s.q_end))
    return "\n".join(lines) + "\n"


def save_scenario(s: Scenario, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_scenario(s))


@dataclass
class Trajectory:
    """Per-slot 3D waypoints. Index 0 and N+1 are the fixed mission endpoints."""

    q: np.ndarray     # (N+2, 2) horizontal positions, m
    z: np.ndarray     # (N+2,) altitudes, m

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.q.ndim != 2 or self.q.shape[1] != 2 or self.z.shape != (self.q.shape[0],):
            raise ValueError("trajectory needs q of shape (N+2, 2) and z of shape (N+2,)")

    @property
    def n_slots(self) -> int:
        return self.q.shape[0] - 2

    def copy(self) -> "Trajectory":
        return Trajectory(self.q.copy(), self.z.copy())


_TOL = 1e-6  # meters, kinematic tolerance


def validate_trajectory(s: Scenario, traj: Trajectory):
    """Check mobility, altitude and endpoint constraints.

    Returns (True, None) or (False, description-of-first-violation).
    """
    n = s.n_slots
    if traj.q.shape[0] != n + 2:
        return False, f"expected {n + 2} waypoints, got {traj.q.shape[0]}"
    if not (np.array_equal(traj.q[0], s.q_start) and traj.z[0] == s.z_start):
        return False, "waypoint 0 does not equal the scenario start point"
    if not (np.array_equal(traj.q[-1], s.q_end) and traj.z[-1] == s.z_end):
        return False, f"waypoint {n + 1} does not equal the scenario end point"

    steps = np.linalg.norm(np.diff(traj.q, axis=0), axis=1)
    bad = np.nonzero(steps > s.step_h + _TOL)[0]
    if bad.size:
        k = bad[0]
        return False, (f"horizontal step n={k} of {steps[k]:.6g} m exceeds "
                       f"max displacement {s.step_h:.6g} m")
    dz = np.diff(traj.z)
    bad = np.nonzero(dz > s.step_up + _TOL)[0]
    if bad.size:
        k = bad[0]
        return False, (f"ascent n={k} of {dz[k]:.6g} m exceeds "
                       f"max climb {s.step_up:.6g} m")
    bad = np.nonzero(-dz > s.step_down + _TOL)[0]
    if bad.size:
        k = bad[0]
        return False, (f"descent n={k} of {-dz[k]:.6g} m exceeds "
                       f"max descent {s.step_down:.6g} m")
    zi = traj.z[1:-1]
    bad = np.nonzero((zi < s.z_min - _TOL) | (zi > s.z_max + _TOL))[0]
    if bad.size:
        k = bad[0]
        return False, (f"altitude z[{k + 1}]={zi[k]:.6g} m outside "
                       f"[{s.z_min:.6g}, {s.z_max:.6g}]")
    return True, None
