"""Command-line front end.

    uavsec plan static --scenario FILE --mode both --out DIR [--field-map]
    uavsec plan mobile --scenario FILE --mode noncolluding --scheme all \
        --n-slots 84,100 --out DIR [--trace] [--jobs 4]

Static runs write ``static_solution.csv`` (one row per mode) and, on
request, per-mode field maps.  Mobile runs write one trajectory CSV per
(scheme, N) plus a ``summary.csv``.  When both eavesdropper models are
requested the per-mode mobile files go into ``noncolluding/`` and
``colluding/`` subdirectories to keep the spec'd file names unique.

Exit codes: 0 ok, 2 validation error, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import placement, planner, sca
from .channel import ColludeMode
from .scenario import Scenario, ScenarioError, ValidationError, load_scenario

_FMT = "{:.9g}"                 # 9 significant digits on every numeric field

SUMMARY_HEADER = "scheme,mode,n_slots,avg_rate_bpshz,outer_iters,wall_seconds"
TRAJ_HEADER = "n,t_s_elapsed,x,y,z,p_mw,rate_bpshz"
STATIC_HEADER = "mode,x,y,z,p_mw,rate_bpshz"
FIELD_HEADER = "x,y,z_star,p_star,rate"
TRACE_HEADER = "iter,true_avg_rate,surrogate_value,solver_iters"


class SolverError(RuntimeError):
    pass


@dataclass
class RunManifest:
    command: str                    # "static" | "mobile"
    scenario_path: str
    modes: list
    out_dir: str
    schemes: list = field(default_factory=lambda: list(planner.ALL_SCHEMES))
    durations: list = field(default_factory=list)   # values of N (mobile)
    field_map: bool = False
    region: tuple | None = None
    step: float = 5.0
    trace: bool = False
    jobs: int = 1
    sca_rel_tol: float = sca.DEFAULT_REL_TOL
    outer_rel_tol: float = planner.OUTER_REL_TOL

    def validate(self, s: Scenario):
        if not os.path.exists(self.scenario_path):
            raise ValidationError(f"scenario file not found: {self.scenario_path}")
        if self.command == "mobile":
            n_min = min_feasible_slots(s)
            bad = [n for n in self.durations if n < n_min]
            if bad:
                raise ValidationError(
                    f"slot counts {bad} below the minimum feasible N={n_min} "
                    "for these mission endpoints")


def min_feasible_slots(s: Scenario) -> int:
    """Smallest N whose N+1 displacement steps can cover the endpoints."""
    horiz = float(np.linalg.norm(s.q_end - s.q_start))
    n = max(1, math.ceil(horiz / s.step_h - 1e-9) - 1)
    dz = s.z_end - s.z_start
    if dz > 0 and s.step_up > 0:
        n = max(n, math.ceil(dz / s.step_up - 1e-9) - 1)
    if dz < 0 and s.step_down > 0:
        n = max(n, math.ceil(-dz / s.step_down - 1e-9) - 1)
    return n


def _fmt_row(values):
    return ",".join(_FMT.format(v) if isinstance(v, float) else str(v)
                    for v in values)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(_fmt_row(row) + "\n")


def run_static(manifest: RunManifest):
    """Solve the fixed-placement problem per mode; returns written paths."""
    s = load_scenario(manifest.scenario_path)
    manifest.validate(s)
    os.makedirs(manifest.out_dir, exist_ok=True)
    region = manifest.region or placement.default_region(s)
    written = []
    rows = []
    for mode in manifest.modes:
        sol = placement.solve_static(s, mode, region=region,
                                     coarse_step=manifest.step)
        pl = sol.placement
        rows.append((mode.value, float(pl.q[0]), float(pl.q[1]),
                     float(pl.z), float(pl.p), float(sol.rate)))
        if manifest.field_map:
            fm = placement.field_map(s, mode, region=region, step=manifest.step)
            path = os.path.join(manifest.out_dir, f"field_{mode.value}.csv")
            _write_csv(path, FIELD_HEADER, [tuple(map(float, r)) for r in fm])
            written.append(path)
    path = os.path.join(manifest.out_dir, "static_solution.csv")
    _write_csv(path, STATIC_HEADER, rows)
    written.append(path)
    return written


def _plan_entry(args):
    """One (scheme, mode, N) plan; top-level so process pools can run it."""
    s, scheme, mode, n, sca_rel_tol, outer_rel_tol, want_trace = args
    sn = s.with_slots(n)
    trace_rows = []

    def hook(rec):
        trace_rows.append((len(trace_rows) + 1, rec["true_avg_rate"],
                           rec["surrogate_value"], rec["solver_iters"]))

    t0 = time.perf_counter()
    kw = {}
    if scheme in (planner.SCHEME_FULL3D, planner.SCHEME_2D):
        kw = {"sca_kwargs": {"rel_tol": sca_rel_tol},
              "outer_rel_tol": outer_rel_tol,
              "trace_hook": hook if want_trace else None}
    result = planner.plan_benchmark(sn, mode, scheme, **kw)
    wall = time.perf_counter() - t0
    return scheme, mode.value, n, result, wall, trace_rows


def run_mobile(manifest: RunManifest):
    """Plan every (scheme, N, mode) entry; returns written paths."""
    s = load_scenario(manifest.scenario_path)
    durations = manifest.durations or [s.n_slots]
    manifest.validate(s)
    os.makedirs(manifest.out_dir, exist_ok=True)
    split_modes = len(manifest.modes) > 1
    for mode in manifest.modes:
        if split_modes:
            os.makedirs(os.path.join(manifest.out_dir, mode.value), exist_ok=True)

    entries = [(s, scheme, mode, n, manifest.sca_rel_tol,
                manifest.outer_rel_tol, manifest.trace)
               for scheme in manifest.schemes
               for n in durations
               for mode in manifest.modes]
    if manifest.jobs > 1:
        with ProcessPoolExecutor(max_workers=manifest.jobs) as pool:
            results = list(pool.map(_plan_entry, entries))
    else:
        results = [_plan_entry(e) for e in entries]

    written = []
    summary = []
    for scheme, mode_name, n, res, wall, trace_rows in results:
        sn = s.with_slots(n)
        sub = os.path.join(manifest.out_dir, mode_name) if split_modes else manifest.out_dir
        traj = res.trajectory
        p_full = np.concatenate([[0.0], res.power.p, [0.0]])
        r_full = np.concatenate([[0.0], res.per_slot_rate, [0.0]])
        rows = [(i, float(i * sn.t_s), float(traj.q[i, 0]), float(traj.q[i, 1]),
                 float(traj.z[i]), float(p_full[i]), float(r_full[i]))
                for i in range(n + 2)]
        path = os.path.join(sub, f"traj_{scheme}_{n}.csv")
        _write_csv(path, TRAJ_HEADER, rows)
        written.append(path)
        if manifest.trace and trace_rows:
            tpath = os.path.join(sub, f"trace_{scheme}_{n}.csv")
            _write_csv(tpath, TRACE_HEADER,
                       [(i, float(r), float(sv), si) for i, r, sv, si in trace_rows])
            written.append(tpath)
        summary.append((scheme, mode_name, n, float(res.avg_rate),
                        res.outer_iterations, float(wall)))
    path = os.path.join(manifest.out_dir, "summary.csv")
    _write_csv(path, SUMMARY_HEADER, summary)
    written.append(path)
    return written


def _parse_modes(text):
    if text == "both":
        return [ColludeMode.NONCOLLUDING, ColludeMode.COLLUDING]
    return [ColludeMode(text)]


def _parse_schemes(text):
    if text == "all":
        return list(planner.ALL_SCHEMES)
    return [t for t in text.split(",") if t]


def build_parser():
    ap = argparse.ArgumentParser(prog="uavsec",
                                 description="Secrecy-rate UAV placement and trajectory planning")
    sub = ap.add_subparsers(dest="top", required=True)
    plan = sub.add_parser("plan", help="run a planning command")
    psub = plan.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario file path")
        p.add_argument("--mode", default="both",
                       choices=["noncolluding", "colluding", "both"])
        p.add_argument("--out", required=True, help="output directory")

    st = psub.add_parser("static", help="fixed-placement optimization")
    common(st)
    st.add_argument("--field-map", action="store_true",
                    help="also write per-mode field_<mode>.csv grids")
    st.add_argument("--region", default=None,
                    help="search box as x0,x1,y0,y1 (default: node box +200 m)")
    st.add_argument("--step", type=float, default=5.0, help="coarse grid step, m")

    mo = psub.add_parser("mobile", help="trajectory + power planning")
    common(mo)
    mo.add_argument("--scheme", default="all",
                    help="full3d|2d|fhf-adaptive|fhf-constant|all or a comma list")
    mo.add_argument("--n-slots", default=None,
                    help="comma-separated slot counts (default: scenario value)")
    mo.add_argument("--trace", action="store_true",
                    help="write per-iteration trace_<scheme>_<N>.csv files")
    mo.add_argument("--jobs", type=int, default=1,
                    help="concurrent (scheme, N, mode) entries")
    return ap


def manifest_from_args(args) -> RunManifest:
    region = None
    if getattr(args, "region", None):
        vals = [float(v) for v in args.region.split(",")]
        if len(vals) != 4:
            raise ValidationError("--region needs four values: x0,x1,y0,y1")
        region = tuple(vals)
    durations = []
    if getattr(args, "n_slots", None):
        durations = [int(v) for v in args.n_slots.split(",")]
    schemes = _parse_schemes(getattr(args, "scheme", "all"))
    unknown = [sch for sch in schemes if sch not in planner.ALL_SCHEMES]
    if unknown:
        raise ValidationError(f"unknown scheme(s): {', '.join(unknown)}")
    return RunManifest(command=args.command, scenario_path=args.scenario,
                       modes=_parse_modes(args.mode), out_dir=args.out,
                       schemes=schemes, durations=durations,
                       field_map=getattr(args, "field_map", False),
                       region=region, step=getattr(args, "step", 5.0),
                       trace=getattr(args, "trace", False),
                       jobs=getattr(args, "jobs", 1))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = manifest_from_args(args)
        if manifest.command == "static":
            run_static(manifest)
        else:
            run_mobile(manifest)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except sca.SolverFailure as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
