"""Command-line front end: ``mirror-vlasov {run,converge,diagnose,selftest}``."""
from __future__ import annotations

import argparse
import glob
import logging
import os
import re
import sys

import numpy as np

from .config import ConfigError, RunConfig, parse_config
from .convergence import CONV_COLUMNS, run_pair, velocity_growth_check
from .coulomb import field_all
from .diagnostics import (DIAG_COLUMNS, DiagnosticsRow, DiagnosticsTracker,
                          decay_fit, density_histogram, energy_density, lp53_check, mollifier_eval,
                          q_from_density, slab_masses, time_averaged_field, write_csv)
from .dynamics import SimulationError, run, min_margin
from .initial_data import (read_ensemble_csv, sample_ensemble, write_ensemble_csv)
from .selftest import run_selftest

log = logging.getLogger("mirror_vlasov")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_SELFTEST = 0, 2, 3, 4


def load_config(args) -> RunConfig:
    try:
        with open(args.config) as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {args.config}") from None
    cfg = parse_config(text, args.set)
    if getattr(args, "output", None):
        cfg.output_dir = args.output
    return cfg


def initial_ensemble(cfg: RunConfig):
    return sample_ensemble(cfg.geometry, cfg.initial, cfg.n_per_slab, cfg.seed)


def cmd_run(args) -> int:
    cfg = load_config(args)
    os.makedirs(cfg.output_dir, exist_ok=True)
    ens = initial_ensemble(cfg)
    fc = cfg.field.resolve(ens)
    rows = []
    tracker = {}

    def on_record(traj, rec):
        if "t" not in tracker:
            tracker["t"] = DiagnosticsTracker(traj, cfg.diagnostics.mu_spacing)
        rows.append(tracker["t"].row(rec))
        if not args.no_snapshots:
            write_ensemble_csv(os.path.join(cfg.output_dir, f"snap_{rec.step}.csv"),
                               rec.ensemble(traj.initial))

    log.info("running %d particles to t=%g (dt=%g, softening=%.4g)", len(ens),
             cfg.stepping.t_end, cfg.stepping.dt, fc.softening)
    try:
        traj = run(ens, fc, cfg.stepping, workers=args.workers, on_record=on_record)
    finally:
        if rows:
            write_csv(os.path.join(cfg.output_dir, "diag.csv"), DIAG_COLUMNS, rows,
                      "one row per recorded time")
    _write_profiles(cfg, traj)
    _write_averages(cfg, traj)
    last = rows[-1]
    print(f"t={last.t:g}  Vmax={last.Vmax:.4g}  R(t)={last.Rt:.4g}  sup|E|={last.supE:.4g}  "
          f"Q={last.Q:.4g}  Qratio={last.Qratio:.4g}  minMargin={last.minMargin:.4g}  "
          f"C3fit={last.C3fit:.4g}")
    print(f"max Qratio={max(r.Qratio for r in rows):.4g}  "
          f"min margin={min(r.minMargin for r in rows):.4g}  outputs in {cfg.output_dir}")
    return EXIT_OK


def _write_profiles(cfg: RunConfig, traj):
    """Q(R) and the rho^(5/3) ratio at mu = 0 for R in R_list, at t = 0 and t = T."""
    geo = cfg.geometry
    out = []
    ends = [traj.records[0], traj.records[-1]]
    dens = []
    for rec in ends:
        snap = rec.ensemble(traj.initial)
        dens.append((snap, energy_density(snap, traj.field_config)))
    for R in cfg.diagnostics.R_list:
        spacing = min(cfg.diagnostics.mu_spacing, R / 2)
        row = [float(R)]
        for snap, e in dens:
            row.append(q_from_density(snap.pos[:, 0], e, R, geo.L, spacing).Q)
        for snap, e in dens:
            W = float(np.sum(e * mollifier_eval(np.abs(snap.pos[:, 0]) / R)))
            hist = density_histogram(snap, cfg.diagnostics.cell_size)
            row.append(lp53_check(hist, 0.0, R, W))
        out.append(row)
    write_csv(os.path.join(cfg.output_dir, "qr.csv"),
              ("R", "Q0", "QT", "lp53_0", "lp53_T"), out,
              "Q(R) at t=0 and t=T; rho^(5/3) integral over |x1|<=R divided by W(0,R)")


def _write_averages(cfg: RunConfig, traj):
    rows = []
    t_last = traj.records[-1].t
    for t, delta in cfg.diagnostics.average_windows:
        if t + delta > t_last + 1e-12 or delta < cfg.stepping.dt:
            continue
        vals = np.array([time_averaged_field(traj, pid, t, delta) for pid in traj.ids])
        rows.append((t, delta, float(vals.mean()), float(vals.max())))
    write_csv(os.path.join(cfg.output_dir, "averages.csv"),
              ("t", "delta", "meanE", "maxE"), rows,
              "time-averaged |E| over [t, t+delta]: mean and max over particles")


def _parse_cutoffs(items):
    pairs = []
    for item in items or []:
        vals = [float(x) for x in item.split(",") if x.strip()]
        if len(vals) == 1:
            vals.append(2 * vals[0])
        if len(vals) != 2 or not 0 < vals[0] < vals[1]:
            raise ConfigError(f"--cutoffs expects 'N,Nprime' with 0 < N < Nprime, got '{item}'")
        pairs.append(tuple(vals))
    return pairs


def cmd_converge(args) -> int:
    cfg = load_config(args)
    pairs = _parse_cutoffs(args.cutoffs)
    if not pairs:
        n = cfg.initial.N_cutoff
        if n is None:
            raise ConfigError("no --cutoffs given and initial_data.N_cutoff is unbounded")
        pairs = [(n / 2.0, n)]
    base = initial_ensemble(cfg)
    top = max(p[1] for p in pairs)
    if cfg.initial.N_cutoff is not None and cfg.initial.N_cutoff < top:
        raise ConfigError("initial_data.N_cutoff must be unbounded or >= the largest cutoff")
    fc = cfg.field.resolve(base)
    os.makedirs(cfg.output_dir, exist_ok=True)
    rows = []
    for N, Np in pairs:
        gauge, ta, tb = run_pair(base, N, Np, fc, cfg.stepping, args.workers,
                                 return_trajectories=True)
        rows.extend(gauge.rows())
        ga, gb = velocity_growth_check(ta), velocity_growth_check(tb)
        print(f"N={N:g} N'={Np:g}: matched={gauge.matched} sigma(T)={gauge.sigma[-1]:.6g} "
              f"growth(N)={ga[0]:.4g} growth(N')={gb[0]:.4g}")
    write_csv(os.path.join(cfg.output_dir, "conv.csv"), CONV_COLUMNS, rows,
              "sup over matched particles of position gap (delta) and velocity gap (eta)")
    return EXIT_OK


def _snapshot_files(directory):
    files = glob.glob(os.path.join(directory, "snap_*.csv"))
    keyed = []
    for f in files:
        m = re.fullmatch(r"snap_(\d+)\.csv", os.path.basename(f))
        if m:
            keyed.append((int(m.group(1)), f))
    return [f for _, f in sorted(keyed)]


def cmd_diagnose(args) -> int:
    """Recompute diag columns from snapshots; residual columns need the
    in-run accumulators and are written as nan."""
    cfg = load_config(args)
    files = _snapshot_files(cfg.output_dir)
    if not files:
        raise FileNotFoundError(f"no snap_<step>.csv files in {cfg.output_dir}")
    snaps = [read_ensemble_csv(f, cfg.geometry, cfg.initial, cfg.seed) for f in files]
    fc = cfg.field.resolve(snaps[0])
    geo = cfg.geometry
    x1_0 = snaps[0].pos[:, 0]
    e_0 = energy_density(snaps[0], fc)
    rows = []
    vmax = max(cfg.stepping.max_speed_floor, float(snaps[0].speeds().max(initial=0)))
    Rt, t_prev = 1.0, snaps[0].time
    for snap in snaps:
        Rt += vmax * (snap.time - t_prev)
        t_prev = snap.time
        vmax = max(vmax, float(snap.speeds().max(initial=0)))
        e = energy_density(snap, fc)
        spacing = min(cfg.diagnostics.mu_spacing, Rt / 2)
        Q = q_from_density(snap.pos[:, 0], e, Rt, geo.L, spacing).Q
        Q0 = q_from_density(x1_0, e_0, Rt, geo.L, spacing).Q
        E = field_all(snap, fc, workers=args.workers)
        supE = float(np.linalg.norm(E, axis=1).max(initial=0))
        c3 = decay_fit(slab_masses(snap), cfg.initial.alpha).C_fit
        rows.append(DiagnosticsRow(snap.time, vmax, Rt, supE, Q, Q / Q0,
                                   min_margin(geo, snap.pos), float("nan"),
                                   float("nan"), c3))
    out = os.path.join(cfg.output_dir, "diag_recomputed.csv")
    write_csv(out, DIAG_COLUMNS, rows,
              "recomputed from snapshots; Vmax/Rt sampled at snapshot times only")
    print(f"{len(rows)} snapshots diagnosed -> {out}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    return EXIT_OK if run_selftest() else EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mirror-vlasov", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. stepping.dt=5e-4")
        sp.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="threads for field evaluation (results do not depend on it)")
        sp.add_argument("--output", help="output directory (overrides output_dir)")

    sp = sub.add_parser("run", help="simulate and write diag.csv and snapshots")
    common(sp)
    sp.add_argument("--no-snapshots", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("converge", help="paired cutoff runs, writes conv.csv")
    common(sp)
    sp.add_argument("--cutoffs", action="append", metavar="N,Nprime",
                    help="cutoff pair; repeat for several pairs; a single N means (N, 2N)")
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("diagnose", help="recompute diagnostics from stored snapshots")
    common(sp)
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("selftest", help="analytic identity checks")
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
