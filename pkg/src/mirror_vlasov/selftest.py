"""Analytic-identity checks run by ``mirror-vlasov selftest``."""
from __future__ import annotations

import math

import numpy as np

from .coulomb import FieldConfig, field_all, field_points
from .diagnostics import mollifier_deriv, mollifier_eval
from .dynamics import StepConfig, rotate_velocity, run
from .geometry import Geometry, eval_H, eval_h
from .initial_data import Ensemble, InitialDataParams, sample_ensemble


def check_speed_conservation():
    geo = Geometry()
    ens = Ensemble([0], [[0.0, 0.3, -0.2]], [[0.4, 0.7, -0.5]], [1.0], geo)
    traj = run(ens, FieldConfig(softening=0.0), StepConfig(dt=1e-3, t_end=10.0,
                                                           record_every=10_000))
    v0 = np.linalg.norm(ens.vel[0])
    drift = max(abs(np.linalg.norm(r.vel[0]) - v0) / v0 for r in traj.records)
    return drift <= 1e-12, f"relative speed drift {drift:.2e} over 1e4 steps"


def check_primitive():
    geo = Geometry(A=1.0, theta=3.0)
    eps = 1e-6
    u = np.linspace(0.0, 0.99, 100)
    u = np.clip(u, eps, None)
    fd = (eval_H(geo, u + eps) - eval_H(geo, u - eps)) / (2 * eps)
    err = float(np.max(np.abs(fd - eval_h(geo, u)) / eval_h(geo, u)))
    return err < 1e-6, f"max relative error of dH/du vs h: {err:.2e}"


def check_mollifier():
    a = np.linspace(0.0, 3.0, 30001)
    phi = mollifier_eval(a)
    dphi = mollifier_deriv(a)
    ok = (np.all(phi[a <= 1] == 1.0) and np.all(phi[a >= 2] == 0.0)
          and np.all((dphi >= -2.0) & (dphi <= 0.0))
          and abs(dphi.min() + 1.875) < 1e-9)
    return bool(ok), f"min phi' = {dphi.min():.6f}"


def check_two_body():
    ens = Ensemble([0, 1], [[0.1, 0.2, -0.1], [1.3, -0.3, 0.25]],
                   np.zeros((2, 3)), [0.5, 0.5], Geometry())
    out = []
    for method in ("direct", "hybrid"):
        e = field_all(ens, FieldConfig(softening=0.0, method=method))
        out.append(np.array_equal(e[0], -e[1]))
    return all(out), "E(x1) == -E(x2) bitwise for equal weights"


def check_rotation():
    v = rotate_velocity([0.0, 1.0, 0.0], math.pi / 2, 1.0)
    err = float(np.max(np.abs(v - [0.0, 0.0, -1.0])))
    return err < 1e-15, f"quarter turn error {err:.1e}"


def check_hybrid():
    geo = Geometry()
    ens = sample_ensemble(geo, InitialDataParams(), 16, 7)
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.uniform(-10, 10, 20), rng.uniform(-0.4, 0.4, 20),
                           rng.uniform(-0.4, 0.4, 20)])
    fc = FieldConfig().resolve(ens)
    ed = field_points(pts, ens, FieldConfig(fc.softening, method="direct"))
    eh = field_points(pts, ens, fc)
    rel = float(np.max(np.linalg.norm(eh - ed, axis=1) / np.linalg.norm(ed, axis=1)))
    return rel < 0.02, f"hybrid vs direct max relative error {rel:.2e}"


CHECKS = [
    ("speed conservation under pure B", check_speed_conservation),
    ("H' = h (central difference)", check_primitive),
    ("mollifier shape and slope", check_mollifier),
    ("two-body field antisymmetry", check_two_body),
    ("exact quarter-turn rotation", check_rotation),
    ("hybrid far field vs direct sum", check_hybrid),
]


def run_selftest(echo=print) -> bool:
    ok_all = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= bool(ok)
        echo(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return ok_all
