"""Functionals of a particle snapshot: local energy, slab masses, density
histograms, field scalings and time-averaged fields."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import trapezoid

from .coulomb import FieldConfig, potential_all
from .dynamics import Trajectory, all_residuals, min_margin
from .initial_data import Ensemble


# ---------------------------------------------------------------- mollifier

def mollifier_eval(a):
    """Smooth cutoff: 1 on [0, 1], 0 on [2, inf), quintic smoothstep between."""
    a = np.asarray(a, dtype=float)
    u = np.clip(a - 1.0, 0.0, 1.0)
    out = 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    return float(out) if out.ndim == 0 else out


def mollifier_deriv(a):
    a = np.asarray(a, dtype=float)
    u = np.clip(a - 1.0, 0.0, 1.0)
    out = -30.0 * u * u * (1.0 - u) ** 2
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------- local energy

def energy_density(ensemble: Ensemble, field_config: FieldConfig) -> np.ndarray:
    """Per-particle ``w_i (|v_i|^2 + P_i) / 2`` with the softened pair potential ``P_i``.

    Summing these against ``phi(|x1 - mu| / R)`` gives the local energy.
    """
    if len(ensemble) == 0:
        return np.zeros(0)
    pot = potential_all(ensemble, field_config)
    v2 = np.einsum("ij,ij->i", ensemble.vel, ensemble.vel)
    return 0.5 * ensemble.weight * (v2 + pot)


def local_energy(ensemble: Ensemble, mu: float, R: float,
                 field_config: FieldConfig) -> float:
    if not R > 0:
        raise ValueError("R must be positive")
    if len(ensemble) == 0:
        return 0.0
    e = energy_density(ensemble, field_config)
    return float(np.sum(mollifier_eval(np.abs(ensemble.pos[:, 0] - mu) / R) * e))


def windowed_sums(x1, e, mu, R, chunk=256):
    """``sum_i phi(|x1_i - mu_k| / R) e_i`` for every ``mu_k``."""
    mu = np.asarray(mu, dtype=float)
    out = np.zeros(mu.size)
    if x1.size == 0:
        return out
    for lo in range(0, mu.size, chunk):
        m = mu[lo:lo + chunk]
        phi = mollifier_eval(np.abs(x1[None, :] - m[:, None]) / R)
        out[lo:lo + chunk] = phi @ e
    return out


@dataclass
class LocalEnergyReport:
    mu_grid: np.ndarray
    R: float
    W_values: np.ndarray
    Q: float


def mu_grid(L: float, R: float, mu_spacing: float) -> np.ndarray:
    """Grid ``k * mu_spacing`` covering ``[-L - 2R, L + 2R]``."""
    kmax = int(math.ceil((L + 2.0 * R) / mu_spacing))
    return np.arange(-kmax, kmax + 1) * mu_spacing


def q_from_density(x1, e, R, L, mu_spacing) -> LocalEnergyReport:
    if not R > 0:
        raise ValueError("R must be positive")
    if not 0 < mu_spacing <= R / 2:
        raise ValueError("mu_spacing must lie in (0, R/2]")
    grid = mu_grid(L, R, mu_spacing)
    W = windowed_sums(np.asarray(x1, dtype=float), np.asarray(e, dtype=float), grid, R)
    Q = max(1.0, float(W.max())) if W.size else 1.0
    return LocalEnergyReport(grid, float(R), W, Q)


def q_of_r(ensemble: Ensemble, R: float, field_config: FieldConfig,
           mu_spacing: float = 0.5) -> LocalEnergyReport:
    """``Q(R) = max(1, sup_mu W(mu, R))`` with the sup taken over a fixed grid.

    The grid does not depend on ``R`` beyond its extent, so ``Q`` is
    non-decreasing in ``R``.
    """
    e = energy_density(ensemble, field_config)
    return q_from_density(ensemble.pos[:, 0], e, R, ensemble.geometry.L, mu_spacing)


def covering_check(ensemble: Ensemble, mu: float, R: float, R_prime: float,
                   field_config: FieldConfig, mu_spacing: Optional[float] = None):
    """``W(mu, R') <= (2 ceil(R'/R) + 1) Q(R)``; returns ``(passed, ratio)``."""
    if not 0 < R <= R_prime:
        raise ValueError("need 0 < R <= R_prime")
    if len(ensemble) == 0:
        return True, 0.0
    spacing = R / 2 if mu_spacing is None else mu_spacing
    e = energy_density(ensemble, field_config)
    x1 = ensemble.pos[:, 0]
    w_big = float(np.sum(mollifier_eval(np.abs(x1 - mu) / R_prime) * e))
    q = q_from_density(x1, e, R, ensemble.geometry.L, spacing).Q
    ratio = w_big / ((2 * math.ceil(R_prime / R) + 1) * q)
    return ratio <= 1.0, ratio


# -------------------------------------------------------------- slab masses

def slab_masses(ensemble: Ensemble) -> dict:
    """Mass in each unit slab ``i <= x1 < i + 1`` (occupied slabs only)."""
    if len(ensemble) == 0:
        return {}
    idx = np.floor(ensemble.pos[:, 0]).astype(np.int64)
    lo = int(idx.min())
    m = np.bincount(idx - lo, weights=ensemble.weight)
    return {lo + k: float(v) for k, v in enumerate(m) if v > 0}


class DecayFit(NamedTuple):
    C_fit: float
    worst_index: Optional[int]


def decay_fit(masses: dict, alpha: float) -> DecayFit:
    """Smallest ``C`` with ``m_i <= C log(1+|i|) / |i|^alpha`` for all ``|i| >= 2``."""
    best, worst = 0.0, None
    for i in sorted(masses):
        if abs(i) < 2:
            continue
        c = masses[i] * abs(i) ** alpha / math.log1p(abs(i))
        if c > best:
            best, worst = c, i
    return DecayFit(best, worst)


# ------------------------------------------------------- density histogram

@dataclass
class DensityHistogram:
    """Density on axial x equal-area polar cells covering ``D`` within ``|x1| <= L``."""

    ax_edges: np.ndarray
    r_edges: np.ndarray
    n_theta: int
    rho: np.ndarray           # shape (n_ax, n_r, n_theta)
    cell_volume: float

    def mass(self) -> float:
        return float(np.sum(self.rho) * self.cell_volume)


def density_histogram(ensemble: Ensemble, cell_size: float = 0.25,
                      L: Optional[float] = None) -> DensityHistogram:
    if not cell_size > 0:
        raise ValueError("cell_size must be positive")
    geo = ensemble.geometry
    L = geo.L if L is None else L
    A = geo.A
    n_ax = max(1, int(round(2 * L / cell_size)))
    n_r = max(1, int(round(A / cell_size)))
    n_th = max(1, int(round(math.pi * A * A / (cell_size * cell_size * n_r))))
    ax_edges = np.linspace(-L, L, n_ax + 1)
    r_edges = A * np.sqrt(np.arange(n_r + 1) / n_r)
    vol = (2 * L / n_ax) * math.pi * A * A / (n_r * n_th)

    x = ensemble.pos
    inside = (x[:, 0] >= -L) & (x[:, 0] <= L)
    x = x[inside]
    w = ensemble.weight[inside]
    ia = np.minimum(((x[:, 0] + L) / (2 * L) * n_ax).astype(np.int64), n_ax - 1)
    r2 = x[:, 1] ** 2 + x[:, 2] ** 2
    ir = np.minimum((r2 / (A * A) * n_r).astype(np.int64), n_r - 1)
    th = np.mod(np.arctan2(x[:, 2], x[:, 1]), 2 * math.pi)
    it = np.minimum((th / (2 * math.pi) * n_th).astype(np.int64), n_th - 1)
    flat = (ia * n_r + ir) * n_th + it
    mass = np.bincount(flat, weights=w, minlength=n_ax * n_r * n_th)
    rho = (mass / vol).reshape(n_ax, n_r, n_th)
    return DensityHistogram(ax_edges, r_edges, n_th, rho, vol)


def lp53_check(hist: DensityHistogram, mu: float, R: float, W_value: float) -> float:
    """``sum rho^(5/3) vol`` over cells inside ``|x1 - mu| <= R``, divided by ``W_value``."""
    lo, hi = hist.ax_edges[:-1], hist.ax_edges[1:]
    sel = (lo >= mu - R) & (hi <= mu + R)
    integral = float(np.sum(hist.rho[sel] ** (5.0 / 3.0)) * hist.cell_volume)
    if W_value <= 0:
        return math.inf if integral > 0 else 0.0
    return integral / W_value


# ----------------------------------------------------- trajectory diagnostics

class ScalingRow(NamedTuple):
    t: float
    supE: float
    vmax: float
    Q: float
    bound_ratio: float


def field_scaling_report(trajectory: Trajectory, mu_spacing: float = 0.5) -> list:
    """``sup|E| / (V^(4/3) Q(R(t), t)^(1/3))`` at each record."""
    rows = []
    L = trajectory.geometry.L
    for rec in trajectory.records:
        snap = rec.ensemble(trajectory.initial)
        supE = float(np.max(np.linalg.norm(rec.field, axis=1))) if len(snap) else 0.0
        Q = q_from_density(rec.pos[:, 0], energy_density(snap, trajectory.field_config),
                           rec.Rt, L, min(mu_spacing, rec.Rt / 2)).Q
        rows.append(ScalingRow(rec.t, supE, rec.vmax, Q,
                               supE / (rec.vmax ** (4.0 / 3.0) * Q ** (1.0 / 3.0))))
    return rows


def time_averaged_field(trajectory: Trajectory, particle_id, t: float, delta: float) -> float:
    """``(1/delta) int_t^{t+delta} |E(X(s), s)| ds`` by trapezoid over records."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if delta < trajectory.step_config.dt * (1 - 1e-9):
        raise ValueError("delta must be at least dt")
    k = trajectory.index_of(particle_id)
    ts = trajectory.times
    tol = 1e-9 * max(1.0, abs(ts[-1]))
    if t < ts[0] - tol or t + delta > ts[-1] + tol:
        raise ValueError(f"window [{t}, {t + delta}] exceeds trajectory [{ts[0]}, {ts[-1]}]")
    mags = np.array([np.linalg.norm(r.field[k]) for r in trajectory.records])
    a, b = max(t, ts[0]), min(t + delta, ts[-1])
    inner = (ts > a) & (ts < b)
    tt = np.concatenate([[a], ts[inner], [b]])
    ee = np.concatenate([[np.interp(a, ts, mags)], mags[inner], [np.interp(b, ts, mags)]])
    return float(trapezoid(ee, tt) / delta)


# ---------------------------------------------------------- diagnostics rows

@dataclass
class DiagnosticsRow:
    """One line of ``diag.csv``.

    t        simulation time
    Vmax     maximal speed so far, floored at C4
    Rt       maximal displacement 1 + int_0^t Vmax ds
    supE     max over particles of |E|
    Q        Q(R(t), t)
    Qratio   Q(R(t), t) / Q(R(t), 0)
    minMargin  min over particles of A - r
    workRes  max over particles of the work-energy residual
    confRes  max over particles of the confinement-identity residual
    C3fit    decay_fit constant for the slab masses
    """

    t: float
    Vmax: float
    Rt: float
    supE: float
    Q: float
    Qratio: float
    minMargin: float
    workRes: float
    confRes: float
    C3fit: float


DIAG_COLUMNS = tuple(f.name for f in fields(DiagnosticsRow))


class DiagnosticsTracker:
    """Builds :class:`DiagnosticsRow` objects record by record."""

    def __init__(self, trajectory: Trajectory, mu_spacing: float = 0.5):
        self.traj = trajectory
        self.mu_spacing = mu_spacing
        ini = trajectory.initial
        self.x1_0 = ini.pos[:, 0].copy()
        self.e_0 = energy_density(ini, trajectory.field_config)
        self.alpha = ini.params.alpha if ini.params is not None else 0.7

    def row(self, rec) -> DiagnosticsRow:
        traj = self.traj
        geo = traj.geometry
        snap = rec.ensemble(traj.initial)
        spacing = min(self.mu_spacing, rec.Rt / 2)
        e = energy_density(snap, traj.field_config)
        Q = q_from_density(rec.pos[:, 0], e, rec.Rt, geo.L, spacing).Q
        Q0 = q_from_density(self.x1_0, self.e_0, rec.Rt, geo.L, spacing).Q
        if len(snap):
            supE = float(np.max(np.linalg.norm(rec.field, axis=1)))
            wr, cr = all_residuals(traj, rec)
            work_res, conf_res = float(wr.max()), float(cr.max())
        else:
            supE = work_res = conf_res = 0.0
        c3 = decay_fit(slab_masses(snap), self.alpha).C_fit
        return DiagnosticsRow(rec.t, rec.vmax, rec.Rt, supE, Q, Q / Q0,
                              min_margin(geo, rec.pos), work_res, conf_res, c3)


def diagnostics_rows(trajectory: Trajectory, mu_spacing: float = 0.5) -> list:
    tracker = DiagnosticsTracker(trajectory, mu_spacing)
    return [tracker.row(r) for r in trajectory.records]


def format_row(values) -> str:
    return ",".join(repr(float(v)) if not isinstance(v, str) else v for v in values)


def write_csv(path, columns, rows, description=""):
    """CSV with a leading ``#`` schema line; floats written with ``repr``."""
    head = "# columns: " + ",".join(columns)
    if description:
        head += "; " + description
    with open(path, "w", newline="\n") as fh:
        fh.write(head + "\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            vals = [getattr(r, c) for c in columns] if hasattr(r, "_fields") or \
                hasattr(r, "__dataclass_fields__") else list(r)
            fh.write(format_row(vals) + "\n")


def read_csv(path):
    """Read a CSV written by :func:`write_csv` into a dict of float arrays."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    cols = lines[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]]).reshape(-1, len(cols))
    return {c: data[:, k] for k, c in enumerate(cols)}
