"""Characteristics integrator: ``X' = V``, ``V' = E + V x B``.

One step is Strang split as half electric kick, half drift, exact magnetic
rotation, half drift, half electric kick.  The rotation preserves speed and
``V1`` exactly, so every change of ``|V|`` comes from the kicks.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .coulomb import FieldConfig, field_on
from .geometry import Geometry, eval_H
from .initial_data import Ensemble


class SimulationError(RuntimeError):
    """Non-recoverable failure of a run (non-finite state, lost particle)."""


class ConfinementLoss(SimulationError):
    def __init__(self, particle_id, time, field_value, position):
        self.particle_id = int(particle_id)
        self.time = float(time)
        self.field_value = np.asarray(field_value)
        self.position = np.asarray(position)
        super().__init__(
            f"particle {self.particle_id} reached the cylinder wall during the step "
            f"starting at t={self.time:.6g} (position {self.position.tolist()}, "
            f"last field {self.field_value.tolist()})")


@dataclass(frozen=True)
class StepConfig:
    """Time step, horizon, record cadence and the speed floor ``C4``.

    ``electric`` and ``magnetic`` switch the two forces off for control runs.
    """

    dt: float = 1e-3
    t_end: float = 10.0
    record_every: int = 100
    max_speed_floor: float = 1.0
    electric: bool = True
    magnetic: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be >= 0")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError("record_every must be an integer >= 1")
        if not self.max_speed_floor >= 1:
            raise ValueError("max_speed_floor must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class Record:
    step: int
    t: float
    pos: np.ndarray
    vel: np.ndarray
    field: np.ndarray
    work: np.ndarray    # int_0^t V.E ds per particle
    torque: np.ndarray  # int_0^t (X2 E3 - X3 E2) ds per particle
    vmax: float         # running maximal speed with floor C4
    Rt: float           # 1 + int_0^t vmax ds

    def ensemble(self, initial: Ensemble) -> Ensemble:
        return initial.evolved(self.pos, self.vel, self.t)


@dataclass
class Trajectory:
    initial: Ensemble
    field_config: FieldConfig
    step_config: StepConfig
    records: list = field(default_factory=list)

    @property
    def geometry(self) -> Geometry:
        return self.initial.geometry

    @property
    def ids(self) -> np.ndarray:
        return self.initial.ids

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def index_of(self, particle_id) -> int:
        k = np.searchsorted(self.ids, particle_id)
        if k >= self.ids.size or self.ids[k] != particle_id:
            raise KeyError(f"unknown particle id {particle_id}")
        return int(k)

    def snapshot(self, k: int) -> Ensemble:
        return self.records[k].ensemble(self.initial)


def rotate_velocity(v, b, dt):
    """Exact solution of ``v2' = b v3``, ``v3' = -b v2`` over ``dt``; ``v1`` is untouched."""
    v = np.asarray(v, dtype=float)
    out = v.copy()
    ang = np.asarray(b, dtype=float) * dt
    c, s = np.cos(ang), np.sin(ang)
    out[..., 1] = c * v[..., 1] + s * v[..., 2]
    out[..., 2] = c * v[..., 2] - s * v[..., 1]
    return out


def strang_update(pos, vel, e_start, dt, geometry: Geometry,
                  field_fn: Callable[[np.ndarray], np.ndarray],
                  electric=True, magnetic=True):
    """Advance ``pos``/``vel`` in place by one split step; return the end field.

    ``field_fn`` maps positions to the field there.  Raises
    :class:`ConfinementLoss` (with time 0 and the caller's ids unknown, the
    particle index stands in) if a particle reaches the wall.
    """
    if electric:
        _kernels.kick(vel, e_start, 0.5 * dt)
    bad = _kernels.drift_rotate_drift(pos, vel, dt, geometry.A_sq, geometry.theta,
                                      bool(magnetic))
    if bad >= 0:
        raise ConfinementLoss(bad, 0.0, e_start[bad], pos[bad])
    e_end = field_fn(pos) if electric else np.zeros_like(pos)
    if electric:
        _kernels.kick(vel, e_end, 0.5 * dt)
    return e_end


class Integrator:
    """Stateful stepper that keeps the end-of-step field for the next kick."""

    def __init__(self, ensemble: Ensemble, field_config: FieldConfig,
                 step_config: StepConfig, workers: int = 1):
        self.initial = ensemble
        self.geometry = ensemble.geometry
        self.field_config = field_config.resolve(ensemble)
        self.step_config = step_config
        self.workers = max(1, int(workers))
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None
        self.pos = np.array(ensemble.pos, dtype=float)
        self.vel = np.array(ensemble.vel, dtype=float)
        self.weight = np.ascontiguousarray(ensemble.weight)
        r2 = self.pos[:, 1] ** 2 + self.pos[:, 2] ** 2
        if np.any(r2 >= self.geometry.A_sq):
            k = int(np.argmax(r2))
            raise ConfinementLoss(ensemble.ids[k], ensemble.time, np.zeros(3), self.pos[k])
        self.step_index = 0
        self.t0 = float(ensemble.time)
        self.field = self._field(self.pos)
        self.work = np.zeros(len(ensemble))
        self.torque = np.zeros(len(ensemble))
        floor = float(step_config.max_speed_floor)
        self.vmax = max(floor, _kernels.max_speed(self.vel)) if len(ensemble) else floor
        self.Rt = 1.0

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    @property
    def t(self) -> float:
        return self.t0 + self.step_index * self.step_config.dt

    def _field(self, pos):
        if not self.step_config.electric or pos.shape[0] == 0:
            return np.zeros_like(pos)
        if not np.isfinite(pos).all():
            raise SimulationError(f"non-finite state in the step starting at t={self.t:.6g}")
        return field_on(pos, self.weight, self.field_config, self.workers, self._pool)

    def advance(self):
        sc = self.step_config
        dt = sc.dt
        pos0 = self.pos.copy()
        vel0 = self.vel.copy()
        e0 = self.field
        try:
            e1 = strang_update(self.pos, self.vel, e0, dt, self.geometry, self._field,
                               sc.electric, sc.magnetic)
        except ConfinementLoss as exc:
            k = exc.particle_id
            raise ConfinementLoss(self.initial.ids[k], self.t, e0[k], self.pos[k]) from None
        _kernels.accumulate(self.work, self.torque, pos0, vel0, e0,
                            self.pos, self.vel, e1, 0.5 * dt)
        self.field = e1
        self.Rt += self.vmax * dt
        self.step_index += 1
        if self.pos.shape[0]:
            if not (np.isfinite(self.pos).all() and np.isfinite(self.vel).all()):
                raise SimulationError(f"non-finite state at t={self.t:.6g}")
            self.vmax = max(self.vmax, _kernels.max_speed(self.vel))

    def record(self) -> Record:
        return Record(self.step_index, self.t, self.pos.copy(), self.vel.copy(),
                      self.field.copy(), self.work.copy(), self.torque.copy(),
                      self.vmax, self.Rt)

    def ensemble(self) -> Ensemble:
        return self.initial.evolved(self.pos, self.vel, self.t)


def step(ensemble: Ensemble, field_config: FieldConfig, step_config: StepConfig,
         workers: int = 1) -> Ensemble:
    """Single step from ``ensemble``; the starting field is computed afresh."""
    integ = Integrator(ensemble, field_config, step_config, workers)
    try:
        integ.advance()
    finally:
        integ.close()
    return integ.ensemble()


def run(ensemble: Ensemble, field_config: FieldConfig, step_config: StepConfig,
        workers: int = 1, on_record: Optional[Callable[[Trajectory, Record], None]] = None,
        keep_records: bool = True) -> Trajectory:
    """Integrate to ``t_end``.

    The returned trajectory always holds the initial state as its first
    record, then one record every ``record_every`` steps and one at the final
    step.  ``on_record`` is called with each record as it is produced.
    """
    integ = Integrator(ensemble, field_config, step_config, workers)
    traj = Trajectory(ensemble, integ.field_config, step_config)

    def emit():
        rec = integ.record()
        if keep_records:
            traj.records.append(rec)
        if on_record is not None:
            on_record(traj, rec)

    try:
        emit()
        n = step_config.n_steps
        for k in range(1, n + 1):
            integ.advance()
            if k % step_config.record_every == 0 or k == n:
                emit()
    finally:
        integ.close()
    return traj


def work_energy_residual(trajectory: Trajectory, particle_id) -> np.ndarray:
    """``| |V(t)|^2 - |v|^2 - 2 int_0^t V.E ds |`` at every record."""
    k = trajectory.index_of(particle_id)
    v0 = trajectory.initial.vel[k]
    s0 = v0 @ v0
    return np.array([abs(r.vel[k] @ r.vel[k] - s0 - 2.0 * r.work[k])
                     for r in trajectory.records])


def _angular(pos, vel):
    return vel[..., 1] * pos[..., 2] - vel[..., 2] * pos[..., 1]


def confinement_residual(trajectory: Trajectory, particle_id) -> np.ndarray:
    """Defect of ``H(r^2)/2`` balance: mirror potential vs. angular term and torque."""
    k = trajectory.index_of(particle_id)
    geo = trajectory.geometry
    x0 = trajectory.initial.pos[k]
    v0 = trajectory.initial.vel[k]
    H0 = eval_H(geo, x0[1] ** 2 + x0[2] ** 2)
    L0 = _angular(x0, v0)
    out = []
    for r in trajectory.records:
        x = r.pos[k]
        H = eval_H(geo, x[1] ** 2 + x[2] ** 2)
        out.append(abs(0.5 * (H - H0) - (_angular(x, r.vel[k]) - L0) - r.torque[k]))
    return np.array(out)


def all_residuals(trajectory: Trajectory, record: Record):
    """Per-particle work-energy and confinement residuals at one record."""
    ini = trajectory.initial
    geo = trajectory.geometry
    s0 = np.einsum("ij,ij->i", ini.vel, ini.vel)
    s = np.einsum("ij,ij->i", record.vel, record.vel)
    work_res = np.abs(s - s0 - 2.0 * record.work)
    H0 = eval_H(geo, ini.pos[:, 1] ** 2 + ini.pos[:, 2] ** 2)
    H = eval_H(geo, record.pos[:, 1] ** 2 + record.pos[:, 2] ** 2)
    conf_res = np.abs(0.5 * (H - H0) - (_angular(record.pos, record.vel)
                                        - _angular(ini.pos, ini.vel)) - record.torque)
    return work_res, conf_res


def min_margin(geometry: Geometry, pos) -> float:
    """``min (A - r)`` over particles."""
    if len(pos) == 0:
        return float(geometry.A)
    return float(geometry.A - math.sqrt(np.max(pos[:, 1] ** 2 + pos[:, 2] ** 2)))
