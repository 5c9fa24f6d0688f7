"""Paired runs of the velocity-truncated dynamics at two cutoffs.

Both runs start from the same base ensemble restricted to ``|v| < N`` and
``|v| < N'``; particles are matched by id, and the gauges are the sup over
matched particles of the position gap (``delta``) and the velocity gap
(``eta``), with ``sigma = delta + eta``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coulomb import FieldConfig
from .dynamics import StepConfig, Trajectory, run
from .initial_data import Ensemble, restrict_to_cutoff

MIN_MATCHED = 10

CONV_COLUMNS = ("t", "delta", "eta", "sigma", "N", "Nprime", "matched")


@dataclass
class ConvergenceGauge:
    t: np.ndarray
    delta: np.ndarray
    eta: np.ndarray
    N: float
    N_prime: float
    matched: int

    @property
    def sigma(self) -> np.ndarray:
        return self.delta + self.eta

    def rows(self):
        for k in range(self.t.size):
            yield (self.t[k], self.delta[k], self.eta[k], self.sigma[k],
                   self.N, self.N_prime, self.matched)


def gauge_series(traj_a: Trajectory, traj_b: Trajectory):
    """Position/velocity gaps over ids present in both trajectories."""
    common, ia, ib = np.intersect1d(traj_a.ids, traj_b.ids, assume_unique=True,
                                    return_indices=True)
    if len(traj_a.records) != len(traj_b.records):
        raise ValueError("trajectories have different record counts")
    t, delta, eta = [], [], []
    for ra, rb in zip(traj_a.records, traj_b.records):
        if ra.step != rb.step:
            raise ValueError("trajectories are recorded at different steps")
        t.append(ra.t)
        if common.size:
            delta.append(float(np.max(np.linalg.norm(ra.pos[ia] - rb.pos[ib], axis=1))))
            eta.append(float(np.max(np.linalg.norm(ra.vel[ia] - rb.vel[ib], axis=1))))
        else:
            delta.append(0.0)
            eta.append(0.0)
    return np.array(t), np.array(delta), np.array(eta), int(common.size)


def run_pair(base: Ensemble, N: float, N_prime: float, field_config: FieldConfig,
             step_config: StepConfig, workers: int = 1, return_trajectories=False):
    """Evolve the two truncations of ``base`` and compare them particle by particle.

    The softening is resolved once on ``base`` so both runs share it.
    """
    if N == N_prime:
        raise ValueError("the two cutoffs must differ")
    lo, hi = sorted((N, N_prime))
    field_config = field_config.resolve(base)
    ens_lo = restrict_to_cutoff(base, lo)
    ens_hi = restrict_to_cutoff(base, hi)
    if len(ens_lo) < MIN_MATCHED:
        raise ValueError(
            f"only {len(ens_lo)} particles survive the cutoff {lo}; need {MIN_MATCHED}")
    traj_lo = run(ens_lo, field_config, step_config, workers)
    traj_hi = run(ens_hi, field_config, step_config, workers)
    gauge = gauge_from(traj_lo, traj_hi, N, N_prime)
    if return_trajectories:
        return gauge, traj_lo, traj_hi
    return gauge


def gauge_from(traj_a: Trajectory, traj_b: Trajectory, N, N_prime) -> ConvergenceGauge:
    t, delta, eta, matched = gauge_series(traj_a, traj_b)
    return ConvergenceGauge(t, delta, eta, float(N), float(N_prime), matched)


def velocity_growth_check(trajectory: Trajectory):
    """Observed constants in ``|V(t) - v| <= C (1 + |v|)`` and ``|X(t) - x| <= C (1 + |v|)``.

    Returns ``(velocity_constant, displacement_constant)``, maxima over
    particles and records.
    """
    ini = trajectory.initial
    if len(ini) == 0:
        return 0.0, 0.0
    scale = 1.0 + ini.speeds()
    cv = cx = 0.0
    for rec in trajectory.records:
        cv = max(cv, float(np.max(np.linalg.norm(rec.vel - ini.vel, axis=1) / scale)))
        cx = max(cx, float(np.max(np.linalg.norm(rec.pos - ini.pos, axis=1) / scale)))
    return cv, cx
