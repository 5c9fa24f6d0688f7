"""Particle ensembles approximating the initial density.

The target density is Gaussian in velocity, ``f0 ~ exp(-lambda |v|^2)``, and
has prescribed mass ``C1 |i|^(-alpha)`` in each unit slab ``i <= x1 < i+1``.
Each slab carries ``n_per_slab`` equal-weight particles placed uniformly over
the disc of radius ``A_bar``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .geometry import Geometry

ENSEMBLE_COLUMNS = ("id", "x1", "x2", "x3", "v1", "v2", "v3", "w")

# resampling attempts per particle before the cutoff is declared hopeless
_MAX_RESAMPLE = 100_000


@dataclass(frozen=True)
class InitialDataParams:
    """Amplitudes, Gaussian rate, slab decay exponent and velocity cutoff.

    ``N_cutoff=None`` means no velocity truncation.
    """

    C0: float = 1.0
    lam: float = 1.0
    C1: float = 1.0
    alpha: float = 0.7
    N_cutoff: Optional[float] = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.C0 > 0:
            raise ValueError("C0 must be positive")
        if not self.C1 > 0:
            raise ValueError("C1 must be positive")
        if not self.alpha > 5.0 / 9.0:
            raise ValueError("alpha must exceed 5/9")
        if self.N_cutoff is not None and not self.N_cutoff > 0:
            raise ValueError("N_cutoff must be positive when finite")


class Particle(NamedTuple):
    id: int
    pos: np.ndarray
    vel: np.ndarray
    weight: float


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Immutable particle collection stored as id-sorted arrays."""

    ids: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    weight: np.ndarray
    geometry: Geometry
    params: Optional[InitialDataParams] = None
    seed: Optional[int] = None
    time: float = 0.0

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        n = ids.size
        pos = np.asarray(self.pos, dtype=float).reshape(n, 3)
        vel = np.asarray(self.vel, dtype=float).reshape(n, 3)
        w = np.asarray(self.weight, dtype=float).reshape(n)
        order = np.argsort(ids, kind="stable")
        if n > 1 and np.any(np.diff(ids[order]) == 0):
            raise ValueError("particle ids must be unique")
        if np.any(w <= 0):
            raise ValueError("particle weights must be positive")
        object.__setattr__(self, "ids", _frozen(ids[order], np.int64))
        object.__setattr__(self, "pos", _frozen(pos[order]))
        object.__setattr__(self, "vel", _frozen(vel[order]))
        object.__setattr__(self, "weight", _frozen(w[order]))

    def __len__(self):
        return self.ids.size

    @property
    def particles(self) -> list[Particle]:
        return [Particle(int(i), p, v, float(w))
                for i, p, v, w in zip(self.ids, self.pos, self.vel, self.weight)]

    def speeds(self) -> np.ndarray:
        return np.sqrt(np.einsum("ij,ij->i", self.vel, self.vel))

    def total_weight(self) -> float:
        return float(np.sum(self.weight))

    def subset(self, mask) -> "Ensemble":
        mask = np.asarray(mask)
        return Ensemble(self.ids[mask], self.pos[mask], self.vel[mask],
                        self.weight[mask], self.geometry, self.params,
                        self.seed, self.time)

    def evolved(self, pos, vel, time) -> "Ensemble":
        """Same particles (ids, weights) at new phase-space points."""
        return Ensemble(self.ids, pos, vel, self.weight, self.geometry,
                        self.params, self.seed, time)


def slab_mass(params: InitialDataParams, i: int) -> float:
    """Target mass of slab ``i``; slab 0 gets ``C1``."""
    if i == 0:
        return float(params.C1)
    return float(params.C1 * abs(i) ** (-params.alpha))


def _resample_velocity(seed, pid, scale, cutoff):
    rng = np.random.default_rng([int(seed), int(pid)])
    for _ in range(_MAX_RESAMPLE):
        v = rng.normal(0.0, scale, size=3)
        if v @ v < cutoff * cutoff:
            return v
    raise RuntimeError(f"velocity rejection failed for particle {pid}")


def sample_ensemble(geometry: Geometry, params: InitialDataParams,
                    n_per_slab: int, seed: int) -> Ensemble:
    """Seeded ensemble with exact slab masses and a truncated Gaussian.

    Every particle takes a primary velocity draw from the main stream.  Draws
    at or above the cutoff are replaced by draws from a per-particle stream
    keyed on ``(seed, id)``, so any particle whose primary draw lies below
    ``min(N, N')`` is identical in the ensembles sampled with cutoffs ``N``
    and ``N'``.
    """
    if n_per_slab < 1:
        raise ValueError("n_per_slab must be >= 1")
    scale = math.sqrt(1.0 / (2.0 * params.lam))
    cutoff = params.N_cutoff
    if cutoff is not None and cutoff < 0.1 / math.sqrt(params.lam):
        raise ValueError(
            f"N_cutoff={cutoff} is below 0.1/sqrt(lambda); rejection sampling is hopeless")

    M = geometry.M
    slabs = np.repeat(np.arange(-M, M + 1), n_per_slab)
    n = slabs.size
    ids = np.arange(n, dtype=np.int64)

    rng = np.random.default_rng(seed)
    u_ax = rng.random(n)
    u_r = rng.random(n)
    u_th = rng.random(n)
    vel = rng.normal(0.0, scale, size=(n, 3))

    r = geometry.A_bar * np.sqrt(u_r)
    th = 2.0 * np.pi * u_th
    pos = np.column_stack([slabs + u_ax, r * np.cos(th), r * np.sin(th)])

    if cutoff is not None:
        bad = np.flatnonzero(np.einsum("ij,ij->i", vel, vel) >= cutoff * cutoff)
        for k in bad:
            vel[k] = _resample_velocity(seed, ids[k], scale, cutoff)

    masses = np.array([slab_mass(params, i) for i in range(-M, M + 1)])
    weight = np.repeat(masses / n_per_slab, n_per_slab)
    return Ensemble(ids, pos, vel, weight, geometry, params, seed, 0.0)


def restrict_to_cutoff(ensemble: Ensemble, N: float) -> Ensemble:
    """Particles with speed strictly below ``N``; ids are preserved."""
    if not N > 0:
        raise ValueError("N must be positive")
    return ensemble.subset(ensemble.speeds() < N)


def write_ensemble_csv(path, ensemble: Ensemble, comment: str | None = None):
    """Write ``id,x1,x2,x3,v1,v2,v3,w`` rows at 17 significant digits."""
    head = f"# columns: {','.join(ENSEMBLE_COLUMNS)}; t={ensemble.time!r}"
    if comment:
        head += f"; {comment}"
    lines = [head, ",".join(ENSEMBLE_COLUMNS)]
    for i, p, v, w in zip(ensemble.ids, ensemble.pos, ensemble.vel, ensemble.weight):
        vals = (*p, *v, w)
        lines.append(str(int(i)) + "," + ",".join(f"{x:.17g}" for x in vals))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_ensemble_csv(path, geometry: Geometry,
                      params: InitialDataParams | None = None,
                      seed: int | None = None) -> Ensemble:
    time = 0.0
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for part in line[1:].split(";"):
                    part = part.strip()
                    if part.startswith("t="):
                        time = float(part[2:])
                continue
            if line.startswith("id,"):
                if tuple(line.split(",")) != ENSEMBLE_COLUMNS:
                    raise ValueError(f"unexpected ensemble header: {line}")
                continue
            rows.append(line.split(","))
    if not rows:
        return Ensemble(np.zeros(0, np.int64), np.zeros((0, 3)), np.zeros((0, 3)),
                        np.zeros(0), geometry, params, seed, time)
    ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
    data = np.array([[float(x) for x in r[1:]] for r in rows])
    return Ensemble(ids, data[:, 0:3], data[:, 3:6], data[:, 6], geometry,
                    params, seed, time)
