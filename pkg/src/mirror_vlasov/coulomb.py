"""Self-consistent Coulomb field of a particle ensemble.

``E(x) = sum_j w_j (x - y_j) / (|x - y_j|^2 + eps^2)^(3/2)``, either summed
directly or with every unit slab farther than ``near_radius`` (axially)
replaced by its total weight at its weighted centroid.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .initial_data import Ensemble

METHODS = ("direct", "hybrid")

# pairs skipped because a target coincided with a source at zero softening
stats = {"coincidences": 0}


@dataclass(frozen=True)
class FieldConfig:
    """Softening length, near-field radius and summation method.

    ``softening=None`` defers to :func:`default_softening` on the initial
    ensemble (see :meth:`resolve`).
    """

    softening: Optional[float] = None
    near_radius: float = 2.0
    method: str = "hybrid"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.softening is not None and not self.softening >= 0:
            raise ValueError("softening must be >= 0")
        if self.method == "hybrid" and not self.near_radius >= 1:
            raise ValueError("near_radius must be >= 1 for the hybrid method")

    def resolve(self, ensemble: Ensemble) -> "FieldConfig":
        if self.softening is not None:
            return self
        return replace(self, softening=default_softening(ensemble))

    @property
    def eps2(self) -> float:
        if self.softening is None:
            raise ValueError("softening is unresolved; call FieldConfig.resolve first")
        return float(self.softening) ** 2


def default_softening(ensemble: Ensemble) -> float:
    """0.2 times the mean nearest-neighbour distance of the ensemble."""
    if len(ensemble) < 2:
        return 0.0
    d, _ = cKDTree(ensemble.pos).query(ensemble.pos, k=2)
    return 0.2 * float(np.mean(d[:, 1]))


class _Sources:
    """Source arrays laid out for one kernel call."""

    def __init__(self, pos, weight, method):
        self.method = method
        n = pos.shape[0]
        if method == "direct" or n == 0:
            self.order = np.arange(n)
            self.pos = np.ascontiguousarray(pos)
            self.w = np.ascontiguousarray(weight)
            return
        slab = np.floor(pos[:, 0]).astype(np.int64)
        self.order = np.argsort(slab, kind="stable")
        self.pos = np.ascontiguousarray(pos[self.order])
        self.w = np.ascontiguousarray(weight[self.order])
        s = slab[self.order]
        self.slab0 = int(s[0])
        nslab = int(s[-1]) - self.slab0 + 1
        k = s - self.slab0
        self.start = np.searchsorted(k, np.arange(nslab), side="left").astype(np.int64)
        self.stop = np.searchsorted(k, np.arange(nslab), side="right").astype(np.int64)
        mass = np.bincount(k, weights=self.w, minlength=nslab)
        cent = np.zeros((nslab, 3))
        for c in range(3):
            mom = np.bincount(k, weights=self.w * self.pos[:, c], minlength=nslab)
            np.divide(mom, mass, out=cent[:, c], where=mass > 0)
        self.mass = mass
        self.cent = cent
        self.rank = np.empty(n, dtype=np.int64)
        self.rank[self.order] = np.arange(n)

    def sorted_index(self, idx):
        """Map original indices (``-1`` = none) to kernel source indices."""
        idx = np.asarray(idx, dtype=np.int64)
        if self.method == "direct" or self.pos.shape[0] == 0:
            return idx
        out = np.full_like(idx, -1)
        ok = idx >= 0
        out[ok] = self.rank[idx[ok]]
        return out


def _evaluate(src: _Sources, targets, excl, config: FieldConfig, workers=1, pool=None):
    targets = np.ascontiguousarray(np.asarray(targets, dtype=float).reshape(-1, 3))
    n = targets.shape[0]
    out = np.zeros((n, 3))
    if n == 0 or src.pos.shape[0] == 0:
        return out
    excl = np.ascontiguousarray(src.sorted_index(excl))
    eps2 = config.eps2

    if config.method == "direct":
        def job(lo, hi):
            return _kernels.direct_field(targets, excl, src.pos, src.w, eps2, out, lo, hi)
    else:
        near = float(config.near_radius)

        def job(lo, hi):
            return _kernels.hybrid_field(targets, excl, src.pos, src.w, src.slab0,
                                         src.start, src.stop, src.mass, src.cent,
                                         eps2, near, out, lo, hi)

    workers = max(1, int(workers))
    if workers == 1 or n < 2:
        hits = job(0, n)
    else:
        edges = np.linspace(0, n, workers + 1).astype(int)
        tiles = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
        if pool is None:
            with ThreadPoolExecutor(workers) as ex:
                hits = sum(ex.map(lambda t: job(*t), tiles))
        else:
            hits = sum(pool.map(lambda t: job(*t), tiles))
    stats["coincidences"] += int(hits)
    return out


def field_at(x, ensemble: Ensemble, config: FieldConfig, exclude_id=None) -> np.ndarray:
    """Field at a single point, optionally omitting one particle by id."""
    config = config.resolve(ensemble)
    src = _Sources(ensemble.pos, ensemble.weight, config.method)
    excl = -1
    if exclude_id is not None:
        hit = np.flatnonzero(ensemble.ids == exclude_id)
        excl = int(hit[0]) if hit.size else -1
    return _evaluate(src, x, [excl], config)[0]


def field_points(points, ensemble: Ensemble, config: FieldConfig, workers=1) -> np.ndarray:
    """Field at many external points (no exclusion)."""
    config = config.resolve(ensemble)
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    src = _Sources(ensemble.pos, ensemble.weight, config.method)
    return _evaluate(src, points, np.full(points.shape[0], -1), config, workers)


def field_all(ensemble: Ensemble, config: FieldConfig, workers=1, pool=None) -> np.ndarray:
    """Self-excluded field on every particle, row ``k`` for ``ensemble.ids[k]``.

    Bit-identical to :func:`field_at` per particle and for any ``workers``.
    """
    return field_on(ensemble.pos, ensemble.weight, config.resolve(ensemble), workers, pool)


def field_on(pos, weight, config: FieldConfig, workers=1, pool=None) -> np.ndarray:
    """Array form of :func:`field_all` used by the integrator."""
    src = _Sources(pos, weight, config.method)
    return _evaluate(src, pos, np.arange(pos.shape[0]), config, workers, pool)


def potential_all(ensemble: Ensemble, config: FieldConfig) -> np.ndarray:
    """Softened potential ``sum_{j != i} w_j / sqrt(d^2 + eps^2)`` on each particle."""
    config = config.resolve(ensemble)
    out = np.zeros(len(ensemble))
    if len(ensemble):
        _kernels.pair_potential(np.ascontiguousarray(ensemble.pos),
                                np.ascontiguousarray(ensemble.weight), config.eps2, out)
    return out


def log_modulus(d):
    """``d`` for ``d >= 1`` and ``d (1 + |log d|)`` below."""
    d = np.asarray(d, dtype=float)
    out = np.where(d >= 1.0, d, d * (1.0 + np.abs(np.log(np.where(d > 0, d, 1.0)))))
    return float(out) if out.ndim == 0 else out


def quasi_lipschitz_ratio(x, y, ensemble: Ensemble, config: FieldConfig) -> float:
    """``|E(x) - E(y)| / psi(|x - y|)`` with the log-Lipschitz modulus ``psi``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = float(np.linalg.norm(x - y))
    if d == 0.0:
        raise ValueError("degenerate pair: x and y coincide")
    if len(ensemble) == 0:
        return 0.0
    config = config.resolve(ensemble)
    e = field_points(np.stack([x, y]), ensemble, config)
    return float(np.linalg.norm(e[0] - e[1]) / log_modulus(d))


def quasi_lipschitz_max(pairs_x, pairs_y, ensemble: Ensemble, config: FieldConfig) -> float:
    """Maximum of :func:`quasi_lipschitz_ratio` over many pairs in one pass."""
    pairs_x = np.asarray(pairs_x, dtype=float).reshape(-1, 3)
    pairs_y = np.asarray(pairs_y, dtype=float).reshape(-1, 3)
    d = np.linalg.norm(pairs_x - pairs_y, axis=1)
    if np.any(d == 0):
        raise ValueError("degenerate pair: x and y coincide")
    if len(ensemble) == 0:
        return 0.0
    e = field_points(np.vstack([pairs_x, pairs_y]), ensemble, config)
    n = pairs_x.shape[0]
    return float(np.max(np.linalg.norm(e[:n] - e[n:], axis=1) / log_modulus(d)))
