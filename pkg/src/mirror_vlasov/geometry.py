"""Cylinder geometry and the singular mirror field.

The plasma lives in the open cylinder ``r < A`` around the ``x1`` axis and
starts inside the sub-cylinder ``r < A_bar``.  The confining field is axial,
``B(x) = (h(r^2), 0, 0)`` with ``h(u) = (A^2 - u)^(-theta)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised when a point sits on or outside the cylinder wall."""


@dataclass(frozen=True)
class Geometry:
    """Cylinder radii, mirror exponent and axial truncation.

    Parameters
    ----------
    A : float
        Outer cylinder radius; ``h`` diverges at ``r = A``.
    A_bar : float
        Radius of the initial support, ``A/2 < A_bar < A``.
    theta : float
        Mirror exponent, ``theta > 2``.
    L : float
        Axial half-extent of the simulated slab region.
    M : int
        Number of unit slabs on each side of the origin, ``1 <= M <= L``.
    """

    A: float = 1.0
    A_bar: float = 0.6
    theta: float = 3.0
    L: float = 16.0
    M: int = 16

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("A must be positive")
        if not (self.A / 2 < self.A_bar < self.A):
            raise ValueError("A_bar must satisfy A/2 < A_bar < A")
        if not self.theta > 2:
            raise ValueError("theta must exceed 2")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("M must be an integer >= 1")
        if not self.L >= self.M:
            raise ValueError("L must satisfy L >= M")
        object.__setattr__(self, "M", int(self.M))

    @property
    def A_sq(self) -> float:
        return self.A * self.A


def _check_inside(geometry: Geometry, r_sq):
    r_sq = np.asarray(r_sq, dtype=float)
    if np.any(r_sq < 0):
        raise DomainError("squared radius must be non-negative")
    if np.any(r_sq >= geometry.A_sq):
        raise DomainError(
            f"point on or outside the cylinder wall (r^2 >= A^2 = {geometry.A_sq})")
    return r_sq


def eval_h(geometry: Geometry, r_sq):
    """Mirror profile ``h(r^2) = (A^2 - r^2)^(-theta)``.

    Accepts scalars or arrays; raises :class:`DomainError` when any
    ``r_sq >= A^2``.
    """
    r_sq = _check_inside(geometry, r_sq)
    out = (geometry.A_sq - r_sq) ** (-geometry.theta)
    return float(out) if out.ndim == 0 else out


def eval_H(geometry: Geometry, r_sq):
    """Primitive of ``h``: ``H(u) = (A^2 - u)^(1 - theta) / (theta - 1)``.

    No additive constant; only differences of ``H`` are ever used.
    """
    r_sq = _check_inside(geometry, r_sq)
    th = geometry.theta
    out = (geometry.A_sq - r_sq) ** (1.0 - th) / (th - 1.0)
    return float(out) if out.ndim == 0 else out


def eval_B(geometry: Geometry, x) -> np.ndarray:
    """Magnetic field at position(s) ``x``; shape ``(3,)`` or ``(n, 3)``."""
    x = np.asarray(x, dtype=float)
    r_sq = x[..., 1] ** 2 + x[..., 2] ** 2
    out = np.zeros(x.shape)
    out[..., 0] = eval_h(geometry, r_sq)
    return out


def radius(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sqrt(x[..., 1] ** 2 + x[..., 2] ** 2)
