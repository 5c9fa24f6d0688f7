"""Compiled inner loops.

All field kernels evaluate a contiguous range ``[lo, hi)`` of targets and sum
sources in a fixed order, so tiling the target range over threads cannot
change a single bit of the result.  They release the GIL.
"""
import math

import numpy as np
from numba import njit

QUARTER_TURN = math.pi / 4.0


@njit(cache=True, nogil=True)
def direct_field(tpos, texcl, spos, sw, eps2, out, lo, hi):
    """Plummer-softened direct sum; returns the count of skipped coincidences."""
    ns = spos.shape[0]
    hits = 0
    for i in range(lo, hi):
        x0 = tpos[i, 0]
        x1 = tpos[i, 1]
        x2 = tpos[i, 2]
        ex = 0.0
        ey = 0.0
        ez = 0.0
        skip = texcl[i]
        for j in range(ns):
            if j == skip:
                continue
            dx = x0 - spos[j, 0]
            dy = x1 - spos[j, 1]
            dz = x2 - spos[j, 2]
            d2 = dx * dx + dy * dy + dz * dz + eps2
            if d2 == 0.0:
                hits += 1
                continue
            s = sw[j] / (d2 * math.sqrt(d2))
            ex += dx * s
            ey += dy * s
            ez += dz * s
        out[i, 0] = ex
        out[i, 1] = ey
        out[i, 2] = ez
    return hits


@njit(cache=True, nogil=True)
def hybrid_field(tpos, texcl, spos, sw, slab0, start, stop, smass, scent,
                 eps2, near, out, lo, hi):
    """Direct sum over slabs within axial gap ``near``, monopoles beyond.

    Sources are sorted by slab; slab ``slab0 + k`` owns ``[start[k], stop[k])``.
    """
    nslab = start.shape[0]
    hits = 0
    for i in range(lo, hi):
        x0 = tpos[i, 0]
        x1 = tpos[i, 1]
        x2 = tpos[i, 2]
        ex = 0.0
        ey = 0.0
        ez = 0.0
        skip = texcl[i]
        for k in range(nslab):
            a = slab0 + k
            gap = 0.0
            if a - x0 > gap:
                gap = a - x0
            if x0 - (a + 1.0) > gap:
                gap = x0 - (a + 1.0)
            if gap < near:
                for j in range(start[k], stop[k]):
                    if j == skip:
                        continue
                    dx = x0 - spos[j, 0]
                    dy = x1 - spos[j, 1]
                    dz = x2 - spos[j, 2]
                    d2 = dx * dx + dy * dy + dz * dz + eps2
                    if d2 == 0.0:
                        hits += 1
                        continue
                    s = sw[j] / (d2 * math.sqrt(d2))
                    ex += dx * s
                    ey += dy * s
                    ez += dz * s
            elif smass[k] > 0.0:
                dx = x0 - scent[k, 0]
                dy = x1 - scent[k, 1]
                dz = x2 - scent[k, 2]
                d2 = dx * dx + dy * dy + dz * dz + eps2
                s = smass[k] / (d2 * math.sqrt(d2))
                ex += dx * s
                ey += dy * s
                ez += dz * s
        out[i, 0] = ex
        out[i, 1] = ey
        out[i, 2] = ez
    return hits


@njit(cache=True, nogil=True)
def pair_potential(pos, w, eps2, out):
    """``out[i] = sum_{j != i} w_j / sqrt(|x_i - x_j|^2 + eps2)``."""
    n = pos.shape[0]
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if j == i:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            d2 = dx * dx + dy * dy + dz * dz + eps2
            if d2 == 0.0:
                continue
            acc += w[j] / math.sqrt(d2)
        out[i] = acc


@njit(cache=True)
def kick(vel, field, half_dt):
    for i in range(vel.shape[0]):
        vel[i, 0] += field[i, 0] * half_dt
        vel[i, 1] += field[i, 1] * half_dt
        vel[i, 2] += field[i, 2] * half_dt


@njit(cache=True)
def rotate(v2, v3, angle):
    """Exact flow of ``v2' = b v3, v3' = -b v2`` over ``angle = b dt``."""
    c = math.cos(angle)
    s = math.sin(angle)
    return c * v2 + s * v3, c * v3 - s * v2


@njit(cache=True)
def drift_rotate_drift(pos, vel, dt, A2, theta, magnetic):
    """Magnetic-drift part of the Strang step, subcycled when ``b dt > pi/4``.

    The subcycle count comes from ``b`` at the probe midpoint ``x + v dt/2``.
    Returns the index of the first particle that reached ``r >= A``, or -1.
    """
    for i in range(pos.shape[0]):
        x0 = pos[i, 0]
        x1 = pos[i, 1]
        x2 = pos[i, 2]
        v0 = vel[i, 0]
        v1 = vel[i, 1]
        v2 = vel[i, 2]
        nsub = 1
        if magnetic:
            p1 = x1 + 0.5 * dt * v1
            p2 = x2 + 0.5 * dt * v2
            r2 = p1 * p1 + p2 * p2
            if r2 >= A2:
                return i
            b = (A2 - r2) ** (-theta)
            nsub = max(1, int(math.ceil(abs(b * dt) / QUARTER_TURN)))
        h = dt / nsub
        for _ in range(nsub):
            x0 += 0.5 * h * v0
            x1 += 0.5 * h * v1
            x2 += 0.5 * h * v2
            if magnetic:
                r2 = x1 * x1 + x2 * x2
                if r2 >= A2:
                    return i
                b = (A2 - r2) ** (-theta)
                v1, v2 = rotate(v1, v2, b * h)
            x0 += 0.5 * h * v0
            x1 += 0.5 * h * v1
            x2 += 0.5 * h * v2
        if x1 * x1 + x2 * x2 >= A2:
            return i
        pos[i, 0] = x0
        pos[i, 1] = x1
        pos[i, 2] = x2
        vel[i, 1] = v1
        vel[i, 2] = v2
    return -1


@njit(cache=True)
def accumulate(work, torque, pos0, vel0, e0, pos1, vel1, e1, half_dt):
    """Trapezoid increments of ``int V.E ds`` and ``int (X2 E3 - X3 E2) ds``."""
    for i in range(work.shape[0]):
        p0 = vel0[i, 0] * e0[i, 0] + vel0[i, 1] * e0[i, 1] + vel0[i, 2] * e0[i, 2]
        p1 = vel1[i, 0] * e1[i, 0] + vel1[i, 1] * e1[i, 1] + vel1[i, 2] * e1[i, 2]
        work[i] += half_dt * (p0 + p1)
        q0 = pos0[i, 1] * e0[i, 2] - pos0[i, 2] * e0[i, 1]
        q1 = pos1[i, 1] * e1[i, 2] - pos1[i, 2] * e1[i, 1]
        torque[i] += half_dt * (q0 + q1)


@njit(cache=True)
def max_speed(vel):
    m = 0.0
    for i in range(vel.shape[0]):
        s = vel[i, 0] * vel[i, 0] + vel[i, 1] * vel[i, 1] + vel[i, 2] * vel[i, 2]
        if s > m:
            m = s
    return math.sqrt(m)
