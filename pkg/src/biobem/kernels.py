"""Laplace and Yukawa kernels and their integrals over flat triangles.

Entry rules for a target ``x`` and a source panel ``j``:

* self (``x`` is the centroid of ``j``): the Laplace single layer is the
  closed-form flat-triangle integral; the Yukawa single layer adds the
  bounded difference ``G_Y - G_L`` integrated in polar coordinates about the
  centroid.  Double-layer entries vanish (``x`` lies in the panel plane).
* near (centroid distance below ``NEAR_FACTOR`` panel diameters): Laplace
  entries are closed form, Yukawa entries add the difference kernel
  integrated with a recursively subdivided 7-point rule.
* far: plain quadrature with the requested rule.

Everything hot is compiled with numba; loops over targets are ``prange``
loops with a fixed summation order inside each row.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from numba import njit, prange

from .model import FOUR_PI, SingularityError

# an old system TBB makes numba warn on every start; prefer OpenMP
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

NEAR_FACTOR = 2.0
NEAR_LEVELS = 4
POLAR_NODES = 24

OP_V, OP_K, OP_KP = 0, 1, 2
_OP_CODES = {"V": OP_V, "K": OP_K, "Kprime": OP_KP}


@dataclass(frozen=True)
class KernelKind:
    """Laplace kernel when ``lengthscale`` is None, Yukawa otherwise."""

    lengthscale: float | None = None

    def __post_init__(self):
        if self.lengthscale is not None and not self.lengthscale > 0:
            raise ValueError(f"Yukawa lengthscale must be positive, got {self.lengthscale}")

    @property
    def is_laplace(self) -> bool:
        return self.lengthscale is None

    @property
    def code(self) -> float:
        # 0.0 selects the Laplace branch inside compiled code
        return 0.0 if self.lengthscale is None else float(self.lengthscale)

    def __str__(self):
        return "Laplace" if self.is_laplace else f"Yukawa({self.lengthscale:g})"


LAPLACE = KernelKind()


def Yukawa(lengthscale: float) -> KernelKind:
    return KernelKind(float(lengthscale))


# --------------------------------------------------------------------------
# quadrature rules on the reference triangle (barycentric coordinates)
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    order: int
    barycentric: np.ndarray
    weights: np.ndarray


def _dunavant7():
    a1, b1 = 0.059715871789770, 0.470142064105115
    a2, b2 = 0.797426985353087, 0.101286507323456
    w0, w1, w2 = 0.225, 0.132394152788506, 0.125939180544827
    pts = [
        (1 / 3, 1 / 3, 1 / 3),
        (a1, b1, b1), (b1, a1, b1), (b1, b1, a1),
        (a2, b2, b2), (b2, a2, b2), (b2, b2, a2),
    ]
    w = [w0, w1, w1, w1, w2, w2, w2]
    return np.array(pts), np.array(w)


@lru_cache(maxsize=None)
def quadrature_rule(order: int = 3) -> QuadratureRule:
    if order == 1:
        bary, w = np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    elif order == 3:
        bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
        w = np.full(3, 1 / 3)
    elif order == 7:
        bary, w = _dunavant7()
        w = w / w.sum()
    else:
        raise ValueError(f"quadrature order must be 1, 3 or 7, got {order}")
    bary.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(order, bary, w)


@lru_cache(maxsize=None)
def subdivided_rule(order: int = 7, levels: int = NEAR_LEVELS) -> QuadratureRule:
    """``order`` rule applied on the ``4**levels`` midpoint children of the triangle."""
    base = quadrature_rule(order)
    tris = [np.eye(3)]
    for _ in range(levels):
        children = []
        for t in tris:
            a, b, c = t
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            children += [np.array([a, ab, ca]), np.array([ab, b, bc]), np.array([ca, bc, c]), np.array([ab, bc, ca])]
        tris = children
    bary = np.concatenate([base.barycentric @ t for t in tris])
    w = np.tile(base.weights, len(tris)) / len(tris)
    bary.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(order, bary, w)


@lru_cache(maxsize=None)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


# --------------------------------------------------------------------------
# compiled primitives
# --------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True)
def _kernel_point(op, lam, x, nx, y, ny):
    """Kernel (times nothing) between target x and source y."""
    r0 = y[0] - x[0]
    r1 = y[1] - x[1]
    r2 = y[2] - x[2]
    d2 = r0 * r0 + r1 * r1 + r2 * r2
    d = math.sqrt(d2)
    if op == 0:
        g = 1.0 / (4.0 * math.pi * d)
        if lam > 0.0:
            g *= math.exp(-d / lam)
        return g
    if op == 1:
        proj = r0 * ny[0] + r1 * ny[1] + r2 * ny[2]
    else:
        proj = -(r0 * nx[0] + r1 * nx[1] + r2 * nx[2])
    f = 1.0
    if lam > 0.0:
        f = math.exp(-d / lam) * (1.0 + d / lam)
    return -f * proj / (4.0 * math.pi * d2 * d)


@njit(cache=True)
def _diff_point(op, lam, x, nx, y, ny):
    """Yukawa minus Laplace kernel, bounded as y -> x."""
    r0 = y[0] - x[0]
    r1 = y[1] - x[1]
    r2 = y[2] - x[2]
    d2 = r0 * r0 + r1 * r1 + r2 * r2
    d = math.sqrt(d2)
    u = d / lam
    if op == 0:
        return math.expm1(-u) / (4.0 * math.pi * d)
    if op == 1:
        proj = r0 * ny[0] + r1 * ny[1] + r2 * ny[2]
    else:
        proj = -(r0 * nx[0] + r1 * nx[1] + r2 * nx[2])
    f = math.expm1(-u) * (1.0 + u) + u
    return -f * proj / (4.0 * math.pi * d2 * d)


@njit(cache=True)
def _laplace_triangle(x, tri, n, on_plane):
    """Closed-form integrals over a flat triangle.

    Returns ``(phi, omega, grad)`` with ``phi = int 1/R``,
    ``omega = int (y - x).n / R^3`` (signed solid angle) and
    ``grad = grad_x int 1/R``.  ``on_plane`` selects the principal value
    for a target inside the panel plane.
    """
    grad = np.zeros(3)
    h = 0.0
    if not on_plane:
        h = (x[0] - tri[0, 0]) * n[0] + (x[1] - tri[0, 1]) * n[1] + (x[2] - tri[0, 2]) * n[2]
    phi = 0.0
    for e in range(3):
        p = tri[e]
        q = tri[(e + 1) % 3]
        ex = q[0] - p[0]
        ey = q[1] - p[1]
        ez = q[2] - p[2]
        le = math.sqrt(ex * ex + ey * ey + ez * ez)
        tx, ty, tz = ex / le, ey / le, ez / le
        # outward in-plane edge normal
        mx = ty * n[2] - tz * n[1]
        my = tz * n[0] - tx * n[2]
        mz = tx * n[1] - ty * n[0]
        px, py, pz = p[0] - x[0], p[1] - x[1], p[2] - x[2]
        qx, qy, qz = q[0] - x[0], q[1] - x[1], q[2] - x[2]
        sm = px * tx + py * ty + pz * tz
        sp = qx * tx + qy * ty + qz * tz
        t0 = px * mx + py * my + pz * mz
        r0 = math.sqrt(t0 * t0 + h * h)
        if r0 > 1e-14 * le:
            L = math.asinh(sp / r0) - math.asinh(sm / r0)
        else:
            L = math.log(max(abs(sp), abs(sm)) / min(abs(sp), abs(sm)))
        phi += t0 * L
        grad[0] -= mx * L
        grad[1] -= my * L
        grad[2] -= mz * L
    omega = 0.0
    if not on_plane:
        ax, ay, az = tri[0, 0] - x[0], tri[0, 1] - x[1], tri[0, 2] - x[2]
        bx, by, bz = tri[1, 0] - x[0], tri[1, 1] - x[1], tri[1, 2] - x[2]
        cx, cy, cz = tri[2, 0] - x[0], tri[2, 1] - x[1], tri[2, 2] - x[2]
        ra = math.sqrt(ax * ax + ay * ay + az * az)
        rb = math.sqrt(bx * bx + by * by + bz * bz)
        rc = math.sqrt(cx * cx + cy * cy + cz * cz)
        num = ax * (by * cz - bz * cy) + ay * (bz * cx - bx * cz) + az * (bx * cy - by * cx)
        den = (
            ra * rb * rc
            + (ax * bx + ay * by + az * bz) * rc
            + (ax * cx + ay * cy + az * cz) * rb
            + (bx * cx + by * cy + bz * cz) * ra
        )
        omega = 2.0 * math.atan2(num, den)
    phi += h * omega
    grad[0] += n[0] * omega
    grad[1] += n[1] * omega
    grad[2] += n[2] * omega
    return phi, omega, grad


@njit(cache=True)
def _yukawa_self_difference(x, tri, n, lam, glx, glw):
    """``int (e^{-R/lam} - 1)/R`` over the triangle from an in-plane point."""
    total = 0.0
    for e in range(3):
        p = tri[e]
        q = tri[(e + 1) % 3]
        ex = q[0] - p[0]
        ey = q[1] - p[1]
        ez = q[2] - p[2]
        le = math.sqrt(ex * ex + ey * ey + ez * ez)
        tx, ty, tz = ex / le, ey / le, ez / le
        mx = ty * n[2] - tz * n[1]
        my = tz * n[0] - tx * n[2]
        mz = tx * n[1] - ty * n[0]
        px, py, pz = p[0] - x[0], p[1] - x[1], p[2] - x[2]
        qx, qy, qz = q[0] - x[0], q[1] - x[1], q[2] - x[2]
        sm = px * tx + py * ty + pz * tz
        sp = qx * tx + qy * ty + qz * tz
        t0 = px * mx + py * my + pz * mz
        if t0 <= 0.0:
            continue
        a = math.atan2(sm, t0)
        b = math.atan2(sp, t0)
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        acc = 0.0
        for k in range(glx.shape[0]):
            ang = mid + half * glx[k]
            rad = t0 / math.cos(ang)
            # radial integral of (e^{-r/lam} - 1) from 0 to rad
            acc += glw[k] * (-lam * math.expm1(-rad / lam) - rad)
        total += half * acc
    return total


@njit(cache=True)
def _entry(op, lam, x, nx, tri, n, area, centroid, diam, is_self, qb, qw, nb, nw, glx, glw, near_factor):
    if is_self:
        if op != 0:
            return 0.0
        phi, _, _ = _laplace_triangle(x, tri, n, True)
        val = phi
        if lam > 0.0:
            val += _yukawa_self_difference(x, tri, n, lam, glx, glw)
        return val / (4.0 * math.pi)
    dx = x[0] - centroid[0]
    dy = x[1] - centroid[1]
    dz = x[2] - centroid[2]
    dc = math.sqrt(dx * dx + dy * dy + dz * dz)
    y = np.empty(3)
    if dc < near_factor * diam:
        phi, omega, grad = _laplace_triangle(x, tri, n, False)
        if op == 0:
            val = phi / (4.0 * math.pi)
        elif op == 1:
            val = -omega / (4.0 * math.pi)
        else:
            val = (grad[0] * nx[0] + grad[1] * nx[1] + grad[2] * nx[2]) / (4.0 * math.pi)
        if lam > 0.0:
            acc = 0.0
            for k in range(nb.shape[0]):
                for c in range(3):
                    y[c] = nb[k, 0] * tri[0, c] + nb[k, 1] * tri[1, c] + nb[k, 2] * tri[2, c]
                acc += nw[k] * _diff_point(op, lam, x, nx, y, n)
            val += area * acc
        return val
    acc = 0.0
    for k in range(qb.shape[0]):
        for c in range(3):
            y[c] = qb[k, 0] * tri[0, c] + qb[k, 1] * tri[1, c] + qb[k, 2] * tri[2, c]
        acc += qw[k] * _kernel_point(op, lam, x, nx, y, n)
    return area * acc


@njit(cache=True, parallel=True)
def _assemble_dense(op, lam, targets, tnormals, self_idx, corners, normals, areas, centroids, diams,
                    qb, qw, nb, nw, glx, glw, near_factor, out):
    nt = targets.shape[0]
    ns = corners.shape[0]
    for i in prange(nt):
        for j in range(ns):
            out[i, j] = _entry(op, lam, targets[i], tnormals[i], corners[j], normals[j], areas[j],
                               centroids[j], diams[j], self_idx[i] == j, qb, qw, nb, nw, glx, glw, near_factor)


@njit(cache=True, parallel=True)
def _entries_for_pairs(op, lam, rows, cols, targets, tnormals, self_idx, corners, normals, areas, centroids,
                       diams, qb, qw, nb, nw, glx, glw, near_factor, out):
    for k in prange(rows.shape[0]):
        i = rows[k]
        j = cols[k]
        out[k] = _entry(op, lam, targets[i], tnormals[i], corners[j], normals[j], areas[j],
                        centroids[j], diams[j], self_idx[i] == j, qb, qw, nb, nw, glx, glw, near_factor)


@njit(cache=True, parallel=True)
def _apply_far(op, lam, targets, tnormals, self_idx, qpoints, qweights, normals, centroids, diams,
               near_factor, X, out):
    """out[i] = sum over far sources j of (quadrature entry) * X[j]."""
    nt = targets.shape[0]
    ns = qpoints.shape[0]
    nq = qpoints.shape[1]
    m = X.shape[1]
    for i in prange(nt):
        x = targets[i]
        nx = tnormals[i]
        acc = np.zeros(m)
        for j in range(ns):
            if self_idx[i] == j:
                continue
            dx = x[0] - centroids[j, 0]
            dy = x[1] - centroids[j, 1]
            dz = x[2] - centroids[j, 2]
            if math.sqrt(dx * dx + dy * dy + dz * dz) < near_factor * diams[j]:
                continue
            # same summation order as _entry's far branch
            s = 0.0
            for k in range(nq):
                s += qweights[j, k] * _kernel_point(op, lam, x, nx, qpoints[j, k], normals[j])
            s *= qweights[j, nq]
            for c in range(m):
                acc[c] += s * X[j, c]
        for c in range(m):
            out[i, c] = acc[c]


@njit(cache=True, parallel=True)
def _far_column_sums(op, lam, targets, tnormals, self_idx, qpoints, qweights, normals, centroids, diams,
                     near_factor, w, out):
    """out[j] = sum over far targets i of w[i] * (quadrature entry i, j)."""
    nt = targets.shape[0]
    ns = qpoints.shape[0]
    nq = qpoints.shape[1]
    for j in prange(ns):
        acc = 0.0
        for i in range(nt):
            if self_idx[i] == j:
                continue
            x = targets[i]
            dx = x[0] - centroids[j, 0]
            dy = x[1] - centroids[j, 1]
            dz = x[2] - centroids[j, 2]
            if math.sqrt(dx * dx + dy * dy + dz * dz) < near_factor * diams[j]:
                continue
            s = 0.0
            for k in range(nq):
                s += qweights[j, k] * _kernel_point(op, lam, x, tnormals[i], qpoints[j, k], normals[j])
            acc += w[i] * s * qweights[j, nq]
        out[j] = acc


# --------------------------------------------------------------------------
# public scalar API
# --------------------------------------------------------------------------


def green(kind: KernelKind, r, rp) -> float:
    """Free-space Green's function ``exp(-d/L)/(4 pi d)`` (L infinite for Laplace)."""
    d = float(np.linalg.norm(np.asarray(r, dtype=float) - np.asarray(rp, dtype=float)))
    if d == 0.0:
        raise SingularityError("Green's function evaluated at its source point")
    g = 1.0 / (FOUR_PI * d)
    if not kind.is_laplace:
        g *= math.exp(-d / kind.lengthscale)
    return g


def _triangle_of(panel):
    tri = getattr(panel, "corners", panel)
    tri = np.ascontiguousarray(tri, dtype=float).reshape(3, 3)
    raw = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    area = 0.5 * np.linalg.norm(raw)
    if area <= 1e-12:
        raise ValueError("degenerate panel")
    diam = max(np.linalg.norm(tri[1] - tri[0]), np.linalg.norm(tri[2] - tri[1]), np.linalg.norm(tri[0] - tri[2]))
    return tri, raw / (2 * area), area, tri.mean(axis=0), diam


def _single_entry(op, kind, panel, target, target_normal, rule):
    tri, n, area, centroid, diam = _triangle_of(panel)
    x = np.asarray(target, dtype=float)
    nx = np.zeros(3) if target_normal is None else np.asarray(target_normal, dtype=float)
    is_self = bool(np.linalg.norm(x - centroid) <= 1e-12 * diam)
    rule = quadrature_rule(rule) if isinstance(rule, int) else rule
    near = subdivided_rule()
    glx, glw = _gauss_legendre(POLAR_NODES)
    return float(
        _entry(op, kind.code, x, nx, tri, n, area, centroid, diam, is_self, rule.barycentric, rule.weights,
               near.barycentric, near.weights, glx, glw, NEAR_FACTOR)
    )


def panel_potential(kind: KernelKind, panel, target, rule=3) -> float:
    """Single-layer integral of unit density over ``panel`` at ``target``.

    ``panel`` is a (3, 3) array of corners (counter-clockwise about the
    outward normal) or any object with a ``corners`` attribute.
    """
    return _single_entry(OP_V, kind, panel, target, None, rule)


def panel_normal_derivative(kind: KernelKind, panel, target, target_normal=None, rule=3, side="row-normal") -> float:
    """Double-layer (``side='row-normal'``) or adjoint double-layer entry.

    ``row-normal`` differentiates the kernel along the source panel normal
    (entries of K); ``target-normal`` along ``target_normal`` (entries of K').
    """
    if side == "row-normal":
        return _single_entry(OP_K, kind, panel, target, target_normal, rule)
    if side == "target-normal":
        if target_normal is None:
            raise ValueError("target-normal derivative needs target_normal")
        return _single_entry(OP_KP, kind, panel, target, target_normal, rule)
    raise ValueError(f"unknown side {side!r}")


def solid_angles(mesh, points) -> np.ndarray:
    """Signed solid angle of every panel seen from every point, shape (p, n).

    Positive on the interior side of an outward mesh.
    """
    points = np.ascontiguousarray(points, dtype=float).reshape(-1, 3)
    out = np.empty((len(points), len(mesh)))
    _solid_angles(points, mesh.corners, mesh.normals, out)
    return out


@njit(cache=True, parallel=True)
def _solid_angles(points, corners, normals, out):
    for i in prange(points.shape[0]):
        for j in range(corners.shape[0]):
            _, omega, _ = _laplace_triangle(points[i], corners[j], normals[j], False)
            out[i, j] = omega


def set_num_threads(n: int | None = None):
    """Set the compiled-kernel thread count (``BEM_THREADS`` when ``n`` is None)."""
    if n is None:
        env = os.environ.get("BEM_THREADS")
        if not env:
            return
        n = int(env)
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
