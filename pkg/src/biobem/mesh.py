"""Closed triangulated surfaces: generation, file I/O and validation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .model import BemError, BemWarning, Solute

MAX_SUBDIVISIONS = 8
MIN_PANEL_AREA = 1e-12


class MeshError(BemError, ValueError):
    pass


class MeshFormatError(MeshError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


class OrientationWarning(BemWarning):
    pass


@dataclass(frozen=True)
class Panel:
    vertex_indices: tuple[int, int, int]
    centroid: np.ndarray
    normal: np.ndarray
    area: float


class SurfaceMesh:
    """Flat-triangle surface with outward normals.

    Geometry is held as arrays; ``panel(i)`` gives a per-panel view.
    """

    def __init__(self, vertices, faces, *, closed: bool = True, validate: bool = True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float).reshape(-1, 3)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64).reshape(-1, 3)
        self.closed = closed
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise MeshError("face index out of range")
        for arr in (self.vertices, self.faces):
            arr.setflags(write=False)
        if validate:
            self.validate()

    def __len__(self):
        return self.faces.shape[0]

    def __repr__(self):
        return f"SurfaceMesh(panels={len(self)}, vertices={len(self.vertices)}, closed={self.closed})"

    @cached_property
    def corners(self) -> np.ndarray:
        """(n, 3, 3) array of panel vertex coordinates."""
        c = np.ascontiguousarray(self.vertices[self.faces])
        c.setflags(write=False)
        return c

    @cached_property
    def _raw_normals(self) -> np.ndarray:
        c = self.corners
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._raw_normals, axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        n = self._raw_normals / (2.0 * self.areas[:, None])
        return np.ascontiguousarray(n)

    @cached_property
    def centroids(self) -> np.ndarray:
        return np.ascontiguousarray(self.corners.mean(axis=1))

    @cached_property
    def diameters(self) -> np.ndarray:
        """Longest edge of every panel."""
        c = self.corners
        edges = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 1], c[:, 0] - c[:, 2]], axis=1)
        return np.linalg.norm(edges, axis=2).max(axis=1)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @property
    def volume(self) -> float:
        """Enclosed volume by the divergence theorem (positive when outward)."""
        return float(np.sum(self.areas * np.einsum("ij,ij->i", self.centroids, self.normals)) / 3.0)

    def closure_defect(self) -> float:
        """``|sum area * normal| / total area``; zero for a closed surface."""
        return float(np.linalg.norm((self.areas[:, None] * self.normals).sum(axis=0)) / self.total_area)

    def panel(self, i: int) -> Panel:
        return Panel(tuple(int(k) for k in self.faces[i]), self.centroids[i], self.normals[i], float(self.areas[i]))

    def validate(self):
        if len(self) == 0:
            raise MeshError("mesh has no panels")
        if np.any(self.areas <= MIN_PANEL_AREA):
            bad = int(np.argmin(self.areas))
            raise MeshError(f"degenerate panel {bad} (area {self.areas[bad]:.3e})")
        if self.closed:
            if self.closure_defect() > 1e-8:
                raise MeshError(f"surface is not closed (orientation sum defect {self.closure_defect():.3e})")
            if self.volume <= 0:
                raise MeshError("surface is inward-oriented (negative enclosed volume)")

    def flipped(self) -> "SurfaceMesh":
        return SurfaceMesh(self.vertices, self.faces[:, ::-1], closed=self.closed)

    def transformed(self, rotation=None, translation=(0.0, 0.0, 0.0)) -> "SurfaceMesh":
        rot = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
        verts = self.vertices @ rot.T + np.asarray(translation, dtype=float)
        return SurfaceMesh(verts, self.faces, closed=self.closed)

    def contains(self, points, tol: float = 1e-6) -> np.ndarray:
        """Interior test by total solid angle (closed meshes only).

        Returns ``True`` for points whose winding number is 1 within ``tol``;
        points on or near the surface give fractional values and are
        reported as outside.
        """
        from .kernels import solid_angles

        points = np.asarray(points, dtype=float).reshape(-1, 3)
        winding = solid_angles(self, points).sum(axis=1) / (4.0 * np.pi)
        return np.abs(winding - 1.0) < tol

    def distance_to_panels(self, points) -> np.ndarray:
        """Smallest centroid distance from each point, a cheap proximity measure."""
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        d = np.linalg.norm(points[:, None, :] - self.centroids[None, :, :], axis=2)
        return d.min(axis=1)


# icosahedron with vertices on the unit sphere, faces counter-clockwise seen from outside
_PHI = (1.0 + 5.0**0.5) / 2.0
_ICO_VERTS = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ],
    dtype=float,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


def _subdivide(verts: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges.sort(axis=1)
    unique, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    mids = 0.5 * (verts[unique[:, 0]] + verts[unique[:, 1]])
    mids /= np.linalg.norm(mids, axis=1, keepdims=True)
    nf = len(faces)
    base = len(verts)
    m01 = base + inverse[:nf]
    m12 = base + inverse[nf : 2 * nf]
    m20 = base + inverse[2 * nf :]
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    new_faces = np.concatenate(
        [
            np.stack([a, m01, m20], axis=1),
            np.stack([b, m12, m01], axis=1),
            np.stack([c, m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    return np.concatenate([verts, mids]), new_faces


def icosphere(radius: float = 1.0, subdivisions: int = 0, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Geodesic sphere with ``20 * 4**subdivisions`` panels."""
    if not radius > 0:
        raise MeshError(f"radius must be positive, got {radius}")
    if int(subdivisions) != subdivisions or not 0 <= subdivisions <= MAX_SUBDIVISIONS:
        raise MeshError(f"subdivisions must be an integer in [0, {MAX_SUBDIVISIONS}], got {subdivisions}")
    verts = _ICO_VERTS / np.linalg.norm(_ICO_VERTS, axis=1, keepdims=True)
    faces = _ICO_FACES
    for _ in range(int(subdivisions)):
        verts, faces = _subdivide(verts, faces)
    return SurfaceMesh(radius * verts + np.asarray(center, dtype=float), faces)


def _finish_loaded(verts, faces, path) -> SurfaceMesh:
    mesh = SurfaceMesh(verts, faces, validate=False)
    if np.any(mesh.areas <= MIN_PANEL_AREA):
        raise MeshError(f"{path}: degenerate panel {int(np.argmin(mesh.areas))}")
    if mesh.closure_defect() > 1e-8:
        raise MeshError(f"{path}: surface is not closed (orientation sum defect {mesh.closure_defect():.3e})")
    if mesh.volume < 0:
        warnings.warn(f"{path}: inward-oriented surface, flipping panel orientation", OrientationWarning, stacklevel=3)
        mesh = SurfaceMesh(verts, np.asarray(faces)[:, ::-1], validate=False)
    mesh.validate()
    return mesh


def _data_lines(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if stripped:
                yield lineno, stripped


def _read_off(path) -> SurfaceMesh:
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise MeshFormatError(path, 1, "empty file") from None
    if header != "OFF":
        raise MeshFormatError(path, lineno, f"expected 'OFF' header, got {header!r}")
    try:
        lineno, counts = next(lines)
        nv, nf = (int(tok) for tok in counts.split()[:2])
    except StopIteration:
        raise MeshFormatError(path, lineno + 1, "missing counts line") from None
    except ValueError:
        raise MeshFormatError(path, lineno, f"bad counts line {counts!r}") from None
    verts = np.empty((nv, 3))
    faces = np.empty((nf, 3), dtype=np.int64)
    for k in range(nv + nf):
        try:
            lineno, text = next(lines)
        except StopIteration:
            raise MeshFormatError(path, lineno + 1, "unexpected end of file") from None
        toks = text.split()
        try:
            if k < nv:
                verts[k] = [float(t) for t in toks[:3]]
                if len(toks) < 3:
                    raise ValueError
            else:
                if int(toks[0]) != 3 or len(toks) < 4:
                    raise MeshFormatError(path, lineno, "only triangular faces are supported")
                faces[k - nv] = [int(t) for t in toks[1:4]]
        except ValueError:
            raise MeshFormatError(path, lineno, f"cannot parse {text!r}") from None
    if nf and (faces.min() < 0 or faces.max() >= nv):
        raise MeshError(f"{path}: face index out of range")
    return _finish_loaded(verts, faces, path)


def _read_flat_tri(path) -> SurfaceMesh:
    tris = []
    for lineno, text in _data_lines(path):
        toks = text.split()
        if len(toks) != 9:
            raise MeshFormatError(path, lineno, f"expected 9 coordinates, got {len(toks)}")
        try:
            tris.append([float(t) for t in toks])
        except ValueError:
            raise MeshFormatError(path, lineno, f"cannot parse {text!r}") from None
    if not tris:
        raise MeshError(f"{path}: no triangles")
    corners = np.asarray(tris).reshape(-1, 3)
    verts, inverse = np.unique(corners, axis=0, return_inverse=True)
    return _finish_loaded(verts, inverse.reshape(-1, 3), path)


def load_mesh(path, format: str | None = None) -> SurfaceMesh:
    """Read an OFF or flat-tri surface file.

    ``format`` is inferred from the extension when omitted (``.off`` is OFF,
    anything else flat-tri).
    """
    path = Path(path)
    if format is None:
        format = "off" if path.suffix.lower() == ".off" else "flat-tri"
    if format == "off":
        return _read_off(path)
    if format in ("flat-tri", "tri"):
        return _read_flat_tri(path)
    raise ValueError(f"unknown mesh format {format!r}")


def save_off(mesh: SurfaceMesh, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("OFF\n")
        fh.write(f"{len(mesh.vertices)} {len(mesh)} 0\n")
        for v in mesh.vertices:
            fh.write(" ".join(repr(float(x)) for x in v) + "\n")
        for f in mesh.faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def save_flat_tri(mesh: SurfaceMesh, path):
    with open(path, "w", newline="\n") as fh:
        for tri in mesh.corners:
            fh.write(" ".join(repr(float(x)) for x in tri.reshape(-1)) + "\n")


def union_of_spheres_mesh(solute: Solute, subdivisions: int = 2) -> SurfaceMesh:
    """Van der Waals surface: atom icospheres with buried panels removed.

    The result is not watertight; only per-atom orientation is checked.
    """
    centers = solute.positions
    radii = solute.scaled_radii()
    if np.any(radii <= 0):
        raise MeshError("all atom radii must be positive")
    for i in range(len(radii)):
        same = np.all(centers[i + 1 :] == centers[i], axis=1) & (radii[i + 1 :] == radii[i])
        if np.any(same):
            raise MeshError(f"duplicate atoms {i} and {i + 1 + int(np.argmax(same))}")
    unit = icosphere(1.0, subdivisions)
    verts, faces, owners = [], [], []
    offset = 0
    for i, (c, r) in enumerate(zip(centers, radii)):
        sphere_verts = c + r * unit.vertices
        cents = sphere_verts[unit.faces].mean(axis=1)
        d = np.linalg.norm(cents[:, None, :] - centers[None, :, :], axis=2)
        d[:, i] = np.inf
        keep = np.all(d >= radii[None, :], axis=1)
        used = np.unique(unit.faces[keep])
        remap = np.full(len(unit.vertices), -1, dtype=np.int64)
        remap[used] = np.arange(len(used)) + offset
        verts.append(sphere_verts[used])
        faces.append(remap[unit.faces[keep]])
        owners.append(np.full(int(keep.sum()), i))
        offset += len(used)
    if offset == 0:
        raise MeshError("every panel is buried")
    mesh = SurfaceMesh(np.concatenate(verts), np.concatenate(faces), closed=len(radii) == 1)
    owners = np.concatenate(owners)
    outward = np.einsum("ij,ij->i", mesh.normals, mesh.centroids - centers[owners])
    if np.any(outward <= 0):
        raise MeshError("inconsistent panel orientation in union-of-spheres surface")
    return mesh
