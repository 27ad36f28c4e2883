"""Discrete boundary operators on a panel mesh.

Entry ``(i, j)`` is the integral of the kernel over source panel ``j``
evaluated at the centroid of panel ``i``.  Operators are stored densely or
applied matrix-free (near field precomputed sparse, far field recomputed on
every product).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import kernels
from .kernels import LAPLACE, KernelKind, quadrature_rule, subdivided_rule
from .mesh import SurfaceMesh
from .model import BemError

DENSE_LIMIT = 20_000
AUTO_DENSE_BELOW = 4_000
DUMP_MAGIC = b"BEMOP1"

FIELD_TAGS = ("sigma", "phi", "dphi_dn", "psi_cov")


class DimensionError(BemError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BoundaryField:
    """One value per panel of ``mesh``."""

    mesh: SurfaceMesh
    values: np.ndarray
    tag: str = "sigma"

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.shape[0] != len(self.mesh):
            raise DimensionError(f"field has {values.shape[0]} values for {len(self.mesh)} panels")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if self.tag not in FIELD_TAGS:
            raise ValueError(f"unknown field tag {self.tag!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def integral(self) -> float:
        return float(np.dot(self.mesh.areas, self.values))


def _targets_for(mesh: SurfaceMesh):
    return mesh.centroids, mesh.normals, np.arange(len(mesh), dtype=np.int64)


def _rule_arrays(rule):
    rule = quadrature_rule(rule) if isinstance(rule, int) else rule
    near = subdivided_rule()
    glx, glw = kernels._gauss_legendre(kernels.POLAR_NODES)
    return rule, near, glx, glw


def _dense_block(code, kind, mesh, targets, tnormals, self_idx, rule):
    rule, near, glx, glw = _rule_arrays(rule)
    out = np.empty((len(targets), len(mesh)))
    kernels._assemble_dense(
        code, kind.code, np.ascontiguousarray(targets, dtype=float), np.ascontiguousarray(tnormals, dtype=float),
        self_idx, mesh.corners, mesh.normals, mesh.areas, mesh.centroids, mesh.diameters,
        rule.barycentric, rule.weights, near.barycentric, near.weights, glx, glw, kernels.NEAR_FACTOR, out,
    )
    return out


class BoundaryOperator:
    """Square operator ``V``, ``K`` or ``Kprime`` for one kernel on one mesh.

    Parameters
    ----------
    kind : {'V', 'K', 'Kprime'}
    kernel : KernelKind
    mesh : SurfaceMesh
    rule : int
        Far-field points per triangle (1, 3 or 7).
    storage : {'auto', 'dense', 'matrix-free'}
    """

    def __init__(self, kind: str, kernel: KernelKind, mesh: SurfaceMesh, rule: int = 3, storage: str = "auto"):
        if kind not in kernels._OP_CODES:
            raise ValueError(f"unknown operator kind {kind!r}")
        if storage == "auto":
            storage = "dense" if len(mesh) < AUTO_DENSE_BELOW else "matrix-free"
        if storage not in ("dense", "matrix-free"):
            raise ValueError(f"unknown storage {storage!r}")
        if storage == "dense" and len(mesh) > DENSE_LIMIT:
            raise MemoryError(f"dense assembly refused above {DENSE_LIMIT} panels; use storage='matrix-free'")
        self.kind = kind
        self.kernel = kernel
        self.mesh = mesh
        self.rule = quadrature_rule(rule) if isinstance(rule, int) else rule
        self.storage = storage
        self._code = kernels._OP_CODES[kind]
        kernels.set_num_threads()
        if storage == "dense":
            self.matrix = _dense_block(self._code, kernel, mesh, *_targets_for(mesh), self.rule)
            self.matrix.setflags(write=False)
            self._diag = np.ascontiguousarray(np.diag(self.matrix))
        else:
            self.matrix = None
            self._setup_matrix_free()

    def __repr__(self):
        return f"BoundaryOperator({self.kind}, {self.kernel}, n={self.n}, {self.storage})"

    @property
    def n(self) -> int:
        return len(self.mesh)

    @property
    def shape(self):
        return (self.n, self.n)

    def _setup_matrix_free(self):
        mesh = self.mesh
        targets, tnormals, self_idx = _targets_for(mesh)
        reach = kernels.NEAR_FACTOR * mesh.diameters.max()
        tree = cKDTree(mesh.centroids)
        rows, cols = [], []
        for i, nbrs in enumerate(tree.query_ball_point(targets, reach)):
            nbrs = np.asarray(nbrs, dtype=np.int64)
            d = np.linalg.norm(mesh.centroids[nbrs] - targets[i], axis=1)
            nbrs = nbrs[(d < kernels.NEAR_FACTOR * mesh.diameters[nbrs]) | (nbrs == i)]
            rows.append(np.full(len(nbrs), i, dtype=np.int64))
            cols.append(nbrs)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        rule, near, glx, glw = _rule_arrays(self.rule)
        vals = np.empty(len(rows))
        kernels._entries_for_pairs(
            self._code, self.kernel.code, rows, cols, targets, tnormals, self_idx, mesh.corners, mesh.normals,
            mesh.areas, mesh.centroids, mesh.diameters, rule.barycentric, rule.weights, near.barycentric,
            near.weights, glx, glw, kernels.NEAR_FACTOR, vals,
        )
        self._near = sp.csr_matrix((vals, (rows, cols)), shape=self.shape)
        self._near.sort_indices()
        self._diag = np.ascontiguousarray(self._near.diagonal())
        c = mesh.corners
        b = rule.barycentric
        qpoints = np.empty((self.n, len(b), 3))
        for k in range(len(b)):
            qpoints[:, k, :] = b[k, 0] * c[:, 0, :] + b[k, 1] * c[:, 1, :] + b[k, 2] * c[:, 2, :]
        qweights = np.empty((self.n, len(b) + 1))
        qweights[:, : len(b)] = rule.weights
        qweights[:, len(b)] = mesh.areas
        self._qpoints = qpoints
        self._qweights = qweights

    def diagonal(self) -> np.ndarray:
        return self._diag

    def apply(self, x):
        """Matrix-vector product; ``x`` may be (n,), (n, m) or a BoundaryField."""
        values = x.values if isinstance(x, BoundaryField) else np.asarray(x, dtype=float)
        if values.shape[0] != self.n:
            raise DimensionError(f"operator of size {self.n} applied to vector of length {values.shape[0]}")
        if self.storage == "dense":
            y = self.matrix @ values
        else:
            X = np.ascontiguousarray(values.reshape(self.n, -1))
            far = np.empty_like(X)
            targets, tnormals, self_idx = _targets_for(self.mesh)
            kernels._apply_far(
                self._code, self.kernel.code, targets, tnormals, self_idx, self._qpoints, self._qweights,
                self.mesh.normals, self.mesh.centroids, self.mesh.diameters, kernels.NEAR_FACTOR, X, far,
            )
            y = (far + self._near @ X).reshape(values.shape)
        if isinstance(x, BoundaryField):
            return BoundaryField(self.mesh, y, x.tag)
        return y

    __matmul__ = apply

    def weighted_column_sums(self, weights) -> np.ndarray:
        """``sum_i weights[i] * A[i, j]`` for every column ``j``."""
        w = np.ascontiguousarray(weights, dtype=float).reshape(-1)
        if w.shape[0] != self.n:
            raise DimensionError(f"expected {self.n} weights, got {w.shape[0]}")
        if self.storage == "dense":
            return w @ self.matrix
        out = np.empty(self.n)
        targets, tnormals, self_idx = _targets_for(self.mesh)
        kernels._far_column_sums(
            self._code, self.kernel.code, targets, tnormals, self_idx, self._qpoints, self._qweights,
            self.mesh.normals, self.mesh.centroids, self.mesh.diameters, kernels.NEAR_FACTOR, w, out,
        )
        return out + self._near.T @ w

    def to_dense(self) -> np.ndarray:
        if self.storage == "dense":
            return self.matrix
        return self.apply(np.eye(self.n))

    def dump(self, path):
        """Write the matrix as 16-byte header (magic, u32 size) plus row-major float64."""
        dense = np.ascontiguousarray(self.to_dense(), dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(DUMP_MAGIC + struct.pack("<I", self.n) + b"\0" * 6)
            fh.write(dense.tobytes(order="C"))


class DifferenceOperator:
    """``first - second`` for two operators of the same kind on one mesh."""

    def __init__(self, first: BoundaryOperator, second: BoundaryOperator):
        if first.kind != second.kind or first.mesh is not second.mesh:
            raise ValueError("difference needs two operators of the same kind on the same mesh")
        self.first = first
        self.second = second
        self.kind = first.kind
        self.mesh = first.mesh
        self.storage = first.storage
        if first.storage == "dense" and second.storage == "dense":
            self.matrix = first.matrix - second.matrix
            self.matrix.setflags(write=False)
        else:
            self.matrix = None

    def __repr__(self):
        return f"DifferenceOperator({self.first!r} - {self.second!r})"

    @property
    def n(self):
        return self.first.n

    @property
    def shape(self):
        return self.first.shape

    def diagonal(self):
        return self.first.diagonal() - self.second.diagonal()

    def apply(self, x):
        if self.matrix is not None:
            values = x.values if isinstance(x, BoundaryField) else np.asarray(x, dtype=float)
            if values.shape[0] != self.n:
                raise DimensionError(f"operator of size {self.n} applied to vector of length {values.shape[0]}")
            y = self.matrix @ values
            return BoundaryField(self.mesh, y, x.tag) if isinstance(x, BoundaryField) else y
        a = self.first.apply(x)
        b = self.second.apply(x)
        if isinstance(x, BoundaryField):
            return BoundaryField(self.mesh, a.values - b.values, x.tag)
        return a - b

    __matmul__ = apply

    def to_dense(self):
        return self.matrix if self.matrix is not None else self.first.to_dense() - self.second.to_dense()

    dump = BoundaryOperator.dump


class DiagonalShift:
    """``op + diag(shift)``; everything else is delegated to ``op``."""

    def __init__(self, op, shift):
        self.op = op
        self.shift = np.asarray(shift, dtype=float).reshape(-1)
        if self.shift.shape[0] != op.n:
            raise DimensionError("shift length does not match the operator")
        self.shift.setflags(write=False)
        self.kind = op.kind
        self.kernel = op.kernel
        self.mesh = op.mesh
        self.storage = op.storage

    def __repr__(self):
        return f"DiagonalShift({self.op!r})"

    @property
    def n(self):
        return self.op.n

    @property
    def shape(self):
        return self.op.shape

    def diagonal(self):
        return self.op.diagonal() + self.shift

    def apply(self, x):
        y = self.op.apply(x)
        if isinstance(x, BoundaryField):
            return BoundaryField(self.mesh, y.values + self.shift * x.values, x.tag)
        values = np.asarray(x, dtype=float)
        return y + self.shift.reshape((-1,) + (1,) * (values.ndim - 1)) * values

    __matmul__ = apply

    def to_dense(self):
        dense = np.array(self.op.to_dense())
        dense[np.diag_indices(self.n)] += self.shift
        return dense

    dump = BoundaryOperator.dump


KPRIME_DIAGONALS = ("gauss-law", "zero")


def adjoint_double_layer(mesh: SurfaceMesh, rule: int = 3, storage: str = "auto", diagonal: str = "gauss-law"):
    """Laplace K' with a choice of diagonal.

    ``'zero'`` keeps the flat-panel self-term.  ``'gauss-law'`` replaces the
    diagonal so that the area-weighted column sums equal ``-1/2``, the
    discrete form of ``int K' sigma = -1/2 int sigma`` on a closed surface.
    Open meshes always get the plain diagonal.
    """
    if diagonal not in KPRIME_DIAGONALS:
        raise ValueError(f"unknown K' diagonal {diagonal!r}; expected one of {KPRIME_DIAGONALS}")
    op = BoundaryOperator("Kprime", LAPLACE, mesh, rule, storage)
    if diagonal == "zero" or not mesh.closed:
        return op
    a = mesh.areas
    return DiagonalShift(op, (-0.5 * a - op.weighted_column_sums(a)) / a)


def assemble(kind: str, kernel: KernelKind, mesh: SurfaceMesh, rule: int = 3, storage: str = "auto") -> BoundaryOperator:
    return BoundaryOperator(kind, kernel, mesh, rule, storage)


def assemble_difference(kind: str, kernel: KernelKind, mesh: SurfaceMesh, rule: int = 3, storage: str = "auto",
                        laplace: BoundaryOperator | None = None) -> DifferenceOperator:
    """``kind`` operator of ``kernel`` minus the Laplace one (e.g. V^Y - V^L)."""
    laplace = laplace if laplace is not None else BoundaryOperator(kind, LAPLACE, mesh, rule, storage)
    return DifferenceOperator(BoundaryOperator(kind, kernel, mesh, rule, storage), laplace)


def apply(op, x):
    return op.apply(x)


def load_operator_dump(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:6] != DUMP_MAGIC:
            raise ValueError(f"{path}: not an operator dump")
        (n,) = struct.unpack("<I", header[6:10])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * n:
        raise ValueError(f"{path}: expected {n * n} values, found {data.size}")
    return data.reshape(n, n)


def evaluation_matrix(kind: str, kernel: KernelKind, mesh: SurfaceMesh, points, normals=None, rule: int = 3) -> np.ndarray:
    """Entries from every panel to arbitrary (off-surface) points, shape (p, n)."""
    points = np.ascontiguousarray(points, dtype=float).reshape(-1, 3)
    normals = np.zeros_like(points) if normals is None else np.ascontiguousarray(normals, dtype=float).reshape(-1, 3)
    self_idx = np.full(len(points), -1, dtype=np.int64)
    kernels.set_num_threads()
    return _dense_block(kernels._OP_CODES[kind], kernel, mesh, points, normals, self_idx, rule)
