"""
Layer operators on a triangulated sphere
========================================

Collocation matrices of the Laplace and Yukawa single and double layers,
checked against two things that are known exactly: the solid-angle
identity and the eigenvalues of the operators on a sphere.
"""

import numpy as np

from biobem import LAPLACE, Yukawa, icosphere
from biobem.operators import BoundaryOperator, evaluation_matrix
from biobem.oracles import harmonic_symbols

mesh = icosphere(1.0, 3)

# The double layer of a constant density counts solid angle:
# -1 for points inside, 0 outside.
points = np.array([[0.0, 0.0, 0.0], [0.2, -0.4, 0.6], [0.0, 0.0, 1.5], [3.0, 1.0, 0.0]])
rows = evaluation_matrix("K", LAPLACE, mesh, points).sum(axis=1)
for p, s in zip(points, rows):
    print(f"point {p}: K 1 = {s:+.5f}")

# %%
# Zonal harmonics are eigenfunctions of every rotation-invariant operator on
# a sphere.  Apply the assembled matrices to P_n(cos theta) and compare with
# the eigenvalues from one-dimensional quadrature.
cos_theta = mesh.centroids[:, 2]
table = harmonic_symbols(1.0, 0.5, 6)
ops = {
    "V":   (BoundaryOperator("V", LAPLACE, mesh), table.V_L),
    "K":   (BoundaryOperator("K", LAPLACE, mesh), table.K_L),
    "V_Y": (BoundaryOperator("V", Yukawa(0.5), mesh), table.V_Y),
}
print("\n n   " + "   ".join(f"{k:>17s}" for k in ops))
for n in range(0, 5):
    p = np.polynomial.legendre.Legendre.basis(n)(cos_theta)
    cells = []
    for op, symbol in ops.values():
        ratio = np.dot(op.apply(p), p) / np.dot(p, p)
        cells.append(f"{ratio:8.5f} ({symbol[n]:7.5f})")
    print(f" {n}   " + "   ".join(cells))
