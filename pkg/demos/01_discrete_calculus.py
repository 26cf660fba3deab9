"""Staggered calculus on a small mesh.

Builds the interior mesh M, its dual M*, the closure M_bar, applies the
difference/average operators, and runs the summation-by-parts identity suite.
"""
import numpy as np

from shum import GridFunction, Mesh, apply_Ah, apply_Dh, assemble_biharmonic, identity_suite, outward_normal

mesh = Mesh(3)
print("h        =", mesh.h)
print("M        =", mesh.M.points)
print("M*       =", mesh.M_star.points)
print("boundary =", mesh.boundary_M.points, "normals",
      [outward_normal(mesh.M, x) for x in mesh.boundary_M.points])

# D_h and A_h of x^2 land on the half points.
u = GridFunction.from_function(mesh.M_bar, lambda x: x**2)
print("D_h x^2 on M* :", apply_Dh(u, mesh.M_star).values)
print("A_h x^2 on M* :", apply_Ah(u, mesh.M_star).values)

# The clamped biharmonic matrix is symmetric positive definite.
A = assemble_biharmonic(Mesh(8)).matrix
print("biharmonic row 4 * h^4:", np.round(A[4] * Mesh(8).h ** 4, 12))
print("smallest eigenvalue   :", np.linalg.eigvalsh(A)[0])

for N in (5, 9, 17):
    rep = identity_suite(Mesh(N), trials=50, seed=0)
    print(f"N={N:2d} worst identity residual {max(rep.residuals.values()):.2e}  passed={rep.passed}")
