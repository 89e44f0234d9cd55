"""
Virtual diagonals of matrix block algebras.

Builds the clock-and-shift diagonal of M_2 + M_3, checks both axioms,
and shows the twirl identity that drives every intertwiner in the package:
averaging V over the Weyl group of M_n gives (tr V / n) I.
"""

import numpy as np

from nearincl import identity_map, conjugation_map, psi_apply, verify_diagonal, weyl_diagonal
from nearincl.diagonal import multiply, projective_norm_upper_bound

u = weyl_diagonal([2, 3])
print(f"algebra: {u.algebra}")
print(f"pairs in the diagonal: {len(u)}")
check = verify_diagonal(u)
print(f"a.u - u.a residual: {check.commutation_residual:.1e}")
print(f"m(u) - 1 residual:  {check.multiplication_residual:.1e}")
print(f"projective norm bound: {projective_norm_upper_bound(u)}")
print(f"m(u) is the identity: {np.allclose(multiply(u), np.eye(5))}")

# Psi_{id, ad_V}(u) for the diagonal of M_4 is (tr V / 4) V^-1
n = 4
rng = np.random.default_rng(0)
q, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
u4 = weyl_diagonal([n])
s = psi_apply(identity_map(u4.algebra), conjugation_map(identity_map(u4.algebra), q), u4)
err = np.max(np.abs(s - np.trace(q) / n * np.linalg.inv(q)))
print(f"twirl identity error on M_{n}: {err:.1e}")
