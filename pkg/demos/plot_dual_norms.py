"""
Dual norms of an intersection
=============================

The norm of a functional on V1 ∩ V2 is an inf-max over decompositions; a
conic program solves it, an exhaustive grid brackets it.
"""

import numpy as np
from itoenergy import SpaceDescriptor, SpaceFamily, dual_norm_bruteforce, dual_norm_intersection, dual_norm_lp

S = SpaceFamily([1.0, 1.0], [SpaceDescriptor("Lp", 1.5, [1.0, 2.0]), SpaceDescriptor("Lp", 3.0, [0.5, 1.0])])
w = np.array([1.0, -0.4])
print("constituent duals:", [dual_norm_lp(w, i, S) for i in range(2)])
print("intersection dual:", dual_norm_intersection(w, S))
for res in (20, 80, 320):
    value, err = dual_norm_bruteforce(w, S, resolution=res)
    print(f"grid {res:4d}: {value:.6f}  (lower bound {value - err:.6f})")
