"""
Correction sums on dyadic partitions
====================================

The squared drift increments K_n over the pulled-back dyadic partitions
converge to the jump correction.
"""

import numpy as np
from itoenergy import build_partitions, correction_study, mixed_scenario, normalise_mass, random_scenario

# Pure-jump driver: exact agreement as soon as every jump is a partition point.
scn = normalise_mass(random_scenario(seed=11, n_jumps=20))
P = build_partitions(scn.A, 14)
n_cap = P.capture_level(scn.A.jump_times)
study = correction_study(scn, P, max_level=14)
print(f"all jumps captured from level {n_cap}")
for n, k, gap in study.rows():
    print(f"level {n:2d}  K_n = {k:.12f}  gap = {gap:.2e}")

# Jump plus density: only the jump survives in the limit, the density cells
# contribute 1.5 * 2^-n.
mixed = correction_study(mixed_scenario(), max_level=10)
print("target", mixed.target)
print("gap * 2^n:", np.round(mixed.gap * 2.0 ** mixed.levels, 12))
