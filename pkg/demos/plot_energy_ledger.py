"""
The energy ledger of a jump semimartingale
==========================================

A scalar example first, then a random scenario in a three-space intersection.
"""

# One unit jump of the driver with constant drift 1: v jumps from 0 to 1.
# Twice the drift pairing overshoots |v|^2 by exactly the jump correction.
import numpy as np
from itoenergy import energy_ledger, ledger_table, one_jump_scenario, random_scenario

led = energy_ledger(one_jump_scenario(), 1.0)
print("one jump:", {k: round(v, 12) for k, v in led.as_dict().items() if k != "drift_by_space"})

# A random pure-jump scenario: up to 50 driver jumps, step drifts in each
# constituent dual, and a martingale with its own jump times.
scn = random_scenario(seed=3, m=3)
print(scn)
table = ledger_table(scn)
print(f"{'t':>8} {'lhs':>10} {'drift':>10} {'stoch':>10} {'corr':>10} {'[h]':>10} {'residual':>10}")
for l in table[:: max(1, len(table) // 10)]:
    print(f"{l.t:8.4f} {l.lhs:10.4f} {l.term_drift:10.4f} {l.term_stoch:10.4f} "
          f"{l.term_correction:10.4f} {l.term_qv:10.4f} {l.residual:10.1e}")

# Every event time closes to rounding error.
print("max |residual| / (1 + lhs):", max(abs(l.residual) / (1 + l.lhs) for l in table))
