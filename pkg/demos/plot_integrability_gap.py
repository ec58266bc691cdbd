"""
When the cross term escapes the hypothesis integrals
====================================================

Along u_k = a_k * sin(pi x / L) with a_k ramping from 0.01 to 100, the
hypothesis integrands ||u||^p1 and ||u||^p2 stay finite while the cross
integrand ||u||_{W1p1} ||u||^{p2-1}_{Lp2} outgrows them when p1 < p2.
"""

import numpy as np
from itoenergy import SpdeConfig, amplitude_ramp_run, integrability_report

for p1, p2 in [(1.5, 4.0), (2.0, 2.0), (3.0, 3.0)]:
    rep = integrability_report(amplitude_ramp_run(SpdeConfig(p1=p1, p2=p2)))
    print(f"p1={p1}, p2={p2}: ratio {rep.ratio[0]:.2e} -> {rep.ratio[-1]:.2e}, "
          f"growth {rep.ratio_growth:.3g}x, Young slack min {rep.young_slack.min():.3g}, gap={rep.gap}")
