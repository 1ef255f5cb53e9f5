"""Inspect the built-in data profiles and run the assumption checks.

Every downstream solve assumes structural hypotheses on the outer shear
flow and the boundary data: positive tangential velocity, a magnetic field
strictly dominated by the velocity, decay of the wall mismatch, and corner
compatibility.  This script prints the margin of every check for each
built-in profile.
"""

import numpy as np

from mhdbl.grid import GridSpec
from mhdbl.profiles import (AssumptionThresholds, builtin_profile,
                            params_for, validate_assumptions)

for name in ("mild", "zero-mismatch", "strong-shear"):
    params = params_for(name)
    flow, data = builtin_profile(name, params)
    report = validate_assumptions(params, flow, data,
                                  AssumptionThresholds(),
                                  GridSpec(L=params.L))
    print(f"\n=== {name} (eps={params.eps}, u_b={params.u_b}) ===")
    Y = np.array([0.0, 1.0, 5.0])
    print("  u0e(0,1,5) =", np.round(flow.u0e(Y), 4),
          " h0e(0,1,5) =", np.round(flow.h0e(Y), 4))
    for c in report.checks:
        mark = "ok " if c.passed else "FAIL"
        print(f"  [{mark}] {c.name:40s} margin={c.margin:+.3e}")
    print("  all passed:", report.all_passed)
