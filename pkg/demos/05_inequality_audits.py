"""Evaluate the energy, positivity and sup-norm inequality audits on a
converged remainder state.

Each audit computes both sides of an inequality the analysis relies on and
reports the left/right ratio; a ratio comfortably below 10 means the
inequality holds with margin at this resolution.  The energy audit also
evaluates the underlying integration-by-parts identity term by term and
reports its residual imbalance, which is pure discretization error.
"""

import numpy as np

from mhdbl import audit
from mhdbl import remainder as rem
from mhdbl.composer import compose, residuals, run_pipeline
from mhdbl.grid import GridSpec
from mhdbl.profiles import builtin_profile, params_for

params = params_for("mild", L=0.4, eps=1e-2)
flow, data = builtin_profile("mild", params)
grid = GridSpec(L=0.4, nx=48, ny=96)
margin = 0.1 * grid.L

l0, e1, l1 = run_pipeline(flow, data, params, grid)
app = compose(l0, e1, l1, flow, params)
res = residuals(app, params, inflow_margin=margin)
base = rem.build_baseline(l0, e1, flow, params)
state = rem.picard_iterate(base, res, l1, params, inflow_margin=margin)

# audit with the same masked sources the solve used
raw = rem.nonlinear_sources(state, res, l1, params)
t = np.clip((grid.x - margin) / (0.5 * margin), 0.0, 1.0)
mask = (t * t * (3.0 - 2.0 * t))[:, None]
f = tuple(x.like(mask * x.values) for x in raw)

erep = audit.energy_audit(state, base, *f, params)
prep = audit.positivity_audit(state, base, *f, params)
F = audit.stokes_sources(state, base, *f)
lrep = audit.linf_audit(state, *F, params)

for name, rep in (("energy", erep), ("positivity", prep),
                  ("sup-norm", lrep)):
    print(f"{name:10s} lhs={rep.lhs:10.4e}  rhs={rep.rhs:10.4e}  "
          f"ratio={rep.ratio:7.4f}  passed={rep.passed}")
print("\nenergy identity imbalance (discretization error):",
      f"{erep.extra['rel_imbalance']:.3e}")
hp = audit.hardy_poincare_check(state.u_eps)
print("Poincare ratio:", round(hp["poincare_ratio"], 4),
      " Hardy ratio:", round(hp["hardy_ratio"], 4))
