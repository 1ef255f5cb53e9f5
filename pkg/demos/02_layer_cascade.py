"""Solve the three construction stages one after the other and show how
each stage hands its mismatch to the next.

Stage 0: the leading boundary layer corrects the wall slip of the outer
shear flow, marching a parabolic MHD system in x.  Its far-field vertical
traces do not vanish.
Stage 1a: the outer elliptic corrector absorbs exactly those traces.
Stage 1b: the first-order layer cancels the wall slip that the corrector
itself re-introduces, plus the outer magnetic wall shear.
"""

import numpy as np

from mhdbl.euler1 import solve_euler1
from mhdbl.grid import GridSpec, diff
from mhdbl.layer0 import solve_layer0
from mhdbl.profiles import CutoffSet, builtin_profile, params_for
from mhdbl.layer1 import solve_layer1

params = params_for("mild")
flow, data = builtin_profile("mild", params)
grid = GridSpec(L=0.25, nx=32, ny=64, nY=32)

state, l0 = solve_layer0(flow, data, params, CutoffSet(), grid)
print("stage 0: leading layer")
print("  wall slip corrected:   u0p(x,0) =",
      round(float(l0.u0p.values[5, 0]), 6),
      " (= u_b - u_e =", round(params.u_b - flow.u_e, 6), ")")
print("  leftover traces:       max|v-trace| =",
      round(float(np.max(np.abs(l0.trace_v1e))), 6),
      " max|g-trace| =", round(float(np.max(np.abs(l0.trace_g1e))), 6))

e1 = solve_euler1(l0, flow, data, params, CutoffSet())
print("stage 1a: outer corrector")
print("  trace absorbed:        max|v1e(x,0) - trace| =",
      f"{np.max(np.abs(e1.v1e.values[:, 0] - l0.trace_v1e)):.2e}")
print("  new wall slip:         max|u1e(x,0)| =",
      f"{np.max(np.abs(e1.u1e.values[:, 0])):.4f}")

l1 = solve_layer1(l0, e1, flow, data, params, CutoffSet())
print("stage 1b: first-order layer")
print("  slip cancelled:        max|up(x,0) + u1e(x,0)| =",
      f"{np.max(np.abs(l1.up.values[1:, 0] + l1.wall.u1e[1:])):.2e}")
dyh = diff(l1.hp, "y", 1).values
print("  magnetic wall slope:   dy hp(x,0) =",
      round(float(dyh[5, 0]), 6),
      " (= -d_Y h0e(0) =", round(-float(flow.d_h0e(np.array(0.0))), 6), ")")
