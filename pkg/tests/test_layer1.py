import numpy as np
import pytest

from mhdbl.grid import GridSpec, diff
from mhdbl.layer1 import solve_layer1, stream_identity_residual
from mhdbl.profiles import CutoffSet, builtin_profile, params_for


def test_zero_mismatch_first_order_layer_vanishes(zero_mismatch_small):
    l1 = zero_mismatch_small["l1"]
    for name in ("up", "vp", "hp", "gp", "u1p", "v1p", "h1p", "g1p"):
        f = getattr(l1, name)
        assert np.max(np.abs(f.values)) <= 1e-10, name


def test_mild_wall_conditions(mild_small):
    l1 = mild_small["l1"]
    flow = mild_small["flow"]
    # marched rows: the first-order layer cancels the outer corrector's slip
    # at the wall, the vertical components vanish, and its magnetic wall
    # slope cancels the outer magnetic shear
    assert np.allclose(l1.up.values[1:, 0], -l1.wall.u1e[1:], atol=1e-12)
    assert np.max(np.abs(l1.vp.values[1:, 0])) < 1e-12
    assert np.max(np.abs(l1.gp.values[1:, 0])) < 1e-12
    dyh = diff(l1.hp, "y", 1).values
    slope = float(flow.d_h0e(np.array(0.0)))
    assert np.allclose(dyh[1:, 0], -slope, atol=1e-10)


def test_cutoff_fields_localized(mild_small):
    l1 = mild_small["l1"]
    grid = mild_small["grid"]
    c = CutoffSet()
    # the cut-off versions agree with the raw fields near the wall and are
    # killed beyond the support of chi(y / y_scale)
    inner = grid.y <= 0.5
    assert np.allclose(l1.u1p.values[:, inner], l1.up.values[:, inner],
                       rtol=0, atol=1e-8 + 1e-6 * np.max(np.abs(l1.up.values)))
    assert np.max(np.abs(l1.u1p.values[:, -1])) == 0.0
    assert np.max(np.abs(l1.h1p.values[:, -1])) == 0.0


def test_stream_identity_refines_under_refinement():
    from mhdbl.euler1 import solve_euler1
    from mhdbl.layer0 import solve_layer0
    params = params_for("mild")
    flow, data = builtin_profile("mild", params)
    vals = []
    for nx, ny in ((12, 32), (24, 64), (48, 128)):
        grid = GridSpec(L=0.25, nx=nx, ny=ny, nY=24)
        _, l0 = solve_layer0(flow, data, params, CutoffSet(), grid)
        e1 = solve_euler1(l0, flow, data, params, CutoffSet())
        l1 = solve_layer1(l0, e1, flow, data, params, CutoffSet())
        vals.append(stream_identity_residual(l1, l0, flow, params,
                                             inflow_margin=0.1 * grid.L))
    orders = [np.log2(vals[i] / vals[i + 1]) for i in range(2)]
    assert min(orders) >= 0.9, (vals, orders)


def test_self_convergence_in_x():
    from mhdbl.euler1 import solve_euler1
    from mhdbl.layer0 import solve_layer0
    params = params_for("mild")
    flow, data = builtin_profile("mild", params)
    sols = []
    for nx in (12, 24, 48):
        grid = GridSpec(L=0.25, nx=nx, ny=96, nY=24)
        _, l0 = solve_layer0(flow, data, params, CutoffSet(), grid)
        e1 = solve_euler1(l0, flow, data, params, CutoffSet())
        sols.append(solve_layer1(l0, e1, flow, data, params, CutoffSet()))
    e1_ = np.max(np.abs(sols[1].up.values[::2] - sols[0].up.values))
    e2_ = np.max(np.abs(sols[2].up.values[::2] - sols[1].up.values))
    order = np.log2(e1_ / e2_)
    assert order >= 0.9, (e1_, e2_, order)
