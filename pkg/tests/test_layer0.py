import numpy as np
import pytest

from mhdbl.grid import GridSpec, diff
from mhdbl.layer0 import (homogenize, march_layer0, solve_layer0,
                          stream_identity_residual)
from mhdbl.profiles import CutoffSet, builtin_profile, params_for


def _solve(name, grid):
    params = params_for(name)
    flow, data = builtin_profile(name, params)
    return params, flow, data, solve_layer0(flow, data, params, CutoffSet(),
                                            grid)


def test_zero_mismatch_layer_is_zero():
    grid = GridSpec(L=0.25, nx=16, ny=32, nY=16)
    _, _, _, (state, sol) = _solve("zero-mismatch", grid)
    for f in (sol.u0p, sol.v0p, sol.h0p, sol.g0p):
        assert np.max(np.abs(f.values)) <= 1e-10


def test_mild_wall_and_farfield_conditions(mild_small):
    sol = mild_small["l0"]
    params, flow = mild_small["params"], mild_small["flow"]
    # the layer corrects the slip mismatch at the wall...
    assert np.allclose(sol.u0p.values[:, 0], params.u_b - flow.u_e,
                       atol=1e-10)
    # ...and its vertical components carry minus the far-field trace there,
    # which the first-order outer corrector later absorbs
    assert np.allclose(sol.v0p.values[:, 0], -sol.trace_v1e, atol=1e-12)
    assert np.allclose(sol.g0p.values[:, 0], -sol.trace_g1e, atol=1e-12)
    assert np.max(np.abs(sol.v0p.values[:, -1])) < 1e-12
    assert np.max(np.abs(sol.g0p.values[:, -1])) < 1e-12
    # conductor condition d_y h = 0 on every marched row (the inflow row
    # carries prescribed data and is exempt)
    dyh = diff(sol.h0p, "y", 1).values
    assert np.max(np.abs(dyh[1:, 0])) < 1e-12
    # layer decay at the top of the domain
    top = max(np.max(np.abs(sol.u0p.values[:, -1])),
              np.max(np.abs(sol.h0p.values[:, -1])))
    bulk = max(np.max(np.abs(sol.u0p.values)), 1e-300)
    assert top < 1e-6 * bulk


def test_mild_vertical_velocity_from_continuity(mild_small):
    sol = mild_small["l0"]
    grid = mild_small["grid"]
    dxu = diff(sol.u0p, "x", 1).values
    dyv = diff(sol.v0p, "y", 1).values
    resid = dxu + dyv
    scale = max(np.max(np.abs(dxu)), 1.0)
    # interior rows only: the one-sided wall stencil of the quadrature-built
    # v is first-order there
    assert np.max(np.abs(resid[1:-1, 2:-2])) < 0.05 * scale


def test_condition_monitor_recorded(mild_small):
    mon = mild_small["l0"].condition_monitor
    assert len(mon) > 0


def test_stream_identity_refines():
    """The integrated induction identity refines away from the inflow row,
    where the identity is not enforced (prescribed data)."""
    vals = []
    for nx, ny in ((12, 32), (24, 64), (48, 128)):
        grid = GridSpec(L=0.25, nx=nx, ny=ny, nY=16)
        params, flow, data, (state, sol) = _solve("mild", grid)
        phi, dphi = state.phi, state.dphi
        a = state.u.values + state.u_e * phi + state.u_b * (1.0 - phi)
        b = state.h.values + state.h_e * phi
        dyh = diff(state.h, "y", 1).values
        lhs = b * state.v.values - a * state.g.values - params.kappa * dyh
        resid = np.abs(lhs - (params.kappa * state.h_e * dphi)[None, :])
        vals.append(float(np.max(resid[grid.x >= 0.1 * grid.L, :])))
    orders = [np.log2(vals[i] / vals[i + 1]) for i in range(2)]
    assert min(orders) >= 0.9, (vals, orders)


def test_march_self_convergence_order():
    """Richardson self-convergence of the marching solver in the x step."""
    sols = []
    for nx in (12, 24, 48):
        grid = GridSpec(L=0.25, nx=nx, ny=96, nY=16)
        _, _, _, (_, sol) = _solve("mild", grid)
        sols.append(sol)
    def restrict(sol, step):
        return sol.u0p.values[::step]
    e1 = np.max(np.abs(restrict(sols[1], 2) - restrict(sols[0], 1)))
    e2 = np.max(np.abs(restrict(sols[2], 2) - restrict(sols[1], 1)))
    order = np.log2(e1 / e2)
    assert order >= 0.9, (e1, e2, order)


def test_positivity_guard_trips_on_bad_data():
    from mhdbl.layer0 import PositivityLost
    params = params_for("mild")
    flow, data = builtin_profile("mild", params)
    grid = GridSpec(L=0.25, nx=12, ny=32, nY=16)
    state = homogenize(flow, data, params, CutoffSet(), grid)
    bad = state.u.values.copy()
    bad[0] = -10.0  # drive the tangential velocity below the floor
    state.u.values[...] = bad
    with pytest.raises(PositivityLost):
        march_layer0(state, params)
