import numpy as np
import pytest

from mhdbl.composer import (compose, residual_ledger, residuals,
                            run_pipeline, scaling_study)
from mhdbl.grid import GridSpec
from mhdbl.profiles import builtin_profile, params_for


def test_composed_divergence_pairs_refine():
    """Both composed pairs are solenoidal in the continuum; the discrete
    chain-rule assembly mixes stencils, splines and quadrature, so its
    divergence is pure discretization error and must refine away outside
    the startup margin."""
    from mhdbl.composer import _l2_margin
    params = params_for("mild")
    flow, data = builtin_profile("mild", params)
    vals = []
    for nx, ny in ((16, 32), (32, 64), (64, 128)):
        grid = GridSpec(L=0.25, nx=nx, ny=ny, nY=32)
        l0, e1, l1 = run_pipeline(flow, data, params, grid)
        parts = compose(l0, e1, l1, flow, params).parts
        margin = 0.1 * grid.L
        dv = _l2_margin(grid, parts.u["dx"] + parts.v["dy"], margin)
        dm = _l2_margin(grid, parts.h["dx"] + parts.g["dy"], margin)
        vals.append((dv, dm))
    for j in range(2):
        orders = [np.log2(vals[i][j] / vals[i + 1][j]) for i in range(2)]
        assert min(orders) >= 0.8, (j, vals, orders)


def test_residual_norms_finite_and_weighted_sum(mild_small):
    res = mild_small["res"]
    for k in ("R1", "R2", "R3", "R4"):
        assert np.isfinite(res.norms[k]) and res.norms[k] > 0
    expect = (res.norms["R1"] + res.norms["R3"]
              + np.sqrt(res.norms["eps"]) * (res.norms["R2"]
                                             + res.norms["R4"]))
    assert res.weighted_sum == pytest.approx(expect)


def test_zero_mismatch_residuals_reduce_to_outer_diffusion(
        zero_mismatch_small):
    """With no wall mismatch every layer term is zero, so the only surviving
    residual is the diffusion of the outer shear profile."""
    c = zero_mismatch_small
    res = c["res"]
    params, flow, grid = c["params"], c["flow"], c["grid"]
    Y = np.sqrt(params.eps) * grid.y
    expect = -params.nu * params.eps * flow.dd_u0e(Y)
    got = res.R1.values
    assert np.max(np.abs(got - expect[None, :])) < 1e-10
    # the transverse and magnetic-transverse rows are clean
    assert res.norms["R2"] < 1e-10
    assert res.norms["R4"] < 1e-10


def test_zero_mismatch_residual_slope():
    """The surviving outer-diffusion residual scales like eps exactly."""
    params_base = params_for("zero-mismatch")
    eps_list = [4e-2, 2e-2, 1e-2, 5e-3, 2.5e-3]
    grid = GridSpec(L=0.4, nx=16, ny=32, nY=24)
    from mhdbl.audit import rate_fit
    from mhdbl.profiles import CutoffSet
    sups = []
    for eps in eps_list:
        params = params_for("zero-mismatch", L=0.4, eps=eps)
        flow, data = builtin_profile("zero-mismatch", params)
        l0, e1, l1 = run_pipeline(flow, data, params, grid)
        app = compose(l0, e1, l1, flow, params)
        res = residuals(app, params, inflow_margin=0.1 * grid.L)
        sups.append(float(np.max(np.abs(res.R1.values))))
    fit = rate_fit(eps_list, sups)
    assert abs(fit.slope - 1.0) <= 0.05, fit
    assert fit.r_squared > 0.999


def test_residual_ledger_terms_accounted(mild_small):
    c = mild_small
    led = residual_ledger(c["app"], c["l0"], c["e1"], c["l1"], c["flow"],
                          c["params"], inflow_margin=0.1 * c["grid"].L)
    assert set(led) >= {"E1", "E3", "E4", "Rv0", "Rg0", "Er1", "Er2",
                        "Ru1", "Rh1", "Ru1p", "Rh1p"}
    for k, v in led.items():
        assert np.isfinite(v) and v >= 0.0, k
    # each diagnostic term is bounded by a modest multiple of the total
    total = c["res"].weighted_sum / np.sqrt(c["params"].eps)
    for k, v in led.items():
        assert v < 30.0 * total, (k, v, total)


def test_compose_requires_cutoff_fields(mild_small):
    import dataclasses
    l1 = dataclasses.replace(mild_small["l1"], u1p=None)
    with pytest.raises(ValueError):
        compose(mild_small["l0"], mild_small["e1"], l1,
                mild_small["flow"], mild_small["params"])


def test_pressure_wall_row_zero(mild_small):
    # the second-order layer pressure is built by vertical quadrature from
    # the top, so it vanishes there, and stays bounded at the wall
    p2p = mild_small["app"].p2p.values
    assert np.allclose(p2p[:, -1], 0.0, atol=1e-14)
    assert np.all(np.isfinite(p2p))
