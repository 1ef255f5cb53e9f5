import numpy as np
import pytest

from mhdbl.composer import compose, residuals, run_pipeline
from mhdbl.grid import GridSpec
from mhdbl.profiles import builtin_profile, params_for

SMALL_GRID = GridSpec(L=0.25, nx=24, ny=48, nY=32)


@pytest.fixture(scope="session")
def mild_small():
    """Full pipeline on the mild profile at one epsilon, desk-scale grid."""
    params = params_for("mild")
    flow, data = builtin_profile("mild", params)
    l0, e1, l1 = run_pipeline(flow, data, params, SMALL_GRID)
    app = compose(l0, e1, l1, flow, params)
    res = residuals(app, params, inflow_margin=0.1 * SMALL_GRID.L)
    return dict(params=params, flow=flow, data=data, grid=SMALL_GRID,
                l0=l0, e1=e1, l1=l1, app=app, res=res)


@pytest.fixture(scope="session")
def zero_mismatch_small():
    params = params_for("zero-mismatch")
    flow, data = builtin_profile("zero-mismatch", params)
    l0, e1, l1 = run_pipeline(flow, data, params, SMALL_GRID)
    app = compose(l0, e1, l1, flow, params)
    res = residuals(app, params, inflow_margin=0.1 * SMALL_GRID.L)
    return dict(params=params, flow=flow, data=data, grid=SMALL_GRID,
                l0=l0, e1=e1, l1=l1, app=app, res=res)


@pytest.fixture(scope="session")
def mild_remainder(mild_small):
    from mhdbl import remainder as rem
    c = mild_small
    base = rem.build_baseline(c["l0"], c["e1"], c["flow"], c["params"])
    state = rem.picard_iterate(base, c["res"], c["l1"], c["params"],
                               inflow_margin=0.1 * SMALL_GRID.L)
    return dict(base=base, state=state, **c)
