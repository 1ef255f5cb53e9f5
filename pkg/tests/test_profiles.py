import numpy as np
import pytest

from mhdbl.grid import GridSpec
from mhdbl.profiles import (AssumptionThresholds, CutoffSet, PhysicalParams,
                            builtin_profile, params_for, smoothstep,
                            validate_assumptions)


def test_params_invariants():
    with pytest.raises(ValueError):
        PhysicalParams(eps=0.1, L=0.25)  # violates scale separation
    with pytest.raises(ValueError):
        PhysicalParams(gamma=0.3)  # gamma outside (0, 1/4)
    with pytest.raises(ValueError):
        PhysicalParams(gamma=0.2, zeta=0.06)  # zeta >= gamma/4
    p = params_for("mild")
    assert p.eps <= p.L / 10.0


def test_builtin_profiles_exist():
    for name in ("mild", "zero-mismatch", "strong-shear"):
        params = params_for(name)
        flow, data = builtin_profile(name, params)
        Y = np.linspace(0.0, 8.0, 50)
        assert np.all(flow.u0e(Y) > 0)
        assert np.all(np.abs(flow.h0e(Y)) < flow.u0e(Y))
    with pytest.raises(ValueError):
        builtin_profile("no-such-profile", params_for("mild"))


def test_zero_mismatch_wall_compatibility():
    params = params_for("zero-mismatch")
    flow, data = builtin_profile("zero-mismatch", params)
    # the wall value of the outer stream equals the prescribed slip value,
    # so the leading layer has nothing to correct
    assert flow.u0e(np.array(0.0)) == pytest.approx(params.u_b)
    y = np.linspace(0.0, 10.0, 64)
    assert np.max(np.abs(data.ubar0(y))) < 1e-14
    assert np.max(np.abs(data.hbar0(y))) < 1e-14


def test_zero_mismatch_rejects_incompatible_slip():
    params = params_for("zero-mismatch", u_b=1.0)
    with pytest.raises(ValueError):
        builtin_profile("zero-mismatch", params)


def test_smoothstep_endpoints_and_derivative():
    assert smoothstep(np.array(-1.0)) == 0.0
    assert smoothstep(np.array(0.0)) == 0.0
    assert smoothstep(np.array(1.0)) == 1.0
    assert smoothstep(np.array(2.0)) == 1.0
    assert smoothstep(np.array(0.5)) == pytest.approx(0.5)
    t = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    num = (smoothstep(t + h) - smoothstep(t - h)) / (2 * h)
    assert np.allclose(num, smoothstep(t, 1), atol=1e-5)


@pytest.mark.parametrize("which", ["phi", "chi", "eta"])
def test_cutoff_plateaus_and_derivatives(which):
    c = CutoffSet()
    fn = getattr(c, which)
    y = np.linspace(0.0, 3.0 * c.R0 + 6.0, 400)
    vals = fn(y)
    assert np.all((vals >= -1e-14) & (vals <= 1.0 + 1e-14))
    if which == "phi":
        assert fn(np.array(0.0)) == 0.0
        assert fn(np.array(3.0 * c.R0)) == 1.0
    else:
        assert fn(np.array(0.0)) == 1.0
        assert abs(fn(y[-1])) == 0.0
    h = 1e-6
    num = (fn(y + h) - fn(y - h)) / (2 * h)
    assert np.allclose(num, fn(y, 1), atol=1e-4)


def test_validate_assumptions_mild_passes():
    params = params_for("mild")
    flow, data = builtin_profile("mild", params)
    report = validate_assumptions(params, flow, data, AssumptionThresholds(),
                                  GridSpec(L=params.L))
    assert report.all_passed, [c.name for c in report.failures()]
    names = {c.name for c in report.checks}
    assert len(names) == len(report.checks)
