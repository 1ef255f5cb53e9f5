"""Problem data: shear flow, boundary/initial data, physical parameters,
cut-off functions, and the structural-assumption validator.

All profile functions are stored as vectorized callables together with their
first and second derivatives, so downstream modules never have to
differentiate data numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grid import GridSpec

Fn = Callable[[np.ndarray], np.ndarray]


def _const_fn(c: float) -> Fn:
    return lambda t: np.full_like(np.asarray(t, dtype=float), c)


ZERO = _const_fn(0.0)


@dataclass(frozen=True)
class PhysicalParams:
    eps: float = 1e-2
    nu: float = 1.0
    kappa: float = 1.0
    L: float = 0.25
    u_b: float = 1.8
    gamma: float = 0.2
    zeta: float = 0.04

    def __post_init__(self):
        if min(self.eps, self.nu, self.kappa, self.L, self.u_b) <= 0:
            raise ValueError("eps, nu, kappa, L, u_b must all be positive")
        if not (0 < self.gamma < 0.25):
            raise ValueError("gamma must lie in (0, 1/4)")
        if self.zeta <= 0:
            raise ValueError("zeta must be positive")
        if self.gamma + self.zeta > 0.25 + 1e-12:
            raise ValueError("gamma + zeta must be <= 1/4")
        if self.zeta >= self.gamma / 4:
            raise ValueError("zeta must be < gamma/4")
        if self.eps > self.L / 10 + 1e-15:
            raise ValueError("eps must be <= L/10 (scale separation)")

    def with_eps(self, eps: float) -> "PhysicalParams":
        return PhysicalParams(eps, self.nu, self.kappa, self.L, self.u_b,
                              self.gamma, self.zeta)


@dataclass(frozen=True)
class IdealShearFlow:
    """Outer shear state (u0e(Y), 0, h0e(Y), 0) with derivative callables."""

    u0e: Fn
    d_u0e: Fn
    dd_u0e: Fn
    h0e: Fn
    d_h0e: Fn
    dd_h0e: Fn

    @property
    def u_e(self) -> float:
        return float(self.u0e(np.array(0.0)))

    @property
    def h_e(self) -> float:
        return float(self.h0e(np.array(0.0)))

    def check_samples(self, Y: np.ndarray, decay_tol: float = 1e-4) -> list[str]:
        problems = []
        if np.any(self.u0e(Y) <= 0):
            problems.append("u0e must be positive on the sampled interval")
        if np.any(self.h0e(Y) <= 0):
            problems.append("h0e must be positive on the sampled interval")
        top = Y[-1]
        for name, fn in (("u0e", self.d_u0e), ("h0e", self.d_h0e)):
            if abs(float(fn(np.array(top)))) >= decay_tol:
                problems.append(f"d_Y {name} does not decay at the truncation height")
        return problems


@dataclass(frozen=True)
class BoundaryData:
    """Initial/boundary data for the layer problems and corrector side data.

    The corrector side columns (Vb0, VbL, Gb0, GbL) may be None, in which case
    the lifting builds them from the computed wall traces with an exponential
    vertical decay; that choice satisfies the corner compatibility exactly.
    """

    ubar0: Fn = ZERO
    hbar0: Fn = ZERO
    ubar1: Fn = ZERO
    hbar1: Fn = ZERO
    u1b: Fn = ZERO
    h1b: Fn = ZERO
    Vb0: Optional[Fn] = None
    VbL: Optional[Fn] = None
    Gb0: Optional[Fn] = None
    GbL: Optional[Fn] = None


@dataclass(frozen=True)
class AssumptionThresholds:
    vartheta0: float = 0.1
    sigma0: float = 0.9
    ratio_max: float = 0.1
    l: float = 1.0

    def __post_init__(self):
        if self.vartheta0 <= 0:
            raise ValueError("vartheta0 must be positive")
        if not (0 < self.sigma0 < 1):
            raise ValueError("sigma0 must lie in (0, 1)")
        if not (0 < self.ratio_max < 1):
            raise ValueError("ratio_max must lie in (0, 1)")


def smoothstep(t: np.ndarray, derivative: int = 0) -> np.ndarray:
    """Quintic smoothstep 6t^5 - 15t^4 + 10t^3 clamped to [0, 1]."""
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 0.0, 1.0)
    if derivative == 0:
        out = tc**3 * (10.0 + tc * (-15.0 + 6.0 * tc))
    elif derivative == 1:
        out = 30.0 * tc**2 * (1.0 - tc) ** 2
    elif derivative == 2:
        out = 60.0 * tc * (1.0 - tc) * (1.0 - 2.0 * tc)
    else:
        raise ValueError("derivative > 2 unsupported")
    if derivative > 0:
        out = np.where((t <= 0.0) | (t >= 1.0), 0.0, out)
    return out


@dataclass(frozen=True)
class CutoffSet:
    """The three plateau functions used by the construction.

    phi: 0 below R0, 1 above 2*R0 (homogenization of the wall mismatch).
    chi: 1 at 0, supported in [0, 1] (outer cut-off of the first-order layer).
    eta: 1 on [0, 1], 0 on [2, inf) (support of the conductor corrector).
    """

    R0: float = 2.0

    def phi(self, y, derivative: int = 0):
        scale = 1.0 / self.R0
        s = smoothstep((np.asarray(y, dtype=float) - self.R0) * scale, derivative)
        return s * scale**derivative

    def chi(self, y, derivative: int = 0):
        # plateau on [0, 1/2], descent on [1/2, 1]
        t = (np.asarray(y, dtype=float) - 0.5) / 0.5
        s = smoothstep(t, derivative) * (2.0**derivative)
        if derivative == 0:
            return 1.0 - s
        return -s

    def eta(self, y, derivative: int = 0):
        s = smoothstep(np.asarray(y, dtype=float) - 1.0, derivative)
        if derivative == 0:
            return 1.0 - s
        return -s


def cutoff_values(cutoffs: CutoffSet, which: str, derivative: int, y):
    if derivative not in (0, 1, 2):
        raise ValueError("derivative > 2 unsupported")
    fn = {"phi": cutoffs.phi, "chi": cutoffs.chi, "eta": cutoffs.eta}.get(which)
    if fn is None:
        raise ValueError(f"unknown cut-off {which!r}")
    return fn(y, derivative)


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: list
    case_record: str = ""

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "all_passed": self.all_passed,
            "case_record": self.case_record,
            "checks": [
                {"name": c.name, "passed": bool(c.passed),
                 "margin": float(c.margin), "detail": c.detail}
                for c in self.checks
            ],
        }


def _num_d1(fn: Fn, t: np.ndarray, h: float = 1e-6) -> np.ndarray:
    return (fn(t + h) - fn(np.maximum(t - h, 0.0))) / (h + np.minimum(t, h))


def _num_d2(fn: Fn, t: np.ndarray, h: float = 1e-4) -> np.ndarray:
    tm = np.maximum(t, h)
    return (fn(tm + h) - 2.0 * fn(tm) + fn(tm - h)) / h**2


def validate_assumptions(params: PhysicalParams, flow: IdealShearFlow,
                         data: BoundaryData,
                         thresholds: AssumptionThresholds = AssumptionThresholds(),
                         grid: GridSpec | None = None) -> AssumptionReport:
    """Evaluate the structural hypotheses on the data and report margins.

    Failures are reported, never raised; callers decide whether to proceed.
    """
    if grid is None:
        grid = GridSpec(L=params.L)
    y, Y = grid.y, grid.Y
    fuzz = 1e-12
    checks = []

    u_e, h_e = flow.u_e, flow.h_e
    utot = u_e + data.ubar0(y)
    htot = h_e + data.hbar0(y)
    m_a = float(min(np.min(utot - htot), np.min(htot) - thresholds.vartheta0))
    checks.append(CheckResult(
        "a: u_e+ubar0 > h_e+hbar0 >= vartheta0", m_a > -fuzz, m_a))

    w = (1.0 + y**2) ** ((thresholds.l + 1.0) / 2.0)
    s1 = max(float(np.max(w * np.abs(_num_d1(data.ubar0, y)))),
             float(np.max(w * np.abs(_num_d1(data.hbar0, y)))))
    m_b = thresholds.sigma0 / 2.0 - s1
    checks.append(CheckResult(
        "b: weighted first derivatives <= sigma0/2", m_b > -fuzz, m_b,
        f"sup = {s1:.3e}"))

    s2 = max(float(np.max(w * np.abs(_num_d2(data.ubar0, y)))),
             float(np.max(w * np.abs(_num_d2(data.hbar0, y)))))
    m_c = 0.5 / thresholds.vartheta0 - s2
    checks.append(CheckResult(
        "c: weighted second derivatives <= 1/(2 vartheta0)", m_c > -fuzz, m_c,
        f"sup = {s2:.3e}"))

    ratio = float(np.max(np.abs(flow.h0e(Y) / flow.u0e(Y))))
    m_d = thresholds.ratio_max - ratio
    checks.append(CheckResult(
        "d: sup |h0e/u0e| <= ratio_max", m_d > -fuzz, m_d, f"sup = {ratio:.4f}"))

    wY = np.sqrt(1.0 + Y**2)
    sY = max(float(np.max(wY * np.abs(flow.d_u0e(Y)))),
             float(np.max(wY * np.abs(flow.d_h0e(Y)))))
    m_e = thresholds.sigma0 - sY
    checks.append(CheckResult(
        "e: weighted shear-flow derivatives <= sigma0", m_e > -fuzz, m_e,
        f"sup = {sY:.3e}"))

    if data.Vb0 is not None and data.VbL is not None:
        gapV = float(np.max(np.abs(data.VbL(Y) - data.Vb0(Y))))
        gapG = 0.0
        if data.Gb0 is not None and data.GbL is not None:
            gapG = float(np.max(np.abs(data.GbL(Y) - data.Gb0(Y))))
        gap = max(gapV, gapG)
        m_f = params.L - gap
        checks.append(CheckResult(
            "f: side-data gap |.bL - .b0| <= C L", m_f > -fuzz, m_f,
            f"gap = {gap:.3e}"))
    else:
        checks.append(CheckResult(
            "f: side-data gap |.bL - .b0| <= C L", True, params.L,
            "side data derived from wall traces; gap O(L) by construction"))

    for msg in flow.check_samples(Y):
        checks.append(CheckResult("flow sample sanity", False, -1.0, msg))

    return AssumptionReport(checks, case_record="non-degeneracy via the "
                            "small magnetic-to-velocity ratio case")


def builtin_profile(name: str, params: PhysicalParams):
    """Concrete admissible data families.

    "mild": small wall mismatch, Gaussian layer data; passes the validator.
    "zero-mismatch": no layer at all (requires u_b = u_e); every layer and
    corrector field downstream vanishes identically.
    "strong-shear": magnetic field comparable to the velocity; trips the
    non-degeneracy ratio check at tight thresholds.
    """
    e = np.exp

    def shear(amp_u, amp_h, scale_h):
        return IdealShearFlow(
            u0e=lambda Y: 2.0 - amp_u * e(-Y),
            d_u0e=lambda Y: amp_u * e(-Y),
            dd_u0e=lambda Y: -amp_u * e(-Y),
            h0e=lambda Y: scale_h * (1.0 + amp_h * e(-Y)),
            d_h0e=lambda Y: -scale_h * amp_h * e(-Y),
            dd_h0e=lambda Y: scale_h * amp_h * e(-Y),
        )

    if name == "mild":
        flow = shear(0.5, 0.5, 0.1)
        mis = params.u_b - flow.u_e  # wall mismatch; corner-compatible data
        dh_wall = -float(flow.d_h0e(np.array(0.0)))
        data = BoundaryData(
            ubar0=lambda y: mis * e(-(y**2)),
            hbar0=lambda y: 0.02 * e(-(y**2)),
            ubar1=ZERO,
            hbar1=lambda y: dh_wall * y * e(-(y**2)),
            u1b=ZERO,
            h1b=ZERO,
        )
        return flow, data
    if name == "zero-mismatch":
        # The magnetic profile must have zero slope at the wall: a nonzero
        # slope feeds the first-order layer through its wall Neumann
        # condition even when every mismatch datum vanishes.
        flow = IdealShearFlow(
            u0e=lambda Y: 2.0 - 0.5 * e(-Y),
            d_u0e=lambda Y: 0.5 * e(-Y),
            dd_u0e=lambda Y: -0.5 * e(-Y),
            h0e=lambda Y: 0.1 * (1.0 + 0.5 * e(-(Y**2))),
            d_h0e=lambda Y: -0.1 * Y * e(-(Y**2)),
            dd_h0e=lambda Y: -0.1 * (1.0 - 2.0 * Y**2) * e(-(Y**2)),
        )
        if abs(params.u_b - flow.u_e) > 1e-14:
            raise ValueError("zero-mismatch requires u_b equal to the wall "
                             "value of u0e (use params_for)")
        return flow, BoundaryData()
    if name == "strong-shear":
        flow = shear(1.5, 0.5, 0.3)
        mis = params.u_b - flow.u_e
        dh_wall = -float(flow.d_h0e(np.array(0.0)))
        data = BoundaryData(
            ubar0=lambda y: mis * e(-(y**2)),
            hbar0=lambda y: 0.05 * e(-(y**2)),
            ubar1=ZERO,
            hbar1=lambda y: dh_wall * y * e(-(y**2)),
            u1b=ZERO,
            h1b=ZERO,
        )
        return flow, data
    raise ValueError(f"unknown profile {name!r}")


def params_for(name: str, **overrides) -> PhysicalParams:
    """Default physical parameters matched to a built-in profile."""
    base = dict(eps=1e-2, nu=1.0, kappa=1.0, L=0.25, u_b=1.8,
                gamma=0.2, zeta=0.04)
    if name == "zero-mismatch":
        base["u_b"] = 1.5
    if name == "strong-shear":
        base["u_b"] = 0.8
    base.update(overrides)
    return PhysicalParams(**base)
