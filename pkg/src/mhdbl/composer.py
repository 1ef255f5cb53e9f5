"""Assembly of the full approximate solution and its residual fields.

The outer (slow-variable) constituents live on the (x, Y) grid and are
sampled at Y = sqrt(eps)*y by cubic splines.  Residual derivatives are
assembled constituent-by-constituent with the chain rule, so the vertical
momentum residual never divides an interpolation error by eps.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .audit import RateFit, rate_fit
from .euler1 import EulerCorrector
from .grid import Field2D, GridSpec, cumulative_integral, diff, l2_norm
from .layer0 import LayerZeroSolution
from .layer1 import LayerOneSolution
from .profiles import (BoundaryData, CutoffSet, IdealShearFlow,
                       PhysicalParams)


class SampledEuler:
    """One outer-grid field with its derivatives sampled at Y = sqrt(eps)y.

    x-derivatives are taken on the outer grid before sampling; Y-derivatives
    come from the spline, so every chain-rule factor of sqrt(eps) is applied
    explicitly by the caller."""

    def __init__(self, f: Field2D, layer_grid: GridSpec, eps: float):
        Y = f.grid.Y
        Dx = f.grid.dmat("x", 1)
        pts = np.sqrt(eps) * layer_grid.y
        pts = np.minimum(pts, Y[-1])
        s = CubicSpline(Y, f.values, axis=1)
        sx = CubicSpline(Y, Dx @ f.values, axis=1)
        sxx = CubicSpline(Y, Dx @ (Dx @ f.values), axis=1)
        self.v = s(pts)
        self.dY = s(pts, 1)
        self.dYY = s(pts, 2)
        self.dx = sx(pts)
        self.dxY = sx(pts, 1)
        self.dxx = sxx(pts)


class _Stencils:
    """Layer-grid field with cached central-stencil derivatives."""

    def __init__(self, f: Field2D):
        self.v = f.values
        self.dx = diff(f, "x", 1).values
        self.dy = diff(f, "y", 1).values
        self.dxx = diff(f, "x", 2).values
        self.dyy = diff(f, "y", 2).values


@dataclass
class CompositionParts:
    """Everything needed to evaluate residual derivatives by chain rule."""

    eps: float
    u: dict
    v: dict
    h: dict
    g: dict
    p: dict
    sampled: dict
    stencils: dict


@dataclass
class ApproxSolution:
    grid: GridSpec
    params: PhysicalParams
    u_app: Field2D
    v_app: Field2D
    h_app: Field2D
    g_app: Field2D
    p_app: Field2D
    p2p: Field2D
    p1p: float = 0.0
    parts: CompositionParts | None = None


@dataclass
class ResidualBundle:
    R1: Field2D
    R2: Field2D
    R3: Field2D
    R4: Field2D
    norms: dict = field(default_factory=dict)

    @property
    def weighted_sum(self) -> float:
        return (self.norms["R1"] + self.norms["R3"]
                + np.sqrt(self.norms["eps"])
                * (self.norms["R2"] + self.norms["R4"]))


def _outer_profiles(flow: IdealShearFlow, grid: GridSpec, eps: float):
    """Analytic outer shear profiles and Y-derivatives at Y = sqrt(eps)y."""
    Y = np.sqrt(eps) * grid.y
    one = np.ones((grid.nx + 1, 1))
    sample = lambda fn: one * fn(Y)[None, :]
    return {
        "U0": sample(flow.u0e), "U0p": sample(flow.d_u0e),
        "U0pp": sample(flow.dd_u0e),
        "H0": sample(flow.h0e), "H0p": sample(flow.d_h0e),
        "H0pp": sample(flow.dd_h0e),
    }


def pressure_p2p(layer0: LayerZeroSolution, euler1: EulerCorrector,
                 flow: IdealShearFlow, params: PhysicalParams) -> Field2D:
    """Second-order layer pressure: resolved tail integral of the leftover
    vertical-momentum terms, vanishing at the top of the strip."""
    grid = layer0.grid
    eps = params.eps
    out = _outer_profiles(flow, grid, eps)
    V1 = SampledEuler(euler1.v1e, grid, eps)
    G1 = SampledEuler(euler1.g1e, grid, eps)
    u0p = _Stencils(layer0.u0p)
    v0p = _Stencils(layer0.v0p)
    h0p = _Stencils(layer0.h0p)
    g0p = _Stencils(layer0.g0p)
    integrand = ((out["U0"] + u0p.v) * v0p.dx + u0p.v * V1.dx
                 + (v0p.v + V1.v) * v0p.dy
                 - (out["H0"] + h0p.v) * g0p.dx - h0p.v * G1.dx
                 - (g0p.v + G1.v) * g0p.dy
                 - params.nu * v0p.dyy)
    return cumulative_integral(Field2D(grid, "y", integrand),
                               orientation="from_top")


def compose(layer0: LayerZeroSolution, euler1: EulerCorrector,
            layer1: LayerOneSolution, flow: IdealShearFlow,
            params: PhysicalParams,
            cutoffs: CutoffSet = CutoffSet()) -> ApproxSolution:
    """Sum the layer and outer constituents into the approximate solution,
    with the corrected (rho-adjusted) outer magnetic pair, and cache the
    chain-rule derivative assembly for residual evaluation."""
    if layer1.u1p is None:
        raise ValueError("layer1 cut-off fields missing: run apply_cutoff")
    grid = layer0.grid
    eps = params.eps
    se = np.sqrt(eps)
    y = grid.y

    out = _outer_profiles(flow, grid, eps)
    sampled = {k: SampledEuler(getattr(euler1, k), grid, eps)
               for k in ("u1e", "v1e", "h1e", "g1e", "p1e")}
    U1, V1, H1, G1, P1 = (sampled[k] for k in
                          ("u1e", "v1e", "h1e", "g1e", "p1e"))
    st = {k: _Stencils(f) for k, f in (
        ("u0p", layer0.u0p), ("v0p", layer0.v0p),
        ("h0p", layer0.h0p), ("g0p", layer0.g0p),
        ("u1p", layer1.u1p), ("v1p", layer1.v1p),
        ("h1p", layer1.h1p), ("g1p", layer1.g1p))}
    u0p, v0p, h0p, g0p = st["u0p"], st["v0p"], st["h0p"], st["g0p"]
    u1p, v1p, h1p, g1p = st["u1p"], st["v1p"], st["h1p"], st["g1p"]

    # wall-slope compensator rho = coeff(x) * y*eta(y) and its x-antiderivative
    Dx = grid.dmat("x", 1)
    coeff = euler1.rho_wall_coeff
    dxc = Dx @ coeff
    dxxc = Dx @ dxc
    ye = y * cutoffs.eta(y)
    d_ye = cutoffs.eta(y) + y * cutoffs.eta(y, 1)
    dd_ye = 2.0 * cutoffs.eta(y, 1) + y * cutoffs.eta(y, 2)
    W = np.zeros_like(y)
    W[1:] = np.cumsum(0.5 * np.diff(y) * (ye[1:] + ye[:-1]))
    rho = np.outer(coeff, ye)

    p2p = pressure_p2p(layer0, euler1, flow, params)
    p2 = _Stencils(p2p)

    u = {
        "v": out["U0"] + u0p.v + se * (U1.v + u1p.v),
        "dx": u0p.dx + se * (U1.dx + u1p.dx),
        "dy": se * out["U0p"] + u0p.dy + se * (se * U1.dY + u1p.dy),
        "dxx": u0p.dxx + se * (U1.dxx + u1p.dxx),
        "dyy": eps * out["U0pp"] + u0p.dyy + se * (eps * U1.dYY + u1p.dyy),
    }
    v = {
        "v": v0p.v + V1.v + se * v1p.v,
        "dx": v0p.dx + V1.dx + se * v1p.dx,
        "dy": v0p.dy + se * V1.dY + se * v1p.dy,
        "dxx": v0p.dxx + V1.dxx + se * v1p.dxx,
        "dyy": v0p.dyy + eps * V1.dYY + se * v1p.dyy,
    }
    h = {
        "v": out["H0"] + h0p.v + se * (H1.v + h1p.v) + eps * rho,
        "dx": h0p.dx + se * (H1.dx + h1p.dx) + eps * np.outer(dxc, ye),
        "dy": (se * out["H0p"] + h0p.dy + se * (se * H1.dY + h1p.dy)
               + eps * np.outer(coeff, d_ye)),
        "dxx": h0p.dxx + se * (H1.dxx + h1p.dxx) + eps * np.outer(dxxc, ye),
        "dyy": (eps * out["H0pp"] + h0p.dyy + se * (eps * H1.dYY + h1p.dyy)
                + eps * np.outer(coeff, dd_ye)),
    }
    g = {
        "v": g0p.v + G1.v + se * g1p.v - eps * np.outer(dxc, W),
        "dx": g0p.dx + G1.dx + se * g1p.dx - eps * np.outer(dxxc, W),
        "dy": g0p.dy + se * G1.dY + se * g1p.dy - eps * np.outer(dxc, ye),
        "dxx": (g0p.dxx + G1.dxx + se * g1p.dxx
                - eps * np.outer(Dx @ dxxc, W)),
        "dyy": (g0p.dyy + eps * G1.dYY + se * g1p.dyy
                - eps * np.outer(dxc, d_ye)),
    }
    p = {
        "v": se * P1.v + eps * p2p.values,
        "dx": se * P1.dx + eps * p2.dx,
        # dy/eps assembled directly: the 1/eps cancels the chain-rule factors
        "dy_over_eps": P1.dY + p2.dy,
    }

    mk = lambda a: Field2D(grid, "y", a)
    parts = CompositionParts(eps, u, v, h, g, p, sampled, st)
    return ApproxSolution(grid, params, mk(u["v"]), mk(v["v"]), mk(h["v"]),
                          mk(g["v"]), mk(p["v"]), p2p, 0.0, parts)


def _l2_margin(grid: GridSpec, vals: np.ndarray, x_min: float) -> float:
    from .grid import trapezoid_weights
    mask = grid.x >= x_min
    w = np.outer(trapezoid_weights(grid.x)[mask], trapezoid_weights(grid.y))
    return float(np.sqrt(np.sum(w * vals[mask] ** 2)))


def residuals(approx: ApproxSolution, params: PhysicalParams,
              inflow_margin: float = 0.0) -> ResidualBundle:
    """Residual fields of the scaled steady system applied to the composed
    solution.  Uses the cached chain-rule assembly when available, else
    plain grid stencils on the composed totals.

    The inflow data satisfies the corner compatibility conditions only to
    leading order, so the first stations carry a startup layer that does not
    scale with eps; ``inflow_margin`` restricts the reported norms to
    x >= inflow_margin (the fields themselves stay full-domain)."""
    grid = approx.grid
    eps = params.eps
    if approx.parts is not None:
        u, v, h, g, p = (approx.parts.u, approx.parts.v, approx.parts.h,
                         approx.parts.g, approx.parts.p)
        dp_dx, dp_dy_over_eps = p["dx"], p["dy_over_eps"]
    else:
        u, v, h, g = ({"v": f.values,
                       "dx": diff(f, "x", 1).values,
                       "dy": diff(f, "y", 1).values,
                       "dxx": diff(f, "x", 2).values,
                       "dyy": diff(f, "y", 2).values}
                      for f in (approx.u_app, approx.v_app,
                                approx.h_app, approx.g_app))
        dp_dx = diff(approx.p_app, "x", 1).values
        dp_dy_over_eps = diff(approx.p_app, "y", 1).values / eps

    lap = lambda d: eps * d["dxx"] + d["dyy"]
    adv = lambda d: u["v"] * d["dx"] + v["v"] * d["dy"]
    mag = lambda d: h["v"] * d["dx"] + g["v"] * d["dy"]

    R1 = adv(u) + dp_dx - mag(h) - params.nu * lap(u)
    R2 = adv(v) + dp_dy_over_eps - mag(g) - params.nu * lap(v)
    R3 = adv(h) - mag(u) - params.kappa * lap(h)
    R4 = adv(g) - mag(v) - params.kappa * lap(g)
    mk = lambda a: Field2D(grid, "y", a)
    bundle = ResidualBundle(mk(R1), mk(R2), mk(R3), mk(R4))
    bundle.norms = {name: _l2_margin(grid, f.values, inflow_margin)
                    for name, f in (("R1", bundle.R1), ("R2", bundle.R2),
                                    ("R3", bundle.R3), ("R4", bundle.R4))}
    bundle.norms["eps"] = eps
    bundle.norms["inflow_margin"] = inflow_margin
    return bundle


@dataclass
class SlopeReport:
    eps: list[float]
    norms: list[dict]
    fits: dict

    def write_json(self, path: str) -> None:
        payload = {"eps": self.eps, "norms": self.norms,
                   "fits": {k: {"slope": f.slope, "r_squared": f.r_squared}
                            for k, f in self.fits.items()}}
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "R1_L2", "R2_L2", "R3_L2", "R4_L2",
                        "weighted_sum"])
            for e, n in zip(self.eps, self.norms):
                ws = n["R1"] + n["R3"] + np.sqrt(e) * (n["R2"] + n["R4"])
                w.writerow([e, n["R1"], n["R2"], n["R3"], n["R4"], ws])


def run_pipeline(flow: IdealShearFlow, data: BoundaryData,
                 params: PhysicalParams, grid: GridSpec,
                 cutoffs: CutoffSet = CutoffSet()):
    """Layer-by-layer construction for one parameter point."""
    from .euler1 import solve_euler1
    from .layer0 import solve_layer0
    from .layer1 import solve_layer1
    _, l0 = solve_layer0(flow, data, params, cutoffs, grid)
    e1 = solve_euler1(l0, flow, data, params, cutoffs)
    l1 = solve_layer1(l0, e1, flow, data, params, cutoffs)
    return l0, e1, l1


def scaling_study(profile: str, params_base: PhysicalParams,
                  eps_list: list[float], grid: GridSpec = GridSpec(),
                  cutoffs: CutoffSet = CutoffSet(),
                  inflow_margin: float | None = None) -> SlopeReport:
    """Full pipeline per eps; least-squares log-log fit of residual norms.

    By default the norms exclude the startup region x < 0.1 L, where only
    leading-order corner compatibility holds (see ``residuals``)."""
    from .profiles import builtin_profile
    if len(eps_list) < 2:
        raise ValueError("eps sweep needs at least two values")
    if inflow_margin is None:
        inflow_margin = 0.1 * params_base.L
    rows = []
    for eps in sorted(eps_list, reverse=True):
        params = params_base.with_eps(eps)
        flow, data = builtin_profile(profile, params)
        l0, e1, l1 = run_pipeline(flow, data, params, grid, cutoffs)
        approx = compose(l0, e1, l1, flow, params, cutoffs)
        rows.append(residuals(approx, params, inflow_margin).norms)
    eps_sorted = [r["eps"] for r in rows]
    fits = {}
    for key in ("R1", "R2", "R3", "R4"):
        fits[key] = rate_fit(eps_sorted, [r[key] for r in rows])
    weighted = [r["R1"] + r["R3"] + np.sqrt(r["eps"]) * (r["R2"] + r["R4"])
                for r in rows]
    fits["weighted"] = rate_fit(eps_sorted, weighted)
    return SlopeReport(eps_sorted, rows, fits)


def residual_ledger(approx: ApproxSolution, layer0: LayerZeroSolution,
                    euler1: EulerCorrector, layer1: LayerOneSolution,
                    flow: IdealShearFlow, params: PhysicalParams,
                    cutoffs: CutoffSet = CutoffSet(),
                    inflow_margin: float = 0.0) -> dict:
    """Diagnostic attribution: L2 norms of the individually named error
    terms whose sum the composed residuals capture.  The double-integral
    kernels use K(y) = B(y) - y*A(y) with A, B successive antiderivatives
    of the integrand taken from the wall."""
    if approx.parts is None:
        raise ValueError("ledger mode needs the cached composition parts")
    grid = approx.grid
    eps = params.eps
    se = np.sqrt(eps)
    y = grid.y
    yy = y[None, :]
    d = np.diff(y)
    P = approx.parts
    U1, V1, H1, G1 = (P.sampled[k] for k in ("u1e", "v1e", "h1e", "g1e"))
    st = P.stencils
    u0p, v0p, h0p, g0p = st["u0p"], st["v0p"], st["h0p"], st["g0p"]
    out = _outer_profiles(flow, grid, eps)
    col = lambda c: np.asarray(c)[:, None]

    def cumtrapz(arr):
        res = np.zeros_like(arr)
        res[:, 1:] = np.cumsum(0.5 * d[None, :] * (arr[:, 1:] + arr[:, :-1]),
                               axis=1)
        return res

    def kernel(f):
        A = cumtrapz(f)
        B = cumtrapz(A)
        return B - yy * A

    K1 = kernel(out["U0pp"])
    K2 = kernel(V1.dYY)
    K3 = kernel(out["H0pp"])
    K4 = kernel(G1.dYY)
    E1 = eps * (u0p.dx * K1 + u0p.dy * K2 - h0p.dx * K3 - h0p.dy * K4)
    E3 = eps * (h0p.dx * K1 + h0p.dy * K2 - u0p.dx * K3 - u0p.dy * K4)
    E4 = (eps * (g0p.dx * K1 + g0p.dy * K2 - v0p.dx * K3 - v0p.dy * K4)
          + se * (u0p.v * cumtrapz(G1.dxY) - h0p.v * cumtrapz(V1.dxY)))

    Rv0 = (se * ((v0p.v + V1.v) * V1.dY - (g0p.v + G1.v) * G1.dY)
           - params.nu * eps * V1.dYY)
    Rg0 = (se * ((v0p.v + V1.v) * G1.dY - (g0p.v + G1.v) * V1.dY)
           - params.kappa * eps * G1.dYY)

    # frozen-coefficient error fields: full-minus-wall coefficient times the
    # raw first-order layer fields
    wc = layer1.wall
    up = _Stencils(layer1.up)
    vp = layer1.vp.values
    hp = _Stencils(layer1.hp)
    gp = layer1.gp.values
    dU0 = out["U0"] - flow.u_e
    dH0 = out["H0"] - flow.h_e
    dU0p = out["U0p"] - wc.dY_u0e
    dH0p = out["H0p"] - wc.dY_h0e
    dV1 = V1.v - col(wc.v1e)
    dG1 = G1.v - col(wc.g1e)
    dVY = V1.dY - col(wc.dY_v1e)
    dGY = G1.dY - col(wc.dY_g1e)
    dU1 = U1.v - col(wc.u1e)
    dH1 = H1.v - col(wc.h1e)
    dU1x = U1.dx - col(wc.dx_u1e)
    dH1x = H1.dx - col(wc.dx_h1e)
    Er1 = se * (dU0 * up.dx + vp * out["U0p"] + dV1 * up.dy
                - dH0 * hp.dx - gp * out["H0p"] - dG1 * hp.dy
                + dU0p * (yy * u0p.dx + v0p.v) + yy * dVY * u0p.dy
                + dU1 * u0p.dx + dU1x * u0p.v
                - dH0p * (yy * h0p.dx + g0p.v) - yy * dGY * h0p.dy
                - dH1 * u0p.dx - dH1x * h0p.v)
    Er2 = se * (dU0 * hp.dx + vp * out["H0p"] + dV1 * hp.dy
                - dH0 * up.dx - gp * out["U0p"] - dG1 * up.dy
                + dH0p * v0p.v + yy * h0p.dx * dU0p
                + yy * h0p.dy * dVY + dH1x * u0p.v + dU1 * h0p.dx
                - dU0p * g0p.v - yy * dH0p * u0p.dx
                - yy * dGY * u0p.dy - dH1 * u0p.dx - dU1x * h0p.v)

    # reduced first-order outer residuals; the magnetic one has no explicit
    # closed display and is the symmetric analogue (derived)
    eg = euler1.v1e.grid
    wY = np.zeros(eg.nY + 1)
    Eb = euler1.lift.Eb.values
    dY = np.diff(eg.Y)
    tail = np.zeros_like(Eb)
    tail[:, :-1] = np.cumsum((0.5 * dY[None, :]
                              * (Eb[:, 1:] + Eb[:, :-1]))[:, ::-1],
                             axis=1)[:, ::-1]
    pts = np.minimum(se * y, eg.Y[-1])
    T_Eb = CubicSpline(eg.Y, tail, axis=1)(pts)
    drho_x = np.outer(grid.dmat("x", 1) @ euler1.rho_wall_coeff,
                      y * cutoffs.eta(y))
    Ru1 = (se * ((v0p.v + V1.v) * U1.dY - (g0p.v + G1.v) * H1.dY)
           - params.nu * eps * U1.dYY + T_Eb
           - se * out["H0"] * drho_x
           - eps * euler1.int_rho_x.values * out["H0p"])
    Rh1 = (se * ((v0p.v + V1.v) * H1.dY - (g0p.v + G1.v) * U1.dY)
           - params.kappa * eps * H1.dYY)

    # cut-off commutator terms of the first-order layer
    chi = cutoffs.chi(se * y)
    dchi = cutoffs.chi(se * y, 1)
    ddchi = cutoffs.chi(se * y, 2)
    I_up = cumtrapz(layer1.up.values)
    I_hp = cumtrapz(layer1.hp.values)
    mk = lambda arr: Field2D(grid, "y", arr)
    A = mk(se * dchi[None, :] * I_up)
    B = mk(se * dchi[None, :] * I_hp)
    sA, sB = _Stencils(A), _Stencils(B)
    u0 = out["U0"] + u0p.v
    h0 = out["H0"] + h0p.v
    Vc = v0p.v + V1.v
    Gc = g0p.v + G1.v
    one_m = (1.0 - chi)[None, :]
    Ru1p = (u0 * sA.dx + u0p.dx * sA.v + Vc * sA.dy - params.nu * sA.dyy
            - 2.0 * params.nu * se * dchi[None, :] * up.dy
            + up.v * (Vc * se * dchi[None, :]
                      - params.nu * eps * ddchi[None, :])
            + one_m * (out["U0p"] * (yy * u0p.dx + v0p.v)
                       + yy * V1.dY * u0p.dy + U1.v * u0p.dx
                       + u0p.v * U1.dx)
            - h0 * sB.dx - h0p.dx * sB.v - Gc * sB.dy
            - hp.v * Gc * se * dchi[None, :]
            - one_m * (out["H0p"] * (yy * h0p.dx + g0p.v)
                       + yy * G1.dY * h0p.dy + H1.v * h0p.dx
                       + h0p.v * H1.dx))
    Rh1p = (u0 * sB.dx + Vc * sB.dy - params.kappa * sB.dyy
            + h0p.dx * sA.v
            + hp.v * (Vc * se * dchi[None, :]
                      - params.kappa * eps * ddchi[None, :])
            - 2.0 * params.kappa * se * dchi[None, :] * hp.dy
            + one_m * (out["H0p"] * v0p.v + yy * h0p.dx * out["U0p"]
                       + yy * V1.dY * h0p.dy + u0p.v * H1.dx
                       + U1.v * h0p.dx)
            - h0 * sA.dx - Gc * sA.dy - u0p.dx * sB.v
            - up.v * Gc * se * dchi[None, :]
            - one_m * (out["U0p"] * g0p.v + yy * out["H0p"] * u0p.dx
                       + yy * G1.dY * u0p.dy + h0p.v * U1.dx
                       + H1.v * u0p.dx))

    fields = {"E1": E1, "E3": E3, "E4": E4, "Rv0": Rv0, "Rg0": Rg0,
              "Er1": Er1, "Er2": Er2, "Ru1": Ru1, "Rh1": Rh1,
              "Ru1p": Ru1p, "Rh1p": Rh1p}
    return {k: _l2_margin(grid, v, inflow_margin) for k, v in fields.items()}
