"""First-order outer corrector: the modified elliptic problem for the vertical
velocity/magnetic corrections, lifting of the side data, and recovery of the
horizontal fields, pressure and the wall conductor corrector.

The corrector pair (v1e, g1e) satisfies an elliptic equation on the (x, Y)
rectangle.  The magnetic component is slaved to the velocity component through
an exact algebraic relation, so after lifting the boundary data the problem
reduces to a single scalar Dirichlet solve.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Field2D, GridSpec, cumulative_integral, trapezoid_weights
from .layer0 import LayerZeroSolution
from .profiles import (AssumptionThresholds, BoundaryData, CutoffSet,
                       IdealShearFlow, PhysicalParams)

CORNER_DEGENERATE_TOL = 1e-10


class CompatibilityViolated(RuntimeError):
    """Side data does not match the wall traces at a corner."""


class SolverDiverged(RuntimeError):
    """The Krylov iteration failed to reach the requested residual."""


class Degenerate(RuntimeError):
    """The magnetic-to-velocity ratio is too large for the reduction."""


@dataclass
class LiftingFields:
    Bv: Field2D
    Bg: Field2D
    Fe: Field2D
    Eb: Field2D
    b: np.ndarray  # column over x: h_e * v0p(x,0) - u_e * g0p(x,0)
    vbar: np.ndarray
    gbar: np.ndarray


@dataclass
class EulerCorrector:
    w1: Field2D
    w2: Field2D
    v1e: Field2D
    g1e: Field2D
    u1e: Field2D
    h1e: Field2D
    p1e: Field2D
    rho: Field2D              # on the y grid: -d_Y h1e(x,0) * y eta(y)
    rho_wall_coeff: np.ndarray  # column -d_Y h1e(x,0)
    int_rho_x: Field2D        # on the y grid: d/dx of rho integrated in y
    lift: LiftingFields

    def write_csv(self, path: str) -> None:
        g = self.w1.grid
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "Y", "v1e", "g1e", "u1e", "h1e", "p1e"])
            for i, xv in enumerate(g.x):
                for j, Yv in enumerate(g.Y):
                    w.writerow([xv, Yv, self.v1e.values[i, j],
                                self.g1e.values[i, j], self.u1e.values[i, j],
                                self.h1e.values[i, j], self.p1e.values[i, j]])

    def write_report_json(self, path: str, flow: IdealShearFlow) -> None:
        rep = {
            "positivity_certificate": positivity_certificate(self.w1, flow),
            "wall_residual_v": float(np.max(np.abs(
                self.v1e.values[:, 0] + self.lift.vbar))),
            "wall_residual_g": float(np.max(np.abs(
                self.g1e.values[:, 0] + self.lift.gbar))),
        }
        with open(path, "w") as fh:
            json.dump(rep, fh, indent=1)


def _laplacian(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    D2x = grid.dmat("x", 2)
    D2Y = grid.dmat("Y", 2)
    return D2x @ values + (D2Y @ values.T).T


def elliptic_operator(grid: GridSpec, flow: IdealShearFlow,
                      Bv: np.ndarray, Bg: np.ndarray) -> np.ndarray:
    """-u0e Lap(Bv) + u0e'' Bv + (h0e Lap(Bg) - h0e'' Bg) on the (x,Y) grid."""
    Y = grid.Y
    U, ddU = flow.u0e(Y), flow.dd_u0e(Y)
    H, ddH = flow.h0e(Y), flow.dd_h0e(Y)
    return (-U[None, :] * _laplacian(grid, Bv) + ddU[None, :] * Bv
            + H[None, :] * _laplacian(grid, Bg) - ddH[None, :] * Bg)


def _corner_term(weight: np.ndarray, side: np.ndarray, corner_trace: float,
                 wall: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """One corner's contribution to the lifting.

    Ratio form when the corner trace is away from zero; otherwise a difference
    form that keeps the wall row and the corner column exact while decaying in
    Y (the mismatch column is carried by an exponential profile).
    """
    if abs(corner_trace) > CORNER_DEGENERATE_TOL:
        return weight[:, None] * np.outer(wall / corner_trace, side)
    decay = np.exp(-Y)
    return weight[:, None] * (side[None, :]
                              + np.outer(-wall - side[0], decay))


def build_lifting(sol: LayerZeroSolution, data: BoundaryData,
                  params: PhysicalParams, flow: IdealShearFlow,
                  cutoffs: CutoffSet, eps_c: float | None = None) -> LiftingFields:
    grid = sol.grid
    x, Y = grid.x, grid.Y
    vbar = sol.v0p.values[:, 0].copy()
    gbar = sol.g0p.values[:, 0].copy()
    b = flow.h_e * vbar - flow.u_e * gbar
    decay = np.exp(-Y)

    sides = {}
    for name, fn, wall_col in (("Vb0", data.Vb0, vbar), ("VbL", data.VbL, vbar),
                               ("Gb0", data.Gb0, gbar), ("GbL", data.GbL, gbar)):
        corner = wall_col[0] if name.endswith("0") else wall_col[-1]
        if fn is None:
            sides[name] = -corner * decay
        else:
            sides[name] = np.asarray(fn(Y), dtype=float)
            if abs(sides[name][0] + corner) > 1e-8:
                raise CompatibilityViolated(
                    f"{name}(0) = {sides[name][0]:.3e} but wall trace needs "
                    f"{-corner:.3e}")

    w0 = 1.0 - x / grid.L
    wL = x / grid.L
    Bv = (_corner_term(w0, sides["Vb0"], vbar[0], vbar, Y)
          + _corner_term(wL, sides["VbL"], vbar[-1], vbar, Y))
    Bg = (_corner_term(w0, sides["Gb0"], gbar[0], gbar, Y)
          + _corner_term(wL, sides["GbL"], gbar[-1], gbar, Y))

    Fe = elliptic_operator(grid, flow, Bv, Bg)
    width = params.eps if eps_c is None else eps_c
    Eb = np.outer(Fe[:, 0], cutoffs.chi(Y / width))
    mk = lambda a: Field2D(grid, "Y", a)
    return LiftingFields(mk(Bv), mk(Bg), mk(Fe), mk(Eb), b, vbar, gbar)


def _ratio_derivs(flow: IdealShearFlow, Y: np.ndarray):
    U, dU, ddU = flow.u0e(Y), flow.d_u0e(Y), flow.dd_u0e(Y)
    H, dH, ddH = flow.h0e(Y), flow.d_h0e(Y), flow.dd_h0e(Y)
    r = H / U
    dr = dH / U - H * dU / U**2
    ddr = (ddH / U - 2.0 * dH * dU / U**2 - H * ddU / U**2
           + 2.0 * H * dU**2 / U**3)
    return U, H, r, dr, ddr


def solve_corrector(lift: LiftingFields, flow: IdealShearFlow,
                    params: PhysicalParams,
                    thresholds: AssumptionThresholds = AssumptionThresholds(),
                    rhs_override: np.ndarray | None = None,
                    tol: float = 1e-10) -> tuple[Field2D, Field2D]:
    """Reduce to the scalar Dirichlet problem for w1 and solve it.

    The magnetic unknown is eliminated through w2 = r (w1 + Bv) + b/u0e - Bg
    with r = h0e/u0e, leaving one uniformly elliptic scalar equation.
    """
    grid = lift.Bv.grid
    x, Y = grid.x, grid.Y
    nx, nY = grid.nx, grid.nY
    U, H, r, dr, ddr = _ratio_derivs(flow, Y)
    ddU = flow.dd_u0e(Y)
    ddH = flow.dd_h0e(Y)

    ratio = float(np.max(np.abs(r)))
    if ratio > thresholds.ratio_max + 1e-12:
        raise Degenerate(f"sup |h0e/u0e| = {ratio:.3f} exceeds "
                         f"{thresholds.ratio_max}")

    # affine part of the eliminated unknown: w2 = r w1 + C
    C = (r[None, :] * lift.Bv.values + np.outer(lift.b, 1.0 / U)
         - lift.Bg.values)
    if rhs_override is not None:
        rhs = rhs_override.copy()
    else:
        rhs = (lift.Eb.values - lift.Fe.values
               - H[None, :] * _laplacian(grid, C) + ddH[None, :] * C)

    # scalar operator: (-U + H r) Lap + 2 H r' d_Y + (U'' + H r'' - r H'')
    coefA = -U + H * r
    coef1 = 2.0 * H * dr
    coef0 = ddU + H * ddr - r * ddH

    Ix = sp.identity(nx + 1, format="csr")
    IY = sp.identity(nY + 1, format="csr")
    Lap = sp.kron(grid.dmat("x", 2), IY) + sp.kron(Ix, grid.dmat("Y", 2))
    DY = sp.kron(Ix, grid.dmat("Y", 1))
    cA = np.tile(coefA, nx + 1)
    c1 = np.tile(coef1, nx + 1)
    c0 = np.tile(coef0, nx + 1)
    A = (sp.diags(cA) @ Lap + sp.diags(c1) @ DY + sp.diags(c0)).tolil()

    bvec = rhs.reshape(-1).copy()
    boundary = np.zeros((nx + 1, nY + 1), dtype=bool)
    boundary[0, :] = boundary[-1, :] = True
    boundary[:, 0] = boundary[:, -1] = True
    bidx = np.flatnonzero(boundary.reshape(-1))
    for k in bidx:
        A.rows[k] = [k]
        A.data[k] = [1.0]
    bvec[bidx] = 0.0
    A = A.tocsc()

    w1_flat = _krylov_solve(A, bvec, tol)
    w1 = w1_flat.reshape(nx + 1, nY + 1)
    w2 = r[None, :] * w1 + C
    return Field2D(grid, "Y", w1), Field2D(grid, "Y", w2)


def _krylov_solve(A: sp.csc_matrix, b: np.ndarray, tol: float) -> np.ndarray:
    """GMRES with an incomplete-LU preconditioner; direct fallback; the final
    relative residual is always verified."""
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    x = None
    try:
        ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
        x, info = spla.gmres(A, b, M=M, rtol=tol * 0.1, atol=0.0,
                             restart=80, maxiter=400)
        if info != 0:
            x = None
    except RuntimeError:
        x = None
    if x is None or np.linalg.norm(A @ x - b) > tol * bnorm:
        x = spla.spsolve(A, b)
    if np.linalg.norm(A @ x - b) > tol * bnorm:
        raise SolverDiverged("linear solve did not reach the requested "
                             "relative residual")
    return x


def positivity_certificate(w1: Field2D, flow: IdealShearFlow) -> float:
    """Ratio of the weighted to the plain vertical Dirichlet energy.

    Values bounded away from zero certify the coercivity used by the
    corrector estimates."""
    grid = w1.grid
    Y = grid.Y
    U = flow.u0e(Y)
    DY = grid.dmat("Y", 1)
    quot = w1.values / U[None, :]
    num_f = U[None, :] * (DY @ quot.T).T
    den_f = (DY @ w1.values.T).T
    wq = np.outer(grid.wq("x"), grid.wq("Y"))
    den = float(np.sum(wq * den_f**2))
    if den < 1e-14:
        return float("inf")
    return float(np.sum(wq * num_f**2)) / den


def recover_fields(w1: Field2D, w2: Field2D, lift: LiftingFields,
                   flow: IdealShearFlow, data: BoundaryData,
                   params: PhysicalParams, cutoffs: CutoffSet,
                   layer_grid: GridSpec | None = None) -> EulerCorrector:
    """Horizontal fields by x-integration, pressure by vertical quadrature,
    and the wall conductor corrector on the boundary-layer grid."""
    grid = w1.grid
    x, Y = grid.x, grid.Y
    mk = lambda a: Field2D(grid, "Y", a)
    v1e = lift.Bv.values + w1.values
    g1e = lift.Bg.values + w2.values

    DY = grid.dmat("Y", 1)
    Dx = grid.dmat("x", 1)
    dY_v = (DY @ v1e.T).T
    dY_g = (DY @ g1e.T).T
    # trapezoid antiderivative in x
    dxs = np.diff(x)

    def x_antideriv(fld):
        out = np.zeros_like(fld)
        seg = 0.5 * dxs[:, None] * (fld[1:] + fld[:-1])
        out[1:] = np.cumsum(seg, axis=0)
        return out

    u1e = data.u1b(Y)[None, :] - x_antideriv(dY_v)
    h1e = data.h1b(Y)[None, :] - x_antideriv(dY_g)

    U, H = flow.u0e(Y), flow.h0e(Y)
    integrand = U[None, :] * (Dx @ v1e) - H[None, :] * (Dx @ g1e)
    p1e = cumulative_integral(mk(integrand), "from_top").values

    lg = layer_grid if layer_grid is not None else grid
    y = lg.y
    coeff = -((DY @ h1e.T).T)[:, 0]  # -d_Y h1e(x, 0), column over x
    eta = cutoffs.eta(y)
    rho = np.outer(coeff, y * eta)
    dcoeff = Dx @ coeff
    W = np.zeros_like(y)
    W[1:] = np.cumsum(0.5 * np.diff(y) * ((y * eta)[1:] + (y * eta)[:-1]))
    int_rho_x = np.outer(dcoeff, W)
    mkl = lambda a: Field2D(lg, "y", a)
    return EulerCorrector(w1, w2, mk(v1e), mk(g1e), mk(u1e), mk(h1e),
                          mk(p1e), mkl(rho), coeff, mkl(int_rho_x), lift)


def solve_euler1(sol: LayerZeroSolution, flow: IdealShearFlow,
                 data: BoundaryData, params: PhysicalParams,
                 cutoffs: CutoffSet,
                 thresholds: AssumptionThresholds = AssumptionThresholds(),
                 eps_c: float | None = None) -> EulerCorrector:
    """Convenience wrapper: lifting, scalar solve, field recovery."""
    lift = build_lifting(sol, data, params, flow, cutoffs, eps_c)
    w1, w2 = solve_corrector(lift, flow, params, thresholds)
    return recover_fields(w1, w2, lift, flow, data, params, cutoffs,
                          layer_grid=sol.grid)
