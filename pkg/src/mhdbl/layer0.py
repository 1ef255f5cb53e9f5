"""Zeroth-order nonlinear boundary-layer solver.

The wall mismatch is homogenized with the plateau function phi, x is marched
implicitly (backward Euler) and the nonlinear coefficients are resolved by
Picard sub-iterations with a coupled tridiagonal-block solve in y for the
(u, h) pair.  The vertical velocities come from the divergence constraints by
quadrature; the wall traces that drive the outer corrector fall out of the
same quadrature.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Field2D, GridSpec, cumulative_integral, fd_weights, diff
from .profiles import (AssumptionThresholds, BoundaryData, CutoffSet,
                       IdealShearFlow, PhysicalParams)


class PositivityLost(RuntimeError):
    """The transport coefficients dropped below the admissible floor."""

    def __init__(self, step: int, which: str):
        super().__init__(f"positivity floor lost at step {step} ({which})")
        self.step = step
        self.which = which


class NoConvergence(RuntimeError):
    """Picard sub-iterations stalled at an x-station."""


@dataclass
class HomogenizedState:
    """Shifted unknowns: the wall mismatch is absorbed into the data so the
    boundary rows become u = v = g = 0 and d_y h = 0."""

    grid: GridSpec
    u: Field2D
    v: Field2D
    h: Field2D
    g: Field2D
    r1: np.ndarray  # source nu (u_e - u_b) phi'' (sign fixed by the shift)
    r2: np.ndarray  # source kappa h_e phi''
    phi: np.ndarray
    dphi: np.ndarray
    u_e: float
    h_e: float
    u_b: float


@dataclass
class LayerZeroSolution:
    grid: GridSpec
    u0p: Field2D
    v0p: Field2D
    h0p: Field2D
    g0p: Field2D
    trace_v1e: np.ndarray
    trace_g1e: np.ndarray
    condition_monitor: list

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "u0p", "v0p", "h0p", "g0p"])
            for i, xv in enumerate(self.grid.x):
                for j, yv in enumerate(self.grid.y):
                    w.writerow([xv, yv, self.u0p.values[i, j],
                                self.v0p.values[i, j], self.h0p.values[i, j],
                                self.g0p.values[i, j]])

    def write_monitor_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump({"condition_monitor": self.condition_monitor}, fh, indent=1)


def homogenize(flow: IdealShearFlow, data: BoundaryData, params: PhysicalParams,
               cutoffs: CutoffSet, grid: GridSpec) -> HomogenizedState:
    """Initial shifted state at x = 0."""
    y = grid.y
    phi = cutoffs.phi(y)
    dphi = cutoffs.phi(y, 1)
    # discrete second derivative of phi so that the mismatch-free state is an
    # exact steady state of the discrete march, not just of the continuum
    ddphi = grid.dmat("y", 2) @ phi
    u_e, h_e, u_b = flow.u_e, flow.h_e, params.u_b
    shape = (grid.nx + 1, grid.ny + 1)
    u = np.zeros(shape)
    h = np.zeros(shape)
    u[0] = data.ubar0(y) + (u_e - u_b) * (1.0 - phi)
    h[0] = data.hbar0(y) + h_e * (1.0 - phi)
    mk = lambda a: Field2D(grid, "y", a)
    return HomogenizedState(
        grid=grid, u=mk(u), v=mk(np.zeros(shape)), h=mk(h), g=mk(np.zeros(shape)),
        r1=params.nu * (u_e - u_b) * ddphi, r2=params.kappa * h_e * ddphi,
        phi=phi, dphi=dphi, u_e=u_e, h_e=h_e, u_b=u_b)


def _station_matrix(grid, params, state, a, b, v, g, dx):
    """Assemble the coupled linear system for (u, h) at one x-station with
    lagged coefficients.  Unknown layout: [u_0..u_ny, h_0..h_ny]."""
    ny = grid.ny
    n = ny + 1
    y = grid.y
    D1 = grid.dmat("y", 1)
    D2 = grid.dmat("y", 2)
    Ia = sp.diags(a / dx)
    Ib = sp.diags(b / dx)
    Adv = sp.diags(v) @ D1
    Gdv = sp.diags(g) @ D1
    # u-equation: (a/dx) u + v Du - nu D2 u - (b/dx) h - g Dh = rhs
    A11 = (Ia + Adv - params.nu * D2).tolil()
    A12 = (-Ib - Gdv).tolil()
    # h-equation: (a/dx) h + v Dh - kappa D2 h - (b/dx) u - g Du = rhs
    A21 = (-Ib - Gdv).tolil()
    A22 = (Ia + Adv - params.kappa * D2).tolil()
    # boundary rows
    for blk in (A11, A12, A21, A22):
        blk[0, :] = 0.0
        blk[n - 1, :] = 0.0
    A11[0, 0] = 1.0          # u(0) = 0
    A11[n - 1, n - 1] = 1.0  # u(y_max) = 0
    wN = fd_weights(y[:3], y[0], 1)
    A22[0, [0, 1, 2]] = wN   # d_y h(0) = 0
    A22[n - 1, n - 1] = 1.0  # h(y_max) = 0
    top = sp.hstack([A11.tocsr(), A12.tocsr()])
    bot = sp.hstack([A21.tocsr(), A22.tocsr()])
    return sp.vstack([top, bot]).tocsc()


def march_layer0(state0: HomogenizedState, params: PhysicalParams,
                 thresholds: AssumptionThresholds = AssumptionThresholds(),
                 picard_tol: float = 1e-10, picard_max: int = 50
                 ) -> tuple[HomogenizedState, LayerZeroSolution]:
    """March the homogenized system across the x grid."""
    grid = state0.grid
    x = grid.x
    u = state0.u.values
    h = state0.h.values
    v = state0.v.values
    g = state0.g.values
    phi, dphi = state0.phi, state0.dphi
    u_e, h_e, u_b = state0.u_e, state0.h_e, state0.u_b
    shift_u = u_e * phi + u_b * (1.0 - phi)
    shift_h = h_e * phi
    floor = thresholds.vartheta0 / 2.0
    monitor = []

    if np.min(u[0] + shift_u) < floor or np.min(h[0] + shift_h) < floor:
        raise PositivityLost(0, "initial data")

    coupling_r1 = lambda vv, gg: -gg * h_e * dphi + vv * (u_e - u_b) * dphi
    coupling_r2 = lambda vv, gg: -gg * (u_e - u_b) * dphi + vv * h_e * dphi

    n = grid.ny + 1
    for i in range(1, grid.nx + 1):
        dx = x[i] - x[i - 1]
        u_prev, h_prev = u[i - 1], h[i - 1]
        u_it, h_it = u_prev.copy(), h_prev.copy()
        v_it, g_it = v[i - 1].copy(), g[i - 1].copy()
        converged = False
        for it in range(picard_max):
            a = u_it + shift_u
            b = h_it + shift_h
            A = _station_matrix(grid, params, state0, a, b, v_it, g_it, dx)
            rhs_u = state0.r1 + a * u_prev / dx - b * h_prev / dx \
                - coupling_r1(v_it, g_it)
            rhs_h = state0.r2 + a * h_prev / dx - b * u_prev / dx \
                - coupling_r2(v_it, g_it)
            rhs_u[0] = 0.0
            rhs_u[-1] = 0.0
            rhs_h[0] = 0.0
            rhs_h[-1] = 0.0
            sol = spla.spsolve(A, np.concatenate([rhs_u, rhs_h]))
            u_new, h_new = sol[:n], sol[n:]
            delta = max(np.max(np.abs(u_new - u_it)), np.max(np.abs(h_new - h_it)))
            u_it, h_it = u_new, h_new
            v_it = -_wall_cumint(grid, (u_it - u_prev) / dx)
            g_it = -_wall_cumint(grid, (h_it - h_prev) / dx)
            if delta < picard_tol:
                converged = True
                break
        if not converged:
            raise NoConvergence(f"Picard stalled at station {i} (delta {delta:.2e})")
        u[i], h[i], v[i], g[i] = u_it, h_it, v_it, g_it
        min_a = float(np.min(u_it + shift_u))
        min_b = float(np.min(h_it + shift_h))
        monitor.append({"step": i, "x": float(x[i]), "iterations": it + 1,
                        "delta": float(delta), "min_u_coeff": min_a,
                        "min_h_coeff": min_b})
        if min_a < floor:
            raise PositivityLost(i, "u-transport coefficient")
        if min_b < floor:
            raise PositivityLost(i, "h-transport coefficient")

    return state0, dehomogenize(state0, monitor)


def _wall_cumint(grid: GridSpec, col: np.ndarray) -> np.ndarray:
    """Integral from the wall up, one column."""
    d = np.diff(grid.y)
    out = np.zeros_like(col)
    out[1:] = np.cumsum(0.5 * d * (col[1:] + col[:-1]))
    return out


def dehomogenize(state: HomogenizedState, monitor: list | None = None
                 ) -> LayerZeroSolution:
    """Invert the homogenization shift and split off the wall traces."""
    grid = state.grid
    phi = state.phi
    u_e, h_e, u_b = state.u_e, state.h_e, state.u_b
    u0p = state.u.values - u_e + u_e * phi + u_b * (1.0 - phi)
    h0p = state.h.values - h_e + h_e * phi
    trace_v1e = state.v.values[:, -1].copy()
    trace_g1e = state.g.values[:, -1].copy()
    v0p = state.v.values - trace_v1e[:, None]
    g0p = state.g.values - trace_g1e[:, None]
    mk = lambda arr: Field2D(grid, "y", arr)
    return LayerZeroSolution(grid, mk(u0p), mk(v0p), mk(h0p), mk(g0p),
                             trace_v1e, trace_g1e, monitor or [])


def stream_identity_residual(sol: LayerZeroSolution, state: HomogenizedState,
                             params: PhysicalParams) -> float:
    """Max-norm residual of the integrated induction identity

        (h + h_e phi) v - (u + u_e phi + u_b (1 - phi)) g - kappa d_y h
            = kappa h_e phi'

    which exact solutions satisfy pointwise."""
    phi, dphi = state.phi, state.dphi
    a = state.u.values + state.u_e * phi + state.u_b * (1.0 - phi)
    b = state.h.values + state.h_e * phi
    dyh = diff(state.h, "y", 1).values
    lhs = b * state.v.values - a * state.g.values - params.kappa * dyh
    rhs = params.kappa * state.h_e * dphi
    return float(np.max(np.abs(lhs - rhs[None, :])))


def solve_layer0(flow: IdealShearFlow, data: BoundaryData, params: PhysicalParams,
                 cutoffs: CutoffSet, grid: GridSpec,
                 thresholds: AssumptionThresholds = AssumptionThresholds()
                 ) -> tuple[HomogenizedState, LayerZeroSolution]:
    """Convenience wrapper: homogenize then march."""
    state = homogenize(flow, data, params, cutoffs, grid)
    return march_layer0(state, params, thresholds)
