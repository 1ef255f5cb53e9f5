"""Tensor grids, finite-difference operators, quadratures and weighted norms.

Everything else in the package sits on top of this module.  The domain is the
strip [0, L] x [0, y_max] in boundary-layer coordinates, with a companion
vertical coordinate Y on [0, Y_max] for the outer (inviscid) fields.  The y
nodes may be geometrically stretched toward the wall; x and Y are uniform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp


def fd_weights(xs: np.ndarray, x0: float, order: int) -> np.ndarray:
    """Finite-difference weights for d^order/dx^order at x0 on nodes xs.

    Fornberg's recursion; exact for polynomials up to degree len(xs)-1.
    """
    n = len(xs)
    if order >= n:
        raise ValueError("stencil too small for requested derivative order")
    c = np.zeros((n, order + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = xs[0] - x0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def diff_matrix(nodes: np.ndarray, order: int) -> sp.csr_matrix:
    """Sparse differentiation matrix on an arbitrary strictly increasing node set.

    Interior rows use centered 3-point stencils; boundary rows use one-sided
    stencils with enough points to keep second-order accuracy for order=1 and
    at least first-order for order=2.
    """
    n = len(nodes)
    if n < 3:
        raise ValueError("need at least 3 nodes to differentiate")
    width = 3 if order == 1 else 4
    width = min(width, n)
    rows, cols, vals = [], [], []
    for i in range(n):
        if 0 < i < n - 1:
            idx = np.array([i - 1, i, i + 1])
        elif i == 0:
            idx = np.arange(width)
        else:
            idx = np.arange(n - width, n)
        w = fd_weights(nodes[idx], nodes[i], order)
        rows.extend([i] * len(idx))
        cols.extend(idx.tolist())
        vals.extend(w.tolist())
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def backward_matrix(nodes: np.ndarray) -> sp.csr_matrix:
    """First-order one-sided backward difference (forward at the first node)."""
    n = len(nodes)
    if n < 3:
        raise ValueError("need at least 3 nodes to differentiate")
    rows, cols, vals = [0, 0], [0, 1], []
    h0 = nodes[1] - nodes[0]
    vals = [-1.0 / h0, 1.0 / h0]
    for i in range(1, n):
        h = nodes[i] - nodes[i - 1]
        rows += [i, i]
        cols += [i - 1, i]
        vals += [-1.0 / h, 1.0 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def geometric_nodes(length: float, n: int, stretch: float) -> np.ndarray:
    """n+1 nodes on [0, length] with spacings growing by the given ratio."""
    if stretch <= 0:
        raise ValueError("stretch must be positive")
    if abs(stretch - 1.0) < 1e-14:
        nodes = np.linspace(0.0, length, n + 1)
    else:
        ratios = stretch ** np.arange(n)
        spac = ratios * (length / ratios.sum())
        nodes = np.concatenate(([0.0], np.cumsum(spac)))
        nodes[-1] = length
    return nodes


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.zeros_like(nodes)
    d = np.diff(nodes)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


@dataclass(frozen=True)
class GridSpec:
    """Discretization of [0,L] x [0,y_max] (and the companion Y interval)."""

    L: float = 0.25
    y_max: float = 30.0
    Y_max: float = 10.0
    nx: int = 64
    ny: int = 128
    nY: int = 64
    stretch: float = 1.02

    def __post_init__(self):
        if not (self.L > 0 and self.y_max > 0 and self.Y_max > 0):
            raise ValueError("domain lengths must be positive")
        if self.nx < 8 or self.ny < 16 or self.nY < 16:
            raise ValueError("grid too coarse: need nx>=8, ny>=16, nY>=16")
        if self.stretch < 1.0:
            raise ValueError("stretch must be >= 1")

    @property
    def x(self) -> np.ndarray:
        return _x_nodes(self.L, self.nx)

    @property
    def y(self) -> np.ndarray:
        return _y_nodes(self.y_max, self.ny, self.stretch)

    @property
    def Y(self) -> np.ndarray:
        return _x_nodes(self.Y_max, self.nY)

    def nodes(self, axis: str) -> np.ndarray:
        if axis == "x":
            return self.x
        if axis == "y":
            return self.y
        if axis == "Y":
            return self.Y
        raise ValueError(f"unknown axis {axis!r}")

    def wq(self, axis: str) -> np.ndarray:
        return trapezoid_weights(self.nodes(axis))

    def dmat(self, axis: str, order: int, scheme: str = "central") -> sp.csr_matrix:
        key = (self.nodes(axis).tobytes(), order, scheme)
        return _dmat_cached(key, self.nodes(axis), order, scheme)


@lru_cache(maxsize=128)
def _x_nodes(length: float, n: int) -> np.ndarray:
    nodes = np.linspace(0.0, length, n + 1)
    nodes.setflags(write=False)
    return nodes


@lru_cache(maxsize=128)
def _y_nodes(length: float, n: int, stretch: float) -> np.ndarray:
    nodes = geometric_nodes(length, n, stretch)
    nodes.setflags(write=False)
    return nodes


_DMAT_CACHE: dict = {}


def _dmat_cached(key, nodes, order, scheme):
    mat = _DMAT_CACHE.get(key)
    if mat is None:
        if scheme == "central":
            mat = diff_matrix(np.asarray(nodes), order)
        elif scheme == "backward":
            if order != 1:
                raise ValueError("backward scheme supports order 1 only")
            mat = backward_matrix(np.asarray(nodes))
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        _DMAT_CACHE[key] = mat
    return mat


@dataclass
class Field2D:
    """Samples of a scalar field on the (x, y) or (x, Y) tensor grid."""

    grid: GridSpec
    axis: str  # vertical coordinate: "y" or "Y"
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n_vert = self.grid.ny if self.axis == "y" else self.grid.nY
        expect = (self.grid.nx + 1, n_vert + 1)
        if self.values.shape != expect:
            raise ValueError(f"field shape {self.values.shape} != {expect}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    @property
    def vert_nodes(self) -> np.ndarray:
        return self.grid.nodes(self.axis)

    def like(self, values: np.ndarray) -> "Field2D":
        return Field2D(self.grid, self.axis, values)


@dataclass(frozen=True)
class NormSpec:
    """Weighted Sobolev norm H^m_l: sum over derivatives D^a with |a| <= m of
    the L2 norm of <y>^(l+k) D^a f, where k counts vertical derivatives only."""

    m: int = 0
    l: float = 0.0

    def __post_init__(self):
        if self.m < 0 or self.m > 5:
            raise ValueError("derivative order m must be in [0, 5]")
        if self.l < 0:
            raise ValueError("weight exponent l must be >= 0")


def zeros_like_grid(grid: GridSpec, axis: str = "y") -> Field2D:
    n_vert = grid.ny if axis == "y" else grid.nY
    return Field2D(grid, axis, np.zeros((grid.nx + 1, n_vert + 1)))


def diff(f: Field2D, direction: str, order: int = 1, scheme: str = "central") -> Field2D:
    """Differentiate along "x" or the vertical coordinate ("y" works for both
    vertical axes; the field's own node set is used)."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if scheme == "backward" and order != 1:
        raise ValueError("backward scheme is first derivative only")
    if direction == "x":
        mat = f.grid.dmat("x", order, scheme)
        out = mat @ f.values
    elif direction in ("y", f.axis):
        mat = f.grid.dmat(f.axis, order, scheme)
        out = (mat @ f.values.T).T
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return f.like(out)


def delta_eps(f: Field2D, eps: float) -> Field2D:
    """Anisotropic Laplacian eps*d2/dx2 + d2/dy2 with central stencils."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    return f.like(eps * diff(f, "x", 2).values + diff(f, "y", 2).values)


def cumulative_integral(f: Field2D, orientation: str = "from_top") -> Field2D:
    """Row-wise vertical antiderivative by the composite trapezoid rule.

    "from_top": T(y) = integral from y to the truncation height (zero there).
    "from_wall": W(y) = integral from 0 to y (zero at the wall).
    """
    nodes = f.vert_nodes
    d = np.diff(nodes)
    seg = 0.5 * d * (f.values[:, 1:] + f.values[:, :-1])
    out = np.zeros_like(f.values)
    if orientation == "from_top":
        out[:, :-1] = np.cumsum(seg[:, ::-1], axis=1)[:, ::-1]
    elif orientation == "from_wall":
        out[:, 1:] = np.cumsum(seg, axis=1)
    else:
        raise ValueError(f"unknown orientation {orientation!r}")
    return f.like(out)


def tail_integral(f: Field2D, from_y: int = 0, orientation: str = "from_top") -> np.ndarray:
    """Column over x of the vertical integral anchored at node index from_y."""
    return cumulative_integral(f, orientation).values[:, from_y].copy()


def _bracket_weight(nodes: np.ndarray, exponent: float) -> np.ndarray:
    return (1.0 + nodes**2) ** (exponent / 2.0)


def weighted_norm(f: Field2D, spec: NormSpec = NormSpec(), slice: str = "full-domain",
                  x_index: int | None = None) -> float:
    """H^m_l norm of the field (or of one x-slice as a function of y)."""
    nodes = f.vert_nodes
    wy = f.grid.wq(f.axis)
    total = 0.0
    if slice == "fixed-x":
        if x_index is None:
            x_index = 0
        col = f.values[x_index]
        dm = {0: col}
        for k in range(1, spec.m + 1):
            dm[k] = f.grid.dmat(f.axis, 1) @ dm[k - 1]
        for k in range(spec.m + 1):
            w = _bracket_weight(nodes, spec.l + k)
            total += np.sum(wy * (w * dm[k]) ** 2)
        return float(np.sqrt(total))
    if slice != "full-domain":
        raise ValueError(f"unknown slice {slice!r}")
    wx = f.grid.wq("x")
    wq = np.outer(wx, wy)
    # all derivatives D^a = d^b_x d^k_y with b + k <= m, weight uses k only
    cache = {(0, 0): f.values}

    def deriv(b, k):
        if (b, k) not in cache:
            if k > 0:
                prev = deriv(b, k - 1)
                cache[(b, k)] = (f.grid.dmat(f.axis, 1) @ prev.T).T
            else:
                prev = deriv(b - 1, 0)
                cache[(b, k)] = f.grid.dmat("x", 1) @ prev
        return cache[(b, k)]

    for b in range(spec.m + 1):
        for k in range(spec.m + 1 - b):
            w = _bracket_weight(nodes, spec.l + k)[None, :]
            total += np.sum(wq * (w * deriv(b, k)) ** 2)
    return float(np.sqrt(total))


def l2_norm(f: Field2D) -> float:
    return weighted_norm(f, NormSpec(0, 0.0))


def nabla_eps_norm(f: Field2D, eps: float) -> float:
    """|| (sqrt(eps) d_x f, d_y f) ||_{L2}."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    fx = diff(f, "x", 1).values
    fy = diff(f, "y", 1).values
    wq = np.outer(f.grid.wq("x"), f.grid.wq(f.axis))
    return float(np.sqrt(np.sum(wq * (eps * fx**2 + fy**2))))


def sup_norm(f: Field2D) -> float:
    return float(np.max(np.abs(f.values)))
