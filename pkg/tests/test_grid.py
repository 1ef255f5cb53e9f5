import numpy as np
import pytest

from mhdbl.grid import (Field2D, GridSpec, backward_matrix,
                        cumulative_integral, delta_eps, diff, diff_matrix,
                        fd_weights, geometric_nodes, l2_norm, nabla_eps_norm,
                        sup_norm, tail_integral, trapezoid_weights,
                        zeros_like_grid)


def test_fd_weights_exact_on_polynomials():
    xs = np.array([0.0, 0.3, 0.7, 1.1, 1.6])
    for order in (1, 2):
        w = fd_weights(xs, 0.7, order)
        for p in range(len(xs)):
            exact = 0.0
            if order == 1 and p >= 1:
                exact = p * 0.7 ** (p - 1)
            if order == 2 and p >= 2:
                exact = p * (p - 1) * 0.7 ** (p - 2)
            assert w @ xs ** p == pytest.approx(exact, abs=1e-10)


def test_diff_matrix_second_order_convergence():
    errs = []
    for n in (32, 64, 128):
        nodes = np.linspace(0.0, 1.0, n + 1)
        D = diff_matrix(nodes, 1)
        f = np.sin(3.0 * nodes)
        errs.append(np.max(np.abs(D @ f - 3.0 * np.cos(3.0 * nodes))))
    order = np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])
    assert min(order) > 1.8


def test_diff_matrix_nonuniform_exact_quadratic():
    nodes = geometric_nodes(5.0, 40, 1.05)
    D2 = diff_matrix(nodes, 2)
    assert np.allclose(D2 @ nodes**2, 2.0, atol=1e-8)


def test_backward_matrix_first_order():
    nodes = np.linspace(0.0, 1.0, 65)
    B = backward_matrix(nodes)
    f = nodes**2
    # exact backward difference of x^2 is 2x - h
    h = nodes[1] - nodes[0]
    assert np.allclose((B @ f)[1:], (2.0 * nodes - h)[1:], atol=1e-12)


def test_trapezoid_weights_integrate_linear_exactly():
    nodes = geometric_nodes(3.0, 25, 1.08)
    w = trapezoid_weights(nodes)
    assert w @ np.ones_like(nodes) == pytest.approx(3.0)
    assert w @ nodes == pytest.approx(4.5)


def test_gridspec_nodes_monotone_and_bounds():
    g = GridSpec(L=0.3, nx=16, ny=24, nY=16, y_max=20.0, Y_max=8.0)
    for axis, top in (("x", 0.3), ("y", 20.0), ("Y", 8.0)):
        n = g.nodes(axis)
        assert n[0] == 0.0
        assert n[-1] == pytest.approx(top)
        assert np.all(np.diff(n) > 0)


def test_field2d_rejects_nonfinite():
    g = GridSpec(nx=8, ny=16)
    vals = np.zeros((9, 17))
    vals[2, 2] = np.nan
    with pytest.raises(ValueError):
        Field2D(g, "y", vals)


def test_field2d_shape_check():
    g = GridSpec(nx=8, ny=16)
    with pytest.raises(ValueError):
        Field2D(g, "y", np.zeros((3, 3)))


def test_diff_field_matches_analytic():
    g = GridSpec(L=1.0, nx=48, ny=64, y_max=4.0, stretch=1.0)
    X = g.x[:, None]
    Y = g.y[None, :]
    f = Field2D(g, "y", np.sin(X) * np.exp(-Y))
    fx = diff(f, "x", 1).values
    fy = diff(f, "y", 1).values
    assert np.max(np.abs(fx - np.cos(X) * np.exp(-Y))) < 5e-4
    assert np.max(np.abs(fy + np.sin(X) * np.exp(-Y))) < 5e-3


def test_cumulative_and_tail_integral_exponential():
    g = GridSpec(L=1.0, nx=8, ny=400, y_max=40.0, stretch=1.0)
    f = Field2D(g, "y", np.tile(np.exp(-g.y), (g.nx + 1, 1)))
    # integral from y to infinity (truncated at y_max) of e^-t = e^-y
    tail = cumulative_integral(f, "from_top").values
    assert np.max(np.abs(tail[:, 0] - 1.0)) < 5e-3
    t0 = tail_integral(f)
    assert np.allclose(t0, tail[:, 0])


def test_norms_analytic_oracles():
    g = GridSpec(L=1.0, nx=60, ny=80, y_max=2.0, stretch=1.0)
    ones = Field2D(g, "y", np.ones((g.nx + 1, g.ny + 1)))
    assert l2_norm(ones) == pytest.approx(np.sqrt(2.0), rel=1e-10)
    assert sup_norm(ones) == 1.0
    X = g.x[:, None]
    f = Field2D(g, "y", np.repeat(np.sin(np.pi * X), g.ny + 1, axis=1))
    # nabla_eps of sin(pi x): sqrt(eps) * pi * cos(pi x); L2 over [0,1]x[0,2]
    eps = 0.04
    expect = np.sqrt(eps) * np.pi * np.sqrt(2.0 * 0.5)
    assert nabla_eps_norm(f, eps) == pytest.approx(expect, rel=1e-3)


def test_delta_eps_matches_components():
    g = GridSpec(L=1.0, nx=32, ny=32, y_max=3.0, stretch=1.0)
    X, Y = g.x[:, None], g.y[None, :]
    f = Field2D(g, "y", X**2 * Y**2)
    eps = 0.1
    lap = delta_eps(f, eps).values
    expect = eps * 2.0 * Y**2 + 2.0 * X**2
    assert np.max(np.abs(lap - expect)) < 1e-6


def test_zeros_like_grid():
    g = GridSpec(nx=8, ny=16)
    z = zeros_like_grid(g)
    assert z.values.shape == (9, 17)
    assert np.all(z.values == 0.0)
