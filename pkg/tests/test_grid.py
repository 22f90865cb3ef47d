import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spde_bayes.grid import (
    Field,
    HeatSolver,
    SpaceTimePath,
    apply_laplacian,
    heat_flow,
    implicit_heat_solve,
    laplacian_eigenpairs,
    laplacian_matrix,
    make_grid,
    read_path,
    rescale_to_unit_domain,
    write_path,
)


def test_grid_examples():
    g = make_grid(50)
    assert g.n == 800 and g.dy == 1 / 16
    g = make_grid(1, (-0.5, 0.5), 2)
    assert g.n == 2 and g.dy == 0.5
    g = make_grid(4, (0, 1), 8)
    assert g.n == 32 and g.dy == 1 / 8
    assert g.nodes.min() > 0 and g.nodes.max() < 4


def test_fractional_lambda_keeps_effective_resolution():
    g = make_grid(12.5)
    assert g.n == 200 and np.isclose(g.dy * g.n, 12.5)
    assert g.effective_points_per_unit == 16


@pytest.mark.parametrize("args", [(0.5,), (float("nan"),), (10, (0, 2)), (10, (0.1, 1.1)), (10, (-0.5, 0.5), 1)])
def test_grid_rejects_bad_input(args):
    with pytest.raises(ValueError):
        make_grid(*args)


def test_laplacian_constants_and_ramp():
    g = make_grid(4, (0, 1), 8)
    assert np.all(apply_laplacian(np.full(g.n, 3.7), g.dy) == 0)
    L = apply_laplacian(g.nodes, g.dy)
    np.testing.assert_allclose(L[1:-1], 0, atol=1e-9)
    # mirrored ghosts: u_{-1} = u_0, so (u_1 - u_0)/dy^2 = slope/dy
    np.testing.assert_allclose(L[0], 1 / g.dy, rtol=1e-12)
    np.testing.assert_allclose(L[-1], -1 / g.dy, rtol=1e-12)


@given(st.integers(2, 64), st.floats(1, 20), st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_stencil_zero_row_sum_and_mass_conservation(ppu, lam, seed):
    g = make_grid(lam, (-0.5, 0.5), ppu)
    A = laplacian_matrix(g)
    scale = np.abs(A).max()
    assert np.abs(A.sum(axis=1)).max() <= 1e-12 * scale
    u = np.random.default_rng(seed).standard_normal(g.n)
    assert abs(apply_laplacian(u, g.dy).sum()) * g.dy <= 1e-12 * scale * np.abs(u).sum() * g.dy


def test_eigenpairs_match_dense_decomposition():
    for n in (4, 9, 32):
        g = make_grid(1, (-0.5, 0.5), n)
        th, V = laplacian_eigenpairs(g)
        A = laplacian_matrix(g)
        np.testing.assert_allclose(A @ V, -V * th, atol=1e-9 * np.abs(A).max())
        np.testing.assert_allclose(np.sort(th), np.sort(-np.linalg.eigvalsh(A)), atol=1e-9 * np.abs(A).max())


def test_heat_solver_examples():
    g = make_grid(8, (-0.5, 0.5), 4)
    dt = 0.01
    s = HeatSolver(g, dt)
    np.testing.assert_allclose(s.solve(np.full(g.n, 2.5)), 2.5, rtol=1e-13)
    th, V = laplacian_eigenpairs(g)
    for k in (0, 3, 17):
        np.testing.assert_allclose(s.solve(V[:, k]), V[:, k] / (1 + dt * th[k]), atol=1e-12)
    g8 = make_grid(1, (-0.5, 0.5), 8)
    rhs = np.zeros(8)
    rhs[4] = 1.0
    A = np.eye(8) - g8.dy**2 * laplacian_matrix(g8)
    np.testing.assert_allclose(implicit_heat_solve(Field(rhs, g8), g8.dy**2).values, np.linalg.solve(A, rhs), atol=1e-14)


def test_batched_solve_is_bitwise_columnwise():
    g = make_grid(10)
    s = HeatSolver(g, 2e-4)
    R = np.random.default_rng(0).standard_normal((5, g.n))
    B = s.solve(R)
    for k in range(5):
        assert np.array_equal(B[k], s.solve(R[k]))


def test_heat_kernel_scaling_against_unit_domain():
    lam, t, steps = 8.0, 0.5, 200
    g = make_grid(lam)
    u0 = np.cos(np.pi * g.nodes / lam) + 0.3 * np.exp(-g.nodes**2)
    big = heat_flow(Field(u0, g), t, steps).values
    path = SpaceTimePath(g, 1.0, 1.0, np.vstack([u0, u0]))
    unit = rescale_to_unit_domain(path).grid
    small = heat_flow(Field(u0, unit), t / lam**2, steps).values
    assert np.max(np.abs(big - small)) < 1e-6


def test_rescale_examples():
    g = make_grid(1)
    p = SpaceTimePath(g, 0.1, 0.05, np.random.default_rng(1).standard_normal((3, g.n)))
    r = rescale_to_unit_domain(p)
    assert np.array_equal(r.frames, p.frames) and r.grid.dy == p.grid.dy
    g = make_grid(50)
    c = SpaceTimePath(g, 0.1, 0.05, np.full((3, g.n), 1.25))
    r = rescale_to_unit_domain(c)
    assert np.all(r.frames == 1.25) and np.isclose(r.meta["nu"], 50.0**-2)


def test_path_round_trip(tmp_path):
    g = make_grid(3)
    rng = np.random.default_rng(5)
    p = SpaceTimePath(g, 0.01, 0.005, rng.standard_normal((3, g.n)), rng.standard_normal((2, g.n)))
    write_path(p, tmp_path / "p.spde")
    q = read_path(tmp_path / "p.spde")
    assert np.array_equal(q.frames, p.frames) and np.array_equal(q.noise, p.noise)
    assert q.grid.n == g.n and q.grid.lam == g.lam and q.dt == p.dt and q.T == p.T
    raw = (tmp_path / "p.spde").read_bytes()
    (tmp_path / "bad.spde").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_path(tmp_path / "bad.spde")


def test_path_validation():
    g = make_grid(2)
    with pytest.raises(ValueError):
        SpaceTimePath(g, 1.0, 0.5, np.zeros((3, g.n + 1)))
    with pytest.raises(ValueError):
        SpaceTimePath(g, 1.0, 0.3, np.zeros((3, g.n)))
    bad = np.zeros((3, g.n))
    bad[1, 2] = np.nan
    with pytest.raises(ValueError):
        SpaceTimePath(g, 1.0, 0.5, bad)
