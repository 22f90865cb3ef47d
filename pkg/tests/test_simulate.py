import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spde_bayes.diagnostics import SpatialAverageReducer
from spde_bayes.grid import laplacian_eigenpairs, make_grid
from spde_bayes.reaction import BumpReaction, CallableReaction, ConstantReaction, ZeroReaction, allen_cahn_truncated
from spde_bayes.rng import BLOCK_STEPS, NoiseStream, block_generator
from spde_bayes.simulate import (
    PathReducer,
    SimConfig,
    SimulationError,
    interior,
    replicate,
    simulate,
    simulate_limit_proxy,
)


class Terminal(PathReducer):
    def start(self, cfg, X0):
        self.X = X0.copy()

    def update(self, m, X_prev, X_next, xi):
        self.X = X_next.copy()

    def result(self):
        return self.X


def lattice_variance(grid, dt, m):
    """Exact per-cell variance after m implicit steps of the noise-only scheme from 0."""
    th, V = laplacian_eigenpairs(grid)
    V = V / np.sqrt((V**2).sum(axis=0))
    a2 = (1.0 / (1.0 + dt * th)) ** 2
    geo = np.where(a2 == 1.0, m, a2 * (1 - a2**m) / np.where(a2 == 1.0, 0.5, 1 - a2))
    return dt / grid.dy * (V**2) @ geo


@given(st.integers(0, 2**64), st.integers(0, 1000), st.integers(0, 200), st.integers(1, 40))
@settings(max_examples=40, deadline=None)
def test_noise_is_keyed_by_step_not_access_order(seed, rep, m, n):
    s = NoiseStream(seed, rep, n)
    later = s.step(m + BLOCK_STEPS).copy()
    now = s.step(m)
    fresh = NoiseStream(seed, rep, n)
    assert np.array_equal(fresh.step(m), now)
    assert np.array_equal(fresh.step(m + BLOCK_STEPS), later)
    b = m // BLOCK_STEPS
    assert np.array_equal(block_generator(seed, rep, b).standard_normal((BLOCK_STEPS, n))[m % BLOCK_STEPS], now)


def test_noise_rejects_bad_seed():
    with pytest.raises(ValueError):
        NoiseStream(-1, 0, 4)
    with pytest.raises(ValueError):
        NoiseStream(2**128, 0, 4)


def test_determinism_across_threads_and_batches():
    cfg = SimConfig(grid=make_grid(8), T=0.05, model=allen_cahn_truncated(), seed=77)
    g = BumpReaction(0.0, 0.5, 1.0)
    fac = lambda: [Terminal(), SpatialAverageReducer(g)]
    ref = replicate(cfg, 9, fac, threads=1, batch_size=32)
    for threads, bs in ((4, 2), (8, 1), (2, 5)):
        out = replicate(cfg, 9, fac, threads=threads, batch_size=bs)
        assert out.tobytes() == ref.tobytes()
    # replicate ids, not positions, key the noise
    tail = replicate(cfg, 4, fac, threads=3, batch_size=3, first_replicate=5)
    assert tail.tobytes() == ref[5:].tobytes()
    assert np.array_equal(simulate(cfg, 6).frames[-1], ref[6, : cfg.grid.n])


def test_zero_noise_examples():
    g = make_grid(4)
    p = simulate(SimConfig(grid=g, T=0.02, dt=1e-3, noise=False))
    assert np.all(p.frames == 0)
    c = 1.75
    p = simulate(SimConfig(grid=g, T=0.02, dt=1e-3, model=ConstantReaction(c), noise=False))
    t = np.arange(p.n_steps + 1) * 1e-3
    np.testing.assert_allclose(p.frames, np.outer(c * t, np.ones(g.n)), rtol=1e-12, atol=1e-14)
    z = simulate_limit_proxy(ZeroReaction(), 0.6, 16.0, T=0.01, dt=1e-3, noise=False)
    assert np.allclose(z.frames, 0.6, rtol=0, atol=1e-14)
    rows = replicate(SimConfig(grid=g, T=0.01, dt=1e-3, noise=False), 3, Terminal)
    assert np.all(rows == 0)


def test_single_replicate_matches_direct_reduction():
    cfg = SimConfig(grid=make_grid(4), T=0.02, seed=3)
    row = replicate(cfg, 1, Terminal)
    assert np.array_equal(row[0], simulate(cfg, 0).frames[-1])


def test_noise_record_is_standard_normal():
    p = simulate(SimConfig(grid=make_grid(16), T=0.1, dt=1e-3, record_noise=True, seed=5))
    z = p.noise.ravel()
    n = z.size
    assert abs(z.mean()) < 3 / np.sqrt(n)
    assert abs(z.var() - 1) < 3 * np.sqrt(2 / n)


def test_noise_normalization_against_lattice_variance():
    """sqrt(dt/dy) scaling: per-cell variances match the exact lattice stochastic convolution."""
    g = make_grid(16, (-0.5, 0.5), 8)
    dt, T, R = 1e-3, 0.25, 200
    cfg = SimConfig(grid=g, T=T, dt=dt, seed=12)
    X = replicate(cfg, R, Terminal)
    v = lattice_variance(g, dt, cfg.n_steps)
    s = np.mean(X**2 / v, axis=1)  # E s = 1 per replicate
    se = s.std(ddof=1) / np.sqrt(R)
    assert abs(s.mean() - 1) < 3 * se


def test_lattice_variance_matches_whole_line_oracle():
    # interior variance of the discrete stochastic convolution vs sqrt(t / (2 pi))
    g = make_grid(64)
    for t in (0.25, 1.0):
        v = lattice_variance(g, 1e-4, int(round(t / 1e-4)))
        mid = v[interior(g)]
        np.testing.assert_allclose(mid, np.sqrt(t / (2 * np.pi)), rtol=0.05)


def test_allen_cahn_terminal_field_leaves_zero():
    p = simulate(SimConfig(grid=make_grid(50), model=allen_cahn_truncated(), seed=2024))
    X = p.frames[-1]
    wells = np.mean((np.abs(X) >= 2) & (np.abs(X) <= 3.5))
    near0 = np.mean(np.abs(X) < 1)
    assert wells > near0


def test_blow_up_raises_with_step():
    cfg = SimConfig(grid=make_grid(2), T=0.1, dt=1e-2, model=CallableReaction(lambda x: 1e200 * (1 + x * x)), seed=1)
    with pytest.raises(SimulationError) as e, np.errstate(over="ignore", invalid="ignore"):
        simulate(cfg, 4)
    assert e.value.step >= 1 and e.value.replicate == 4


def test_config_errors():
    with pytest.raises(ValueError):
        simulate(SimConfig(grid=make_grid(2), T=0.1, dt=0.03))
    with pytest.raises(ValueError):
        replicate(SimConfig(grid=make_grid(2), T=0.1, dt=0.05), 0, Terminal)
    with pytest.raises(ValueError):
        simulate_limit_proxy(ZeroReaction(), 0.0, 8.0)


def test_initial_condition_callable_uses_unit_coordinates():
    g = make_grid(10)
    cfg = SimConfig(grid=g, T=0.01, dt=1e-3, initial=lambda u: u, noise=False)
    np.testing.assert_allclose(cfg.initial_field(), g.nodes / 10)
