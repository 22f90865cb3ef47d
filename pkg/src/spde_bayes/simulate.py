"""Semi-implicit Euler-Maruyama for dX = Lap X dt + f(X) dt + dW with Neumann boundary.

One step reads

    X_{m+1} = (I - dt Lap_h)^{-1} (X_m + dt f(X_m) + sqrt(dt / dy) xi_m)

with xi_m i.i.d. standard normal per cell. Replicates are advanced together as rows of a
(batch, n) array; every operation acts row-wise so a replicate's path does not depend
on which other replicates share its batch.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import HeatSolver, SpaceTimePath, SpatialGrid, make_grid
from .reaction import ReactionModel, ZeroReaction
from .rng import NoiseStream


DEFAULT_DT = 2e-4
DEFAULT_SEED = 20240611


class SimulationError(RuntimeError):
    def __init__(self, message, step=None, replicate=None):
        super().__init__(message)
        self.step = step
        self.replicate = replicate


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to simulate one path; ``initial`` is None (X0 = 0), a constant,
    or a callable chi on the unit interval with X0(y) = chi(y / lam)."""

    grid: SpatialGrid
    T: float = 1.0
    dt: float = DEFAULT_DT
    model: ReactionModel = field(default_factory=ZeroReaction)
    initial: object = None
    seed: int = DEFAULT_SEED
    record_noise: bool = False
    noise: bool = True

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def initial_field(self) -> np.ndarray:
        g = self.grid
        if self.initial is None:
            return np.zeros(g.n)
        if callable(self.initial):
            x0 = np.asarray(self.initial(g.nodes / g.lam), dtype=float)
        else:
            x0 = np.broadcast_to(np.asarray(self.initial, dtype=float), (g.n,)).copy()
        if x0.shape != (g.n,) or not np.all(np.isfinite(x0)):
            raise ValueError("initial condition must give finite values on the grid")
        return x0


def check_config(cfg: SimConfig):
    if not cfg.T > 0 or not cfg.dt > 0:
        raise ValueError("T and dt must be positive")
    if abs(cfg.n_steps * cfg.dt - cfg.T) > 1e-9 * cfg.T:
        raise ValueError(f"dt={cfg.dt} does not divide T={cfg.T}")


class PathReducer:
    """Streaming consumer of a batch of paths.

    ``start`` is called once with the initial states, ``update`` once per step with the
    states before and after the step and the standard normal increments, ``result``
    returns one row per path.
    """

    def start(self, cfg: SimConfig, X0: np.ndarray):
        pass

    def update(self, m: int, X_prev: np.ndarray, X_next: np.ndarray, xi: np.ndarray):
        raise NotImplementedError

    def result(self) -> np.ndarray:
        raise NotImplementedError


class FrameRecorder(PathReducer):
    def __init__(self, record_noise=False):
        self.record_noise = record_noise

    def start(self, cfg, X0):
        self.frames = np.empty((cfg.n_steps + 1,) + X0.shape)
        self.frames[0] = X0
        self.noise = np.empty((cfg.n_steps,) + X0.shape) if self.record_noise else None

    def update(self, m, X_prev, X_next, xi):
        self.frames[m + 1] = X_next
        if self.noise is not None:
            self.noise[m] = xi

    def result(self):
        return self.frames


def run_batch(cfg: SimConfig, replicates: Sequence[int], reducers: Sequence[PathReducer]):
    """Advance all ``replicates`` from 0 to T, feeding every reducer; returns the final states."""
    check_config(cfg)
    g = cfg.grid
    batch = len(replicates)
    solver = HeatSolver(g, cfg.dt)
    scale = np.sqrt(cfg.dt / g.dy) if cfg.noise else 0.0
    streams = [NoiseStream(cfg.seed, r, g.n) for r in replicates]
    X = np.tile(cfg.initial_field(), (batch, 1))
    for red in reducers:
        red.start(cfg, X)
    xi = np.zeros((batch, g.n))
    f = cfg.model
    for m in range(cfg.n_steps):
        if cfg.noise:
            for b, s in enumerate(streams):
                xi[b] = s.step(m)
        rhs = X + cfg.dt * f(X)
        if cfg.noise:
            rhs += scale * xi
        X_next = solver.solve(rhs)
        if not np.all(np.isfinite(X_next)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(X_next), axis=1))[0])
            raise SimulationError(
                f"non-finite state at step {m + 1} (replicate {replicates[bad]})", step=m + 1, replicate=replicates[bad]
            )
        for red in reducers:
            red.update(m, X, X_next, xi)
        X = X_next
    return X


def simulate(cfg: SimConfig, replicate: int = 0) -> SpaceTimePath:
    rec = FrameRecorder(cfg.record_noise)
    run_batch(cfg, [replicate], [rec])
    noise = rec.noise[:, 0, :].copy() if cfg.record_noise else None
    meta = {"seed": cfg.seed, "replicate": replicate, "noise": cfg.noise}
    return SpaceTimePath(cfg.grid, cfg.T, cfg.dt, rec.frames[:, 0, :].copy(), noise, meta)


def simulate_limit_proxy(
    model: ReactionModel, chi_value: float, proxy_lambda: float = 64.0, replicate: int = 0, **overrides
) -> SpaceTimePath:
    """Large Neumann domain with constant initial value chi; use :func:`interior` cells as
    samples of the whole-line limit process at the origin."""
    if proxy_lambda < 16:
        raise ValueError("proxy_lambda must be >= 16")
    ppu = overrides.pop("points_per_unit", 16)
    grid = make_grid(proxy_lambda, (-0.5, 0.5), ppu)
    cfg = SimConfig(grid=grid, model=model, initial=float(chi_value), **overrides)
    path = simulate(cfg, replicate)
    return SpaceTimePath(path.grid, path.T, path.dt, path.frames, path.noise, {**path.meta, "proxy": True, "chi": chi_value})


def interior(grid: SpatialGrid) -> slice:
    """Central half of the cells."""
    q = grid.n // 4
    return slice(q, grid.n - q)


def default_threads() -> int:
    env = os.environ.get("SPDE_BAYES_THREADS")
    return max(1, int(env)) if env else 1


def replicate(
    cfg: SimConfig,
    n_reps: int,
    reducer_factory: Callable[[], PathReducer | Sequence[PathReducer]],
    threads: int | None = None,
    batch_size: int = 32,
    first_replicate: int = 0,
) -> np.ndarray:
    """Run ``n_reps`` replicates and stack reducer rows in replicate order.

    ``reducer_factory`` builds fresh reducers for one batch; if it returns several,
    their rows are concatenated column-wise.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    threads = threads or default_threads()
    ids = list(range(first_replicate, first_replicate + n_reps))
    batches = [ids[i : i + batch_size] for i in range(0, n_reps, batch_size)]

    def work(batch):
        reds = reducer_factory()
        reds = list(reds) if isinstance(reds, (list, tuple)) else [reds]
        run_batch(cfg, batch, reds)
        cols = [np.asarray(r.result(), dtype=float).reshape(len(batch), -1) for r in reds]
        return np.concatenate(cols, axis=1)

    if threads == 1:
        parts = [work(b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, batches))
    return np.concatenate(parts, axis=0)
