"""Path functionals: Hellinger semi-metric, spatial averages, occupation times, the
LAN norm and tail summaries.

All time integrals are left-point Riemann sums over m = 0, ..., n_steps - 1, matching
the convention of the sufficient statistics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .grid import SpaceTimePath
from .reaction import ReactionModel
from .simulate import PathReducer, SimConfig, interior, make_grid, replicate

OCC_SCALE = 2.0**7
OCC_HALF_WIDTH = 2.0**-8
TAIL_LEVELS = (0.9, 0.95, 0.99, 0.995)


def _left_frames(path: SpaceTimePath) -> np.ndarray:
    return path.frames[:-1]


def hellinger_sq(path: SpaceTimePath, f: ReactionModel, g: ReactionModel) -> float:
    X = _left_frames(path)
    d = f(X) - g(X)
    return float(np.sum(d * d) * path.grid.dy * path.dt / path.grid.lam)


def spatial_average(path: SpaceTimePath, g) -> float:
    """int_0^T lam^-1 int g(X_t(y)) dy dt (the uncentred part of the ergodic average)."""
    X = _left_frames(path)
    return float(np.sum(g(X)) * path.grid.dy * path.dt / path.grid.lam)


def occupation_time(path: SpaceTimePath, x_grid, half_width: float = OCC_HALF_WIDTH, scale: float = OCC_SCALE) -> np.ndarray:
    """scale * sum 1(|X - x| <= half_width) dy dt for every x in ``x_grid``."""
    if not half_width > 0:
        raise ValueError("half_width must be positive")
    x_grid = np.asarray(x_grid, dtype=float)
    v = np.sort(_left_frames(path).ravel())
    lo = np.searchsorted(v, x_grid - half_width, side="left")
    hi = np.searchsorted(v, x_grid + half_width, side="right")
    return scale * (hi - lo) * path.grid.dy * path.dt


@dataclass
class DensityEstimate:
    bin_centers: np.ndarray
    bin_halfwidth: float
    values: np.ndarray
    total_mass: float
    outside_mass: float = 0.0

    @property
    def bin_width(self) -> float:
        return 2.0 * self.bin_halfwidth

    def at(self, z) -> np.ndarray:
        """Piecewise-constant evaluation; zero outside the bins."""
        z = np.asarray(z, dtype=float)
        left = self.bin_centers[0] - self.bin_halfwidth
        idx = np.floor((z - left) / self.bin_width).astype(np.int64)
        ok = (idx >= 0) & (idx < self.values.size)
        return np.where(ok, self.values[np.clip(idx, 0, self.values.size - 1)], 0.0)

    def to_csv(self, dest):
        import csv

        with open(dest, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "p_hat"])
            for z, p in zip(self.bin_centers, self.values):
                w.writerow([repr(float(z)), repr(float(p))])


def default_bin_edges(xi=(-3.5, 3.5), margin: float = 0.5, width: float = 2.0**-7) -> np.ndarray:
    n = int(round((xi[1] - xi[0] + 2 * margin) / width))
    return xi[0] - margin + width * np.arange(n + 1)


class OccupationReducer(PathReducer):
    """Per-path histogram of sum 1(X in bin) dy dt over uniform bins."""

    def __init__(self, edges=None):
        self.edges = default_bin_edges() if edges is None else np.asarray(edges, dtype=float)
        self.width = self.edges[1] - self.edges[0]
        self.nb = self.edges.size - 1

    def start(self, cfg, X0):
        self.n_steps = cfg.n_steps
        self.batch = X0.shape[0]
        self.w = cfg.grid.dy * cfg.dt
        self.counts = np.zeros(self.batch * (self.nb + 2))
        self._off = (np.arange(self.batch) * (self.nb + 2))[:, None]
        self._step(X0)

    def _step(self, X):
        idx = np.floor((X - self.edges[0]) / self.width).astype(np.int64)
        idx = np.clip(idx + 1, 0, self.nb + 1)  # 0 and nb+1 collect the overflow
        self.counts += np.bincount((idx + self._off).ravel(), minlength=self.counts.size)

    def update(self, m, X_prev, X_next, xi):
        # left-point sums: the final state is never counted
        if m + 1 < self.n_steps:
            self._step(X_next)

    def result(self):
        return self.counts.reshape(self.batch, self.nb + 2) * self.w


def density_from_occupation(occ_rows: np.ndarray, edges: np.ndarray, lam: float) -> DensityEstimate:
    """Pool per-path occupation rows (with two overflow columns) into a density estimate."""
    occ_rows = np.atleast_2d(occ_rows)
    n_reps = occ_rows.shape[0]
    width = edges[1] - edges[0]
    pooled = occ_rows.sum(axis=0) / (lam * n_reps)
    inner = pooled[1:-1]
    values = inner / width
    centers = 0.5 * (edges[:-1] + edges[1:])
    return DensityEstimate(centers, width / 2, values, float(inner.sum()), float(pooled[0] + pooled[-1]))


def density_estimate(paths, edges=None) -> DensityEstimate:
    paths = list(paths)
    if not paths:
        raise ValueError("need at least one path")
    edges = default_bin_edges() if edges is None else np.asarray(edges, dtype=float)
    lam = paths[0].grid.lam
    rows = []
    from .inference import reduce_path

    for p in paths:
        if p.grid.lam != lam:
            raise ValueError("paths must share the domain size")
        red = reduce_path(p, OccupationReducer(edges))
        rows.append(red.result()[0])
    return density_from_occupation(np.array(rows), edges, lam)


def zero_norm_sq(f, p_hat: DensityEstimate) -> float:
    """||f||_0^2 = int f^2 p dz with the estimated density."""
    fv = np.asarray(f(p_hat.bin_centers), dtype=float)
    return float(np.sum(fv * fv * p_hat.values) * p_hat.bin_width)


def inverse_density_norm_sq(gamma, p_hat: DensityEstimate) -> float:
    """||gamma / p||_0^2 = int gamma^2 / p dz (infinite if p vanishes where gamma does not)."""
    gv = np.asarray(gamma(p_hat.bin_centers), dtype=float)
    m = gv != 0
    if np.any(p_hat.values[m] <= 0):
        return float("inf")
    return float(np.sum(gv[m] ** 2 / p_hat.values[m]) * p_hat.bin_width)


@dataclass
class TailSummary:
    sample_count: int
    levels: tuple
    quantiles: np.ndarray
    reference_quantiles: np.ndarray
    fitted_C: float
    scaled: np.ndarray

    def envelope(self, level: float, C: float | None = None) -> float:
        """x with 2 exp(-x^2 / (2C)) = 1 - level: the sub-Gaussian bound's quantile."""
        C = self.fitted_C if C is None else C
        return float(np.sqrt(2.0 * C * np.log(2.0 / (1.0 - level))))

    def quantile(self, level: float) -> float:
        return float(np.quantile(np.abs(self.scaled), level))


def concentration_summary(samples, l1_norm_g: float, lam: float, levels=TAIL_LEVELS) -> TailSummary:
    """Centre, scale by sqrt(lam) / ||g||_1 and compare |.|-quantiles with N(0, C).

    ``fitted_C`` is the smallest C for which every reported quantile lies within the
    matching quantile of |N(0, C)|; a variable with these quantiles respects the
    sub-Gaussian bound 2 exp(-x^2 / (2C)) at the reported levels.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 100:
        raise ValueError(f"need at least 100 samples, got {x.size}")
    center = x[0] if np.all(x == x[0]) else x.mean()
    scaled = (x - center) * np.sqrt(lam) / l1_norm_g
    q = np.quantile(np.abs(scaled), levels)
    ref = sps.norm.ppf((1.0 + np.asarray(levels)) / 2.0)
    C = float(np.max((q / ref) ** 2))
    return TailSummary(x.size, tuple(levels), q, ref, C, scaled)


class SpatialAverageReducer(PathReducer):
    """int_0^T lam^-1 int g(X) dy dt per path (optionally restricted to a cell slice)."""

    def __init__(self, *gs, cells: slice | None = None):
        self.gs = gs
        self.cells = cells

    def start(self, cfg, X0):
        self.n_steps = cfg.n_steps
        self.batch = X0.shape[0]
        if self.cells is None:
            self.w = cfg.grid.dy * cfg.dt / cfg.grid.lam
        else:
            n = len(range(*self.cells.indices(cfg.grid.n)))
            self.w = cfg.dt / n
        self.acc = np.zeros((self.batch, len(self.gs)))
        self._add(X0)

    def _add(self, X):
        if self.cells is not None:
            X = X[:, self.cells]
        for k, g in enumerate(self.gs):
            self.acc[:, k] += g(X).sum(axis=1)

    def update(self, m, X_prev, X_next, xi):
        if m + 1 < self.n_steps:
            self._add(X_next)

    def result(self):
        return self.acc * self.w


def ergodic_centering(
    model_f0: ReactionModel,
    g,
    chi=0.0,
    proxy_lambda: float = 64.0,
    n_reps: int = 50,
    T: float = 1.0,
    dt: float = 2e-4,
    points_per_unit: int = 16,
    seed: int = 1,
    ybar_grid=None,
    threads=None,
) -> tuple[float, float]:
    """Monte Carlo estimate (and standard error) of int_0^T int E g(Z_t^ybar(0)) dybar dt.

    Interior cells of a large Neumann domain with constant initial value stand in for the
    whole-line process. A callable ``chi`` is averaged over ``ybar_grid`` (default 9 midpoints).
    """
    if callable(chi):
        ybar = np.asarray(ybar_grid if ybar_grid is not None else -0.5 + (np.arange(9) + 0.5) / 9)
        parts = [
            ergodic_centering(model_f0, g, float(chi(y)), proxy_lambda, n_reps, T, dt, points_per_unit, seed + i, None, threads)
            for i, y in enumerate(ybar)
        ]
        est = np.array(parts)
        return float(est[:, 0].mean()), float(np.sqrt(np.sum(est[:, 1] ** 2)) / len(parts))
    grid = make_grid(proxy_lambda, (-0.5, 0.5), points_per_unit)
    cfg = SimConfig(grid=grid, T=T, dt=dt, model=model_f0, initial=float(chi), seed=seed)
    rows = replicate(cfg, n_reps, lambda: SpatialAverageReducer(g, cells=interior(grid)), threads=threads)[:, 0]
    return float(rows.mean()), float(rows.std(ddof=1) / np.sqrt(rows.size)) if rows.size > 1 else float("nan")


def loglog_slope(x, y) -> tuple[float, float]:
    """Least-squares slope of log y on log x and its standard error."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    n = lx.size
    if n > 2:
        resid = ly - A @ coef
        s2 = resid @ resid / (n - 2)
        se = float(np.sqrt(s2 / np.sum((lx - lx.mean()) ** 2)))
    else:
        se = float("nan")
    return float(coef[0]), se
