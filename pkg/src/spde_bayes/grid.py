"""Cell-centred grids on growing intervals, the Neumann Laplacian and implicit heat steps."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import lapack

DEFAULT_POINTS_PER_UNIT = 16
UNIT_INTERVAL = (-0.5, 0.5)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform cell-centred grid on ``lam * unit_interval``.

    ``n = round(lam * points_per_unit)`` and ``dy = lam / n``; when the product is
    fractional the effective points-per-unit differs from the requested one and
    is kept in ``effective_points_per_unit``.
    """

    lam: float
    unit_interval: tuple[float, float]
    points_per_unit: int
    n: int
    dy: float

    @property
    def effective_points_per_unit(self) -> float:
        return self.n / self.lam

    @cached_property
    def nodes(self) -> np.ndarray:
        left = self.lam * self.unit_interval[0]
        return left + (np.arange(self.n) + 0.5) * self.dy

    @property
    def interval(self) -> tuple[float, float]:
        return (self.lam * self.unit_interval[0], self.lam * self.unit_interval[1])


def make_grid(lam: float, unit_interval=UNIT_INTERVAL, points_per_unit: int = DEFAULT_POINTS_PER_UNIT) -> SpatialGrid:
    lam = float(lam)
    a, b = (float(unit_interval[0]), float(unit_interval[1]))
    if not np.isfinite(lam) or lam < 1.0:
        raise ValueError(f"domain size must be >= 1, got {lam}")
    if abs((b - a) - 1.0) > 1e-12 or not (a <= 0.0 <= b):
        raise ValueError(f"unit interval must have length 1 and contain 0, got {(a, b)}")
    if int(points_per_unit) != points_per_unit or points_per_unit < 2:
        raise ValueError(f"points_per_unit must be an integer >= 2, got {points_per_unit}")
    n = int(round(lam * points_per_unit))
    if n < 2:
        raise ValueError("grid needs at least two cells")
    return SpatialGrid(lam, (a, b), int(points_per_unit), n, lam / n)


@dataclass(frozen=True)
class Field:
    values: np.ndarray
    grid: SpatialGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"field has shape {v.shape}, grid has {self.grid.n} cells")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)


def laplacian_matrix(grid: SpatialGrid) -> np.ndarray:
    """Dense mirror-stencil Neumann Laplacian (for tests and small grids)."""
    n = grid.n
    A = np.zeros((n, n))
    idx = np.arange(n)
    A[idx, idx] = -2.0
    A[idx[:-1], idx[:-1] + 1] = 1.0
    A[idx[1:], idx[1:] - 1] = 1.0
    A[0, 0] = A[-1, -1] = -1.0
    return A / grid.dy**2


def apply_laplacian(u: np.ndarray, dy: float) -> np.ndarray:
    """Mirror-ghost second difference along the last axis."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    out[..., 1:-1] = u[..., :-2] - 2.0 * u[..., 1:-1] + u[..., 2:]
    out[..., 0] = u[..., 1] - u[..., 0]
    out[..., -1] = u[..., -2] - u[..., -1]
    out /= dy * dy
    return out


def neumann_laplacian_apply(u: Field) -> Field:
    return Field(apply_laplacian(u.values, u.grid.dy), u.grid)


def laplacian_eigenpairs(grid: SpatialGrid) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form eigenpairs of the mirror stencil: cosine modes, theta_k >= 0.

    Column k of the returned matrix satisfies ``Lap v_k = -theta_k v_k``.
    """
    n = grid.n
    k = np.arange(n)
    theta = 4.0 / grid.dy**2 * np.sin(np.pi * k / (2 * n)) ** 2
    V = np.cos(np.pi * np.outer(np.arange(n) + 0.5, k) / n)
    return theta, V


class HeatSolver:
    """Factorised ``I - dt * Lap`` for repeated solves (LDL^T, SPD tridiagonal)."""

    def __init__(self, grid: SpatialGrid, dt: float):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.grid = grid
        self.dt = float(dt)
        r = self.dt / grid.dy**2
        d = np.full(grid.n, 1.0 + 2.0 * r)
        d[0] = d[-1] = 1.0 + r
        e = np.full(grid.n - 1, -r)
        self._d, self._e, info = lapack.dpttrf(d, e)
        if info != 0:
            raise np.linalg.LinAlgError(f"tridiagonal factorisation failed (info={info})")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve along the last axis; leading axes are independent right-hand sides."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.ndim == 1:
            x, info = lapack.dpttrs(self._d, self._e, rhs)
        else:
            flat = rhs.reshape(-1, rhs.shape[-1])
            x, info = lapack.dpttrs(self._d, self._e, flat.T)
            x = x.T.reshape(rhs.shape)
        if info != 0:
            raise np.linalg.LinAlgError(f"tridiagonal solve failed (info={info})")
        return x


def implicit_heat_solve(rhs: Field, dt: float) -> Field:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return rhs
    return Field(HeatSolver(rhs.grid, dt).solve(rhs.values), rhs.grid)


def heat_flow(u0: Field, t: float, n_steps: int) -> Field:
    """Deterministic implicit-Euler heat evolution to time ``t`` in ``n_steps`` steps."""
    solver = HeatSolver(u0.grid, t / n_steps)
    u = u0.values
    for _ in range(n_steps):
        u = solver.solve(u)
    return Field(u, u0.grid)


@dataclass(frozen=True)
class SpaceTimePath:
    """Field values on a (time x space) lattice; ``frames[m]`` is the state at ``m * dt``."""

    grid: SpatialGrid
    T: float
    dt: float
    frames: np.ndarray
    noise: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        if frames.ndim != 2 or frames.shape[1] != self.grid.n:
            raise ValueError(f"frames shape {frames.shape} does not match grid with {self.grid.n} cells")
        n_steps = frames.shape[0] - 1
        if n_steps < 1 or abs(n_steps * self.dt - self.T) > 1e-10 * self.T:
            raise ValueError(f"{n_steps} steps of size {self.dt} do not cover T={self.T}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("path contains non-finite values")
        if self.noise is not None and np.shape(self.noise) != (n_steps, self.grid.n):
            raise ValueError("noise record has the wrong shape")
        object.__setattr__(self, "frames", frames)

    @property
    def n_steps(self) -> int:
        return self.frames.shape[0] - 1

    @property
    def lam(self) -> float:
        return self.grid.lam


def rescale_to_unit_domain(path: SpaceTimePath) -> SpaceTimePath:
    """Y_t(y) = X_t(lam * y) on the unit interval; the diffusivity becomes lam**-2.

    Values are unchanged: cell i of the unit grid sits at node_i / lam.
    """
    g = path.grid
    unit = SpatialGrid(1.0, g.unit_interval, g.n, g.n, 1.0 / g.n)
    meta = dict(path.meta)
    meta.update(nu=g.lam**-2, sigma=g.lam**-0.5, source_lambda=g.lam)
    return SpaceTimePath(unit, path.T, path.dt, path.frames, path.noise, meta)


_MAGIC = b"SPDE1"
_HEADER = struct.Struct("<IdddQQB")
FORMAT_VERSION = 1


def write_path(path: SpaceTimePath, dest) -> None:
    """Binary layout: magic, header (version, lambda, T, dt, n, n_steps, has_noise), frames, noise."""
    has_noise = path.noise is not None
    header = _HEADER.pack(FORMAT_VERSION, path.grid.lam, path.T, path.dt, path.grid.n, path.n_steps, int(has_noise))
    dest = Path(dest)
    tmp = dest.with_name(dest.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(header)
        fh.write(np.ascontiguousarray(path.frames, dtype="<f8").tobytes())
        if has_noise:
            fh.write(np.ascontiguousarray(path.noise, dtype="<f8").tobytes())
    tmp.replace(dest)


def read_path(src, unit_interval=UNIT_INTERVAL) -> SpaceTimePath:
    raw = Path(src).read_bytes()
    if raw[:5] != _MAGIC:
        raise ValueError("not an SPDE1 path file")
    version, lam, T, dt, n, n_steps, has_noise = _HEADER.unpack_from(raw, 5)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported path format version {version}")
    off = 5 + _HEADER.size
    size = (n_steps + 1) * n
    frames = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(n_steps + 1, n)
    off += 8 * size
    noise = None
    if has_noise:
        noise = np.frombuffer(raw, dtype="<f8", count=n_steps * n, offset=off).reshape(n_steps, n).copy()
        off += 8 * n_steps * n
    if off != len(raw):
        raise ValueError("trailing or missing bytes in path file")
    ppu = int(round(n / lam))
    grid = SpatialGrid(lam, tuple(unit_interval), max(ppu, 2), int(n), lam / n)
    return SpaceTimePath(grid, T, dt, frames.copy(), noise)
