"""Likelihood sufficient statistics and the conjugate Gaussian posterior.

For f = coeffs^T Psi the discretised log-likelihood relative to f = 0 is
``a^T coeffs - coeffs^T G coeffs / 2`` with

    G = sum_{m,i} Psi(X_m,i) Psi(X_m,i)^T dy dt
    a = sum_{m,i} Psi(X_m,i) [X_{m+1,i} - X_{m,i} - dt (Lap_h X)_{.,i}] dy

(left-point evaluation of Psi). The Laplacian in the residual is taken at the new
time level by default, which reproduces the simulator's implicit step so that the
residual of a simulated path is exactly the injected noise plus ``dt f(X_m)``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .grid import SpaceTimePath, apply_laplacian
from .reaction import ReactionModel
from .rng import gaussian_draws
from .simulate import PathReducer
from .wavelets import PriorSpec, WaveletBasis, basis_from_descriptor

log = logging.getLogger(__name__)

LAPLACIAN_POINTS = ("implicit", "explicit")


def drift_residual(X_prev, X_next, dt, dy, laplacian="implicit"):
    """X_{m+1} - X_m - dt Lap_h X_{.}; the discrete analogue of dX - Lap X dt."""
    if laplacian == "implicit":
        lap = apply_laplacian(X_next, dy)
    elif laplacian == "explicit":
        lap = apply_laplacian(X_prev, dy)
    else:
        raise ValueError(f"laplacian must be one of {LAPLACIAN_POINTS}")
    return X_next - X_prev - dt * lap


@dataclass
class SufficientStats:
    G: np.ndarray
    a: np.ndarray
    lam: float
    T: float

    @property
    def dim(self) -> int:
        return self.a.size

    def check(self):
        if not (np.all(np.isfinite(self.G)) and np.all(np.isfinite(self.a))):
            raise FloatingPointError("non-finite sufficient statistics")
        if np.abs(self.G - self.G.T).max() > 1e-12 * max(1.0, np.abs(self.G).max()):
            raise ValueError("G is not symmetric")
        return self


class StatsReducer(PathReducer):
    """Streaming accumulation of (G, a) for each path of a batch.

    Haar bases use the piecewise-constant structure: only per-cell occupation counts and
    residual sums are accumulated, and G, a follow exactly as B^T diag(.) B, B^T s.
    """

    def __init__(self, basis: WaveletBasis, laplacian: str = "implicit"):
        self.basis = basis
        self.laplacian = laplacian

    def start(self, cfg, X0):
        self.batch = X0.shape[0]
        self.dt = cfg.dt
        self.dy = cfg.grid.dy
        self.lam = cfg.grid.lam
        self.T = cfg.T
        b = self.basis
        if b.family == "haar":
            nc = b.n_cells
            self._offsets = (np.arange(self.batch) * nc)[:, None]
            self.counts = np.zeros(self.batch * nc)
            self.sums = np.zeros(self.batch * nc)
        else:
            self.G = np.zeros((self.batch, b.dim, b.dim))
            self.a = np.zeros((self.batch, b.dim))

    def update(self, m, X_prev, X_next, xi):
        r = drift_residual(X_prev, X_next, self.dt, self.dy, self.laplacian)
        b = self.basis
        if b.family == "haar":
            cells = b.haar_cells(X_prev)
            ok = cells >= 0
            idx = (cells + self._offsets)[ok]
            size = self.counts.size
            self.counts += np.bincount(idx, minlength=size)
            self.sums += np.bincount(idx, weights=r[ok], minlength=size)
        else:
            for k in range(self.batch):
                P = b.design(X_prev[k])
                self.G[k] += P.T @ P
                self.a[k] += P.T @ r[k]

    def stats(self, k: int = 0) -> SufficientStats:
        b = self.basis
        if b.family == "haar":
            nc = b.n_cells
            c = self.counts[k * nc : (k + 1) * nc]
            s = self.sums[k * nc : (k + 1) * nc]
            B = b.cell_matrix
            G = (B.T * (c * self.dy * self.dt)) @ B
            a = B.T @ (s * self.dy)
        else:
            G = self.G[k] * (self.dy * self.dt)
            a = self.a[k] * self.dy
        G = 0.5 * (G + G.T)
        return SufficientStats(G, a, self.lam, self.T).check()

    def result(self):
        return np.array([np.concatenate([s.G.ravel(), s.a]) for s in map(self.stats, range(self.batch))])


def iter_steps(path: SpaceTimePath):
    """(m, X_m, X_{m+1}) as (1, n) batches, for running reducers over a stored path."""
    F = path.frames
    for m in range(path.n_steps):
        yield m, F[m][None, :], F[m + 1][None, :]


def reduce_path(path: SpaceTimePath, reducer: PathReducer):
    from .simulate import SimConfig

    cfg = SimConfig(grid=path.grid, T=path.T, dt=path.dt)
    reducer.start(cfg, path.frames[0][None, :])
    noise = path.noise
    for m, a, b in iter_steps(path):
        reducer.update(m, a, b, None if noise is None else noise[m][None, :])
    return reducer


def accumulate_stats(path: SpaceTimePath, basis: WaveletBasis, laplacian: str = "implicit") -> SufficientStats:
    red = reduce_path(path, StatsReducer(basis, laplacian))
    return red.stats(0)


def log_likelihood(stats: SufficientStats, coeffs) -> float:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (stats.dim,):
        raise ValueError(f"expected {stats.dim} coefficients, got shape {coeffs.shape}")
    return float(stats.a @ coeffs - 0.5 * coeffs @ stats.G @ coeffs)


def path_log_likelihood(path: SpaceTimePath, f: ReactionModel, laplacian: str = "implicit") -> float:
    """Log-likelihood of a general reaction model relative to f = 0, by direct Riemann sums."""
    F = path.frames
    fv = f(F[:-1])
    r = drift_residual(F[:-1], F[1:], path.dt, path.grid.dy, laplacian)
    dy = path.grid.dy
    return float(np.sum(fv * r) * dy - 0.5 * np.sum(fv * fv) * dy * path.dt)


@dataclass
class PosteriorGaussian:
    mean: np.ndarray
    cov_factor: np.ndarray
    basis: WaveletBasis | None
    prior: PriorSpec
    precision_chol: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def cov(self) -> np.ndarray:
        return self.cov_factor @ self.cov_factor.T

    def mean_function(self) -> ReactionModel:
        from .reaction import CoefficientReaction

        return CoefficientReaction(self.basis, self.mean)


def _factor_with_jitter(P: np.ndarray):
    scale = np.trace(P) / P.shape[0]
    for eps in (0.0, 1e-12, 1e-10):
        try:
            R = linalg.cholesky(P + eps * scale * np.eye(P.shape[0]), lower=True)
            if eps:
                log.warning("posterior precision needed jitter %.1e * trace/dim", eps)
            return R, eps
        except linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("posterior precision is not positive definite")


def posterior(stats: SufficientStats, prior: PriorSpec, basis: WaveletBasis | None = None) -> PosteriorGaussian:
    """N(mu, Q) with Q = (G + Sigma^-1)^-1 and mu = Q a."""
    var = np.asarray(prior.diagonal_variances, dtype=float)
    if var.shape != (stats.dim,):
        raise ValueError(f"prior has {var.size} variances, statistics have dimension {stats.dim}")
    if np.any(var <= 0):
        raise ValueError("prior variances must be positive")
    if not (np.all(np.isfinite(stats.G)) and np.all(np.isfinite(stats.a))):
        raise np.linalg.LinAlgError("sufficient statistics contain NaN or Inf")
    P = stats.G + np.diag(1.0 / var)
    R, eps = _factor_with_jitter(P)
    mean = linalg.cho_solve((R, True), stats.a)
    Rinv = linalg.solve_triangular(R, np.eye(stats.dim), lower=True)
    Q = Rinv.T @ Rinv
    Q = 0.5 * (Q + Q.T)
    L = linalg.cholesky(Q, lower=True)
    resid = np.abs(stats.a - P @ mean).max()
    diag = {"jitter": eps, "cond": float(np.linalg.cond(P)), "gradient_residual": float(resid)}
    return PosteriorGaussian(mean, L, basis, prior, R, diag)


def sample_posterior(post: PosteriorGaussian, n: int, seed: int, stream: int = 0) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    z = gaussian_draws(seed, n, post.dim, stream)
    return post.mean + z @ post.cov_factor.T


@dataclass
class CredibleBand:
    x: np.ndarray
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    sd_analytic: np.ndarray
    sd_empirical: np.ndarray
    level: float

    def to_csv(self, dest):
        import csv

        with open(dest, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "lower", "median", "upper", "sd_analytic"])
            for row in zip(self.x, self.lower, self.median, self.upper, self.sd_analytic):
                w.writerow([repr(float(v)) for v in row])


def credible_band(post: PosteriorGaussian, basis: WaveletBasis, x_grid, level: float = 0.9, n_draws: int = 10_000, seed: int = 0):
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    x = np.asarray(x_grid, dtype=float)
    Psi = basis.design(x)
    draws = sample_posterior(post, n_draws, seed, stream=1)
    vals = draws @ Psi.T
    lo, med, hi = np.quantile(vals, [(1 - level) / 2, 0.5, (1 + level) / 2], axis=0)
    sd = np.sqrt(np.sum((Psi @ post.cov_factor) ** 2, axis=1))
    return CredibleBand(x, lo, med, hi, sd, vals.std(axis=0, ddof=1), level)


def girsanov_decomposition(path: SpaceTimePath, basis: WaveletBasis, stats: SufficientStats, f_coeffs, f0: ReactionModel, laplacian: str = "implicit") -> dict:
    """Both sides of  l(f) - l(f0) = sqrt(lam) M - (lam / 2) h^2  on one path.

    ``loglik_diff`` comes from the sufficient statistics and a direct sum for f0, while
    ``martingale_term`` and ``hellinger_sq`` use the residuals under f0.
    """
    f_coeffs = np.asarray(f_coeffs, dtype=float)
    if f_coeffs.shape != (basis.dim,) or stats.dim != basis.dim:
        raise ValueError("coefficient, basis and statistics dimensions differ")
    F = path.frames
    dt, dy, lam = path.dt, path.grid.dy, path.grid.lam
    Xm = F[:-1]
    f0v = f0(Xm)
    fv = basis.synthesize(f_coeffs, Xm)
    resid = drift_residual(Xm, F[1:], dt, dy, laplacian) - dt * f0v
    diff = fv - f0v
    M = float(np.sum(diff * resid) * dy / np.sqrt(lam))
    h2 = float(np.sum(diff * diff) * dy * dt / lam)
    ll = log_likelihood(stats, f_coeffs) - path_log_likelihood(path, f0, laplacian)
    return {"martingale_term": M, "hellinger_sq": h2, "loglik_diff": ll}


def lan_statistics(path: SpaceTimePath, h: ReactionModel, f0: ReactionModel | None = None, laplacian: str = "implicit") -> dict:
    """W = lam^-1/2 sum h(X) dW dy and I = lam^-1 sum h(X)^2 dy dt.

    dW comes from the recorded noise when present, otherwise from residuals under f0.
    """
    F = path.frames
    dt, dy, lam = path.dt, path.grid.dy, path.grid.lam
    Xm = F[:-1]
    if path.noise is not None:
        dW = np.sqrt(dt / dy) * path.noise
    elif f0 is not None:
        dW = drift_residual(Xm, F[1:], dt, dy, laplacian) - dt * f0(Xm)
    else:
        raise ValueError("need a noise record or the data-generating reaction to reconstruct dW")
    hv = h(Xm)
    return {"W_lambda": float(np.sum(hv * dW) * dy / np.sqrt(lam)), "I_lambda": float(np.sum(hv * hv) * dy * dt / lam)}


_POST_MAGIC = b"SPDEPOST1\n"


def write_posterior(post: PosteriorGaussian, dest):
    """Header line (JSON: dim, basis, beta0) then little-endian f64 mean and packed lower factor."""
    header = {"dim": post.dim, "basis": post.basis.descriptor() if post.basis else None, "beta0": post.prior.beta0}
    rows, cols = np.tril_indices(post.dim)
    dest = Path(dest)
    tmp = dest.with_name(dest.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_POST_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.asarray(post.mean, dtype="<f8").tobytes())
        fh.write(np.asarray(post.cov_factor[rows, cols], dtype="<f8").tobytes())
    tmp.replace(dest)


def read_posterior(src) -> PosteriorGaussian:
    from .wavelets import prior_covariance

    raw = Path(src).read_bytes()
    if not raw.startswith(_POST_MAGIC):
        raise ValueError("not a posterior file")
    nl = raw.index(b"\n", len(_POST_MAGIC))
    header = json.loads(raw[len(_POST_MAGIC) : nl])
    dim = header["dim"]
    body = np.frombuffer(raw[nl + 1 :], dtype="<f8")
    if body.size != dim + dim * (dim + 1) // 2:
        raise ValueError("posterior file has the wrong length")
    L = np.zeros((dim, dim))
    L[np.tril_indices(dim)] = body[dim:]
    basis = basis_from_descriptor(header["basis"]) if header["basis"] else None
    prior = prior_covariance(basis, header["beta0"]) if basis else PriorSpec(header["beta0"], -1, np.ones(dim))
    return PosteriorGaussian(body[:dim].copy(), L, basis, prior)

