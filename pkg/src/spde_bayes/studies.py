"""Monte Carlo studies: posterior contraction, spatial ergodicity, sub-Gaussian tails,
Bernstein-von Mises, and the single-path illustration at lambda = 50.

Every study is a pure function of its :class:`StudyConfig` (plus a thread count that
never changes the output).
"""
from __future__ import annotations

import logging

import numpy as np
from scipy import stats as sps

from .config import StudyConfig
from .diagnostics import (
    OccupationReducer,
    SpatialAverageReducer,
    TAIL_LEVELS,
    concentration_summary,
    default_bin_edges,
    density_from_occupation,
    ergodic_centering,
    inverse_density_norm_sq,
    loglog_slope,
    occupation_time,
)
from .grid import make_grid
from .inference import StatsReducer, SufficientStats, credible_band, posterior, sample_posterior
from .reaction import BumpReaction, reaction_from_config
from .report import StudyReport, aggregate_rows, provenance
from .simulate import SimConfig, replicate, simulate
from .wavelets import prior_covariance

log = logging.getLogger(__name__)

ZERO_TOL = 1e-12


def derived_seed(seed: int, *keys: int) -> int:
    """Independent 128-bit seed for a sub-experiment (ladder rung, proxy run, ...)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(2**30 + int(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint64)
    return int(lo) | (int(hi) << 64)


def sim_config(cfg: StudyConfig, lam: float, seed: int, model=None) -> SimConfig:
    grid = make_grid(lam, (-0.5, 0.5), cfg.points_per_unit)
    model = reaction_from_config(cfg.model) if model is None else model
    return SimConfig(grid=grid, T=cfg.T, dt=cfg.dt, model=model, initial=cfg.initial, seed=seed)


def _unpack_stats(row, dim, lam, T) -> SufficientStats:
    G = row[: dim * dim].reshape(dim, dim)
    return SufficientStats(G, row[dim * dim : dim * dim + dim].copy(), lam, T)


def l2_error(basis, coeffs, f0) -> float:
    """||coeffs^T Psi - f0||_{L2(xi)} by the basis quadrature rule."""
    return basis.l2_norm(lambda x: basis.synthesize(coeffs, x) - f0(x))


def _finish(cfg, kind, columns, rows, stat_columns, **kw) -> StudyReport:
    rep = StudyReport(kind, columns, rows, aggregate_rows(columns, rows, stat_columns), provenance=provenance(cfg))
    for k, v in kw.items():
        setattr(rep, k, v)
    return rep


# -- contraction -----------------------------------------------------------------------


def run_contraction_study(cfg: StudyConfig, threads: int | None = None) -> StudyReport:
    """L2(xi) error of the posterior mean across the lambda ladder and its log-log slope."""
    f0 = reaction_from_config(cfg.model)
    rows = []
    for i, lam in enumerate(cfg.lambdas):
        basis = cfg.basis.build(lam)
        prior = prior_covariance(basis, cfg.basis.beta0)
        sim = sim_config(cfg, lam, derived_seed(cfg.seed, i), f0)
        out = replicate(sim, cfg.replicates, lambda: StatsReducer(basis), threads=threads)
        for r, row in enumerate(out):
            post = posterior(_unpack_stats(row, basis.dim, lam, cfg.T), prior, basis)
            err = l2_error(basis, post.mean, f0)
            # E_post ||f - f0||^2 = ||mean - f0||^2 + tr(Q) for an orthonormal family
            rms = float(np.sqrt(err**2 + np.sum(post.cov_factor**2)))
            rows.append((float(lam), r, basis.M, basis.dim, err, rms))
        log.info("contraction lambda=%g M=%d done", lam, basis.M)
    columns = ["lambda", "replicate", "M", "dim", "l2_error", "posterior_rms"]
    lams = np.array(cfg.lambdas, dtype=float)
    med = np.array([np.median([r[4] for r in rows if r[0] == lam]) for lam in lams])
    fits, stats = {}, {"median_error": med.tolist()}
    if lams.size >= 2:
        s, se = loglog_slope(lams, med)
        fits["median_error_slope"] = {"slope": s, "se": se, "target": -1.0 / 3.0}
        stats["strictly_decreasing"] = bool(np.all(np.diff(med) < 0))
    return _finish(cfg, "contraction", columns, rows, ["l2_error", "posterior_rms"], fits=fits, statistics=stats)


# -- ergodicity and concentration ---------------------------------------------------------


def _l1_norm(g, support_hint=(-10.0, 10.0)) -> float:
    if isinstance(g, BumpReaction):
        return g.l1_norm()
    a, b = g.support if getattr(g, "support", None) is not None else support_hint
    x = np.linspace(a, b, 200001)
    return float(np.trapezoid(np.abs(g(x)), x))


def fit_variance_proxy(scaled, levels=TAIL_LEVELS) -> float:
    """Smallest C with every |.|-quantile of ``scaled`` inside the |N(0, C)| quantile."""
    q = np.quantile(np.abs(np.asarray(scaled, dtype=float)), levels)
    ref = sps.norm.ppf((1.0 + np.asarray(levels)) / 2.0)
    return float(np.max((q / ref) ** 2))


def _envelope(level, C) -> float:
    return float(np.sqrt(2.0 * C * np.log(2.0 / (1.0 - level))))


def _spatial_average_samples(cfg, g, f0, threads):
    out = {}
    for i, lam in enumerate(cfg.lambdas):
        sim = sim_config(cfg, lam, derived_seed(cfg.seed, i), f0)
        out[lam] = replicate(sim, cfg.replicates, lambda: SpatialAverageReducer(g), threads=threads)[:, 0]
        log.info("spatial averages lambda=%g done", lam)
    return out


def run_ergodicity_study(cfg: StudyConfig, threads: int | None = None) -> StudyReport:
    """Bias and variance of G_lambda(g) against the limit-process centering."""
    f0 = reaction_from_config(cfg.model)
    g = reaction_from_config(cfg.g)
    l1 = _l1_norm(g)
    cent, cent_se = ergodic_centering(
        f0, g, cfg.initial, cfg.proxy_lambda, cfg.proxy_replicates, cfg.T, cfg.dt, cfg.points_per_unit,
        seed=derived_seed(cfg.seed, 10_000), threads=threads,
    )
    samples = _spatial_average_samples(cfg, g, f0, threads)
    lams = np.array(cfg.lambdas, dtype=float)
    rows, bias, bias_se, var = [], [], [], []
    scaled_all, per_lam = [], {}
    for lam in cfg.lambdas:
        x = samples[lam]
        for r, v in enumerate(x):
            rows.append((float(lam), r, float(v)))
        b = float(x.mean() - cent)
        bias.append(0.0 if abs(b) <= ZERO_TOL * cfg.T else b)
        bias_se.append(float(np.sqrt(x.var(ddof=1) / x.size + cent_se**2)) if x.size > 1 else float("nan"))
        v = float(x.var(ddof=1)) if x.size > 1 else 0.0
        var.append(0.0 if v <= ZERO_TOL**2 else v)
        sc = (x - x.mean()) * np.sqrt(lam) / l1
        scaled_all.append(sc)
        per_lam[repr(float(lam))] = {"q99": float(np.quantile(np.abs(sc), 0.99)) if x.size > 1 else 0.0}
    bias, var = np.array(bias), np.array(var)
    fits = {}
    if lams.size >= 2 and np.all(np.abs(bias) > 0):
        s, se = loglog_slope(lams, np.abs(bias))
        fits["bias_slope"] = {"slope": s, "se": se, "target": -1.0}
    if lams.size >= 2 and np.all(var > 0):
        s, se = loglog_slope(lams, var)
        fits["variance_slope"] = {"slope": s, "se": se, "target": -1.0}
    C = fit_variance_proxy(np.concatenate(scaled_all)) if cfg.replicates > 1 else 0.0
    for k in per_lam:
        per_lam[k]["envelope99"] = _envelope(0.99, C)
        per_lam[k]["within_envelope"] = per_lam[k]["q99"] <= per_lam[k]["envelope99"]
    stats = {
        "centering": cent,
        "centering_se": cent_se,
        "g_l1_norm": l1,
        "bias": bias.tolist(),
        "bias_se": bias_se,
        "variance": var.tolist(),
        "lambda_variance": (lams * var).tolist(),
        "pooled_C": C,
        "tails": per_lam,
        "tails_within_envelope": all(v["within_envelope"] for v in per_lam.values()),
    }
    return _finish(cfg, "ergodicity", ["lambda", "replicate", "spatial_average"], rows, ["spatial_average"], fits=fits, statistics=stats)


def run_concentration_study(cfg: StudyConfig, threads: int | None = None) -> StudyReport:
    """Tail quantiles of sqrt(lam) (G_lambda(g) - mean) / ||g||_1 against Gaussian envelopes."""
    if cfg.replicates < 100:
        raise ValueError("the concentration study needs at least 100 replicates")
    f0 = reaction_from_config(cfg.model)
    g = reaction_from_config(cfg.g)
    l1 = _l1_norm(g)
    samples = _spatial_average_samples(cfg, g, f0, threads)
    rows, per_lam, Cs = [], {}, []
    for lam in cfg.lambdas:
        x = samples[lam]
        ts = concentration_summary(x, l1, lam)
        for r, (v, s) in enumerate(zip(x, ts.scaled)):
            rows.append((float(lam), r, float(v), float(s)))
        Cs.append(ts.fitted_C)
        q99 = ts.quantile(0.99)
        per_lam[repr(float(lam))] = {
            "fitted_C": ts.fitted_C,
            "quantiles": dict(zip([str(q) for q in ts.levels], ts.quantiles.tolist())),
            "q99": q99,
            "envelope99": ts.envelope(0.99),
            "within_envelope": bool(q99 <= ts.envelope(0.99)),
        }
    stats = {"g_l1_norm": l1, "per_lambda": per_lam}
    if len(Cs) >= 2 and Cs[0] > 0:
        stats["C_ratio_last_first"] = Cs[-1] / Cs[0]
    return _finish(
        cfg, "concentration", ["lambda", "replicate", "spatial_average", "scaled"], rows, ["spatial_average", "scaled"],
        statistics=stats,
    )


# -- Bernstein-von Mises ---------------------------------------------------------------


def run_bvm_study(cfg: StudyConfig, threads: int | None = None) -> StudyReport:
    """sqrt(lam) <f_hat - f0, gamma> standardised by the plug-in variance ||gamma / p_hat||_0^2."""
    f0 = reaction_from_config(cfg.model)
    gamma = reaction_from_config(cfg.gamma)
    edges = default_bin_edges(cfg.basis.xi)
    rows, stats = [], {}
    for i, lam in enumerate(cfg.lambdas):
        basis = cfg.basis.build(lam)
        gc = basis.project(gamma)
        if np.max(np.abs(gc)) <= 1e-12 * max(1.0, basis.l2_norm(gamma)):
            raise ValueError("gamma is orthogonal to V_M: the functional is degenerate (invalid configuration)")
        prior = prior_covariance(basis, cfg.basis.beta0)
        sim = sim_config(cfg, lam, derived_seed(cfg.seed, i), f0)
        out = replicate(sim, cfg.replicates, lambda: [StatsReducer(basis), OccupationReducer(edges)], threads=threads)
        k = basis.dim * basis.dim + basis.dim
        p_hat = density_from_occupation(out[:, k:], edges, lam)
        v_hat = inverse_density_norm_sq(gamma, p_hat)
        target = basis.inner(f0, gamma)
        S, post_sd, draws = [], [], []
        for r, row in enumerate(out):
            post = posterior(_unpack_stats(row[:k], basis.dim, lam, cfg.T), prior, basis)
            S.append(np.sqrt(lam) * (post.mean @ gc - target))
            post_sd.append(np.sqrt(lam) * np.linalg.norm(post.cov_factor.T @ gc))
            if cfg.posterior_draws > 0:
                d = sample_posterior(post, cfg.posterior_draws, cfg.seed, stream=10_000 * i + r)
                draws.append(np.sqrt(lam) * (d - post.mean) @ gc)
            rows.append((float(lam), r, basis.M, float(S[-1]), float(S[-1] / np.sqrt(v_hat)), float(post_sd[-1])))
        S = np.array(S)
        z = S / np.sqrt(v_hat)
        entry = {
            "M": basis.M,
            "plug_in_variance": v_hat,
            "empirical_variance": float(S.var(ddof=1)) if S.size > 1 else float("nan"),
            "variance_ratio": float(S.var(ddof=1) / v_hat) if S.size > 1 else float("nan"),
            "mean_statistic": float(S.mean()),
            "ks_distance": float(sps.kstest(z, "norm").statistic),
            "posterior_sd_ratio": float(np.mean(post_sd) / np.sqrt(v_hat)),
            "density_total_mass": p_hat.total_mass,
        }
        if draws:
            pooled = np.concatenate(draws) / np.sqrt(v_hat)
            entry["posterior_draw_ks"] = float(sps.kstest(pooled, "norm").statistic)
        stats[repr(float(lam))] = entry
        log.info("bvm lambda=%g M=%d done", lam, basis.M)
    columns = ["lambda", "replicate", "M", "statistic", "standardized", "posterior_sd"]
    return _finish(cfg, "bvm", columns, rows, ["statistic", "standardized", "posterior_sd"], statistics=stats)


# -- figure ----------------------------------------------------------------------------


def figure_x_grid(xi=(-3.5, 3.5), margin: float = 0.5, width: float = 2.0**-7) -> np.ndarray:
    """Centres of the occupation windows; windows of half-width width/2 tile the range."""
    edges = default_bin_edges(xi, margin, width)
    return 0.5 * (edges[:-1] + edges[1:])


def reproduce_figure(cfg: StudyConfig, time_stride: int = 50, threads: int | None = None) -> StudyReport:
    """Path heat-map data, posterior band, occupation time and posterior variance for one path."""
    lam = cfg.lambdas[0]
    f0 = reaction_from_config(cfg.model)
    path = simulate(sim_config(cfg, lam, cfg.seed, f0))
    basis = cfg.basis.build(lam)
    from .inference import accumulate_stats

    post = posterior(accumulate_stats(path, basis), prior_covariance(basis, cfg.basis.beta0), basis)
    x = figure_x_grid(cfg.basis.xi)
    inside = (x >= cfg.basis.xi[0]) & (x <= cfg.basis.xi[1])
    band = credible_band(post, basis, x[inside], cfg.level, cfg.posterior_draws, seed=cfg.seed)
    occ = occupation_time(path, x)
    var = np.zeros_like(x)
    var[inside] = band.sd_analytic**2
    f0x = f0(band.x)
    core = np.abs(band.x) <= 3.0
    covered = (band.lower <= f0x) & (f0x <= band.upper)
    rho = float(sps.spearmanr(var[inside], occ[inside]).statistic)
    mass = float(np.sum(occ) * (x[1] - x[0]))
    stats = {
        "lambda": lam,
        "coverage_core": float(np.mean(covered[core])),
        "spearman_variance_occupation": rho,
        "occupation_mass": mass,
        "occupation_mass_expected": lam * cfg.T,
        "occupation_mass_relative_error": abs(mass - lam * cfg.T) / (lam * cfg.T),
        "path_min": float(path.frames.min()),
        "path_max": float(path.frames.max()),
    }
    t_idx = np.arange(0, path.n_steps + 1, time_stride)
    nodes = path.grid.nodes
    path_rows = [(float(t * path.dt), float(y), float(path.frames[t, j])) for t in t_idx for j, y in enumerate(nodes)]
    band_rows = [
        (float(a), float(lo), float(md), float(hi), float(sd), float(fv))
        for a, lo, md, hi, sd, fv in zip(band.x, band.lower, band.median, band.upper, band.sd_analytic, f0x)
    ]
    occ_rows = [(float(a), float(m), float(v)) for a, m, v in zip(x, occ, var)]
    tables = {
        "figure_path": (["t", "y", "X"], path_rows),
        "figure_band": (["x", "lower", "median", "upper", "sd_analytic", "f0"], band_rows),
        "figure_occupation": (["x", "occupation", "posterior_variance"], occ_rows),
    }
    rows = [(float(lam), 0, stats["coverage_core"], rho, mass)]
    columns = ["lambda", "replicate", "coverage_core", "spearman", "occupation_mass"]
    return _finish(cfg, "figure", columns, rows, ["coverage_core"], statistics=stats, tables=tables)


# -- single runs -------------------------------------------------------------------------


def run_simulation(cfg: StudyConfig, out_dir=None, threads: int | None = None) -> StudyReport:
    """Simulate ``replicates`` paths per lambda; summary rows of the terminal field.

    With ``out_dir`` each path is also written as ``path_lam<lambda>_rep<r>.spde``.
    """
    from pathlib import Path

    from .grid import write_path

    f0 = reaction_from_config(cfg.model)
    rows = []
    for i, lam in enumerate(cfg.lambdas):
        sim = sim_config(cfg, lam, derived_seed(cfg.seed, i), f0)
        for r in range(cfg.replicates):
            path = simulate(sim, r)
            if out_dir is not None:
                Path(out_dir).mkdir(parents=True, exist_ok=True)
                write_path(path, Path(out_dir) / f"path_lam{lam:g}_rep{r}.spde")
            X = path.frames[-1]
            rows.append((float(lam), r, float(X.mean()), float(X.std()), float(np.mean(np.abs(X) >= 2.0)), float(np.abs(path.frames).max())))
    columns = ["lambda", "replicate", "terminal_mean", "terminal_sd", "terminal_well_fraction", "sup_abs"]
    return _finish(cfg, "simulate", columns, rows, columns[2:])


def run_posterior(cfg: StudyConfig, out_dir=None, threads: int | None = None) -> StudyReport:
    """One posterior fit per (lambda, replicate); the credible band of each fit is a table.

    With ``out_dir`` each posterior is also written as ``posterior_lam<lambda>_rep<r>.bin``.
    """
    from pathlib import Path

    from .inference import write_posterior

    f0 = reaction_from_config(cfg.model)
    rows, tables = [], {}
    for i, lam in enumerate(cfg.lambdas):
        basis = cfg.basis.build(lam)
        prior = prior_covariance(basis, cfg.basis.beta0)
        sim = sim_config(cfg, lam, derived_seed(cfg.seed, i), f0)
        out = replicate(sim, cfg.replicates, lambda: StatsReducer(basis), threads=threads)
        x = np.linspace(cfg.basis.xi[0], cfg.basis.xi[1], 701)
        for r, row in enumerate(out):
            post = posterior(_unpack_stats(row, basis.dim, lam, cfg.T), prior, basis)
            if out_dir is not None:
                Path(out_dir).mkdir(parents=True, exist_ok=True)
                write_posterior(post, Path(out_dir) / f"posterior_lam{lam:g}_rep{r}.bin")
            band = credible_band(post, basis, x, cfg.level, cfg.posterior_draws, seed=derived_seed(cfg.seed, i, r))
            f0x = f0(x)
            cover = float(np.mean((band.lower <= f0x) & (f0x <= band.upper)))
            rows.append((float(lam), r, basis.M, l2_error(basis, post.mean, f0), cover, post.diagnostics["gradient_residual"]))
            tables[f"band_lam{lam:g}_rep{r}"] = (
                ["x", "lower", "median", "upper", "sd_analytic", "f0"],
                [tuple(map(float, v)) for v in zip(x, band.lower, band.median, band.upper, band.sd_analytic, f0x)],
            )
    columns = ["lambda", "replicate", "M", "l2_error", "band_coverage", "gradient_residual"]
    return _finish(cfg, "posterior", columns, rows, ["l2_error", "band_coverage"], tables=tables)


STUDIES = {
    "simulate": run_simulation,
    "posterior": run_posterior,
    "contraction": run_contraction_study,
    "ergodicity": run_ergodicity_study,
    "concentration": run_concentration_study,
    "bvm": run_bvm_study,
    "figure": reproduce_figure,
}
