"""Acceptance gate: one PASS/FAIL line per criterion, printed in the terminal summary.

The four Monte Carlo studies run with their default configurations. Their reports are
cached under ``results/acceptance/<kind>`` (override with SPDE_BAYES_ACCEPTANCE_DIR) and
reused only when the embedded config hash and code version match; delete the directory
to force a fresh run.
"""
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from spde_bayes import __version__
from spde_bayes.config import config_from_dict, config_hash
from spde_bayes.grid import (
    Field,
    SpaceTimePath,
    apply_laplacian,
    heat_flow,
    laplacian_eigenpairs,
    laplacian_matrix,
    make_grid,
    rescale_to_unit_domain,
)
from spde_bayes.inference import accumulate_stats, girsanov_decomposition, posterior
from spde_bayes.reaction import allen_cahn_truncated
from spde_bayes.report import emit_report
from spde_bayes.simulate import SimConfig, replicate, simulate
from spde_bayes.studies import STUDIES
from spde_bayes.wavelets import build_daubechies, build_haar, daubechies_filter, prior_covariance

ROOT = Path(__file__).resolve().parents[1]
CACHE = Path(os.environ.get("SPDE_BAYES_ACCEPTANCE_DIR", ROOT / "results" / "acceptance"))
F0 = allen_cahn_truncated()


def record(k, ok, detail):
    ACCEPTANCE_LINES[k] = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[k])
    assert ok, ACCEPTANCE_LINES[k]


def study_summary(kind):
    cfg = config_from_dict({"kind": kind})
    out = CACHE / kind
    p = out / f"{kind}_summary.json"
    if p.exists():
        s = json.loads(p.read_text())
        prov = s["provenance"]
        if prov["config_hash"] == config_hash(cfg) and prov["code_version"] == __version__:
            return s, "cached"
    t0 = time.time()
    emit_report(STUDIES[kind](cfg, threads=os.cpu_count()), out)
    return json.loads(p.read_text()), f"{time.time() - t0:.0f} s"


@pytest.fixture(scope="module")
def ac_path():
    return simulate(SimConfig(grid=make_grid(16), T=0.5, model=F0, seed=101))


def test_criterion_1_girsanov_identity(ac_path):
    t0 = time.time()
    b = build_haar(M=5)
    s = accumulate_stats(ac_path, b)
    worst = 0.0
    for f in np.random.default_rng(1).standard_normal((100, b.dim)) * 3:
        d = girsanov_decomposition(ac_path, b, s, f, F0)
        rhs = np.sqrt(ac_path.lam) * d["martingale_term"] - ac_path.lam / 2 * d["hellinger_sq"]
        worst = max(worst, abs(d["loglik_diff"] - rhs) / (1 + abs(d["loglik_diff"])))
    dt = time.time() - t0
    record(1, worst <= 1e-9 and dt < 60, f"max relative defect {worst:.2e} (tol 1e-9), {dt:.1f} s")


def test_criterion_2_conjugacy(ac_path):
    grad, dense = 0.0, 0.0
    paths = [ac_path, simulate(SimConfig(grid=make_grid(50), T=0.5, model=F0, seed=7))]
    bases = [build_haar(M=M) for M in (0, 2, 4, 7)] + [build_daubechies(M=1, p=2), build_daubechies(M=2, p=3)]
    for p in paths:
        for b in bases:
            s = accumulate_stats(p, b)
            for beta0 in (0.0, 0.5, 1.6):
                prior = prior_covariance(b, beta0)
                post = posterior(s, prior, b)
                P = s.G + np.diag(1 / prior.diagonal_variances)
                grad = max(grad, np.abs(s.a - P @ post.mean).max() / np.abs(s.a).max())
                if b.dim <= 16:
                    Q = np.linalg.inv(P)
                    dense = max(dense, np.abs(post.cov - Q).max() / max(1.0, np.abs(Q).max()))
    record(2, grad <= 1e-8 and dense <= 1e-10, f"gradient residual {grad:.2e} (tol 1e-8), dense-inverse error {dense:.2e} (tol 1e-10)")


def test_criterion_3_heat_kernel_scaling():
    lam, t, steps = 8.0, 0.5, 200
    g = make_grid(lam)
    u0 = np.cos(np.pi * g.nodes / lam) + 0.3 * np.exp(-g.nodes**2)
    big = heat_flow(Field(u0, g), t, steps).values
    unit = rescale_to_unit_domain(SpaceTimePath(g, 1.0, 1.0, np.vstack([u0, u0]))).grid
    small = heat_flow(Field(u0, unit), t / lam**2, steps).values
    err = np.abs(big - small).max()
    record(3, err < 1e-6, f"sup error {err:.2e} (tol 1e-6)")


def test_criterion_4_ergodicity():
    s, how = study_summary("ergodicity")
    bias = s["fits"].get("bias_slope", {}).get("slope", float("nan"))
    var = s["fits"].get("variance_slope", {}).get("slope", float("nan"))
    tails = s["statistics"]["tails_within_envelope"]
    ok = -1.4 <= var <= -0.6 and bias <= -0.5 and tails
    record(4, ok, f"variance slope {var:.3f} in [-1.4,-0.6], bias slope {bias:.3f} <= -0.5, tails within 99% envelope {tails} ({how})")


def test_criterion_5_contraction():
    s, how = study_summary("contraction")
    slope = s["fits"]["median_error_slope"]["slope"]
    dec = s["statistics"]["strictly_decreasing"]
    med = ", ".join(f"{m:.3f}" for m in s["statistics"]["median_error"])
    record(5, dec and -0.55 <= slope <= -0.15, f"medians [{med}] strictly decreasing {dec}, slope {slope:.3f} in [-0.55,-0.15] ({how})")


def test_criterion_6_bvm():
    s, how = study_summary("bvm")
    e = s["statistics"]["100.0"]
    ks, ratio = e["ks_distance"], e["variance_ratio"]
    record(6, ks < 0.12 and 0.65 <= ratio <= 1.35, f"KS {ks:.3f} < 0.12, variance ratio {ratio:.3f} in [0.65,1.35] ({how})")


def test_criterion_7_figure():
    s, how = study_summary("figure")
    st = s["statistics"]
    cov, rho, mass = st["coverage_core"], st["spearman_variance_occupation"], st["occupation_mass_relative_error"]
    ok = cov >= 0.8 and rho < -0.5 and mass <= 0.01
    record(7, ok, f"band coverage on [-3,3] {cov:.3f} >= 0.8, Spearman {rho:.3f} < -0.5, mass error {mass:.1e} <= 0.01 ({how})")


class _Terminal:
    def start(self, cfg, X0):
        self.X = X0.copy()

    def update(self, m, X_prev, X_next, xi):
        self.X = X_next.copy()

    def result(self):
        return self.X


def test_criterion_8_property_suites():
    t0 = time.time()
    checks = {}
    checks["haar orthonormality"] = max(np.abs(build_haar(M=M).gram() - np.eye(2**M)).max() for M in (0, 3, 7)) <= 1e-12
    checks["daubechies orthonormality"] = max(
        np.abs(b.gram() - np.eye(b.dim)).max() for b in (build_daubechies(M=2, p=2), build_daubechies(M=2, p=3))
    ) <= 1e-6
    ok = True
    for p in (2, 3, 4, 6):
        h = daubechies_filter(p)
        ok &= abs(h.sum() - np.sqrt(2)) <= 1e-10
        ok &= all(abs(np.sum(h[: h.size - 2 * m] * h[2 * m :]) - (m == 0)) <= 1e-10 for m in range(p))
    checks["filter identities"] = bool(ok)
    rng = np.random.default_rng(0)
    ok = True
    for lam in (1.0, 8.0, 50.0):
        g = make_grid(lam)
        A = laplacian_matrix(g)
        sc = np.abs(A).max()
        u = rng.standard_normal(g.n)
        ok &= np.abs(A.sum(axis=1)).max() <= 1e-12 * sc
        ok &= abs(apply_laplacian(u, g.dy).sum()) <= 1e-12 * sc * np.abs(u).sum()
    checks["stencil row sum and mass"] = bool(ok)
    cfg = SimConfig(grid=make_grid(8), T=0.05, model=F0, seed=77)
    ref = replicate(cfg, 6, _Terminal, threads=1)
    checks["thread determinism"] = all(replicate(cfg, 6, _Terminal, threads=k, batch_size=2).tobytes() == ref.tobytes() for k in (2, 4))
    worst = 0.0
    for knot in (-3.5, -3.25, 3.25, 3.5):
        for order in range(4):
            d = F0 if order == 0 else F0.derivative(order)
            jump = lambda h: d(np.array([knot + h]))[0] - d(np.array([knot - h]))[0]
            worst = max(worst, abs(2 * jump(1e-7) - jump(2e-7)) / max(1.0, abs(d(np.array([knot]))[0])))
    checks["C3 at knots"] = worst <= 1e-6
    # per-cell variance of the noise-only scheme against the exact lattice value
    g = make_grid(16, (-0.5, 0.5), 8)
    dt, m = 1e-3, 250
    th, V = laplacian_eigenpairs(g)
    V = V / np.sqrt((V**2).sum(axis=0))
    a2 = (1 / (1 + dt * th)) ** 2
    geo = np.where(a2 == 1.0, m, a2 * (1 - a2**m) / np.where(a2 == 1.0, 0.5, 1 - a2))
    v = dt / g.dy * (V**2) @ geo
    X = replicate(SimConfig(grid=g, T=m * dt, dt=dt, seed=12), 200, _Terminal)
    r = np.mean(X**2 / v, axis=1)
    checks["noise normalization"] = abs(r.mean() - 1) < 3 * r.std(ddof=1) / np.sqrt(r.size)
    dt = time.time() - t0
    failed = [k for k, v in checks.items() if not v]
    record(8, not failed and dt < 60, f"{len(checks) - len(failed)}/{len(checks)} suites hold {failed or ''} ({dt:.1f} s)")
