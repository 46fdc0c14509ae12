"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Tolerances are fixed here, not calibrated at run time.
"""

import math
import multiprocessing
import time

import numpy as np
from scipy.integrate import quad
from scipy.stats import beta as beta_dist

from rcgbeta import (
    Dataset,
    FitConfig,
    KibbleParams,
    fit_beta_regression,
    fit_mvalue,
    fit_rcg_boost,
    fit_rcg_direct,
    kibble_sample,
    log_density_theta,
    observed_information,
    score_gamma,
    write_results,
)
from rcgbeta.kibble import sample_rates
from rcgbeta.pipeline import run_sitewise
from rcgbeta.simulate import CovariateSpec, SimSpec, simulate_dataset

from util import chi2_gof_pvalue, fd_hessian, fd_score, lemma1_sides, simulate_ratio_data

WORKERS = 2


def _report(criterion: str, ok: bool, detail: str):
    print(f"[{criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{criterion} failed: {detail}"


def test_criterion_01_density_normalization():
    t0 = time.perf_counter()
    worst = 0.0
    for alpha in (0.5, 2.0, 8.0):
        for rho in (0.0, 0.3, 0.8):
            for theta in (0.25, 1.0, 4.0):
                total, _ = quad(
                    lambda b: math.exp(log_density_theta(b, alpha, rho, theta)),
                    0.0, 1.0, epsabs=1e-10, epsrel=1e-10, limit=200,
                )
                worst = max(worst, abs(total - 1.0))
    elapsed = time.perf_counter() - t0
    _report(
        "criterion 1: density normalization",
        worst < 1e-6 and elapsed < 10.0,
        f"worst |integral-1| = {worst:.2e} over 27 points in {elapsed:.1f}s",
    )


def test_criterion_02_beta_reduction():
    b = np.arange(0.01, 0.995, 0.01)
    worst = 0.0
    for alpha in (0.5, 1.0, 2.0, 8.0):
        got = np.exp(log_density_theta(b, alpha, 0.0, 1.0))
        want = beta_dist.pdf(b, alpha, alpha)
        worst = max(worst, float(np.max(np.abs(got - want) / want)))
    _report(
        "criterion 2: beta reduction at rho=0, theta=1",
        worst < 1e-12,
        f"worst pointwise relative gap = {worst:.2e}",
    )


def test_criterion_03_sampler_density_agreement():
    t0 = time.perf_counter()
    settings = [
        (2.0, 1.0, 1.0, 0.7),
        (0.5, 1.0, 2.0, 0.3),
        (3.0, 2.0, 1.0, 0.5),
        (1.0, 1.0, 1.0, 0.0),
        (8.0, 1.0, 3.0, 0.8),
    ]
    pvals = []
    for i, (alpha, lam_m, lam_u, rho) in enumerate(settings):
        pairs = kibble_sample(KibbleParams(alpha, lam_m, lam_u, rho), 100_000, seed=500 + i)
        ratios = pairs[:, 0] / (pairs[:, 0] + pairs[:, 1])
        pvals.append(chi2_gof_pvalue(ratios, alpha, rho, lam_m / lam_u))
    elapsed = time.perf_counter() - t0
    _report(
        "criterion 3: sampler/density chi-square agreement",
        min(pvals) > 0.01 and elapsed < 30.0,
        f"p-values {['%.3f' % p for p in pvals]} in {elapsed:.1f}s",
    )


def test_criterion_04_kibble_moments():
    params = KibbleParams(3.0, 2.0, 1.0, 0.3)
    n = 200_000
    pairs = kibble_sample(params, n, seed=404)
    m, u = pairs[:, 0], pairs[:, 1]
    checks = []
    for x, mean_want, var_want in ((m, 1.5, 0.75), (u, 3.0, 3.0)):
        mean_se = x.std(ddof=1) / math.sqrt(n)
        checks.append(abs(x.mean() - mean_want) < 3 * mean_se)
        sq = (x - x.mean()) ** 2
        var_se = sq.std(ddof=1) / math.sqrt(n)
        checks.append(abs(x.var(ddof=1) - var_want) < 3 * var_se)
    r = np.corrcoef(m, u)[0, 1]
    checks.append(abs(r - 0.3) < 3 * (1 - r * r) / math.sqrt(n))
    _report(
        "criterion 4: bivariate gamma moments",
        all(checks),
        f"means/vars/corr all within 3 MC standard errors of (1.5, 3, 0.75, 3, 0.3)",
    )


def _random_point(seed):
    rng = np.random.default_rng(seed)
    kinds = ("normal", "binary") if seed % 2 else ("normal",)
    gamma_true = rng.normal(0, 0.4, len(kinds) + 1)
    b, X = simulate_ratio_data(seed, 60, gamma_true, float(rng.uniform(0.6, 4.0)),
                               float(rng.uniform(0.0, 0.8)), kinds)
    from rcgbeta import RcgParams

    params = RcgParams(
        float(rng.uniform(0.5, 4.0)), float(rng.uniform(0.0, 0.85)),
        rng.normal(0, 0.5, X.shape[1]),
    )
    return Dataset(b, X), params


def test_criterion_05_score_correctness():
    worst = 0.0
    for seed in range(20):
        data, params = _random_point(seed)
        analytic = score_gamma(data, params)
        numeric = fd_score(data, params)
        scale = np.maximum(np.abs(numeric), 1e-2 * np.max(np.abs(numeric)))
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / scale)))
    _report(
        "criterion 5: analytic score vs central differences",
        worst < 1e-6,
        f"worst relative gap over 20 points = {worst:.2e}",
    )


def test_criterion_06_information_correctness():
    worst = 0.0
    for seed in range(20):
        data, params = _random_point(seed)
        J = observed_information(data, params)
        H = fd_hessian(data, params)
        scale = np.maximum(np.abs(H), 1e-2 * np.max(np.abs(H)))
        worst = max(worst, float(np.max(np.abs(J + H) / scale)))
    _report(
        "criterion 6: observed information vs numerical Hessian",
        worst < 1e-4,
        f"worst relative gap over 20 points = {worst:.2e}",
    )


LEMMA1_POINTS = [
    (3.0, 1.0, 2.0, 1.0),
    (1.5, 0.0, 1.0, 0.5),
    (2.0, 0.5, 3.0, 2.0),
    (4.0, 2.0, 2.5, 2.0),
    (1.0, 1.5, 1.2, 1.0),
    (2.5, 0.25, 4.0, 1.0),
    (0.5, 1.0, 2.0, 1.5),
    (3.5, 3.0, 1.5, 0.9),
    (2.0, 0.0, 5.0, 4.0),
    (1.8, 0.8, 2.2, 1.9),
]


def test_criterion_07_bessel_integral_identity():
    worst = 0.0
    for alpha_tilde, nu, p, c in LEMMA1_POINTS:
        left, right = lemma1_sides(alpha_tilde, nu, p, c)
        worst = max(worst, abs(left - right) / abs(right))
    _report(
        "criterion 7: Bessel Laplace-transform identity",
        worst < 1e-6,
        f"worst relative gap over {len(LEMMA1_POINTS)} points = {worst:.2e}",
    )


_RECOVERY_TRUTH = np.array([0.2, 0.8, -0.5])


def _recovery_fit(seed):
    rng = np.random.default_rng(seed)
    n = 1000
    x1 = rng.standard_normal(n)
    x2 = np.zeros(n)
    x2[rng.permutation(n)[: n // 2]] = 1.0  # balanced binary
    X = np.column_stack([np.ones(n), x1, x2])
    lam_m = np.exp(X @ _RECOVERY_TRUTH)
    m, u = sample_rates(3.0, 0.5, lam_m, np.ones(n), rng)
    fit = fit_rcg_boost(Dataset(m / (m + u), X))
    return (
        float(np.max(np.abs(fit.params_hat.gamma - _RECOVERY_TRUTH))),
        abs(fit.params_hat.rho - 0.5),
    )


def test_criterion_08_parameter_recovery():
    t0 = time.perf_counter()
    with multiprocessing.Pool(WORKERS) as pool:
        errs = np.array(pool.map(_recovery_fit, range(8000, 8100)))
    elapsed = time.perf_counter() - t0
    med_gamma = float(np.median(errs[:, 0]))
    med_rho = float(np.median(errs[:, 1]))
    _report(
        "criterion 8: parameter recovery (n=1000, p=2, 100 replicates)",
        med_gamma <= 0.15 and med_rho <= 0.1 and elapsed < 300.0,
        f"median sup gamma error {med_gamma:.3f} (<=0.15), "
        f"median rho error {med_rho:.3f} (<=0.1) in {elapsed:.0f}s",
    )


def test_criterion_09_wald_null_calibration():
    t0 = time.perf_counter()
    spec = SimSpec.from_effects(
        gamma=[0.0, 0.0], zeta_u=[0.0, 0.0], n_samples=200, n_sites=2000,
        alpha=2.0, rho=0.5, covariates=(CovariateSpec("standard_normal", name="x1"),),
        seed=909,
    )
    matrix, covs, _ = simulate_dataset(spec)
    results = run_sitewise(matrix, covs, "rcg", workers=WORKERS)
    pvals = np.array([r.covariates[0].p_value for r in results if r.converged])
    rate = float(np.mean(pvals < 0.05))
    elapsed = time.perf_counter() - t0
    _report(
        "criterion 9: Wald null calibration (2000 sites, n=200)",
        0.035 <= rate <= 0.065 and len(pvals) >= 1990 and elapsed < 600.0,
        f"rejection rate at 0.05 = {rate:.4f} from {len(pvals)} converged sites "
        f"in {elapsed:.0f}s",
    )


def _crosscheck_fit(seed):
    b, X = simulate_ratio_data(seed, 1000, [0.1, 0.5, -0.3], 2.5, 0.45,
                               ("normal", "binary"))
    data = Dataset(b, X)
    fb = fit_rcg_boost(data)
    fd = fit_rcg_direct(data)
    if not (fb.converged and fd.converged):
        return None
    return abs(fb.log_lik - fd.log_lik)


def test_criterion_10_optimizer_crosscheck():
    with multiprocessing.Pool(WORKERS) as pool:
        gaps = pool.map(_crosscheck_fit, range(7000, 7020))
    gaps = [g for g in gaps if g is not None]
    worst = max(gaps)
    _report(
        "criterion 10: boosting vs direct ML agreement",
        len(gaps) == 20 and worst < 1e-4 * 1000,
        f"worst |loglik gap| = {worst:.2e} (< 0.1) on {len(gaps)} datasets",
    )


def test_criterion_11_pipeline_determinism(tmp_path):
    spec = SimSpec.from_effects(
        gamma=[0.1, 0.4], zeta_u=[0.0, 0.0], n_samples=60, n_sites=50,
        alpha=2.0, rho=0.4, covariates=(CovariateSpec("standard_normal", name="x1"),),
        seed=311,
    )
    matrix, covs, _ = simulate_dataset(spec)
    cfg = FitConfig()
    tables = {}
    for workers in (1, 8):
        results = run_sitewise(matrix, covs, "rcg", fit_config=cfg, workers=workers)
        path = tmp_path / f"w{workers}.tsv"
        write_results(results, path)
        tables[workers] = path.read_bytes()
    _report(
        "criterion 11: pipeline determinism across worker counts",
        tables[1] == tables[8],
        f"sorted tables byte-identical for workers in {{1, 8}} "
        f"({len(tables[1])} bytes)",
    )


def test_criterion_12_baseline_sanity():
    b, X = simulate_ratio_data(606, 500, [0.2, 0.5, -0.3], 2.0, 0.4,
                               ("normal", "binary"))
    data = Dataset(b, X)
    ols = fit_mvalue(data)
    resid = np.log2(data.b / (1 - data.b)) - data.X @ ols.coef
    ortho = float(np.max(np.abs(data.X.T @ resid)))

    rng = np.random.default_rng(607)
    n = 2000
    Xb = np.column_stack([np.ones(n), rng.standard_normal(n)])
    mu = 1.0 / (1.0 + np.exp(-(Xb @ np.array([0.3, 0.6]))))
    yb = rng.beta(mu * 10.0, (1 - mu) * 10.0)
    breg = fit_beta_regression(Dataset(yb, Xb))
    coef_err = float(np.max(np.abs(breg.coef - [0.3, 0.6])))
    _report(
        "criterion 12: baseline sanity",
        ortho < 1e-10 and coef_err < 0.1 and breg.converged,
        f"OLS residual orthogonality {ortho:.2e} (<1e-10), "
        f"beta-regression coef error {coef_err:.3f} (<0.1)",
    )
