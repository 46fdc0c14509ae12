"""Independent oracles shared across the test modules.

Everything here is deliberately written against the rate-parameterized
closed forms (or plain finite differences), not against the package's
theta-based code paths, so each check pits two independent routes against
each other.
"""

import math

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln
from scipy.stats import chi2

from rcgbeta import RcgParams, log_density_theta, log_likelihood, score_gamma
from rcgbeta.kibble import sample_rates


def ratio_logpdf_rates(b: float, alpha: float, rho: float,
                       lam_m: float, lam_u: float) -> float:
    """Closed-form ratio log-density in the rate parameterization."""
    s = lam_m * b + lam_u * (1.0 - b)
    return (
        gammaln(2.0 * alpha)
        - 2.0 * gammaln(alpha)
        + alpha * math.log(lam_m * lam_u)
        + alpha * math.log1p(-rho)
        + (alpha - 1.0) * math.log(b * (1.0 - b))
        + math.log(s)
        - (alpha + 0.5) * math.log(s * s - 4.0 * rho * lam_m * lam_u * b * (1.0 - b))
    )


def fd_score(data, params, h0: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the log-likelihood in gamma."""
    g = np.zeros_like(params.gamma)
    for k in range(len(g)):
        h = h0 * max(1.0, abs(params.gamma[k]))
        up = params.gamma.copy()
        dn = params.gamma.copy()
        up[k] += h
        dn[k] -= h
        g[k] = (
            log_likelihood(data, RcgParams(params.alpha, params.rho, up))
            - log_likelihood(data, RcgParams(params.alpha, params.rho, dn))
        ) / (2.0 * h)
    return g


def fd_hessian(data, params, h0: float = 1e-5) -> np.ndarray:
    """Central-difference Hessian of the log-likelihood in gamma."""
    k = len(params.gamma)
    H = np.zeros((k, k))
    for i in range(k):
        h = h0 * max(1.0, abs(params.gamma[i]))
        up = params.gamma.copy()
        dn = params.gamma.copy()
        up[i] += h
        dn[i] -= h
        su = score_gamma(data, RcgParams(params.alpha, params.rho, up))
        sd = score_gamma(data, RcgParams(params.alpha, params.rho, dn))
        H[:, i] = (su - sd) / (2.0 * h)
    return 0.5 * (H + H.T)


def simulate_ratio_data(seed: int, n: int, gamma, alpha: float, rho: float,
                        covariate_kinds=("normal",)):
    """Draw (b, X) from the generative model with log-linear rates."""
    rng = np.random.default_rng(seed)
    cols = [np.ones(n)]
    for kind in covariate_kinds:
        if kind == "normal":
            cols.append(rng.standard_normal(n))
        elif kind == "binary":
            cols.append(rng.integers(0, 2, n).astype(float))
        else:
            raise ValueError(kind)
    X = np.column_stack(cols)
    gamma = np.asarray(gamma, dtype=float)
    lam_u = np.ones(n)
    lam_m = np.exp(X @ gamma)
    m, u = sample_rates(alpha, rho, lam_m, lam_u, rng)
    return m / (m + u), X


def chi2_gof_pvalue(samples: np.ndarray, alpha: float, rho: float, theta: float,
                    n_bins: int = 30) -> float:
    """Chi-square goodness of fit of sampled ratios against the density."""
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    probs = np.array([
        quad(lambda b: math.exp(log_density_theta(b, alpha, rho, theta)),
             edges[i], edges[i + 1], epsabs=1e-10, epsrel=1e-10, limit=200)[0]
        for i in range(n_bins)
    ])
    counts, _ = np.histogram(samples, bins=edges)
    n = samples.size
    # merge cells until every expected count is at least 5
    exp_counts, obs_counts = [], []
    acc_e = acc_o = 0.0
    for e, o in zip(probs * n, counts):
        acc_e += e
        acc_o += o
        if acc_e >= 5.0:
            exp_counts.append(acc_e)
            obs_counts.append(acc_o)
            acc_e = acc_o = 0.0
    if acc_e > 0:
        exp_counts[-1] += acc_e
        obs_counts[-1] += acc_o
    exp_arr = np.asarray(exp_counts)
    obs_arr = np.asarray(obs_counts)
    stat = float(((obs_arr - exp_arr) ** 2 / exp_arr).sum())
    dof = len(exp_arr) - 1
    return float(chi2.sf(stat, dof))


def lemma1_sides(alpha_tilde: float, nu: float, p: float, c: float):
    """Both sides of the Bessel Laplace-transform identity.

    Left: adaptive quadrature of x^(alpha_tilde-1) e^(-p x) I_nu(c x);
    right: the closed form in terms of the hypergeometric series.
    """
    from rcgbeta import gauss_2f1, log_bessel_i

    def integrand(x: float) -> float:
        if x <= 0.0:
            return 0.0
        return math.exp(
            (alpha_tilde - 1.0) * math.log(x) - p * x + log_bessel_i(nu, c * x)
        )

    left, _ = quad(integrand, 0.0, np.inf, epsabs=1e-12, epsrel=1e-10, limit=500)
    right = (
        p ** (-(alpha_tilde + nu))
        * (c / 2.0) ** nu
        * math.exp(gammaln(nu + alpha_tilde) - gammaln(nu + 1.0))
        * gauss_2f1((nu + alpha_tilde) / 2.0, (nu + alpha_tilde + 1.0) / 2.0,
                    nu + 1.0, c * c / (p * p))
    )
    return left, right
