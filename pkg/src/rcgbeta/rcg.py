"""Ratio-of-correlated-gammas distribution and likelihood machinery.

The ratio b = M / (M + U) of a correlated bivariate gamma pair has a
Bessel-free closed-form density that depends on the rates only through
theta = lambda_m / lambda_u.  This module evaluates that density, the
covariate-linked log-likelihood with theta = exp(X'gamma), the analytic
score and observed information in gamma, and the resulting Wald tests.

All arithmetic runs in log space.  Writing D1 = (theta - 1) b + 1 and
D2 = D1^2 - 4 rho theta b (1 - b), the identity D2 >= (1 - rho) D1^2 > 0
keeps every logarithm well defined; the code still guards D2 and reports
a numerical-domain failure with the offending observation index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, NumericalDomainError, SingularInformationError

__all__ = [
    "RcgParams",
    "Dataset",
    "WaldStat",
    "log_density_theta",
    "log_likelihood",
    "score_gamma",
    "observed_information",
    "wald_tests",
]

DEFAULT_CLAMP_EPS = 1e-6


@dataclass(frozen=True)
class RcgParams:
    """Shape alpha, correlation rho, and coefficient vector gamma.

    gamma[0] is the intercept; the per-observation mean ratio is
    theta = exp(X'gamma) and is derived, never stored.
    """

    alpha: float
    rho: float
    gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.atleast_1d(np.asarray(self.gamma, dtype=float)))
        if not (math.isfinite(self.alpha) and self.alpha > 0.0):
            raise DomainError(f"alpha must be positive, got {self.alpha!r}")
        if not (0.0 <= self.rho < 1.0):
            raise DomainError(f"rho must lie in [0, 1), got {self.rho!r}")
        if not np.all(np.isfinite(self.gamma)):
            raise DomainError("gamma must be finite")


class Dataset:
    """Responses in (0, 1) paired with a design matrix carrying an intercept.

    Values within ``clamp_eps`` of the boundary (or exactly on it) are pulled
    to ``clamp_eps`` / ``1 - clamp_eps`` and counted in ``n_clamped``; values
    outside [0, 1] are rejected.

    Parameters
    ----------
    b : array_like
        Response vector, length n, values in [0, 1].
    X : array_like
        n x (p + 1) design matrix whose first column is all ones.
    names : sequence of str, optional
        Column names; defaults to ``intercept, x1, ..., xp``.
    clamp_eps : float
        Boundary clamping width.
    """

    def __init__(self, b, X, names: Sequence[str] | None = None,
                 clamp_eps: float = DEFAULT_CLAMP_EPS):
        b = np.asarray(b, dtype=float).ravel()
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] != b.shape[0]:
            raise DomainError(
                f"X must be 2-d with one row per response, got {X.shape} for n={b.shape[0]}"
            )
        if not np.all(np.isfinite(b)):
            raise DomainError("responses must be finite")
        if not np.all(np.isfinite(X)):
            raise DomainError("design matrix must be finite")
        if np.any(b < 0.0) or np.any(b > 1.0):
            raise DomainError("responses must lie in [0, 1]")
        if not np.allclose(X[:, 0], 1.0):
            raise DomainError("first design column must be the intercept (all ones)")
        if not (0.0 < clamp_eps < 0.5):
            raise DomainError(f"clamp_eps must lie in (0, 0.5), got {clamp_eps!r}")
        clamped = (b < clamp_eps) | (b > 1.0 - clamp_eps)
        self.b = np.clip(b, clamp_eps, 1.0 - clamp_eps)
        self.b.setflags(write=False)
        self.X = X.copy()
        self.X.setflags(write=False)
        self.n_clamped = int(clamped.sum())
        self.clamp_eps = float(clamp_eps)
        if names is None:
            names = ["intercept"] + [f"x{j}" for j in range(1, X.shape[1])]
        if len(names) != X.shape[1]:
            raise DomainError("one name per design column required")
        self.names = list(names)

    @classmethod
    def with_intercept(cls, b, covariates, names: Sequence[str] | None = None,
                       clamp_eps: float = DEFAULT_CLAMP_EPS) -> "Dataset":
        """Build a Dataset by prepending an intercept column to covariates."""
        b = np.asarray(b, dtype=float).ravel()
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        X = np.column_stack((np.ones(b.shape[0]), covariates))
        if names is not None:
            names = ["intercept"] + list(names)
        return cls(b, X, names=names, clamp_eps=clamp_eps)

    @property
    def n(self) -> int:
        return self.b.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.X.shape[1] - 1


class WaldStat(NamedTuple):
    name: str
    estimate: float
    std_error: float
    z: float
    p_value: float


class _Terms(NamedTuple):
    """Rescaled per-observation building blocks, stable for any eta.

    With scale factor s = exp(-max(eta, 0)):
      g1   = s * b * exp(eta)
      d1s  = s * D1
      sb   = s, the cross-term factor in the score weight
      half = max(eta, 0), so that log D1 = half + log(d1s)
      a2   = d1s^2 and b2 = 4 * s^2 * exp(eta) * b * (1 - b), so that
             s^2 * D2 = a2 - rho * b2 and log D2 = 2 * half + log(a2 - rho * b2).
    """

    g1: np.ndarray
    d1s: np.ndarray
    sb: np.ndarray
    half: np.ndarray
    a2: np.ndarray
    b2: np.ndarray
    log_d1: np.ndarray


def _terms(b: np.ndarray, eta: np.ndarray) -> _Terms:
    pos = eta > 0.0
    g1 = np.empty_like(eta)
    d1s = np.empty_like(eta)
    sb = np.ones_like(eta)
    e2 = np.empty_like(eta)  # s^2 * exp(eta)
    half = np.zeros_like(eta)
    if np.any(pos):
        bp = b[pos]
        t = np.exp(-eta[pos])
        g1[pos] = bp
        d1s[pos] = bp + (1.0 - bp) * t
        sb[pos] = t
        e2[pos] = t
        half[pos] = eta[pos]
    neg = ~pos
    if np.any(neg):
        bn = b[neg]
        e = np.exp(eta[neg])
        g1[neg] = bn * e
        d1s[neg] = bn * np.expm1(eta[neg]) + 1.0
        e2[neg] = e
    a2 = d1s * d1s
    b2 = 4.0 * e2 * b * (1.0 - b)
    log_d1 = half + np.log(d1s)
    return _Terms(g1, d1s, sb, half, a2, b2, log_d1)


def _log_d2(terms: _Terms, rho: float) -> np.ndarray:
    d2 = terms.a2 - rho * terms.b2
    if np.any(d2 <= 0.0):
        idx = int(np.argmax(d2 <= 0.0))
        raise NumericalDomainError("non-positive D2 in ratio density", index=idx)
    return 2.0 * terms.half + np.log(d2)


def log_density_theta(b, alpha: float, rho: float, theta: float):
    """Log density of the gamma ratio at b for (alpha, rho, theta).

    Accepts a scalar or array ``b``; returns a matching float or array.
    """
    if not (math.isfinite(alpha) and alpha > 0.0):
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    if not (0.0 <= rho < 1.0):
        raise DomainError(f"rho must lie in [0, 1), got {rho!r}")
    if not (math.isfinite(theta) and theta > 0.0):
        raise DomainError(f"theta must be positive, got {theta!r}")
    b_arr = np.atleast_1d(np.asarray(b, dtype=float))
    if np.any(b_arr <= 0.0) or np.any(b_arr >= 1.0):
        raise DomainError("b must lie strictly inside (0, 1)")
    eta = np.full_like(b_arr, math.log(theta))
    terms = _terms(b_arr, eta)
    out = (
        gammaln(2.0 * alpha)
        - 2.0 * gammaln(alpha)
        + alpha * eta
        + alpha * math.log1p(-rho)
        + terms.log_d1
        + (alpha - 1.0) * np.log(b_arr * (1.0 - b_arr))
        - (alpha + 0.5) * _log_d2(terms, rho)
    )
    return float(out[0]) if np.isscalar(b) or np.ndim(b) == 0 else out


def _eta(data: Dataset, params: RcgParams) -> np.ndarray:
    if params.gamma.shape[0] != data.X.shape[1]:
        raise DomainError(
            f"gamma has length {params.gamma.shape[0]}, design has {data.X.shape[1]} columns"
        )
    return data.X @ params.gamma


def log_likelihood(data: Dataset, params: RcgParams) -> float:
    """Sum of per-observation log densities with theta_i = exp(X_i'gamma)."""
    alpha, rho = params.alpha, params.rho
    eta = _eta(data, params)
    terms = _terms(data.b, eta)
    log_d2 = _log_d2(terms, rho)
    per_obs = (
        alpha * eta
        + terms.log_d1
        + (alpha - 1.0) * np.log(data.b * (1.0 - data.b))
        - (alpha + 0.5) * log_d2
    )
    if not np.all(np.isfinite(per_obs)):
        idx = int(np.argmax(~np.isfinite(per_obs)))
        raise NumericalDomainError("non-finite log-likelihood term", index=idx)
    const = gammaln(2.0 * alpha) - 2.0 * gammaln(alpha) + alpha * math.log1p(-rho)
    return float(per_obs.sum() + data.n * const)


def _score_weights(b: np.ndarray, terms: _Terms, alpha: float, rho: float) -> np.ndarray:
    # d/d eta of one log-density term: alpha + r1 - (2 alpha + 1) w, where
    # r1 = b e^eta / D1 and w = b e^eta (D1 - 2 rho (1 - b)) / D2.
    den = terms.a2 - rho * terms.b2
    if np.any(den <= 0.0):
        idx = int(np.argmax(den <= 0.0))
        raise NumericalDomainError("non-positive D2 in score", index=idx)
    r1 = terms.g1 / terms.d1s
    w = terms.g1 * (terms.d1s - 2.0 * rho * (1.0 - b) * terms.sb) / den
    return alpha + r1 - (2.0 * alpha + 1.0) * w


def score_gamma(data: Dataset, params: RcgParams) -> np.ndarray:
    """Analytic gradient of the log-likelihood with respect to gamma."""
    eta = _eta(data, params)
    terms = _terms(data.b, eta)
    weights = _score_weights(data.b, terms, params.alpha, params.rho)
    return data.X.T @ weights


def observed_information(data: Dataset, params: RcgParams) -> np.ndarray:
    """Observed information J = -d^2 loglik / d gamma d gamma', gamma block only.

    Per observation the curvature weight is
        -r1 (1 - r1) + (2 alpha + 1) (w + q) - 2 (2 alpha + 1) w^2
    with q = (b e^eta)^2 / D2, multiplied into X_i X_i'.  Symmetric by
    construction; symmetrized exactly against rounding.
    """
    alpha, rho = params.alpha, params.rho
    eta = _eta(data, params)
    terms = _terms(data.b, eta)
    den = terms.a2 - rho * terms.b2
    if np.any(den <= 0.0):
        idx = int(np.argmax(den <= 0.0))
        raise NumericalDomainError("non-positive D2 in information", index=idx)
    r1 = terms.g1 / terms.d1s
    w = terms.g1 * (terms.d1s - 2.0 * rho * (1.0 - data.b) * terms.sb) / den
    q = terms.g1 * terms.g1 / den
    h = -r1 * (1.0 - r1) + (2.0 * alpha + 1.0) * (w + q) - 2.0 * (2.0 * alpha + 1.0) * w * w
    J = data.X.T @ (h[:, None] * data.X)
    return 0.5 * (J + J.T)


def wald_tests(data: Dataset, params_hat: RcgParams) -> list[WaldStat]:
    """Two-sided Wald tests for each non-intercept coefficient.

    Standard errors are the square roots of the diagonal of the inverse
    observed information evaluated at the fitted (alpha, rho, gamma); the
    intercept is not tested.
    """
    J = observed_information(data, params_hat)
    try:
        J_inv = np.linalg.inv(J)
    except np.linalg.LinAlgError as exc:
        raise SingularInformationError(str(exc)) from exc
    diag = np.diag(J_inv)
    if not np.all(np.isfinite(diag)) or np.any(diag[1:] <= 0.0):
        raise SingularInformationError("inverse information has non-positive diagonal")
    out = []
    for k in range(1, data.X.shape[1]):
        se = math.sqrt(diag[k])
        est = float(params_hat.gamma[k])
        z = est / se
        p = math.erfc(abs(z) / math.sqrt(2.0))
        out.append(WaldStat(data.names[k], est, se, z, p))
    return out
