"""Maximum-likelihood fitting of the ratio-of-correlated-gammas model.

The primary optimizer is gradient boosting with componentwise linear base
learners: each iteration fits every design column to the negative risk
gradient by least squares, updates only the best-fitting column by a small
shrinkage step, and refreshes the hyperparameters alpha and rho by
one-dimensional golden-section likelihood maximization on transformed
scales.  A direct quasi-Newton optimizer over (log alpha, logit rho, gamma)
serves as an independent cross-check, and ordinary-least-squares regression
of logit-transformed responses plus a logit-link beta regression provide
the two baseline models.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import digamma, gammaln

from .errors import DomainError, NumericalDomainError, RankDeficiencyError
from .rcg import Dataset, RcgParams, log_likelihood, observed_information, score_gamma
from .rcg import _terms as _rcg_terms
from .rcg import _score_weights

__all__ = [
    "FitConfig",
    "FitResult",
    "BaselineParams",
    "fit_rcg_boost",
    "fit_rcg_direct",
    "fit_mvalue",
    "fit_beta_regression",
]

LOG_ALPHA_BOUNDS = (-7.0, 7.0)
LOGIT_RHO_BOUNDS = (-16.0, 16.0)
_GOLDEN_WINDOW = 2.0
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class FitConfig:
    """Optimizer settings.

    step_length is the boosting shrinkage in (0, 1]; convergence is declared
    once the relative log-likelihood improvement, measured against
    max(1, |previous value|), stays below rel_tol for patience consecutive
    iterations.  alpha and rho are refreshed every hyper_update_every
    boosting iterations.
    """

    step_length: float = 0.1
    max_iter: int = 5000
    rel_tol: float = 1e-8
    patience: int = 10
    alpha_init: float = 1.0
    rho_init: float = 0.05
    gamma_init: Optional[np.ndarray] = None
    hyper_update_every: int = 1

    def __post_init__(self):
        if not (0.0 < self.step_length <= 1.0):
            raise DomainError(f"step_length must lie in (0, 1], got {self.step_length!r}")
        if self.max_iter < 1:
            raise DomainError(f"max_iter must be >= 1, got {self.max_iter!r}")
        if not (self.rel_tol > 0.0):
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol!r}")
        if self.patience < 1:
            raise DomainError(f"patience must be >= 1, got {self.patience!r}")
        if not (self.alpha_init > 0.0):
            raise DomainError(f"alpha_init must be positive, got {self.alpha_init!r}")
        if not (0.0 <= self.rho_init < 1.0):
            raise DomainError(f"rho_init must lie in [0, 1), got {self.rho_init!r}")
        if self.hyper_update_every < 1:
            raise DomainError(
                f"hyper_update_every must be >= 1, got {self.hyper_update_every!r}"
            )


@dataclass
class FitResult:
    params_hat: RcgParams
    log_lik: float
    n_iter: int
    converged: bool
    boundary_flags: set[str] = field(default_factory=set)
    trace: Optional[list[float]] = None
    message: str = ""


@dataclass
class BaselineParams:
    """Fitted baseline model: OLS on logit2-transformed responses or a
    logit-link beta regression with scalar precision."""

    model_kind: str
    coef: np.ndarray
    std_errors: np.ndarray
    sigma2: Optional[float] = None
    phi: Optional[float] = None
    log_lik: Optional[float] = None
    converged: bool = True


def _expit(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def _check_full_rank(X: np.ndarray):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficiencyError(
            f"design matrix with {X.shape[1]} columns has deficient rank"
        )


def _golden_max(f, lo: float, hi: float, tol: float = 1e-8):
    """Golden-section maximizer of a scalar function on [lo, hi]."""
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


class _Workspace:
    """Cached per-eta quantities so hyperparameter searches stay cheap."""

    def __init__(self, data: Dataset):
        self.b = data.b
        self.X = data.X
        self.n = data.n
        self.log_b1b_sum = float(np.log(self.b * (1.0 - self.b)).sum())
        self.colsq = (self.X * self.X).sum(axis=0)

    def set_eta(self, eta: np.ndarray):
        self.eta = eta
        self.terms = _rcg_terms(self.b, eta)
        self.sum_eta = float(eta.sum())
        self.sum_log_d1 = float(self.terms.log_d1.sum())
        self.sum_half2 = 2.0 * float(self.terms.half.sum())

    def sum_log_d2(self, rho: float) -> float:
        d2 = self.terms.a2 - rho * self.terms.b2
        if d2.min() <= 0.0:
            raise NumericalDomainError(
                "non-positive D2", index=int(np.argmin(d2))
            )
        return self.sum_half2 + float(np.log(d2).sum())

    def loglik(self, alpha: float, rho: float, s2: Optional[float] = None) -> float:
        if s2 is None:
            s2 = self.sum_log_d2(rho)
        const = gammaln(2.0 * alpha) - 2.0 * gammaln(alpha) + alpha * math.log1p(-rho)
        return float(
            self.n * const
            + alpha * self.sum_eta
            + self.sum_log_d1
            + (alpha - 1.0) * self.log_b1b_sum
            - (alpha + 0.5) * s2
        )

    def score_eta(self, alpha: float, rho: float) -> np.ndarray:
        return _score_weights(self.b, self.terms, alpha, rho)


def _refresh_alpha(ws: _Workspace, alpha: float, rho: float, ll: float):
    s2 = ws.sum_log_d2(rho)
    n = ws.n
    lin = ws.sum_eta + n * math.log1p(-rho) + ws.log_b1b_sum - s2
    const = ws.sum_log_d1 - ws.log_b1b_sum - 0.5 * s2

    def f(log_a: float) -> float:
        a = math.exp(log_a)
        return n * (gammaln(2.0 * a) - 2.0 * gammaln(a)) + a * lin + const

    la = math.log(alpha)
    lo = max(LOG_ALPHA_BOUNDS[0], la - _GOLDEN_WINDOW)
    hi = min(LOG_ALPHA_BOUNDS[1], la + _GOLDEN_WINDOW)
    cand, cand_ll = _golden_max(f, lo, hi)
    if cand_ll > ll:
        return math.exp(cand), cand_ll
    return alpha, ll


def _refresh_rho(ws: _Workspace, alpha: float, rho: float, ll: float):
    n = ws.n
    base = (
        n * (gammaln(2.0 * alpha) - 2.0 * gammaln(alpha))
        + alpha * ws.sum_eta
        + ws.sum_log_d1
        + (alpha - 1.0) * ws.log_b1b_sum
        - (alpha + 0.5) * ws.sum_half2
    )
    a2, b2 = ws.terms.a2, ws.terms.b2

    def f(logit_r: float) -> float:
        r = _expit(logit_r)
        d2 = a2 - r * b2
        if d2.min() <= 0.0:
            return -math.inf
        return base + n * alpha * math.log1p(-r) - (alpha + 0.5) * float(np.log(d2).sum())

    lr = _logit(rho)
    lo = max(LOGIT_RHO_BOUNDS[0], lr - _GOLDEN_WINDOW)
    hi = min(LOGIT_RHO_BOUNDS[1], lr + _GOLDEN_WINDOW)
    cand, cand_ll = _golden_max(f, lo, hi)
    if cand_ll > ll:
        return _expit(cand), cand_ll
    return rho, ll


def _boundary_flags(data: Dataset, alpha: float, rho: float) -> set[str]:
    flags: set[str] = set()
    lr = _logit(min(max(rho, 1e-300), 1.0 - 1e-16))
    if lr <= LOGIT_RHO_BOUNDS[0] + 0.1 or lr >= LOGIT_RHO_BOUNDS[1] - 0.1:
        flags.add("rho_at_boundary")
    la = math.log(alpha)
    if la <= LOG_ALPHA_BOUNDS[0] + 0.01 or la >= LOG_ALPHA_BOUNDS[1] - 0.01:
        flags.add("alpha_at_boundary")
    if data.n_clamped:
        flags.add(f"b_clamped:{data.n_clamped}")
    return flags


def _init_state(data: Dataset, config: FitConfig):
    if config.gamma_init is None:
        gamma = np.zeros(data.X.shape[1])
    else:
        gamma = np.asarray(config.gamma_init, dtype=float).copy()
        if gamma.shape != (data.X.shape[1],):
            raise DomainError(
                f"gamma_init has shape {gamma.shape}, design needs ({data.X.shape[1]},)"
            )
    rho = min(max(config.rho_init, _expit(LOGIT_RHO_BOUNDS[0])), _expit(LOGIT_RHO_BOUNDS[1]))
    alpha = min(max(config.alpha_init, math.exp(LOG_ALPHA_BOUNDS[0])), math.exp(LOG_ALPHA_BOUNDS[1]))
    return gamma, alpha, rho


def fit_rcg_boost(data: Dataset, config: FitConfig | None = None) -> FitResult:
    """Gradient boosting with componentwise linear base learners.

    Each iteration takes the gradient of the log-likelihood with respect to
    the linear predictor, fits it column by column via least squares, and
    moves only the best-fitting coefficient by step_length times its
    least-squares coefficient (halving the move if it would decrease the
    likelihood, so the trace is non-increasing in risk).  alpha and rho are
    refreshed by golden-section search on log/logit scales.

    Returns
    -------
    FitResult
        With ``trace`` holding the per-iteration log-likelihood values.
    """
    if config is None:
        config = FitConfig()
    _check_full_rank(data.X)
    gamma, alpha, rho = _init_state(data, config)
    ws = _Workspace(data)
    ws.set_eta(data.X @ gamma)
    ll = ws.loglik(alpha, rho)
    trace = [ll]
    stall = 0
    converged = False
    n_iter = 0
    for it in range(1, config.max_iter + 1):
        n_iter = it
        ll_prev = ll
        # componentwise least-squares fit to the risk gradient
        grad = ws.score_eta(alpha, rho)
        coef = (ws.X.T @ grad) / ws.colsq
        j = int(np.argmax(coef * coef * ws.colsq))
        step = config.step_length * coef[j]
        if step != 0.0:
            col = ws.X[:, j]
            cand_ws = copy.copy(ws)
            for _ in range(40):
                cand_ws.set_eta(ws.eta + step * col)
                try:
                    cand_ll = cand_ws.loglik(alpha, rho)
                except NumericalDomainError:
                    cand_ll = -math.inf
                if cand_ll >= ll:
                    gamma[j] += step
                    ws = cand_ws
                    ll = cand_ll
                    break
                step *= 0.5
        if it % config.hyper_update_every == 0:
            alpha, ll = _refresh_alpha(ws, alpha, rho, ll)
            rho, ll = _refresh_rho(ws, alpha, rho, ll)
        trace.append(ll)
        improvement = ll - ll_prev
        if improvement <= config.rel_tol * max(1.0, abs(ll_prev)):
            stall += 1
        else:
            stall = 0
        if stall >= config.patience:
            converged = True
            break
    params = RcgParams(alpha, rho, gamma)
    return FitResult(
        params_hat=params,
        log_lik=ll,
        n_iter=n_iter,
        converged=converged,
        boundary_flags=_boundary_flags(data, alpha, rho),
        trace=trace,
    )


def _solve_alpha(ws: _Workspace, rho: float) -> float:
    # d loglik / d alpha = 2n (psi(2a) - psi(a)) + C is strictly decreasing
    # in alpha, so the profile maximum is its unique root (or a bound).
    from scipy.optimize import brentq

    s2 = ws.sum_log_d2(rho)
    C = ws.sum_eta + ws.n * math.log1p(-rho) + ws.log_b1b_sum - s2

    def dll(log_a: float) -> float:
        a = math.exp(log_a)
        return 2.0 * ws.n * (digamma(2.0 * a) - digamma(a)) + C

    lo, hi = LOG_ALPHA_BOUNDS
    f_lo, f_hi = dll(lo), dll(hi)
    if f_lo <= 0.0:
        return math.exp(lo)
    if f_hi >= 0.0:
        return math.exp(hi)
    return math.exp(brentq(dll, lo, hi, xtol=1e-14, rtol=1e-15))


def _solve_rho(ws: _Workspace, alpha: float, rho: float) -> float:
    # d loglik / d rho = -n alpha / (1 - rho) + (alpha + 0.5) sum B/(A - rho B)
    from scipy.optimize import brentq

    a2, b2 = ws.terms.a2, ws.terms.b2

    def dll(logit_r: float) -> float:
        r = _expit(logit_r)
        den = a2 - r * b2
        if den.min() <= 0.0:
            return math.inf
        grad = -ws.n * alpha / (1.0 - r) + (alpha + 0.5) * float((b2 / den).sum())
        return grad * r * (1.0 - r)  # chain rule to the logit scale

    lo, hi = LOGIT_RHO_BOUNDS
    f_lo, f_hi = dll(lo), dll(hi)
    if f_lo <= 0.0:
        return _expit(lo)
    if f_hi >= 0.0:
        return _expit(hi)
    return _expit(brentq(dll, lo, hi, xtol=1e-13, rtol=1e-15))


def _profile_polish(data: Dataset, gamma: np.ndarray, alpha: float, rho: float,
                    fix_hypers: bool = False, max_rounds: int = 100):
    """Tighten an approximate solution to the exact stationary point.

    Cycles Newton steps on gamma (accepted on score-norm descent, which is
    immune to the likelihood's round-off plateau) with exact 1-d root solves
    of the analytic profile derivatives in alpha and rho.
    """
    ws = _Workspace(data)
    gamma = np.asarray(gamma, dtype=float).copy()
    for _ in range(max_rounds):
        change = 0.0
        params = RcgParams(alpha, rho, gamma)
        try:
            score = score_gamma(data, params)
            J = observed_information(data, params)
            delta = np.linalg.solve(J, score)
        except (NumericalDomainError, np.linalg.LinAlgError):
            break
        s_norm = float(np.max(np.abs(score)))
        step = 1.0
        for _ in range(30):
            cand = gamma + step * delta
            try:
                s_cand = score_gamma(data, RcgParams(alpha, rho, cand))
            except NumericalDomainError:
                step *= 0.5
                continue
            cand_norm = float(np.max(np.abs(s_cand)))
            if cand_norm <= s_norm or cand_norm < 1e-10 * data.n:
                change = max(change, step * float(np.max(np.abs(delta))))
                gamma = cand
                break
            step *= 0.5
        if not fix_hypers:
            ws.set_eta(data.X @ gamma)
            new_alpha = _solve_alpha(ws, rho)
            new_rho = _solve_rho(ws, new_alpha, rho)
            change = max(change, abs(new_alpha - alpha) / max(1.0, alpha),
                         abs(new_rho - rho))
            alpha, rho = new_alpha, new_rho
        if change < 1e-12:
            break
    ws.set_eta(data.X @ gamma)
    return gamma, alpha, rho, ws.loglik(alpha, rho)


def fit_rcg_direct(data: Dataset, config: FitConfig | None = None,
                   fix_hypers: bool = False) -> FitResult:
    """Direct maximum likelihood on (log alpha, logit rho, gamma).

    Quasi-Newton (L-BFGS-B) with the analytic gamma score and central
    finite differences for the two transformed hyperparameters, followed by
    a Newton polish on gamma.  Serves as the cross-check oracle for the
    boosting path.  With ``fix_hypers`` the hyperparameters stay at their
    initial values and only gamma is optimized.
    """
    if config is None:
        config = FitConfig()
    _check_full_rank(data.X)
    gamma0, alpha0, rho0 = _init_state(data, config)
    x0 = np.concatenate(([math.log(alpha0), _logit(rho0)], gamma0))
    bounds = [LOG_ALPHA_BOUNDS, LOGIT_RHO_BOUNDS] + [(None, None)] * len(gamma0)
    if fix_hypers:
        bounds[0] = (x0[0], x0[0])
        bounds[1] = (x0[1], x0[1])

    def unpack(u):
        return RcgParams(math.exp(u[0]), _expit(u[1]), u[2:])

    def negll(u):
        try:
            return -log_likelihood(data, unpack(u))
        except NumericalDomainError:
            return 1e300

    def grad(u):
        g = np.empty_like(u)
        try:
            g[2:] = -score_gamma(data, unpack(u))
        except NumericalDomainError:
            g[2:] = 0.0
        for i in (0, 1):
            h = 1e-6 * max(1.0, abs(u[i]))
            up, dn = u.copy(), u.copy()
            up[i] += h
            dn[i] -= h
            g[i] = (negll(up) - negll(dn)) / (2.0 * h)
        return g

    res = minimize(
        negll,
        x0,
        jac=grad,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": config.max_iter, "ftol": 1e-13, "gtol": 1e-9},
    )
    alpha = math.exp(res.x[0])
    rho = _expit(res.x[1])
    gamma, alpha, rho, ll = _profile_polish(
        data, res.x[2:].copy(), alpha, rho, fix_hypers=fix_hypers
    )
    flags = _boundary_flags(data, alpha, rho)
    converged = bool(res.success)
    message = "" if converged else f"optimizer_failure: {res.message}"
    if not converged:
        flags.add("optimizer_failure")
    return FitResult(
        params_hat=RcgParams(alpha, rho, gamma),
        log_lik=ll,
        n_iter=int(res.nit),
        converged=converged,
        boundary_flags=flags,
        trace=None,
        message=message,
    )


def fit_mvalue(data: Dataset) -> BaselineParams:
    """Ordinary least squares of log2(b / (1 - b)) on the design matrix.

    Coefficient standard errors use the unbiased residual-variance
    estimator; the stored log-likelihood is the Gaussian likelihood of the
    transformed responses at the ML variance.
    """
    _check_full_rank(data.X)
    X = data.X
    y = np.log2(data.b / (1.0 - data.b))
    coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    rss = float(resid @ resid)
    n, k = X.shape
    dof = n - k
    sigma2 = rss / dof if dof > 0 else 0.0
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(np.clip(np.diag(xtx_inv), 0.0, None) * sigma2)
    if rss > 0.0 and n > 0:
        s2_ml = rss / n
        log_lik = -0.5 * n * (math.log(2.0 * math.pi * s2_ml) + 1.0)
    else:
        log_lik = math.inf
    return BaselineParams(
        model_kind="m_value", coef=coef, std_errors=se, sigma2=sigma2, log_lik=log_lik
    )


def _beta_negll_grad(u: np.ndarray, y: np.ndarray, X: np.ndarray):
    k = X.shape[1]
    coef, log_phi = u[:k], u[k]
    phi = math.exp(log_phi)
    eta = X @ coef
    mu = 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))
    mu = np.clip(mu, 1e-12, 1.0 - 1e-12)
    a = mu * phi
    c = (1.0 - mu) * phi
    log_y = np.log(y)
    log_1my = np.log1p(-y)
    ll = float(
        np.sum(gammaln(phi) - gammaln(a) - gammaln(c) + (a - 1.0) * log_y + (c - 1.0) * log_1my)
    )
    ystar = log_y - log_1my
    mustar = digamma(a) - digamma(c)
    dmu = mu * (1.0 - mu)
    g_coef = X.T @ (phi * (ystar - mustar) * dmu)
    g_phi = phi * float(np.sum(mu * (ystar - mustar) + log_1my + digamma(phi) - digamma(c)))
    grad = np.concatenate((g_coef, [g_phi]))
    return -ll, -grad


def fit_beta_regression(data: Dataset, max_iter: int = 500) -> BaselineParams:
    """Beta regression with logit mean link and scalar log-parameterized
    precision, fitted by quasi-Newton maximum likelihood.

    Standard errors come from the inverse observed information of the full
    parameter vector, obtained by differencing the analytic score.
    """
    _check_full_rank(data.X)
    X, y = data.X, data.b
    coef0, _, _, _ = np.linalg.lstsq(X, np.log(y / (1.0 - y)), rcond=None)
    mu0 = 1.0 / (1.0 + np.exp(-(X @ coef0)))
    resid_var = float(np.var(y - mu0)) or 1e-4
    phi0 = max(float(np.mean(mu0 * (1.0 - mu0))) / resid_var - 1.0, 0.5)
    u0 = np.concatenate((coef0, [min(math.log(phi0), 20.0)]))
    # log-precision kept below 20 so degenerate (near-constant) responses
    # cannot push the likelihood to overflow
    res = minimize(
        _beta_negll_grad,
        u0,
        args=(y, X),
        jac=True,
        method="L-BFGS-B",
        bounds=[(None, None)] * X.shape[1] + [(-20.0, 20.0)],
        options={"maxiter": max_iter, "ftol": 1e-13, "gtol": 1e-10},
    )
    u = res.x.copy()
    # Newton polish on the full parameter vector via differenced score
    for _ in range(10):
        f0, g0 = _beta_negll_grad(u, y, X)
        H = np.empty((len(u), len(u)))
        h = 1e-6 * np.maximum(1.0, np.abs(u))
        for i in range(len(u)):
            up, dn = u.copy(), u.copy()
            up[i] += h[i]
            dn[i] -= h[i]
            H[:, i] = (_beta_negll_grad(up, y, X)[1] - _beta_negll_grad(dn, y, X)[1]) / (2.0 * h[i])
        H = 0.5 * (H + H.T)
        try:
            delta = np.linalg.solve(H, g0)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        moved = False
        for _ in range(30):
            cand = u - scale * delta
            cand[-1] = min(max(cand[-1], -20.0), 20.0)
            if _beta_negll_grad(cand, y, X)[0] <= f0:
                u = cand
                moved = True
                break
            scale *= 0.5
        if not moved or abs(f0 - _beta_negll_grad(u, y, X)[0]) <= 1e-13 * max(1.0, abs(f0)):
            break
    f_final, _ = _beta_negll_grad(u, y, X)
    k = X.shape[1]
    # observed information of the negative log-likelihood
    H = np.empty((len(u), len(u)))
    h = 1e-6 * np.maximum(1.0, np.abs(u))
    for i in range(len(u)):
        up, dn = u.copy(), u.copy()
        up[i] += h[i]
        dn[i] -= h[i]
        H[:, i] = (_beta_negll_grad(up, y, X)[1] - _beta_negll_grad(dn, y, X)[1]) / (2.0 * h[i])
    H = 0.5 * (H + H.T)
    try:
        cov = np.linalg.inv(H)
        se = np.sqrt(np.clip(np.diag(cov)[:k], 0.0, None))
        ok = True
    except np.linalg.LinAlgError:
        se = np.full(k, np.nan)
        ok = False
    return BaselineParams(
        model_kind="beta_regression",
        coef=u[:k],
        std_errors=se,
        phi=math.exp(u[k]),
        log_lik=-f_final,
        converged=bool(res.success) and ok,
    )
