"""Numerically stable special functions.

Log-gamma, the log of the modified Bessel function of the first kind, and
the Gauss hypergeometric series, at the accuracy the correlated-gamma
density and its verification suite require.  All functions are pure and
safe to call concurrently.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, NonConvergenceError

__all__ = ["log_gamma", "log_bessel_i", "gauss_2f1"]

# log I_nu(x) branch split: ascending series up to max(30, 2*nu), expansions above.
_SERIES_X_MAX = 30.0
_SERIES_CHUNK = 128
_SERIES_MAX_TERMS = 200_000
_HYP2F1_MAX_TERMS = 1_000_000
_HYP2F1_RTOL = 1e-15


def log_gamma(x: float) -> float:
    """Natural log of the gamma function for positive real ``x``.

    Raises
    ------
    DomainError
        If ``x`` is not a positive finite number.
    """
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"log_gamma requires x > 0, got {x!r}")
    return float(gammaln(x))


def _debye_u_polynomials(k_max: int):
    """Polynomial coefficients of the u_k appearing in the large-order
    expansion of I_nu (DLMF 10.41.3), built from the standard recurrence

        u_{k+1}(t) = t^2 (1 - t^2)/2 * u_k'(t) + 1/8 * int_0^t (1 - 5 s^2) u_k(s) ds.

    Returns a list of (powers, coefficients) float arrays, index k = 0..k_max.
    """
    polys = [{0: Fraction(1)}]
    for _ in range(k_max):
        u = polys[-1]
        new: dict[int, Fraction] = {}
        for p, c in u.items():
            if p:
                new[p + 1] = new.get(p + 1, Fraction(0)) + Fraction(p, 2) * c
                new[p + 3] = new.get(p + 3, Fraction(0)) - Fraction(p, 2) * c
        for p, c in u.items():
            new[p + 1] = new.get(p + 1, Fraction(0)) + c / Fraction(8 * (p + 1))
            new[p + 3] = new.get(p + 3, Fraction(0)) - 5 * c / Fraction(8 * (p + 3))
        polys.append({p: c for p, c in new.items() if c})
    out = []
    for poly in polys:
        powers = np.array(sorted(poly), dtype=float)
        coeffs = np.array([float(poly[int(p)]) for p in powers])
        out.append((powers, coeffs))
    return out


_DEBYE_U = _debye_u_polynomials(12)


def _log_bessel_i_series(nu: float, x: float) -> float:
    # Ascending series in log space; all terms positive so log-sum-exp is exact.
    log_half_x = math.log(0.5 * x)
    log_peak = -math.inf
    chunks = []
    for start in range(0, _SERIES_MAX_TERMS, _SERIES_CHUNK):
        k = np.arange(start, start + _SERIES_CHUNK, dtype=float)
        log_t = (2.0 * k + nu) * log_half_x - gammaln(k + 1.0) - gammaln(nu + k + 1.0)
        chunks.append(log_t)
        block_max = float(log_t.max())
        log_peak = max(log_peak, block_max)
        # terms are unimodal in k; once a whole block is negligible we are done
        if block_max < log_peak - 46.0 and k[0] > 0.5 * x:
            break
    else:
        raise NonConvergenceError(
            f"Bessel series did not converge for nu={nu}, x={x}"
        )
    log_t = np.concatenate(chunks)
    return log_peak + math.log(float(np.exp(log_t - log_peak).sum()))


def _log_bessel_i_hankel(nu: float, x: float) -> float:
    # Large-argument expansion; adaptive truncation at the smallest term.
    mu = 4.0 * nu * nu
    total = 1.0
    term = 1.0
    prev = abs(term)
    for k in range(1, 400):
        term *= -(mu - (2.0 * k - 1.0) ** 2) / (8.0 * x * k)
        if abs(term) >= prev:
            break
        total += term
        prev = abs(term)
        if abs(term) < 1e-18 * abs(total):
            break
    return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(total)


def _log_bessel_i_uniform(nu: float, x: float) -> float:
    # Large-order uniform expansion (DLMF 10.41.3).
    z = x / nu
    sq = math.hypot(1.0, z)
    t = 1.0 / sq
    eta = sq + math.log(z / (1.0 + sq))
    total = 0.0
    for k, (powers, coeffs) in enumerate(_DEBYE_U):
        u_k = float(np.sum(coeffs * t**powers))
        total += u_k / nu**k
    return (
        nu * eta
        - 0.5 * math.log(2.0 * math.pi * nu)
        - 0.5 * math.log(sq)
        + math.log(total)
    )


def _log_bessel_i_impl(nu: float, x: float) -> float:
    # Internal extension to nu > -1: the ascending series keeps all-positive
    # terms there and the large-argument expansion is order-agnostic, which
    # the bivariate gamma density needs for shapes below one.
    if not math.isfinite(nu) or nu <= -1.0:
        raise DomainError(f"order must exceed -1, got {nu!r}")
    if not math.isfinite(x) or x < 0.0:
        raise DomainError(f"log_bessel_i requires x >= 0, got {x!r}")
    if x == 0.0:
        if nu == 0.0:
            return 0.0
        return -math.inf if nu > 0.0 else math.inf
    if x <= max(_SERIES_X_MAX, 2.0 * nu):
        return _log_bessel_i_series(nu, x)
    if nu <= math.sqrt(2.0 * x):
        return _log_bessel_i_hankel(nu, x)
    return _log_bessel_i_uniform(nu, x)


def log_bessel_i(nu: float, x: float) -> float:
    """Natural log of the modified Bessel function of the first kind, I_nu(x).

    Evaluates in log space so that arguments up to 1e5 do not overflow.
    The ascending series handles ``x <= max(30, 2*nu)``; above that the
    large-argument expansion is used when ``nu <= sqrt(2*x)`` and the
    uniform large-order expansion otherwise.

    Parameters
    ----------
    nu : float
        Order, must be >= 0.
    x : float
        Argument, must be >= 0.

    Returns
    -------
    float
        ``log(I_nu(x))``; ``-inf`` when ``x == 0`` and ``nu > 0``.
    """
    if not math.isfinite(nu) or nu < 0.0:
        raise DomainError(f"log_bessel_i requires nu >= 0, got {nu!r}")
    return _log_bessel_i_impl(nu, x)


def gauss_2f1(a: float, b: float, c: float, x: float) -> float:
    """Gauss hypergeometric function 2F1(a, b; c; x) by power series.

    Restricted to ``0 <= x < 1`` with ``c > 0``; terms are accumulated until
    the running term drops below 1e-15 of the partial sum.

    Raises
    ------
    NonConvergenceError
        If 1e6 terms do not reach the stopping criterion.
    """
    if not math.isfinite(c) or c <= 0.0:
        raise DomainError(f"gauss_2f1 requires c > 0, got {c!r}")
    if not 0.0 <= x < 1.0 or not math.isfinite(x):
        raise DomainError(f"gauss_2f1 requires 0 <= x < 1, got {x!r}")
    if x == 0.0:
        return 1.0
    total = 1.0
    term = 1.0
    for k in range(_HYP2F1_MAX_TERMS):
        term *= (a + k) * (b + k) / ((c + k) * (1.0 + k)) * x
        if term == 0.0:  # terminating (polynomial) case
            return total
        total += term
        if abs(term) < _HYP2F1_RTOL * abs(total):
            return total
    raise NonConvergenceError(
        f"gauss_2f1 series did not converge for a={a}, b={b}, c={c}, x={x}"
    )
