"""Poisson probabilities and moments of truncated Poisson variables.

Everything here works on a Poisson mean ``mu`` (``lambda * T`` when used by
the policy formulas).  For ``Y ~ Poisson(mu)`` and a positive integer ``q``,
``Y_q = min(Y, q)`` is the truncated variable and ``Ytilde`` is ``Y``
conditioned on ``Y > 0`` (zero-truncated).

Truncated moments are exact finite sums over ``k < q`` plus a ``q * P(Y >= q)``
tail term.  Quantities that vanish as the truncation becomes inactive
(``E[Y] - E[Y_q]``, ``VAR[Y] - VAR[Y_q]``, ``E[Y_q] - VAR[Y_q]``) are built from
upward tail sums over ``k > q`` instead of subtracting two nearly equal
numbers, so they keep full relative precision even when they are 1e-100.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

# Above this mean exp(-mu) is too close to underflow to seed the recurrence.
RECURRENCE_MAX_MU = 700.0
MAX_MU = 1.0e4
# Separates genuine ties from floating-point noise in strict comparisons.
STRICT_SLACK = 1e-12


class PoissonRangeError(ValueError):
    """Poisson mean outside the supported range."""


class DegenerateConditioningError(ValueError):
    """Conditioning on ``Y > 0`` when that event has probability zero."""


class ConsistencyError(ArithmeticError):
    """Two independent computations of the same quantity disagree."""


@dataclass(frozen=True)
class TruncatedMoments:
    mu: float
    q: int
    m1: float
    m2: float
    var: float


def _check_mu(mu: float) -> float:
    mu = float(mu)
    if not math.isfinite(mu):
        raise PoissonRangeError(f"Poisson mean must be finite, got {mu}")
    if mu < 0:
        raise PoissonRangeError(f"Poisson mean must be nonnegative, got {mu}")
    if mu > MAX_MU:
        raise PoissonRangeError(f"Poisson mean {mu} exceeds supported maximum {MAX_MU:g}")
    return mu


def _check_level(q: int, name: str = "q") -> int:
    if isinstance(q, bool) or int(q) != q:
        raise ValueError(f"{name} must be an integer, got {q!r}")
    q = int(q)
    if q < 1:
        raise ValueError(f"{name} must be a positive integer, got {q}")
    return q


def _support_end(mu: float, start: float = 0.0) -> int:
    """Index past which Poisson mass is below double precision relative to the bulk."""
    return int(math.ceil(max(start, mu) + 12.0 * math.sqrt(mu) + 60.0))


def _pmf_block(mu: float, lo: int, hi: int) -> np.ndarray:
    """Poisson masses for ``k = lo, ..., hi - 1``."""
    if hi <= lo:
        return np.zeros(0)
    k = np.arange(lo, hi, dtype=float)
    if mu == 0.0:
        return (k == 0).astype(float)
    if mu <= RECURRENCE_MAX_MU:
        if lo < 16:
            # exp(-mu) is still a normal double here, so take the exact product.
            start = math.exp(-mu) * math.prod(mu / j for j in range(1, lo + 1))
        else:
            start = math.exp(_log_pmf_scalar(mu, lo))
        # Seeding the running product with the first mass keeps every partial
        # product a probability, so nothing overflows on the way to the mode.
        factors = np.empty(hi - lo)
        factors[0] = start
        factors[1:] = mu / k[1:]
        return np.cumprod(factors)
    return np.exp(_log_pmf_saddle(mu, k))


def _bd0_scaled(d: np.ndarray) -> np.ndarray:
    """``(1 + d) log(1 + d) - d``, with a series where the two terms nearly cancel."""
    out = np.empty_like(d)
    small = np.abs(d) < 0.1
    ds = d[small]
    # sum_{n>=2} (-1)^n d^n / (n (n - 1)); |d| < 0.1 so 24 terms reach 1e-24.
    acc = np.zeros_like(ds)
    power = ds * ds
    for n in range(2, 26):
        acc += (1.0 if n % 2 == 0 else -1.0) * power / (n * (n - 1))
        power = power * ds
    out[small] = acc
    db = d[~small]
    out[~small] = (1.0 + db) * np.log1p(db) - db
    return out


def _stirlerr(k):
    """``log(k!) - [(k + 1/2) log k - k + log(2 pi) / 2]`` for ``k >= 16``."""
    inv = 1.0 / k
    inv2 = inv * inv
    series = 1 / 156
    for c in (-691 / 360360, 1 / 1188, -1 / 1680, 1 / 1260, -1 / 360, 1 / 12):
        series = c + inv2 * series
    return inv * series


def _log_pmf_scalar(mu: float, k: int) -> float:
    """Scalar twin of :func:`_log_pmf_saddle`, for ``k >= 16``."""
    d = k / mu - 1.0
    if abs(d) < 0.1:
        bd0 = math.fsum((1.0 if n % 2 == 0 else -1.0) * d**n / (n * (n - 1)) for n in range(2, 26))
    else:
        bd0 = (1.0 + d) * math.log1p(d) - d
    return -0.5 * math.log(2.0 * math.pi * k) - _stirlerr(float(k)) - mu * bd0


def _log_pmf_saddle(mu: float, k: np.ndarray) -> np.ndarray:
    """Log masses in saddle-point form, free of the ``k log mu - mu`` cancellation.

    Used for ``mu > 700``, where the naive exponent loses about ``mu * eps``.
    """
    out = np.empty_like(k)
    tiny = k < 16
    # Far below a large mean these masses are below 1e-280 and never matter.
    out[tiny] = k[tiny] * math.log(mu) - mu - gammaln(k[tiny] + 1.0)
    kk = k[~tiny]
    out[~tiny] = (-0.5 * np.log(2.0 * math.pi * kk) - _stirlerr(kk)
                  - mu * _bd0_scaled(kk / mu - 1.0))
    return out


def pmf(mu: float, k: int) -> float:
    """``P(Y = k)`` via ``p_k = p_{k-1} * mu / k`` from ``p_0 = exp(-mu)``.

    For ``mu > 700`` the masses are evaluated in log space instead.
    """
    mu = _check_mu(mu)
    if isinstance(k, bool) or int(k) != k or k < 0:
        raise ValueError(f"k must be a nonnegative integer, got {k!r}")
    k = int(k)
    if mu > RECURRENCE_MAX_MU:
        return float(_pmf_block(mu, k, k + 1)[0])
    return float(_pmf_block(mu, 0, k + 1)[-1])


def tail_masses(mu: float, n: int) -> np.ndarray:
    """Masses ``p_k`` for ``k = n, n + 1, ...`` until they are negligible."""
    return _pmf_block(mu, n, max(_support_end(mu, n), n + 1))


def lower_masses(mu: float, n: int) -> np.ndarray:
    """Masses ``p_k`` for ``k < n``; indices beyond the support end are dropped."""
    return _pmf_block(mu, 0, min(n, _support_end(mu)))


def survival(mu: float, n: int) -> float:
    """``P(Y >= n)``.

    Summed upward from ``n`` when ``n`` lies to the right of the mean, and as
    one minus the lower sum otherwise; both avoid subtracting nearly equal terms.
    """
    mu = _check_mu(mu)
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise ValueError(f"n must be a nonnegative integer, got {n!r}")
    n = int(n)
    if n == 0:
        return 1.0
    if n > mu:
        return math.fsum(tail_masses(mu, n))
    return max(0.0, 1.0 - math.fsum(lower_masses(mu, n)))


def truncated_mean(mu: float, q: int) -> float:
    """``E[min(Y, q)]``."""
    mu = _check_mu(mu)
    q = _check_level(q)
    p = lower_masses(mu, q)
    k = np.arange(p.size, dtype=float)
    return math.fsum(k * p) + q * survival(mu, q)


def truncated_second_moment(mu: float, q: int) -> float:
    """``E[min(Y, q)**2]``."""
    mu = _check_mu(mu)
    q = _check_level(q)
    p = lower_masses(mu, q)
    k = np.arange(p.size, dtype=float)
    return math.fsum(k * k * p) + q * q * survival(mu, q)


def truncated_moments(mu: float, q: int) -> TruncatedMoments:
    m1 = truncated_mean(mu, q)
    m2 = truncated_second_moment(mu, q)
    # Bernoulli-like cases can round m2 - m1**2 a hair below zero.
    var = max(0.0, m2 - m1 * m1)
    return TruncatedMoments(mu=float(mu), q=int(q), m1=m1, m2=m2, var=var)


def excess_moments(mu: float, q: int) -> tuple[float, float, float]:
    """Moments of the truncation loss ``D = Y - Y_q = (Y - q) 1{Y > q}``.

    Returns ``(E[D], E[D**2], E[Y**2] - E[Y_q**2])``, each as a sum over
    ``k > q`` only.
    """
    mu = _check_mu(mu)
    q = _check_level(q)
    p = tail_masses(mu, q + 1)
    k = np.arange(q + 1, q + 1 + p.size, dtype=float)
    excess = k - q
    return (
        math.fsum(excess * p),
        math.fsum(excess * excess * p),
        math.fsum(excess * (k + q) * p),
    )


def var_var_gap_routes(mu: float, M: int) -> tuple[float, float]:
    """The two independent evaluations behind :func:`var_var_gap`."""
    mu = _check_mu(mu)
    M = _check_level(M, "M")
    d1, e2, d2 = excess_moments(mu, M)
    direct = d2 - d1 * (2.0 * mu - d1)
    decomposed = (e2 - d1 * d1) + 2.0 * (M - truncated_mean(mu, M)) * d1
    return direct, decomposed


def var_var_gap(mu: float, M: int, rtol: float = 1e-10) -> float:
    """``VAR[Y] - VAR[Y_M]``, computed two ways and cross-checked.

    The first route works from the moments themselves: with ``d1 = E[Y] - E[Y_M]``
    and ``d2 = E[Y**2] - E[Y_M**2]``, the gap is ``d2 - d1 * (2 mu - d1)``.  The
    second is the decomposition ``VAR[Y - Y_M] + 2 (M - E[Y_M]) (E[Y] - E[Y_M])``.
    Raises ConsistencyError if they differ by more than ``rtol`` relative.
    """
    direct, decomposed = var_var_gap_routes(mu, M)
    scale = max(abs(direct), abs(decomposed))
    if abs(direct - decomposed) > rtol * scale:
        raise ConsistencyError(
            f"VAR gap mismatch at mu={mu}, M={M}: {direct!r} vs {decomposed!r}"
        )
    return decomposed


def mean_minus_variance(mu: float, N: int) -> float:
    """``E[Y_N] - VAR[Y_N]``, positive for every ``N`` and vanishing as ``N`` grows."""
    mu = _check_mu(mu)
    N = _check_level(N, "N")
    if N < mu:
        tm = truncated_moments(mu, N)
        return tm.m1 - (tm.m2 - tm.m1 * tm.m1)
    d1, _, d2 = excess_moments(mu, N)
    # Untruncated Poisson has E[Y] = VAR[Y]; what is left comes from the tail.
    return d2 - d1 * (1.0 + 2.0 * mu - d1)


def _positive_mass(mu: float) -> float:
    if mu <= 0.0:
        raise DegenerateConditioningError("P(Y > 0) is zero when mu = 0")
    z = -math.expm1(-mu)
    if z <= 0.0:
        raise DegenerateConditioningError(f"P(Y > 0) underflows at mu={mu}")
    return z


def zero_truncated_mean(mu: float, q: int) -> float:
    """``E[min(Ytilde, q)]``; ``min(Y, q)`` vanishes exactly when ``Y = 0``."""
    mu = _check_mu(mu)
    return truncated_mean(mu, q) / _positive_mass(mu)


def zero_truncated_second_moment(mu: float, q: int) -> float:
    mu = _check_mu(mu)
    return truncated_second_moment(mu, q) / _positive_mass(mu)


def zero_truncated_survival(mu: float, n: int) -> float:
    """``P(Ytilde > n) = P(Y > n) / P(Y > 0)`` for ``n >= 1``."""
    mu = _check_mu(mu)
    n = _check_level(n, "n")
    return survival(mu, n + 1) / _positive_mass(mu)


def zero_truncated_cdf(mu: float, n: int) -> float:
    """``P(Ytilde <= n)``, the complement of :func:`zero_truncated_survival` without cancellation."""
    mu = _check_mu(mu)
    n = _check_level(n, "n")
    p = _pmf_block(mu, 1, n + 1) if mu > 0 else np.zeros(0)
    return math.fsum(p) / _positive_mass(mu)


def moment_ratio(mu: float, N: int) -> float:
    """``E[Y_N**2] / E[Y_N]``, which lies in ``[1, N]``."""
    mu = _check_mu(mu)
    N = _check_level(N, "N")
    if mu == 0.0:
        raise PoissonRangeError("moment ratio needs mu > 0")
    return truncated_second_moment(mu, N) / truncated_mean(mu, N)


def moment_ratio_deficit(mu: float, N: int) -> float:
    """``N - E[Y_N**2] / E[Y_N] = E[Y_N (N - Y_N)] / E[Y_N]``, summed over ``k < N``."""
    mu = _check_mu(mu)
    N = _check_level(N, "N")
    if mu == 0.0:
        raise PoissonRangeError("moment ratio needs mu > 0")
    p = lower_masses(mu, N)
    k = np.arange(p.size, dtype=float)
    return math.fsum(k * (N - k) * p) / truncated_mean(mu, N)
