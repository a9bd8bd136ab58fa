"""Closed-form order statistics of the sample median.

Pure functions used as the analytical reference for the simulator: the
binomial law for a percentile falling between consecutive order statistics,
its normal approximation, and the normal laws for a peer's median (in
percentile space) and for the difference between two peers' medians.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Sequence

__all__ = [
    "OrderStatParams",
    "NormalLaw",
    "binomial_order_prob",
    "binomial_cdf",
    "normal_approx",
    "approx_is_valid",
    "median_percentile_law",
    "peer_difference_law",
    "value_space_median_std",
    "empirical_percentile",
]

# Above this sample size probabilities are evaluated in log space.
LOG_SPACE_THRESHOLD = 50

_LN_2PI = math.log(2.0 * math.pi)
_HALF_LN_2PI = 0.5 * _LN_2PI


@dataclass(frozen=True)
class OrderStatParams:
    """Sample size ``M``, percentile fraction ``p`` and order index ``k``."""

    M: int
    p: float = 0.5
    k: int = 0

    def __post_init__(self):
        if isinstance(self.M, bool) or not isinstance(self.M, int) or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M!r}")
        if isinstance(self.k, bool) or not isinstance(self.k, int) or not 0 <= self.k <= self.M:
            raise ValueError(f"k must be an integer in [0, M={self.M}], got {self.k!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p!r}")


@dataclass(frozen=True)
class NormalLaw:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance >= 0.0:
            raise ValueError(f"variance must be non-negative, got {self.variance!r}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def cdf(self, x: float) -> float:
        """Normal CDF; a zero-variance law is a step at the mean."""
        if self.variance == 0.0:
            return 1.0 if x >= self.mean else 0.0
        z = (x - self.mean) / (self.std * math.sqrt(2.0))
        return 0.5 * math.erfc(-z)


# --- saddle-point binomial pmf -------------------------------------------------
#
# Loader's decomposition: log pmf = stirlerr terms - deviance terms - 0.5*log(2*pi*x*(n-x)/n).
# Each term is small and computed without cancellation, so relative accuracy
# holds even for M ~ 1e6 and for pmf values near the underflow limit.

_STIRLERR_TABLE = tuple(
    math.lgamma(n + 1.0) - (n + 0.5) * math.log(n) + n - _HALF_LN_2PI if n else 0.0
    for n in range(16)
)


def _stirlerr(n: int) -> float:
    """log(n!) - log(sqrt(2*pi*n) * (n/e)^n) for integer n >= 1."""
    if n <= 15:
        return _STIRLERR_TABLE[n]
    s0, s1, s2, s3, s4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188
    nn = float(n) * n
    if n > 500:
        return (s0 - s1 / nn) / n
    if n > 80:
        return (s0 - (s1 - s2 / nn) / nn) / n
    if n > 35:
        return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n
    return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n


def _bd0(x: float, np_: float) -> float:
    """Deviance term x*log(x/np) + np - x, stable when x is close to np."""
    if abs(x - np_) < 0.1 * (x + np_):
        v = (x - np_) / (x + np_)
        s = (x - np_) * v
        ej = 2.0 * x * v
        v *= v
        j = 1
        while True:
            ej *= v
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
            j += 1
    return x * math.log(x / np_) + np_ - x


def _log_space_pmf(k: int, n: int, p: float, q: float) -> float:
    if k == 0:
        lc = -_bd0(n, n * q) - n * p if p < 0.1 else n * math.log(q)
        return math.exp(lc)
    if k == n:
        lc = -_bd0(n, n * p) - n * q if q < 0.1 else n * math.log(p)
        return math.exp(lc)
    lc = (
        _stirlerr(n) - _stirlerr(k) - _stirlerr(n - k)
        - _bd0(k, n * p) - _bd0(n - k, n * q)
    )
    lf = _LN_2PI + math.log(k) + math.log1p(-k / n)
    return math.exp(lc - 0.5 * lf)


def binomial_order_prob(params: OrderStatParams) -> float:
    """C(M, k) p^k (1-p)^(M-k): probability that the 100p-th percentile
    lies between the k-th and (k+1)-th order statistics of M samples."""
    M, k, p = params.M, params.k, params.p
    q = 1.0 - p
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if q == 0.0:
        return 1.0 if k == M else 0.0
    if M <= LOG_SPACE_THRESHOLD:
        return math.comb(M, k) * p**k * q ** (M - k)
    return _log_space_pmf(k, M, p, q)


def binomial_cdf(M: int, p: float) -> list[float]:
    """Cumulative sums of binomial_order_prob over k = 0..M."""
    out = []
    acc = 0.0
    for k in range(M + 1):
        acc += binomial_order_prob(OrderStatParams(M, p, k))
        out.append(min(acc, 1.0))
    return out


def normal_approx(params: OrderStatParams) -> NormalLaw:
    M, p = params.M, params.p
    return NormalLaw(mean=M * p, variance=M * p * (1.0 - p))


def approx_is_valid(params: OrderStatParams) -> bool:
    """The normal approximation is trusted only when M p (1-p) > 9."""
    return params.M * params.p * (1.0 - params.p) > 9


def median_percentile_law(M: int) -> NormalLaw:
    """Percentile position of the median of M received estimates: N(0.5, 0.25/M)."""
    if M <= 2:
        raise ValueError(f"median percentile law needs M > 2, got {M}")
    return NormalLaw(mean=0.5, variance=0.25 / M)


def peer_difference_law(M_i: int, M_j: int) -> NormalLaw:
    """Difference of two peers' median percentiles: N(0, 0.25/M_i + 0.25/M_j)."""
    if M_i <= 2 or M_j <= 2:
        raise ValueError(f"peer difference law needs M > 2, got M_i={M_i}, M_j={M_j}")
    return NormalLaw(mean=0.0, variance=0.25 / M_i + 0.25 / M_j)


def value_space_median_std(sigma: float, M: int) -> float:
    """Asymptotic std of the median of M draws from N(mu, sigma^2)."""
    if M <= 2:
        raise ValueError(f"M must exceed 2, got {M}")
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return sigma * math.sqrt(math.pi / (2.0 * M))


def empirical_percentile(sorted_population: Sequence[float], x: float) -> float:
    """Fraction of ``sorted_population`` that is <= x."""
    if len(sorted_population) == 0:
        raise ValueError("population is empty")
    return bisect.bisect_right(sorted_population, x) / len(sorted_population)
