"""Integer-shape incomplete gamma and Poisson weights.

Only the regularized ratio P(n, t) = gamma(n, t) / Gamma(n) with integer
n >= 1 is needed, which is a finite Poisson sum:

    P(n, t) = 1 - exp(-t) * sum_{k<n} t**k / k!  =  sum_{k>=n} exp(-t) t**k / k!
"""
from __future__ import annotations

import math

import numpy as np

# Sum whichever Poisson series is the smaller one: past this point the lower
# sum 1 - P would lose relative accuracy in P to cancellation.
_COMPLEMENT_SWITCH = 0.5
# exp(-t) t^k / k! by plain recurrence stays finite up to about t = 700.
_RECURRENCE_LIMIT = 700.0


def _check_shape(n, name="n", minimum=1):
    if isinstance(n, bool) or int(n) != n or n < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {n!r}")


def _check_arg(t):
    if not math.isfinite(t) or t < 0:
        raise ValueError(f"t must be finite and nonnegative, got {t!r}")


def tail_terms(t: float) -> int:
    """Number of Poisson weights past the mode that can still exceed ~1e-17.

    ``t + 12 sqrt(t) + 40`` covers the upper tail of a Poisson(t) law to far
    below double precision for every t we care about (t <= a few hundred).
    """
    return int(math.ceil(t + 12.0 * math.sqrt(t) + 40.0))


def poisson_weight(k: int, t: float) -> float:
    """exp(-t) t**k / k!, evaluated in log space."""
    _check_shape(k, "k", minimum=0)
    _check_arg(t)
    if t == 0.0:
        return 1.0 if k == 0 else 0.0
    return math.exp(-t + k * math.log(t) - math.lgamma(k + 1))


def poisson_weights(kmax: int, t: float) -> np.ndarray:
    """Array of ``poisson_weight(k, t)`` for k = 0..kmax."""
    _check_shape(kmax, "kmax", minimum=0)
    _check_arg(t)
    out = np.zeros(kmax + 1)
    if t == 0.0:
        out[0] = 1.0
        return out
    k = np.arange(kmax + 1)
    lg = np.array([math.lgamma(j + 1) for j in range(kmax + 1)])
    return np.exp(-t + k * math.log(t) - lg)


def _recurrence_weights(kmax: int, t: float) -> np.ndarray:
    """w_k = exp(-t) t^k / k! via w_{k+1} = w_k t / (k+1), log space for huge t."""
    if t > _RECURRENCE_LIMIT:
        return poisson_weights(kmax, t)
    steps = np.empty(kmax + 1)
    steps[0] = math.exp(-t)
    steps[1:] = t / np.arange(1, kmax + 1)
    return np.cumprod(steps)


def regularized_lower_gamma(n: int, t: float) -> float:
    """P(n, t) for integer n >= 1 and t >= 0.

    Returns ``1 - sum_{k<n} w_k`` while that lower sum is at most 1/2 and the
    upper sum ``sum_{k>=n} w_k`` otherwise, so the result never comes out of
    a cancellation.
    """
    _check_shape(n)
    _check_arg(t)
    if t == 0.0:
        return 0.0
    w = _recurrence_weights(max(n, tail_terms(t)) + 1, t)
    lower = float(np.sum(w[:n]))
    if lower <= _COMPLEMENT_SWITCH:
        return 1.0 - lower
    return float(np.sum(w[n:][::-1]))


def regularized_lower_gamma_upto(nmax: int, t: float) -> np.ndarray:
    """P(n, t) for n = 1..nmax as an array (index 0 holds n = 1).

    Same choice of series as the scalar routine, entry by entry.
    """
    _check_shape(nmax)
    _check_arg(t)
    if t == 0.0:
        return np.zeros(nmax)
    w = _recurrence_weights(max(nmax, tail_terms(t)) + 1, t)
    lower = np.cumsum(w)[:nmax]
    upper = np.cumsum(w[::-1])[::-1][1 : nmax + 1]
    return np.where(lower <= _COMPLEMENT_SWITCH, 1.0 - lower, upper)
