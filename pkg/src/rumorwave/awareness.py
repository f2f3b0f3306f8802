"""Awareness laws (p_i)_{i>=0}: how many hearings an individual needs before
spreading, with p_0 the probability of never spreading.

Every family exposes three arrays over an index window 0..L:

* ``pmf``    p_i
* ``tail``   T_i = sum_{k>=i} p_k, computed analytically (never by
  renormalizing a truncated pmf)
* ``hazard`` q_1 = p_1, q_i = p_i / T_i for i >= 2, and 0 where T_i = 0

plus ``reach`` S_i, the fraction of the initial ignorants that is still a
listener after i - 1 hearings: S_1 = 1 and S_i = T_i for i >= 2.
Products of (1 - q_j) telescope into ratios of S.
"""
from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gammafn import poisson_weights, regularized_lower_gamma_upto

CUSTOM_TOLERANCE = 1e-9
NORMALIZATION_TOLERANCE = 1e-12
ZETA_TOLERANCE = 1e-14


class DistributionError(ValueError):
    pass


def _zeta_cutoff(s: float, tol: float = ZETA_TOLERANCE) -> int:
    # Error of the two-term Euler-Maclaurin correction is about s N^(-s-1)/12.
    n = (s / (12.0 * tol)) ** (1.0 / (s + 1.0))
    return max(64, int(math.ceil(n)))


def zeta_tails(s: float, imax: int) -> np.ndarray:
    """Hurwitz tails sum_{j>=i} j**-s for i = 0..imax (entry 0 duplicates i = 1).

    Direct summation up to N, plus N^(1-s)/(s-1) + N^(-s)/2 for the rest,
    with N large enough that the neglected correction is below 1e-14.
    """
    N = max(_zeta_cutoff(s), imax + 1)
    j = np.arange(1, N, dtype=float)
    terms = j ** (-s)
    rest = N ** (1.0 - s) / (s - 1.0) + 0.5 * N ** (-s)
    # Accumulate from the small end for accuracy.
    tails = np.cumsum(terms[::-1])[::-1] + rest
    out = np.empty(imax + 1)
    out[1:] = tails[:imax]
    out[0] = out[1]
    return out


def riemann_zeta(s: float) -> float:
    return float(zeta_tails(s, 1)[1])


@dataclass(frozen=True)
class Tables:
    pmf: np.ndarray
    tail: np.ndarray
    hazard: np.ndarray
    reach: np.ndarray


@dataclass(frozen=True, eq=False)
class AwarenessDistribution:
    """An awareness law with analytic tails.

    ``support`` is the largest index with p_i > 0 possible, or None for
    infinite support.  ``_build`` maps a window size L to (pmf, tail) arrays
    over 0..L; ``_pmf_sup`` bounds sup_{i>M} p_i and is the decay
    certificate used for infinite supports.
    """

    kind: str
    params: tuple
    support: int | None
    _build: Callable[[int], tuple[np.ndarray, np.ndarray]] = field(repr=False)
    _pmf_sup: Callable[[int], float] = field(repr=False)
    renormalized: bool = False
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def tables(self, L: int) -> Tables:
        """Read-only tables over indices 0..L (cached in power-of-two windows)."""
        cap = 64
        while cap < L:
            cap *= 2
        tab = self._cache.get(cap)
        if tab is None:
            with self._lock:
                tab = self._cache.get(cap)
                if tab is None:
                    tab = self._make_tables(cap)
                    self._cache[cap] = tab
        if L == cap:
            return tab
        return Tables(*(a[: L + 1] for a in (tab.pmf, tab.tail, tab.hazard, tab.reach)))

    def _make_tables(self, L: int) -> Tables:
        pmf, tail = self._build(L)
        pmf = np.asarray(pmf, dtype=float)
        tail = np.asarray(tail, dtype=float)
        hazard = np.zeros(L + 1)
        hazard[1] = pmf[1]
        live = tail[2:] > 0
        hazard[2:][live] = np.minimum(pmf[2:][live] / tail[2:][live], 1.0)
        reach = tail.copy()
        reach[0] = np.nan
        reach[1] = 1.0
        for a in (pmf, tail, hazard, reach):
            a.setflags(write=False)
        return Tables(pmf, tail, hazard, reach)

    def pmf(self, i: int) -> float:
        return float(self.tables(i).pmf[i])

    def tail(self, i: int) -> float:
        return float(self.tables(i).tail[i])

    def hazard(self, i: int) -> float:
        return hazard(self, i)

    def reach(self, i: int) -> float:
        return float(self.tables(i).reach[i])

    def pmf_sup_beyond(self, m: int) -> float:
        """Upper bound on p_i over all i > m."""
        return self._pmf_sup(m)

    def effective_support(self, eps: float = 1e-14, limit: int = 1 << 16) -> int:
        """Smallest index I with T_I < eps (capped at ``limit``)."""
        if self.support is not None:
            return self.support + 1
        L = 64
        while L <= limit:
            tail = self.tables(L).tail
            hit = np.nonzero(tail[1:] < eps)[0]
            if hit.size:
                return int(hit[0]) + 1
            L *= 2
        return limit

    def __repr__(self):
        return f"AwarenessDistribution({self.kind}{self.params})"


def hazard(dist: AwarenessDistribution, i: int) -> float:
    """q_i: probability that the i-th hearing turns a listener into a spreader."""
    if int(i) != i or i < 1:
        raise ValueError(f"hazard index must be >= 1, got {i!r}")
    return float(dist.tables(int(i)).hazard[int(i)])


def _finite(kind: str, params: tuple, p, renormalized=False) -> AwarenessDistribution:
    p = np.asarray(p, dtype=float)
    support = int(np.max(np.nonzero(p)[0])) if np.any(p > 0) else 0
    p = p[: support + 1]

    def build(L):
        pmf = np.zeros(L + 1)
        m = min(L, support)
        pmf[: m + 1] = p[: m + 1]
        full_tail = np.cumsum(p[::-1])[::-1]
        tail = np.zeros(L + 1)
        tail[: m + 1] = full_tail[: m + 1]
        return pmf, tail

    def sup(m):
        return float(p[m + 1 :].max()) if m + 1 <= support else 0.0

    return AwarenessDistribution(kind, params, support, build, sup, renormalized)


def poisson(lam: float) -> AwarenessDistribution:
    if not lam > 0 or not math.isfinite(lam):
        raise DistributionError(f"poisson mean must be > 0, got {lam!r}")

    def build(L):
        pmf = poisson_weights(L, lam)
        tail = np.empty(L + 1)
        tail[0] = 1.0
        # T_i = P(i, lam) for i >= 1.
        tail[1:] = regularized_lower_gamma_upto(L, lam)
        return pmf, tail

    def sup(m):
        # pmf is unimodal with mode floor(lam).
        i = max(m + 1, int(math.floor(lam)))
        return float(poisson_weights(i, lam)[i])

    return AwarenessDistribution("poisson", (lam,), None, build, sup)


def zeta(s: float) -> AwarenessDistribution:
    if not s > 1 or not math.isfinite(s):
        raise DistributionError(f"zeta exponent must be > 1, got {s!r}")
    z = riemann_zeta(s)

    def build(L):
        tails = zeta_tails(s, L)
        pmf = np.zeros(L + 1)
        pmf[1:] = np.arange(1, L + 1, dtype=float) ** (-s) / z
        tail = tails / z
        tail[0] = 1.0
        return pmf, tail

    def sup(m):
        return (m + 1.0) ** (-s) / z

    return AwarenessDistribution("zeta", (s,), None, build, sup)


def uniform(k: int) -> AwarenessDistribution:
    if int(k) != k or k < 1:
        raise DistributionError(f"uniform upper end must be an integer >= 1, got {k!r}")
    k = int(k)
    return _finite("uniform", (k,), np.full(k + 1, 1.0 / (k + 1)))


def dirac(k: int) -> AwarenessDistribution:
    if int(k) != k or k < 1:
        raise DistributionError(f"dirac location must be an integer >= 1, got {k!r}")
    k = int(k)
    p = np.zeros(k + 1)
    p[k] = 1.0
    return _finite("dirac", (k,), p)


def custom(p) -> AwarenessDistribution:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise DistributionError("custom awareness law needs a nonempty vector")
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise DistributionError("custom probabilities must be finite and nonnegative")
    total = float(p.sum())
    if abs(total - 1.0) > CUSTOM_TOLERANCE:
        raise DistributionError(f"custom probabilities sum to {total!r}, not 1")
    renormalized = total != 1.0
    if renormalized:
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            warnings.warn(f"renormalizing custom awareness law (sum = {total!r})", stacklevel=2)
        p = p / total
    return _finite("custom", tuple(float(v) for v in p), p, renormalized)


_FAMILIES = {
    "poisson": (poisson, ("lambda",)),
    "zeta": (zeta, ("s",)),
    "uniform": (uniform, ("k",)),
    "dirac": (dirac, ("k",)),
    "kmt": (dirac, ("k",)),
    "custom": (custom, ("p",)),
}


def make_distribution(kind: str, *args, **params) -> AwarenessDistribution:
    """Build a validated awareness law.

    >>> make_distribution("poisson", 2.0).hazard(1)  # doctest: +ELLIPSIS
    0.27067...
    >>> make_distribution("uniform", k=2).hazard(2)
    1.0

    ``mt`` is accepted as an alias for ``dirac(1)`` and ``kmt`` for ``dirac(k)``.
    """
    if kind == "mt":
        if args or params:
            raise DistributionError("mt takes no parameters")
        return dirac(1)
    try:
        ctor, names = _FAMILIES[kind]
    except KeyError:
        raise DistributionError(f"unknown awareness family {kind!r}") from None
    if args and params:
        raise DistributionError("pass parameters positionally or by name, not both")
    if params:
        unknown = set(params) - set(names)
        if unknown:
            raise DistributionError(f"unknown parameters for {kind}: {sorted(unknown)}")
        try:
            args = tuple(params[n] for n in names)
        except KeyError as exc:
            raise DistributionError(f"{kind} needs parameter {exc.args[0]!r}") from None
    if len(args) != len(names):
        raise DistributionError(f"{kind} takes parameters {names}")
    dist = ctor(*args)
    tab = dist.tables(64)
    if abs(tab.tail[1] + tab.pmf[0] - 1.0) > NORMALIZATION_TOLERANCE:
        raise DistributionError(f"{kind}{args} is not normalized: T_1 + p_0 = {tab.tail[1] + tab.pmf[0]!r}")
    return dist
