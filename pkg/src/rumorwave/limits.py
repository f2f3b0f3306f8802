"""Closed-form fluid limit of the accelerated MT-RA chain.

With S_1 = 1 and S_i = T_i (i >= 2), the listener proportions are

    x_l(z) = sum_{k<=l} x0_k * e^{-z} z^{l-k} / (l-k)! * S_l / S_k

and the spreader proportion is

    y(z) = y0 - z + sum_l (1 + q_l) * sum_{k<=l} x0_k P(l-k+1, z) S_l / S_k

where P is the regularized lower incomplete gamma function.  The outbreak
ends at the first positive root z_inf of y; waves are the local maxima of
y on (0, z_inf).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .awareness import AwarenessDistribution
from .ddpm import LimitTrajectory
from .gammafn import poisson_weights, regularized_lower_gamma, tail_terms

DELTA = 1e-6
ROOT_WIDTH = 1e-12
ROOT_RESIDUAL = 1e-13
PEAK_AGREEMENT = 1e-10
PEAK_ABORT = 1e-8
MAX_DERIVATIVE_ORDER = 40


class NoOutbreakError(RuntimeError):
    """The spreader proportion never becomes positive."""


@dataclass(frozen=True)
class LimitInitialCondition:
    """Initial listener proportions ``x0[i - 1] = x_i(0)`` and spreaders ``y0``."""

    x0: tuple[float, ...] = (1.0,)
    y0: float = 0.0

    def __post_init__(self):
        x0 = tuple(float(v) for v in self.x0)
        object.__setattr__(self, "x0", x0)
        if self.y0 < 0 or any(v < 0 for v in x0):
            raise ValueError("initial proportions must be nonnegative")
        if self.y0 + sum(x0) > 1 + 1e-12:
            raise ValueError("initial proportions exceed 1")

    @classmethod
    def standard(cls) -> "LimitInitialCondition":
        return cls((1.0,), 0.0)

    @property
    def support(self) -> int:
        nz = [i + 1 for i, v in enumerate(self.x0) if v > 0]
        return nz[-1] if nz else 0

    def nonzero(self):
        return [(i + 1, v) for i, v in enumerate(self.x0) if v > 0]

    def check(self, dist: AwarenessDistribution) -> None:
        for k, _ in self.nonzero():
            if dist.reach(k) == 0.0:
                raise ValueError(f"initial listeners at index {k}, which no one can reach under {dist}")


STANDARD = LimitInitialCondition.standard()


def _ic(ic) -> LimitInitialCondition:
    return STANDARD if ic is None or ic == "standard" else ic


def series_terms(zeta: float) -> int:
    """Number of gamma-series terms; the neglected remainder is < 1e-12 for zeta <= 400."""
    return tail_terms(zeta)


def _weight_matrix(z: np.ndarray, M: int) -> np.ndarray:
    """pw[j, m] = e^{-z_j} z_j^m / m! for m = 0..M."""
    m = np.arange(M + 1)
    lg = np.array([math.lgamma(v + 1) for v in m])
    logz = np.log(np.where(z > 0, z, 1.0))[:, None]
    out = np.exp(-z[:, None] + m[None, :] * logz - lg[None, :])
    out[z == 0.0, 1:] = 0.0
    return out


def _gamma_matrix(z: np.ndarray, M: int) -> np.ndarray:
    """P[j, m - 1] = P(m, z_j) for m = 1..M, via upper-tail sums."""
    K = M + series_terms(float(np.max(z, initial=0.0)))
    pw = _weight_matrix(z, K)
    upper = np.cumsum(pw[:, ::-1], axis=1)[:, ::-1]
    return np.minimum(upper[:, 1 : M + 1], 1.0)


class _Model:
    """Cached coefficient tables for one (distribution, initial condition)."""

    def __init__(self, dist: AwarenessDistribution, ic: LimitInitialCondition, cap: int | None = None):
        ic.check(dist)
        self.dist = dist
        self.ic = ic
        self.cap = cap
        self.terms = ic.nonzero()
        self.kmax = max((k for k, _ in self.terms), default=1)

    def tables(self, L):
        tab = self.dist.tables(L)
        reach = tab.reach.copy()
        reach[0] = 0.0
        # a_l = (1 + q_l) S_l
        a = (1.0 + tab.hazard) * reach
        if self.cap is not None:
            a[self.cap + 1 :] = 0.0
        return tab, reach, a

    def coefficients(self, M: int) -> np.ndarray:
        """b_m = sum_k (x0_k / S_k) a_{k+m} - 1 for m = 0..M.

        Since sum_m e^{-z} z^m / m! = 1 and sum_{m>=1} P(m, z) = z,

            y'(z) = sum_{m>=0} b_m e^{-z} z^m / m!
            y(z)  = y0 + sum_{m>=1} b_{m-1} P(m, z)

        which keeps full relative accuracy near z = 0, where the plain
        forms -1 + ... and -z + ... cancel.
        """
        _, reach, a = self.tables(self.kmax + M + 1)
        b = -np.ones(M + 1)
        for k, xk in self.terms:
            b += (xk / reach[k]) * a[k : k + M + 1]
        return b

    def y(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        M = series_terms(float(z.max(initial=0.0)))
        b = self.coefficients(M)
        return self.ic.y0 + _gamma_matrix(z, M + 1) @ b

    def dy(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        M = series_terms(float(z.max(initial=0.0)))
        return _weight_matrix(z, M) @ self.coefficients(M)

    def x(self, ell: int, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        _, reach, _ = self.tables(ell + 1)
        W = _weight_matrix(z, ell)
        out = np.zeros_like(z)
        for k, xk in self.terms:
            if k <= ell:
                out = out + xk * W[:, ell - k] * (reach[ell] / reach[k])
        return out

    def xs(self, width: int, z) -> np.ndarray:
        """x_1..x_width on the grid z, shape (len(z), width)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        _, reach, _ = self.tables(width + 1)
        W = _weight_matrix(z, width)
        out = np.zeros((len(z), width))
        for k, xk in self.terms:
            if k > width:
                continue
            m = width - k + 1
            out[:, k - 1 :] += xk * W[:, :m] * (reach[k : width + 1] / reach[k])[None, :]
        return out

    def derivatives_at_zero(self, order: int) -> list[float]:
        """y'(0), ..., y^(order)(0): y^(r+1)(0) = sum_{m<=r} C(r, m) (-1)^(r-m) b_m."""
        b = self.coefficients(order)
        return [math.fsum(b[m] * math.comb(r, m) * (-1.0) ** (r - m) for m in range(r + 1)) for r in range(order)]

    def leading_order(self, limit: int = MAX_DERIVATIVE_ORDER) -> tuple[int, float]:
        """(r, c): y^(j)(0) = 0 for 1 <= j < r and y^(r)(0) = c != 0.

        The first nonzero b_m is exactly y^(m+1)(0)."""
        while True:
            b = self.coefficients(limit)
            nz = np.nonzero(np.abs(b) > 1e-15)[0]
            if nz.size:
                return int(nz[0]) + 1, float(b[nz[0]])
            if limit >= 1 << 16:
                return 0, 0.0
            limit *= 2


def _model(dist, ic, cap=None) -> _Model:
    return _Model(dist, _ic(ic), cap)


def _scalar(v, z):
    return float(v[0]) if np.ndim(z) == 0 else v


def listener_curve(dist: AwarenessDistribution, ic, ell: int, zeta):
    """x_ell(zeta), the limiting proportion of ell-listeners."""
    if int(ell) != ell or ell < 1:
        raise ValueError("listener index must be >= 1")
    if np.any(np.asarray(zeta) < 0):
        raise ValueError("zeta must be nonnegative")
    return _scalar(_model(dist, ic).x(int(ell), zeta), zeta)


def listener_integral(dist: AwarenessDistribution, ic, ell: int, zeta):
    """I_ell(zeta) = int_0^zeta x_ell = sum_k x0_k P(ell - k + 1, zeta) S_ell / S_k."""
    if int(ell) != ell or ell < 1:
        raise ValueError("listener index must be >= 1")
    model = _model(dist, ic)
    z = np.atleast_1d(np.asarray(zeta, dtype=float))
    _, reach, _ = model.tables(int(ell) + 1)
    P = _gamma_matrix(z, int(ell))
    out = np.zeros_like(z)
    for k, xk in model.terms:
        if k <= ell:
            out = out + xk * P[:, ell - k] * (reach[ell] / reach[k])
    return _scalar(out, zeta)


def spreader_curve(dist: AwarenessDistribution, ic, zeta):
    """y(zeta), the limiting proportion of spreaders on the accelerated clock."""
    if np.any(np.asarray(zeta) < 0):
        raise ValueError("zeta must be nonnegative")
    return _scalar(_model(dist, ic).y(zeta), zeta)


def spreader_slope(dist: AwarenessDistribution, ic, zeta):
    """y'(zeta) = -1 + sum_l (1 + q_l) x_l(zeta)."""
    return _scalar(_model(dist, ic).dy(zeta), zeta)


def spreader_series(dist: AwarenessDistribution, ic, zeta: float, series_cap: int | None = None) -> float:
    """y(zeta) evaluated term by term: scalar incomplete gamma ratios and the
    literal products prod_{j=k}^{l-1} (1 - q_j), with (1 - sum_{j<l} p_j) for
    k = 1.  Independent of the vectorized route in ``spreader_curve``."""
    ic = _ic(ic)
    terms = ic.nonzero()
    kmax = max((k for k, _ in terms), default=1)
    L = kmax + series_terms(zeta)
    if series_cap is not None:
        L = min(L, series_cap)
    tab = dist.tables(L + 1)
    p, q = tab.pmf, tab.hazard
    cum = np.cumsum(p)
    total = ic.y0 - zeta
    for ell in range(1, L + 1):
        inner = 0.0
        for k, xk in terms:
            if k > ell:
                continue
            if k == 1:
                c = 1.0 if ell == 1 else 1.0 - cum[ell - 1]
            else:
                c = 1.0
                for j in range(k, ell):
                    c *= 1.0 - q[j]
            inner += xk * regularized_lower_gamma(ell - k + 1, zeta) * c
        total += (1.0 + q[ell]) * inner
    return float(total)


# ---------------------------------------------------------------------------
# absorption


@dataclass(frozen=True)
class Absorption:
    zeta_inf: float
    regime: str  # "hypothesis", "boundary" or "spreaders-present"
    slope_at_zero: float


def _bisect(f, a, b, fa, width=ROOT_WIDTH, residual=ROOT_RESIDUAL):
    """Root of f in [a, b] with a sign change; fa = f(a)."""
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
        if b - a < width and abs(fm) < residual:
            break
        if b - a <= 4 * np.spacing(m):
            break
    return 0.5 * (a + b)


def _scan_grid(lo: float, hi: float) -> np.ndarray:
    if lo == 0.0:
        return np.concatenate([[0.0], _scan_grid(DELTA, hi)])
    if lo < 0.05:
        geo = np.geomspace(lo, 0.05, 60)
        return np.concatenate([geo, np.arange(0.06, hi + 1e-12, 0.01)])
    return np.arange(lo, hi + 1e-12, 0.01)


def absorption(dist: AwarenessDistribution, ic=None, series_cap: int | None = None) -> Absorption:
    """Solve y(zeta) = 0 for the end of the outbreak and report which case applies.

    ``series_cap`` drops listener terms beyond that index from y; it exists
    only to study truncation effects.
    """
    model = _model(dist, ic, series_cap)
    ic = model.ic
    slope0 = float(model.dy(0.0)[0])
    if slope0 > 0:
        regime = "hypothesis"
    elif ic.y0 > 0:
        regime = "spreaders-present"
    else:
        order, lead = model.leading_order()
        regime = "boundary" if lead > 0 else None
        if regime is None:
            raise NoOutbreakError(f"no outbreak for {dist} from {ic}: y stays nonpositive")
    f = lambda z: float(model.y(z)[0])
    lo = 0.0 if ic.y0 > 0 else DELTA
    hi = 4.0
    seen_positive = ic.y0 > 0
    while True:
        grid = _scan_grid(lo, hi)
        ys = model.y(grid)
        if not seen_positive:
            # y > 0 just after 0 in this regime, but may underflow to 0 for a while
            first = np.nonzero(ys != 0.0)[0]
            if first.size and ys[first[0]] < 0:
                raise NoOutbreakError(f"no outbreak for {dist} from {ic}: y < 0 after 0")
            seen_positive = bool(first.size)
        cross = np.nonzero((ys[:-1] > 0) & (ys[1:] <= 0))[0]
        if cross.size:
            j = int(cross[0])
            if ys[j + 1] == 0.0:
                return Absorption(float(grid[j + 1]), regime, slope0)
            return Absorption(_bisect(f, grid[j], grid[j + 1], ys[j]), regime, slope0)
        if hi > 1e4:
            raise RuntimeError("no absorption found below zeta = 1e4")
        lo, hi = float(grid[-1]), 2 * hi


def solve_zeta_infinity(dist: AwarenessDistribution, ic=None) -> float:
    """First positive root of the spreader curve."""
    return absorption(dist, ic).zeta_inf


def final_proportions(dist: AwarenessDistribution, ic=None, cutoff: int = 3,
                      zeta_inf: float | None = None) -> dict[int, float]:
    """{l: x_{l,inf}} for l = 1..cutoff."""
    z = solve_zeta_infinity(dist, ic) if zeta_inf is None else zeta_inf
    xs = _model(dist, ic).xs(cutoff, z)[0]
    return {ell: float(xs[ell - 1]) for ell in range(1, cutoff + 1)}


# ---------------------------------------------------------------------------
# critical points and waves


@dataclass(frozen=True)
class CriticalPoint:
    zeta: float
    kind: str  # "max", "min" or "inflection"


def critical_points(dist: AwarenessDistribution, ic=None, zeta_inf: float | None = None,
                    series_cap: int | None = None) -> list[CriticalPoint]:
    """Roots of y' in (0, zeta_inf), classified by the sign of y' on each side."""
    model = _model(dist, ic, series_cap)
    zinf = absorption(dist, ic, series_cap).zeta_inf if zeta_inf is None else zeta_inf
    h = min(0.01, zinf / 1000)
    grid = np.concatenate([[DELTA], np.arange(h, zinf, h), [zinf]])
    grid = grid[grid <= zinf]
    d = model.dy(grid)
    f = lambda z: float(model.dy(z)[0])
    out = []
    for j in range(len(grid) - 1):
        a, b = d[j], d[j + 1]
        if a > 0 and b <= 0 or a < 0 and b >= 0:
            if b == 0.0:
                # root on the grid: classify with the next nonzero value
                nxt = next((v for v in d[j + 2 :] if v != 0.0), -a)
                if (nxt > 0) == (a > 0):
                    out.append(CriticalPoint(float(grid[j + 1]), "inflection"))
                    continue
                out.append(CriticalPoint(float(grid[j + 1]), "max" if a > 0 else "min"))
                continue
            r = _bisect(f, grid[j], grid[j + 1], a)
            out.append(CriticalPoint(r, "max" if a > 0 else "min"))
    # touching zeros without a sign change
    absd = np.abs(d)
    for j in range(1, len(grid) - 1):
        if absd[j] < 1e-8 and absd[j] <= absd[j - 1] and absd[j] <= absd[j + 1] and d[j - 1] * d[j + 1] > 0:
            z = _golden_min(lambda s: abs(f(s)), grid[j - 1], grid[j + 1])
            if abs(f(z)) < 1e-10 and not any(abs(c.zeta - z) < h for c in out):
                out.append(CriticalPoint(z, "inflection"))
    return sorted(out, key=lambda c: c.zeta)


def _golden_min(f, a, b, tol=1e-13):
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    while b - a > tol:
        if f(c) < f(d):
            b, d = d, c
            c = b - g * (b - a)
        else:
            a, c = c, d
            d = a + g * (b - a)
    return 0.5 * (a + b)


@dataclass(frozen=True)
class Peak:
    zeta_max: float
    y_max: float
    waves: tuple[tuple[float, float], ...]


def peak(dist: AwarenessDistribution, ic=None, points: list[CriticalPoint] | None = None,
         zeta_inf: float | None = None, series_cap: int | None = None) -> Peak:
    """Per-wave maxima and the global maximum of the spreader curve.

    Every wave height is computed twice, from the term-by-term gamma series
    and from the vectorized curve; the two must agree.
    """
    ic = _ic(ic)
    if points is None:
        points = critical_points(dist, ic, zeta_inf, series_cap)
    model = _model(dist, ic, series_cap)
    waves = []
    for c in points:
        if c.kind != "max":
            continue
        series = spreader_series(dist, ic, c.zeta, series_cap)
        curve = float(model.y(c.zeta)[0])
        gap = abs(series - curve)
        if gap > PEAK_ABORT:
            raise RuntimeError(f"wave height at zeta={c.zeta}: series {series} vs curve {curve}")
        if gap > PEAK_AGREEMENT:
            warnings.warn(f"wave height routes differ by {gap:.2e} at zeta={c.zeta}", stacklevel=2)
        waves.append((c.zeta, series))
    if not waves:
        return Peak(0.0, ic.y0, ())
    best = waves[0]
    for w in waves[1:]:
        if w[1] > best[1]:
            best = w
    return Peak(best[0], best[1], tuple(waves))


def wave_count(dist: AwarenessDistribution, ic=None) -> int:
    return sum(1 for c in critical_points(dist, ic) if c.kind == "max")


def uniqueness_condition(dist: AwarenessDistribution) -> bool:
    """True when the awareness law certifies a single critical point.

    Either (a) the support is finite, ending at L, and p_{m+1} >= p_0 + ... + p_m
    for every m < L; or (b) p_{m+1} < p_0 + ... + p_m for every m >= 2.  For
    infinite supports (b) is checked up to where T_i < 1e-14 and the rest is
    covered by the family's bound on sup_{i > M} p_i.
    """
    if dist.support is not None:
        L = dist.support
        tab = dist.tables(L + 1)
        p = tab.pmf[: L + 2]
        cum = np.cumsum(p)
        if all(p[m + 1] >= cum[m] for m in range(L)):
            return True
        return all(p[m + 1] < cum[m] for m in range(2, L + 1))
    M = dist.effective_support(1e-14)
    tab = dist.tables(M + 1)
    p = tab.pmf
    cum = np.cumsum(p[: M + 1])
    if not all(p[m + 1] < cum[m] for m in range(2, M)):
        return False
    return dist.pmf_sup_beyond(M) < cum[M]


# ---------------------------------------------------------------------------
# summary and trajectories


@dataclass(frozen=True)
class OutbreakSummary:
    zeta_inf: float
    finals: dict[int, float]
    critical_points: tuple[CriticalPoint, ...]
    waves: tuple[tuple[float, float], ...]
    zeta_max: float
    y_max: float
    wave_count: int
    uniqueness_certified: bool
    regime: str = "hypothesis"

    @property
    def stifler_residue(self) -> float:
        return 1.0 - sum(self.finals.values())

    def as_dict(self) -> dict:
        return {
            "zeta_inf": self.zeta_inf,
            "finals": {str(k): v for k, v in self.finals.items()},
            "critical_points": [{"zeta": c.zeta, "kind": c.kind} for c in self.critical_points],
            "waves": [{"zeta": z, "y": y} for z, y in self.waves],
            "zeta_max": self.zeta_max,
            "y_max": self.y_max,
            "wave_count": self.wave_count,
            "uniqueness_certified": self.uniqueness_certified,
            "regime": self.regime,
        }


def analyze(dist: AwarenessDistribution, ic=None, cutoff: int = 3, series_cap: int | None = None) -> OutbreakSummary:
    """Everything the limit says about one outbreak."""
    ic = _ic(ic)
    ab = absorption(dist, ic, series_cap)
    pts = critical_points(dist, ic, ab.zeta_inf, series_cap)
    pk = peak(dist, ic, pts, series_cap=series_cap)
    return OutbreakSummary(
        zeta_inf=ab.zeta_inf,
        finals=final_proportions(dist, ic, cutoff, ab.zeta_inf),
        critical_points=tuple(pts),
        waves=pk.waves,
        zeta_max=pk.zeta_max,
        y_max=pk.y_max,
        wave_count=sum(1 for c in pts if c.kind == "max"),
        uniqueness_certified=uniqueness_condition(dist),
        regime=ab.regime,
    )


def limit_trajectory(dist: AwarenessDistribution, ic, grid, width: int | None = None) -> LimitTrajectory:
    """Closed-form curves sampled on ``grid`` in the (y, x_1, ..., x_W) layout."""
    ic = _ic(ic)
    grid = np.asarray(grid, dtype=float)
    model = _model(dist, ic)
    if width is None:
        zmax = float(grid.max(initial=0.0))
        width = model.kmax + series_terms(zmax)
        if dist.support is not None:
            width = min(width, max(dist.support, model.kmax))
    states = np.empty((len(grid), width + 1))
    states[:, 0] = model.y(grid) if len(grid) else []
    states[:, 1:] = model.xs(width, grid)
    return LimitTrajectory(grid, states, np.zeros(len(grid)), "closed-form")
