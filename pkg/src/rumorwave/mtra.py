"""Maki-Thompson rumor model with random awareness (MT-RA), and the classical
DK / MT / k-MT chains it generalizes.

Coordinate layout: 0 holds the spreaders y, coordinate i >= 1 the
i-listeners (individuals who heard the rumor i - 1 times without spreading).
Stiflers are implicit: z = n - y - sum(x).

Two clocks are provided.  On the *accelerated* clock every spreader
contributes unit rate, so rates are linear in the counts and the chain is
density dependent:

    -e1         p0 x1                  listener 1 -> stifler
    -e1 + e0    q1 x1                  listener 1 -> spreader
    -e1 + e2    (1 - p0 - p1) x1       listener 1 -> listener 2
    -ei + e0    qi xi        (i >= 2)
    -ei + ei+1  (1 - qi) xi  (i >= 2)
    -e0         c - sum(x)             spreader meets a non-listener

with c = (n - 1) / n at finite n and 1 in the limit.  The *original* clock
multiplies every raw rate by the spreader count Y.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernel
from .awareness import AwarenessDistribution, dirac
from .ddpm import (
    JumpPath,
    Rate,
    Transition,
    TransitionSpec,
    UniformStream,
    make_rng,
    simulate,
)

ACCELERATED = "accelerated"
ORIGINAL = "original"


def mtra_coefficients(dist: AwarenessDistribution, L: int):
    """(p0, spread, advance) with ``spread[i]`` = q_i and ``advance[i]`` the
    probability of moving to listener i + 1, for i = 1..L (index 0 unused).

    advance[1] = 1 - p0 - p1 = T_2 and advance[i] = T_{i+1} / T_i, taken
    from the tails directly so no cancellation creeps in.
    """
    tab = dist.tables(L + 1)
    spread = np.zeros(L + 1)
    advance = np.zeros(L + 1)
    spread[1:] = tab.hazard[1 : L + 1]
    tail = tab.tail
    advance[1] = tail[2]
    t_i = tail[2 : L + 1]
    t_next = tail[3 : L + 2]
    live = t_i > 0
    advance[2:][live] = np.minimum(t_next[live] / t_i[live], 1.0)
    return float(tab.pmf[0]), spread, advance


def _coordinate_support(dist: AwarenessDistribution) -> int | None:
    return None if dist.support is None else max(1, dist.support)


def mtra_transitions(dist: AwarenessDistribution, clock: str = ACCELERATED, n: int | None = None) -> TransitionSpec:
    """The MT-RA transition set.

    ``n=None`` gives the limiting density rates.  On the original clock with
    ``n`` given, rates carry the model's own time unit (raw rate X_i Y), so
    the spec is a valid chain but not density dependent; without ``n`` the
    original clock is the density form ``q_i x_i y`` (time scaled by n).
    """
    if clock not in (ACCELERATED, ORIGINAL):
        raise ValueError(f"unknown clock {clock!r}")
    if n is not None and n < 2:
        raise ValueError("population must be >= 2")
    comp = 1.0 if n is None else (n - 1) / n
    scale = float(n) if (clock == ORIGINAL and n is not None) else 1.0
    by_y = (0,) if clock == ORIGINAL else ()
    support = _coordinate_support(dist)

    def rate(coef, i):
        return Rate(coef * scale, (i,) + by_y)

    def family(i):
        top = support if support is not None else i + 1
        p0, spread, advance = mtra_coefficients(dist, max(i, 1))
        if dist.reach(i) == 0.0:
            return ()
        out = []
        if i == 1 and p0 > 0:
            out.append(Transition(((1, -1),), rate(p0, 1), p0, "stifle[1]"))
        if spread[i] > 0:
            out.append(Transition(((0, 1), (i, -1)), rate(spread[i], i), spread[i], f"spread[{i}]"))
        if advance[i] > 0 and i + 1 <= top:
            out.append(Transition(((i, -1), (i + 1, 1)), rate(advance[i], i), advance[i], f"advance[{i}]"))
        return tuple(out)

    stifle = Transition(((0, -1),), Rate(scale, by_y, complement=comp, complement_start=1), 1.0, "stifle[0]")
    return TransitionSpec(
        fixed=(stifle,),
        family=family,
        family_start=1,
        support=support,
        increment_bound=2,
        name=f"mtra[{dist.kind}{dist.params}, {clock}]",
    )


def classical_transitions(model: str, k: int | None = None, clock: str = ORIGINAL,
                          n: int | None = None) -> TransitionSpec:
    """DK, MT or k-MT written out from their own transition tables.

    ``dk`` lives on coordinates (0, 1, 2) = (ignorants, spreaders, stiflers)
    in density form: x0 x1, x1**2 / 2, x1 x2.  ``mt`` and ``kmt`` use the
    MT-RA layout and must coincide with ``mtra_transitions(dirac(k))``.
    """
    if model == "dk":
        fixed = (
            Transition(((0, -1), (1, 1)), Rate(1.0, (0, 1)), 1.0, "dk-spread"),
            Transition(((1, -2), (2, 2)), Rate(0.5, (1, 1)), 2.0, "dk-pair"),
            Transition(((1, -1), (2, 1)), Rate(1.0, (1, 2)), 1.0, "dk-stifle"),
        )
        return TransitionSpec(fixed=fixed, support=2, increment_bound=4, name="dk")
    if model == "mt":
        k = 1
    elif model != "kmt":
        raise ValueError(f"unknown classical model {model!r}")
    if k is None or int(k) != k or k < 1:
        raise ValueError("kmt needs k >= 1")
    k = int(k)
    comp = 1.0 if n is None else (n - 1) / n
    scale = float(n) if (clock == ORIGINAL and n is not None) else 1.0
    by_y = (0,) if clock == ORIGINAL else ()

    def family(i):
        if i < k:
            return (Transition(((i, -1), (i + 1, 1)), Rate(scale, (i,) + by_y), 1.0, f"advance[{i}]"),)
        if i == k:
            return (Transition(((0, 1), (i, -1)), Rate(scale, (i,) + by_y), 1.0, f"spread[{i}]"),)
        return ()

    stifle = Transition(((0, -1),), Rate(scale, by_y, complement=comp, complement_start=1), 1.0, "stifle[0]")
    return TransitionSpec(fixed=(stifle,), family=family, support=k, name=f"kmt[{k}]")


def same_transitions(a: TransitionSpec, b: TransitionSpec, max_index: int) -> bool:
    """Increment-by-increment, coefficient-by-coefficient comparison."""
    ra = {t.increment: t.rate for t in a.materialize(max_index)}
    rb = {t.increment: t.rate for t in b.materialize(max_index)}
    return ra.keys() == rb.keys() and all(ra[i] == rb[i] for i in ra)


# ---------------------------------------------------------------------------
# finite populations


@dataclass(frozen=True)
class RumorState:
    y: int
    x: tuple[int, ...]
    n: int

    def __post_init__(self):
        if self.y < 0 or any(v < 0 for v in self.x):
            raise ValueError("counts must be nonnegative")
        if self.y + sum(self.x) > self.n:
            raise ValueError("more spreaders and listeners than individuals")

    @property
    def z(self) -> int:
        return self.n - self.y - sum(self.x)

    def counts(self) -> np.ndarray:
        return np.array((self.y,) + tuple(self.x), dtype=np.int64)

    @classmethod
    def from_counts(cls, counts, n: int) -> "RumorState":
        c = [int(v) for v in counts]
        while len(c) > 2 and c[-1] == 0:
            c.pop()
        return cls(c[0], tuple(c[1:]), n)

    @classmethod
    def standard(cls, n: int) -> "RumorState":
        """One spreader, everyone else ignorant: the finite-n stand-in for (0, 1, 0, ...)."""
        return cls(1, (n - 1,), n)


@dataclass(frozen=True, eq=False)
class AcceleratedClock:
    """zeta(t) = int_0^t Y(s) ds for a piecewise constant Y."""

    breaks: np.ndarray  # 0, t_1, ..., t_K, end
    zeta: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.breaks, self.zeta)


def accumulated_clock(breaks, values) -> AcceleratedClock:
    """``values[k]`` is Y on [breaks[k], breaks[k+1])."""
    breaks = np.asarray(breaks, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(values) != len(breaks) - 1:
        raise ValueError("need one value per interval")
    zeta = np.concatenate([[0.0], np.cumsum(values * np.diff(breaks))])
    return AcceleratedClock(breaks, zeta)


@dataclass(frozen=True, eq=False)
class OutbreakRun:
    path: JumpPath
    dist: AwarenessDistribution = field(repr=False)

    @property
    def n(self) -> int:
        return self.path.n

    @property
    def tau(self) -> float:
        return self.path.end_time

    @cached_property
    def spreaders(self) -> np.ndarray:
        """Y initially and after every jump."""
        return self.path.coordinate(0)

    @cached_property
    def breaks(self) -> np.ndarray:
        return np.concatenate([[0.0], self.path.times, [self.path.end_time]])

    @cached_property
    def peak_index(self) -> int:
        y = self.spreaders
        return int(len(y) - 1 - np.argmax(y[::-1]))

    @property
    def peak(self) -> int:
        return int(self.spreaders[self.peak_index])

    @property
    def peak_time(self) -> float:
        """sup of the times at which Y sits at its maximum (right end of the last plateau)."""
        return float(self.breaks[self.peak_index + 1])

    @cached_property
    def final(self) -> RumorState:
        return RumorState.from_counts(self.path.final_state(), self.n)

    @cached_property
    def clock(self) -> AcceleratedClock:
        return accelerate_path(self)

    def accelerated_path(self) -> JumpPath:
        z = self.clock.zeta
        return self.path.with_times(z[1:-1], z[-1])

    @property
    def peak_zeta(self) -> float:
        return float(self.clock.zeta[self.peak_index + 1])


def accelerate_path(run: OutbreakRun) -> AcceleratedClock:
    """Accelerated clock values at every jump of ``run``."""
    y = run.spreaders.astype(float)
    return accumulated_clock(run.breaks, y)


def _initial_counts(initial, n):
    if isinstance(initial, str):
        if initial != "standard":
            raise ValueError(f"unknown initial condition {initial!r}")
        return RumorState.standard(n).counts()
    if isinstance(initial, RumorState):
        if initial.n != n:
            raise ValueError("initial state built for a different population size")
        return initial.counts()
    counts = np.asarray(initial, dtype=np.int64)
    RumorState.from_counts(counts, n)  # validates
    return counts


def run_outbreak(
    dist: AwarenessDistribution,
    n: int,
    initial="standard",
    seed: int = 0,
    engine: str = "compiled",
    horizon: float | None = None,
    event_cap: int = 10**9,
    rng: np.random.Generator | None = None,
) -> OutbreakRun:
    """Simulate the original-clock chain until no spreader is left.

    ``engine="generic"`` runs ``ddpm.simulate`` on the MT-RA spec;
    ``engine="compiled"`` runs the same algorithm compiled, consuming the
    same uniforms in the same order.
    """
    if n < 2:
        raise ValueError("population must be >= 2")
    counts0 = _initial_counts(initial, n)
    rng = rng if rng is not None else make_rng(seed)
    if engine == "generic":
        path = simulate(mtra_transitions(dist, ORIGINAL, n), n, counts0, horizon=horizon,
                        seed=seed, event_cap=event_cap, rng=rng)
        return OutbreakRun(path, dist)
    if engine != "compiled":
        raise ValueError(f"unknown engine {engine!r}")
    return OutbreakRun(_run_compiled(dist, n, counts0, horizon, seed, event_cap, rng), dist)


def _increment_table(cap: int):
    incs = [((0, -1),)] * 3
    for i in range(1, cap + 1):
        incs += [((i, -1),), ((0, 1), (i, -1)), ((i, -1), (i + 1, 1))]
    return tuple(incs)


def _run_compiled(dist, n, counts0, horizon, seed, event_cap, rng) -> JumpPath:
    support = _coordinate_support(dist)
    cap = 64
    while cap < len(counts0) + 1:
        cap *= 2
    counts = np.zeros(cap + 1, dtype=np.int64)
    counts[: len(counts0)] = counts0
    p0, spread, advance = mtra_coefficients(dist, cap)
    if support is not None:
        advance[support:] = 0.0
    stream = UniformStream(rng)
    u = stream.buf
    upos = 0
    out = max(1024, 4 * n)
    times = np.empty(out)
    codes = np.empty(out, dtype=np.int64)
    nev = 0
    t = 0.0
    occ = np.nonzero(counts[1:])[0]
    maxocc = int(occ[-1]) + 1 if occ.size else 1
    sum_x = float(counts[1:].sum())
    hz = -1.0 if horizon is None else float(horizon)
    while True:
        status, upos, nev, t, maxocc, sum_x = _kernel.run_chain(
            counts, float(n), p0, spread, advance, u, upos, times, codes, nev, t,
            maxocc, sum_x, hz, event_cap)
        if status == _kernel.NEED_UNIFORMS:
            rest = u[upos:]
            u = np.concatenate([rest, stream.rng.random(stream.block)])
            upos = 0
        elif status == _kernel.NEED_OUTPUT:
            times = np.concatenate([times, np.empty(len(times))])
            codes = np.concatenate([codes, np.empty(len(codes), dtype=np.int64)])
        elif status == _kernel.NEED_SPACE:
            cap *= 2
            counts = np.concatenate([counts, np.zeros(cap + 1 - len(counts), dtype=np.int64)])
            p0, spread, advance = mtra_coefficients(dist, cap)
            if support is not None:
                advance[support:] = 0.0
        else:
            break
    reason = {_kernel.ABSORBED: "absorbed", _kernel.HORIZON: "horizon",
              _kernel.EVENT_CAP: "event-cap"}[status]
    end = t if reason != "event-cap" else (times[nev - 1] if nev else 0.0)
    return JumpPath(times[:nev].copy(), codes[:nev].copy(), _increment_table(cap),
                    np.asarray(counts0, dtype=np.int64).copy(), n, seed, reason, float(end))
