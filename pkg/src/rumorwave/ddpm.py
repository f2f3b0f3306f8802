"""Density-dependent jump processes on sequences of counts.

A model is a countable list of transitions ``(m, beta_m)``: an integer
increment ``m`` with finitely many nonzero entries and a nonnegative rate
function of the density state ``x = counts / n``.  At population size ``n``
the transition fires at raw rate ``n * beta_m(counts / n)``; as ``n`` grows the
scaled process follows the solution of ``X' = F(X)`` with
``F(x) = sum_m m beta_m(x)``.

States are dense float arrays over coordinates 0..W-1; everything past W is
zero.  Models with infinitely many coordinates expose their transitions
lazily through ``TransitionSpec.materialize``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_STEP = 1e-3
EPS_TRUNC = 1e-12
INITIAL_HEADROOM = 32


class DomainError(ValueError):
    """State outside the admissible set E."""


class SimulationInvariantError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# rates and transitions


@dataclass(frozen=True)
class Rate:
    """``coef * prod(x[j] for j in factors) * (complement - sum(x[start:]))``.

    The complement factor is omitted when ``complement`` is None.  ``shift``
    subtracts a constant from the *last* factor, which is how pairwise rates
    such as ``y (y - 1/n) / 2`` are written.  This covers every bundled model
    and, unlike an arbitrary callable, can be compared and vectorized.
    """

    coef: float
    factors: tuple[int, ...] = ()
    complement: float | None = None
    complement_start: int = 1
    shift: float = 0.0

    def __call__(self, x: np.ndarray) -> float:
        v = self.coef
        for j, f in enumerate(self.factors):
            xf = x[f] if f < len(x) else 0.0
            if j == len(self.factors) - 1:
                xf -= self.shift
            v *= xf
        if self.complement is not None:
            v *= self.complement - float(np.sum(x[self.complement_start :]))
        return float(v)

    @property
    def max_index(self) -> int:
        return max(self.factors, default=-1)


@dataclass(frozen=True)
class Transition:
    increment: tuple[tuple[int, int], ...]
    rate: Callable[[np.ndarray], float]
    bound: float = math.inf
    label: str = ""

    def __post_init__(self):
        inc = tuple(sorted((int(i), int(d)) for i, d in self.increment if d != 0))
        if not inc:
            raise ValueError("a transition needs at least one nonzero increment")
        if any(i < 0 for i, _ in inc):
            raise ValueError("coordinate indices must be nonnegative")
        object.__setattr__(self, "increment", inc)

    @property
    def norm(self) -> int:
        return sum(abs(d) for _, d in self.increment)

    @property
    def max_index(self) -> int:
        top = max(i for i, _ in self.increment)
        if isinstance(self.rate, Rate):
            top = max(top, self.rate.max_index)
        return top


def increment(*pairs: tuple[int, int]) -> tuple[tuple[int, int], ...]:
    return tuple(pairs)


@dataclass(frozen=True, eq=False)
class TransitionSpec:
    """A countable transition set.

    ``fixed`` transitions always exist.  ``family(i)`` returns the
    transitions attached to coordinate ``i`` for ``i >= family_start``;
    ``support`` is the largest coordinate that can ever be occupied (None
    for unbounded).  ``radius`` is the l1 radius of the admissible ball E.
    """

    fixed: tuple[Transition, ...] = ()
    family: Callable[[int], Sequence[Transition]] | None = None
    family_start: int = 1
    support: int | None = None
    increment_bound: int = 2
    drift_bound: float | None = None
    radius: float = 2.0
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for t in self.fixed:
            self._check(t)

    def _check(self, t: Transition):
        if t.norm > self.increment_bound:
            raise ValueError(
                f"increment {t.increment} has l1 norm {t.norm} > bound {self.increment_bound}"
            )

    def coordinate_limit(self, max_index: int) -> int:
        if self.support is None:
            return max_index
        return min(max_index, self.support)

    def materialize(self, max_index: int) -> tuple[Transition, ...]:
        """All transitions attached to coordinates <= ``max_index``."""
        top = self.coordinate_limit(max_index)
        key = top
        got = self._cache.get(key)
        if got is not None:
            return got
        out = list(self.fixed)
        if self.family is not None:
            for i in range(self.family_start, top + 1):
                for t in self.family(i):
                    self._check(t)
                    out.append(t)
        got = tuple(out)
        self._cache[key] = got
        return got

    def check_bound(self, max_index: int, samples: Iterable[np.ndarray] = ()) -> float:
        """Return ``sum ||m||_1 beta~_m`` over materialized transitions.

        Transitions without a declared bound get one estimated from
        ``samples`` (points of E).  Raises if it exceeds ``drift_bound``.
        """
        samples = list(samples)
        total = 0.0
        for t in self.materialize(max_index):
            b = t.bound
            if not math.isfinite(b):
                if not samples:
                    raise ValueError(f"transition {t.label or t.increment} has no bound and no samples")
                b = max(t.rate(x) for x in samples)
            total += t.norm * b
        if self.drift_bound is not None and total > self.drift_bound * (1 + 1e-12):
            raise ValueError(f"sum ||m|| beta~ = {total} exceeds M = {self.drift_bound}")
        return total


class Compiled:
    """Vectorized rate evaluation for a materialized transition list."""

    def __init__(self, transitions: Sequence[Transition], width: int):
        self.transitions = tuple(transitions)
        self.width = width
        K = len(self.transitions)
        self.matrix = np.zeros((K, width))
        for k, t in enumerate(self.transitions):
            for i, d in t.increment:
                if i < width:
                    self.matrix[k, i] = d
        # Outflow past the truncation, per unit rate.
        self.overflow = np.array(
            [sum(abs(d) for i, d in t.increment if i >= width) for t in self.transitions],
            dtype=float,
        )
        self.structured = all(isinstance(t.rate, Rate) for t in self.transitions)
        if self.structured and K:
            rates = [t.rate for t in self.transitions]
            nf = max((len(r.factors) for r in rates), default=0)
            one = width  # index of a constant 1.0 slot
            self.coef = np.array([r.coef for r in rates])
            self.fidx = np.full((K, nf), one, dtype=np.intp)
            self.shift = np.zeros((K, nf))
            for k, r in enumerate(rates):
                for j, f in enumerate(r.factors):
                    self.fidx[k, j] = f if f < width else width + 1
                if r.factors:
                    self.shift[k, len(r.factors) - 1] = r.shift
            self.has_comp = np.array([r.complement is not None for r in rates])
            self.comp = np.array([r.complement if r.complement is not None else 0.0 for r in rates])
            self.cstart = np.array([min(r.complement_start, width) for r in rates], dtype=np.intp)

    def rates(self, x: np.ndarray) -> np.ndarray:
        if not self.transitions:
            return np.zeros(0)
        if not self.structured:
            return np.array([t.rate(x) for t in self.transitions])
        ext = np.zeros(self.width + 2)
        ext[: min(len(x), self.width)] = x[: self.width]
        ext[self.width] = 1.0
        v = self.coef.copy()
        if self.fidx.shape[1]:
            v *= np.prod(ext[self.fidx] - self.shift, axis=1)
        if self.has_comp.any():
            suffix = np.concatenate([np.cumsum(ext[: self.width][::-1])[::-1], [0.0]])
            v = np.where(self.has_comp, v * (self.comp - suffix[self.cstart]), v)
        return v

    def drift(self, x: np.ndarray) -> tuple[np.ndarray, float]:
        r = self.rates(x)
        if r.size == 0:
            return np.zeros(self.width), 0.0
        return r @ self.matrix, float(r @ self.overflow)


def _as_state(x) -> np.ndarray:
    if isinstance(x, dict):
        w = max(x, default=-1) + 1
        out = np.zeros(w)
        for i, v in x.items():
            out[i] = v
        return out
    return np.asarray(x, dtype=float)


def _occupied_top(x: np.ndarray) -> int:
    nz = np.nonzero(x)[0]
    return int(nz[-1]) if nz.size else 0


def drift(spec: TransitionSpec, x, strict: bool = True) -> np.ndarray:
    """F(x) = sum_m m beta_m(x) over the transitions that can act on x."""
    x = _as_state(x)
    if strict and np.abs(x).sum() >= spec.radius:
        raise DomainError(f"||x||_1 = {np.abs(x).sum()} outside the ball of radius {spec.radius}")
    trans = spec.materialize(max(len(x) - 1, 0))
    width = max([len(x)] + [t.max_index + 1 for t in trans])
    xs = np.zeros(width)
    xs[: len(x)] = x
    comp = Compiled(trans, width)
    f, _ = comp.drift(xs)
    return f


# ---------------------------------------------------------------------------
# random streams


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for ``seed`` and an optional stream key.

    Sweep point ``j``, replicate ``r`` uses ``make_rng(seed_base, j, r)``;
    distinct keys give statistically independent streams.
    """
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


class UniformStream:
    """Uniforms pulled from a generator in fixed-size blocks.

    Draw order is identical to calling ``rng.random()`` one at a time, so any
    consumer taking uniforms in the same order sees the same numbers.
    """

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self.rng = rng
        self.block = block
        self.buf = rng.random(block)
        self.pos = 0

    def next(self) -> float:
        if self.pos == len(self.buf):
            self.buf = self.rng.random(self.block)
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return float(u)


# ---------------------------------------------------------------------------
# sample paths


@dataclass(frozen=True, eq=False)
class JumpPath:
    """A simulated trajectory stored as jump times plus increment codes.

    ``increments[codes[k]]`` is the raw increment applied at ``times[k]``.
    ``end_time`` is the absorption time, the horizon, or the time of the
    last event when the event cap was hit.
    """

    times: np.ndarray
    codes: np.ndarray
    increments: tuple[tuple[tuple[int, int], ...], ...]
    initial: np.ndarray
    n: int
    seed: int | None
    reason: str
    end_time: float

    def __len__(self):
        return len(self.times)

    @property
    def width(self) -> int:
        top = len(self.initial) - 1
        used = set(np.unique(self.codes).tolist()) if len(self.codes) else set()
        for c in used:
            top = max(top, max(i for i, _ in self.increments[c]))
        return top + 1

    def increment_matrix(self, width: int | None = None) -> np.ndarray:
        width = width or self.width
        D = np.zeros((len(self.increments), width), dtype=np.int64)
        for c, inc in enumerate(self.increments):
            for i, d in inc:
                if i < width:
                    D[c, i] += d
        return D

    def chunks(self, size: int = 1 << 15, width: int | None = None):
        """Yield ``(times, states)`` blocks; ``states[k]`` is the state just after ``times[k]``."""
        width = width or self.width
        D = self.increment_matrix(width)
        cur = np.zeros(width, dtype=np.int64)
        cur[: len(self.initial)] = self.initial
        for a in range(0, len(self.times), size):
            block = D[self.codes[a : a + size]]
            states = cur + np.cumsum(block, axis=0)
            cur = states[-1]
            yield self.times[a : a + size], states

    def states(self, width: int | None = None) -> np.ndarray:
        """Dense (len + 1, width) array: initial state, then the state after each jump."""
        width = width or self.width
        first = np.zeros((1, width), dtype=np.int64)
        first[0, : len(self.initial)] = self.initial
        parts = [first] + [s for _, s in self.chunks(width=width)]
        return np.concatenate(parts, axis=0)

    def final_state(self, width: int | None = None) -> np.ndarray:
        width = width or self.width
        out = np.zeros(width, dtype=np.int64)
        out[: len(self.initial)] = self.initial
        if len(self.codes):
            counts = np.bincount(self.codes, minlength=len(self.increments))
            out += counts @ self.increment_matrix(width)
        return out

    def coordinate(self, i: int) -> np.ndarray:
        """Values of coordinate ``i``: initial, then after each jump."""
        delta = np.array([dict(inc).get(i, 0) for inc in self.increments], dtype=np.int64)
        start = int(self.initial[i]) if i < len(self.initial) else 0
        steps = delta[self.codes] if len(self.codes) else np.zeros(0, dtype=np.int64)
        return np.concatenate([[start], start + np.cumsum(steps)])

    def with_times(self, times: np.ndarray, end_time: float) -> "JumpPath":
        return JumpPath(np.asarray(times, dtype=float), self.codes, self.increments, self.initial,
                        self.n, self.seed, self.reason, float(end_time))

    def increment_sequence(self) -> list[tuple[tuple[int, int], ...]]:
        return [self.increments[c] for c in self.codes]


class PathBuilder:
    """Accumulates events for a JumpPath."""

    def __init__(self):
        self.times: list[float] = []
        self.codes: list[int] = []
        self.index: dict[tuple, int] = {}

    def add(self, t: float, inc: tuple) -> None:
        code = self.index.get(inc)
        if code is None:
            code = self.index[inc] = len(self.index)
        self.times.append(t)
        self.codes.append(code)

    def build(self, initial, n, seed, reason, end_time) -> JumpPath:
        incs = [None] * len(self.index)
        for inc, c in self.index.items():
            incs[c] = inc
        return JumpPath(np.array(self.times, dtype=float), np.array(self.codes, dtype=np.int64),
                        tuple(incs), np.asarray(initial, dtype=np.int64).copy(), n, seed, reason,
                        float(end_time))


def raw_rates(spec: TransitionSpec, counts, n: int) -> tuple[tuple[Transition, ...], np.ndarray]:
    """Transitions that can act on ``counts`` and their raw rates ``n beta(counts / n)``."""
    counts = np.asarray(counts)
    trans = spec.materialize(_occupied_top(counts) + 1)
    width = max([len(counts)] + [t.max_index + 1 for t in trans])
    x = np.zeros(width)
    x[: len(counts)] = counts / n
    return trans, n * Compiled(trans, width).rates(x)


def simulate(
    spec: TransitionSpec,
    n: int,
    x0_counts,
    horizon: float | None = None,
    seed: int = 0,
    event_cap: int = 10**8,
    rng: np.random.Generator | None = None,
    check_domain: bool = True,
    absorbing: int | None = None,
) -> JumpPath:
    """Exact (Gillespie direct method) realization of the chain.

    Each event consumes two uniforms: ``u1`` for the waiting time
    ``-log(1 - u1) / R`` and ``u2`` to pick the transition whose cumulative
    rate first exceeds ``u2 R``.  ``horizon=None`` runs until absorption:
    total rate zero, or coordinate ``absorbing`` empty when one is given
    (needed for time-changed chains whose rates do not vanish there).
    """
    if n < 1:
        raise ValueError("population size must be >= 1")
    counts = np.asarray(_as_state(x0_counts), dtype=np.int64).copy()
    if np.any(counts < 0):
        raise ValueError("initial counts must be nonnegative")
    if check_domain and np.abs(counts).sum() / n >= spec.radius:
        raise DomainError("initial state outside E")
    initial = counts.copy()
    stream = UniformStream(rng if rng is not None else make_rng(seed))
    builder = PathBuilder()
    t = 0.0
    top = -1
    comp = None
    reason = "absorbed"
    while True:
        occ = _occupied_top(counts)
        if occ != top or comp is None:
            top = occ
            trans = spec.materialize(top + 1)
            width = max([len(counts)] + [tr.max_index + 1 for tr in trans])
            if width > len(counts):
                counts = np.concatenate([counts, np.zeros(width - len(counts), dtype=np.int64)])
            comp = Compiled(trans, width)
            deltas = comp.matrix.astype(np.int64)
        if absorbing is not None and counts[absorbing] == 0:
            reason = "absorbed"
            break
        rates = n * comp.rates(counts / n)
        # exact zeros of the complement factor come out as -1e-14 or so
        rates[(rates < 0) & (rates > -1e-9 * n)] = 0.0
        if np.any(rates < 0):
            k = int(np.argmin(rates))
            raise SimulationInvariantError(f"negative rate {rates[k]} for {trans[k].increment} at {counts}")
        cum = np.cumsum(rates)
        total = cum[-1] if cum.size else 0.0
        if total <= 0.0:
            reason = "absorbed"
            break
        if len(builder.times) >= event_cap:
            reason = "event-cap"
            break
        u1 = stream.next()
        u2 = stream.next()
        dt = -math.log1p(-u1) / total
        if horizon is not None and t + dt > horizon:
            reason = "horizon"
            t = float(horizon)
            break
        t += dt
        k = int(np.searchsorted(cum, u2 * total, side="right"))
        k = min(k, len(cum) - 1)
        while rates[k] <= 0.0:  # guard against landing on a zero-width slot
            k -= 1
        counts = counts + deltas[k]
        if np.any(counts < 0):
            raise SimulationInvariantError(
                f"transition {trans[k].increment} drove a coordinate negative: {counts}"
            )
        builder.add(t, trans[k].increment)
    end = t if reason != "event-cap" else (builder.times[-1] if builder.times else 0.0)
    return builder.build(initial, n, seed, reason, end)


# ---------------------------------------------------------------------------
# deterministic limit


@dataclass(frozen=True, eq=False)
class LimitTrajectory:
    """Grid solution of X' = F(X).

    ``states[g]`` holds coordinates 0..W-1 at ``times[g]``; ``remainder[g]``
    bounds the l1 mass lost past the truncation up to that time.
    """

    times: np.ndarray
    states: np.ndarray
    remainder: np.ndarray
    reason: str = "horizon"

    @property
    def width(self) -> int:
        return self.states.shape[1]

    def at(self, t, width: int | None = None) -> np.ndarray:
        """Linear interpolation on the grid; clamps outside [t_0, t_G]."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        g = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        t0 = self.times[g]
        t1 = self.times[g + 1]
        w = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)[:, None]
        out = (1 - w) * self.states[g] + w * self.states[g + 1]
        if width is not None and width != self.width:
            res = np.zeros((len(t), width))
            m = min(width, self.width)
            res[:, :m] = out[:, :m]
            out = res
        return out

    def nonnegative(self, tol: float = 1e-12) -> bool:
        return bool(np.all(self.states >= -tol))


def integrate_limit(
    spec: TransitionSpec,
    x0,
    horizon: float,
    step: float = DEFAULT_STEP,
    eps_trunc: float = EPS_TRUNC,
    strict: bool = True,
    record_every: int = 1,
) -> LimitTrajectory:
    """Classical RK4 for X' = F(X) on a growing truncation.

    Coordinates start truncated at (highest occupied index + 32).  Whenever
    the flux leaving the top coordinate exceeds ``eps_trunc`` per unit time
    the truncation grows, with the headroom doubling each time.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = _as_state(x0).copy()
    if strict and np.abs(x).sum() >= spec.radius:
        raise DomainError("initial state outside E")
    headroom = INITIAL_HEADROOM
    top = spec.coordinate_limit(_occupied_top(x) + headroom)

    def setup(top):
        return Compiled(spec.materialize(top), top + 1)

    comp = setup(top)
    if len(x) < top + 1:
        x = np.concatenate([x, np.zeros(top + 1 - len(x))])
    elif len(x) > top + 1:
        if np.any(x[top + 1 :] != 0):
            raise DomainError("initial state occupies coordinates beyond the model's support")
        x = x[: top + 1]
    nsteps = max(1, int(math.ceil(horizon / step - 1e-9)))
    times = [0.0]
    states = [x.copy()]
    lost = 0.0
    remainder = [0.0]
    t = 0.0
    reason = "horizon"
    for s in range(nsteps):
        h = min(step, horizon - t)
        if h <= 0:
            break
        k1, o1 = comp.drift(x)
        k2, o2 = comp.drift(x + 0.5 * h * k1)
        k3, o3 = comp.drift(x + 0.5 * h * k2)
        k4, o4 = comp.drift(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        flux = (o1 + 2 * o2 + 2 * o3 + o4) / 6.0
        lost += h * flux
        t = horizon if s == nsteps - 1 else t + h
        if strict and np.abs(x).sum() >= spec.radius:
            reason = f"left E at t={t:.6g}"
            break
        if flux > eps_trunc and (spec.support is None or top < spec.support):
            headroom *= 2
            new_top = spec.coordinate_limit(top + headroom)
            if new_top > top:
                x = np.concatenate([x, np.zeros(new_top - top)])
                states = [np.concatenate([v, np.zeros(new_top + 1 - len(v))]) for v in states]
                top = new_top
                comp = setup(top)
        if (s + 1) % record_every == 0 or s == nsteps - 1:
            times.append(t)
            states.append(x.copy())
            remainder.append(lost)
    width = max(len(v) for v in states)
    arr = np.zeros((len(states), width))
    for g, v in enumerate(states):
        arr[g, : len(v)] = v
    return LimitTrajectory(np.array(times), arr, np.array(remainder), reason)


def sup_distance(path: JumpPath, traj: LimitTrajectory, upto: float, scale: float | None = None) -> float:
    """sup_{s <= upto} || path(s) / n - traj(s) ||_1.

    The path is right-continuous and piecewise constant (frozen after its
    last event); the trajectory is linear between grid points, so the l1 gap
    is convex between consecutive breakpoints and the supremum is attained at
    a jump time (from either side), a grid point, or ``upto``.
    """
    n = path.n if scale is None else scale
    width = max(path.width, traj.width)
    best = 0.0
    cur = np.zeros(width)
    cur[: len(path.initial)] = path.initial
    prev_time = 0.0
    grid = traj.times[traj.times <= upto]

    def check(points, states):
        nonlocal best
        if len(points):
            ref = traj.at(points, width)
            best = max(best, float(np.max(np.abs(states / n - ref).sum(axis=1))))

    for times, states in path.chunks(width=width):
        keep = times <= upto
        times = times[keep]
        states = states[: len(times)]
        if len(times) == 0:
            break
        before = np.vstack([cur[None, :], states[:-1]])
        check(times, before)
        check(times, states)
        # grid points inside (prev_time, times[-1]): state is the one in force there
        g = grid[(grid >= prev_time) & (grid < times[-1])]
        if len(g):
            idx = np.searchsorted(times, g, side="right") - 1
            in_force = np.where(idx[:, None] >= 0, states[np.maximum(idx, 0)], before[0])
            check(g, in_force)
        cur = states[-1].astype(float)
        prev_time = float(times[-1])
        if not keep.all():
            break
    g = grid[grid >= prev_time]
    tail = np.concatenate([g, [upto]])
    check(tail, np.repeat(cur[None, :], len(tail), axis=0))
    return best
