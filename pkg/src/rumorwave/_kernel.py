"""Compiled event loop for the original-clock MT-RA chain.

Mirrors ``ddpm.simulate`` on ``mtra_transitions(dist, "original", n)``:
same transition order, same two uniforms per event, so a given uniform
stream produces the same sequence of jumps.
"""
import math

import numpy as np
from numba import njit

ABSORBED, HORIZON, EVENT_CAP, NEED_UNIFORMS, NEED_SPACE, NEED_OUTPUT = range(6)

# code 0: spreader -> stifler; code 3i + a for listener index i with
# a = 0 (listener -> stifler, i = 1 only), 1 (-> spreader), 2 (-> listener i+1)


@njit(cache=True)
def run_chain(counts, n, p0, spread, advance, u, upos, times, codes, nev, t,
              maxocc, sum_x, horizon, event_cap):
    cap = counts.shape[0] - 1
    while True:
        if maxocc >= cap:
            return NEED_SPACE, upos, nev, t, maxocc, sum_x
        if nev >= times.shape[0]:
            return NEED_OUTPUT, upos, nev, t, maxocc, sum_x
        y = float(counts[0])
        total = (n - 1.0 - sum_x) * y
        for i in range(1, maxocc + 1):
            xy = float(counts[i]) * y
            if i == 1:
                total += p0 * xy
            total += spread[i] * xy
            total += advance[i] * xy
        if total <= 0.0:
            return ABSORBED, upos, nev, t, maxocc, sum_x
        if nev >= event_cap:
            return EVENT_CAP, upos, nev, t, maxocc, sum_x
        if upos + 2 > u.shape[0]:
            return NEED_UNIFORMS, upos, nev, t, maxocc, sum_x
        u1 = u[upos]
        u2 = u[upos + 1]
        upos += 2
        dt = -math.log1p(-u1) / total
        if horizon >= 0.0 and t + dt > horizon:
            return HORIZON, upos, nev, horizon, maxocc, sum_x
        t += dt
        target = u2 * total
        acc = (n - 1.0 - sum_x) * y
        code = 0
        if not acc > target:
            code = -1
            last = 0
            for i in range(1, maxocc + 1):
                xy = float(counts[i]) * y
                if i == 1:
                    r = p0 * xy
                    if r > 0.0:
                        acc += r
                        last = 3
                        if acc > target:
                            code = 3
                            break
                r = spread[i] * xy
                if r > 0.0:
                    acc += r
                    last = 3 * i + 1
                    if acc > target:
                        code = 3 * i + 1
                        break
                r = advance[i] * xy
                if r > 0.0:
                    acc += r
                    last = 3 * i + 2
                    if acc > target:
                        code = 3 * i + 2
                        break
            if code < 0:
                code = last
        # apply
        if code == 0:
            counts[0] -= 1
        else:
            i = code // 3
            a = code % 3
            counts[i] -= 1
            if a == 0:
                sum_x -= 1.0
            elif a == 1:
                counts[0] += 1
                sum_x -= 1.0
            else:
                counts[i + 1] += 1
                if i + 1 > maxocc:
                    maxocc = i + 1
        while maxocc > 1 and counts[maxocc] == 0:
            maxocc -= 1
        times[nev] = t
        codes[nev] = code
        nev += 1
