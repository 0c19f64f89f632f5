"""Independent reference computations used to check the library."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np


def batch_optimum(B: int, speeds: list[float]) -> Fraction:
    """Exact min over all compositions of B into positive parts of max b_i / v_i.

    Exhaustive over compositions, organised as a memoised recursion on
    (worker, samples left) so every composition is covered once.
    """
    v = [Fraction(s) for s in speeds]
    n = len(v)

    @lru_cache(maxsize=None)
    def best(i: int, left: int) -> Fraction | None:
        if i == n - 1:
            return Fraction(left) / v[i] if left >= 1 else None
        out = None
        for b in range(1, left - (n - 1 - i) + 1):
            rest = best(i + 1, left - b)
            if rest is None:
                continue
            z = max(Fraction(b) / v[i], rest)
            if out is None or z < out:
                out = z
        return out

    return best(0, B)


def brute_batch_enumerate(B: int, speeds: list[float]) -> Fraction:
    """Plain itertools enumeration; only for tiny cases."""
    n = len(speeds)
    v = [Fraction(s) for s in speeds]
    best = None
    for cuts in itertools.combinations(range(1, B), n - 1):
        parts = [b - a for a, b in zip((0,) + cuts, cuts + (B,))]
        z = max(Fraction(p) / vi for p, vi in zip(parts, v))
        best = z if best is None else min(best, z)
    return best


def grad_accum_optimum(B: int, classes: list[tuple[int, float, int, int]], c_min: int, c_max: int) -> float | None:
    """Full-grid minimum of max_i C_i b_i / v_i subject to sum n_i C_i b_i == B.

    ``classes`` are (count, speed, b_min, b_max). The last class's batch is
    implied by the sum constraint, so the grid over the other classes is
    enumerated with numpy broadcasting. Returns None when infeasible.
    """
    k = len(classes)
    best = math.inf
    for C in itertools.product(range(c_min, c_max + 1), repeat=k):
        # grid over all classes but the last
        sums = np.zeros(1, dtype=np.int64)
        times = np.zeros(1)
        for (n, v, lo, hi), c in zip(classes[:-1], C[:-1]):
            b = np.arange(lo, hi + 1, dtype=np.int64)
            sums = (sums[:, None] + n * c * b[None, :]).ravel()
            times = np.maximum(times[:, None], c * b[None, :] / v).ravel()
        n, v, lo, hi = classes[-1]
        c = C[-1]
        left = B - sums
        unit = n * c
        ok = (left % unit == 0)
        b_last = left // unit
        ok &= (b_last >= lo) & (b_last <= hi)
        if ok.any():
            z = np.maximum(times[ok], c * b_last[ok] / v).min()
            best = min(best, float(z))
    return None if best == math.inf else best


def shard_lengths(N: int, B: int, M: int) -> list[int]:
    span = B * M
    K = -(-N // span)
    return [span] * (K - 1) + [N - (K - 1) * span]


def covers_exactly(ranges: list[tuple[int, int]], N: int) -> bool:
    """True when the half-open ranges tile [0, N) with no gap or overlap."""
    pos = 0
    for a, b in sorted(ranges):
        if a != pos or b <= a:
            return False
        pos = b
    return pos == N


def fluid_jct(total_samples: int, speeds: list[float], per_iteration_overhead: float, batch: int) -> float:
    """Work-conserving lower-bound estimate: total work over aggregate rate."""
    rate = sum(batch / (batch / v + per_iteration_overhead) for v in speeds)
    return total_samples / rate


def pearson(x, y) -> float:
    return float(np.corrcoef(np.asarray(x, float), np.asarray(y, float))[0, 1])
