"""Batch-size allocation.

Two MinMax problems: splitting a global batch across workers of known
throughput (the finish time of worker i is ``B_i / v_i``), and the
gradient-accumulation variant over device classes, where a class runs
``C_i`` micro-batches of ``B_i`` before synchronizing.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .core import BatchAllocation

MIN_SPEED = 1e-9
Z_TOL = 1e-9


class Infeasible(ValueError):
    def __init__(self, msg: str, below: int | None = None, above: int | None = None):
        super().__init__(msg)
        self.below = below
        self.above = above


@dataclass(frozen=True)
class BatchProblem:
    B: int
    speeds: tuple[float, ...]

    def __init__(self, B: int, speeds: Sequence[float]):
        object.__setattr__(self, "B", int(B))
        object.__setattr__(self, "speeds", tuple(speeds))


@dataclass(frozen=True)
class DeviceClassSpec:
    count: int
    speed: float
    b_min: int
    b_max: int
    workers: tuple[int, ...] | None = None


@dataclass(frozen=True)
class GradAccumProblem:
    B: int
    classes: tuple[DeviceClassSpec, ...]
    c_min: int = 1
    c_max: int = 1

    def __init__(self, B: int, classes: Sequence[DeviceClassSpec], c_min: int = 1, c_max: int = 1):
        object.__setattr__(self, "B", int(B))
        object.__setattr__(self, "classes", tuple(classes))
        object.__setattr__(self, "c_min", int(c_min))
        object.__setattr__(self, "c_max", int(c_max))


@dataclass(frozen=True)
class AllocationSolution:
    allocation: BatchAllocation
    objective_z: float
    per_class: tuple[tuple[int, int], ...] = ()


def _speeds(speeds: Sequence[float]) -> list[Fraction]:
    return [Fraction(max(float(v), MIN_SPEED)) for v in speeds]


def continuous_relaxation(p: BatchProblem) -> list[Fraction]:
    v = _speeds(p.speeds)
    total = sum(v)
    return [p.B * vi / total for vi in v]


def solve_batch(p: BatchProblem) -> AllocationSolution:
    """Integer split of ``p.B`` minimizing ``max_i B_i / v_i`` with every ``B_i >= 1``.

    Starts from the floored proportional split and moves single samples by
    marginal finish time. The result is the unique set of the B smallest
    ``(finish time, worker index)`` unit keys, so ties favour lower indices
    and uniformly scaled speeds give the same allocation.
    """
    n = len(p.speeds)
    if n == 0:
        raise Infeasible("no workers")
    if p.B < n:
        raise Infeasible(f"global batch {p.B} smaller than worker count {n}", below=None, above=n)
    v = _speeds(p.speeds)
    total = sum(v)
    sizes = [max(1, math.floor(p.B * vi / total)) for vi in v]
    surplus = sum(sizes) - p.B
    if surplus < 0:
        heap = [(Fraction(sizes[i] + 1) / v[i], i) for i in range(n)]
        heapq.heapify(heap)
        for _ in range(-surplus):
            _, i = heapq.heappop(heap)
            sizes[i] += 1
            heapq.heappush(heap, (Fraction(sizes[i] + 1) / v[i], i))
    elif surplus > 0:
        heap = [(-Fraction(sizes[i]) / v[i], -i) for i in range(n) if sizes[i] > 1]
        heapq.heapify(heap)
        for _ in range(surplus):
            _, ni = heapq.heappop(heap)
            i = -ni
            sizes[i] -= 1
            if sizes[i] > 1:
                heapq.heappush(heap, (-Fraction(sizes[i]) / v[i], -i))
    z = max(Fraction(b) / vi for b, vi in zip(sizes, v))
    return AllocationSolution(BatchAllocation.from_sizes(sizes), float(z))


def _range_or(bits: int, step: int, count: int, mask: int) -> int:
    """``bits | bits<<step | ... | bits<<(count*step)`` in O(log count) shifts."""
    covered = 0
    while covered < count:
        s = min(covered + 1, count - covered)
        bits = (bits | (bits << (s * step))) & mask
        covered += s
    return bits


def _reachable(weights: Sequence[int], counts: Sequence[int], target: int) -> list[int]:
    """Prefix bitsets of sums ``sum w_i x_i`` with ``0 <= x_i <= counts_i``, capped at ``target``."""
    mask = (1 << (target + 1)) - 1
    out = [1]
    for w, r in zip(weights, counts):
        out.append(_range_or(out[-1], w, r, mask))
    return out


def _solve_fixed_c(p: GradAccumProblem, C: tuple[int, ...], v: list[float]):
    k = len(p.classes)
    w = [c.count * Ci for c, Ci in zip(p.classes, C)]
    lo = [c.b_min for c in p.classes]
    T = p.B - sum(wi * li for wi, li in zip(w, lo))
    if T < 0:
        return None
    # no class can usefully exceed lo + T // w
    hi = [min(c.b_max, c.b_min + T // wi) for c, wi in zip(p.classes, w)]
    if sum(wi * (h - l) for wi, h, l in zip(w, hi, lo)) < T:
        return None

    def time(i, b):
        return C[i] * b / v[i]

    def caps(z):
        out = []
        for i in range(k):
            # largest b in [lo, hi] with time(i, b) <= z
            b = min(hi[i], math.floor(z * v[i] / C[i]) + 1)
            while b >= lo[i] and time(i, b) > z:
                b -= 1
            while b + 1 <= hi[i] and time(i, b + 1) <= z:
                b += 1
            if b < lo[i]:
                return None
            out.append(b - lo[i])
        return out

    def feasible(z):
        r = caps(z)
        if r is None:
            return None
        pref = _reachable(w, r, T)
        return (r, pref) if pref[-1] >> T & 1 else None

    span = sum(h - l + 1 for h, l in zip(hi, lo))
    if span <= 20000:
        cands = sorted({time(i, b) for i in range(k) for b in range(lo[i], hi[i] + 1)})
        if feasible(cands[-1]) is None:
            return None
        a, b = 0, len(cands) - 1
        while a < b:
            mid = (a + b) // 2
            if feasible(cands[mid]) is not None:
                b = mid
            else:
                a = mid + 1
        z = cands[a]
    else:
        zlo, zhi = 0.0, max(time(i, hi[i]) for i in range(k))
        if feasible(zhi) is None:
            return None
        for _ in range(200):
            mid = (zlo + zhi) / 2
            if mid <= zlo or mid >= zhi or zhi - zlo <= Z_TOL * 1e-3:
                break
            if feasible(mid) is not None:
                zhi = mid
            else:
                zlo = mid
        z = zhi
    r, pref = feasible(z)
    # walk back through the prefix sets, giving later classes as much as possible
    x = [0] * k
    rem = T
    for i in range(k - 1, -1, -1):
        for xi in range(min(r[i], rem // w[i]), -1, -1):
            if pref[i] >> (rem - w[i] * xi) & 1:
                x[i] = xi
                rem -= w[i] * xi
                break
    assert rem == 0
    batches = [l + xi for l, xi in zip(lo, x)]
    zz = max(time(i, batches[i]) for i in range(k))
    return zz, batches


def solve_grad_accum(p: GradAccumProblem) -> AllocationSolution:
    """Per-class ``(batches, C_i)`` minimizing ``max_i C_i batches / v_i`` with ``sum n_i C_i batches = B`` exactly.

    Enumerates accumulation vectors; for each, binary-searches the smallest
    finish time whose per-class caps still admit an exact-sum assignment,
    checked with a bitset subset-sum. Ties keep the smallest accumulation
    vector in lexicographic order.
    """
    if not p.classes:
        raise Infeasible("no device classes")
    if not 1 <= p.c_min <= p.c_max:
        raise ValueError("need 1 <= c_min <= c_max")
    for c in p.classes:
        if not 1 <= c.b_min <= c.b_max or c.count < 1:
            raise ValueError("class bounds need 1 <= b_min <= b_max and count >= 1")
    v = [max(float(c.speed), MIN_SPEED) for c in p.classes]
    best = None
    for accum in itertools.product(range(p.c_min, p.c_max + 1), repeat=len(p.classes)):
        res = _solve_fixed_c(p, accum, v)
        if res is None:
            continue
        z, batches = res
        if best is None or z < best[0] - Z_TOL:
            best = (z, accum, batches)
    if best is None:
        below, above = _nearest_totals(p)
        raise Infeasible(f"no (batch, accumulation) combination reaches exactly {p.B}", below, above)
    z, accum, batches = best
    per_class = tuple(zip(batches, accum))
    entries = []
    next_id = 0
    for c, (b, acc) in zip(p.classes, per_class):
        # classes without explicit members get consecutive worker ids
        ids = c.workers if c.workers is not None else range(next_id, next_id + c.count)
        entries.extend((wk, b, acc) for wk in ids)
        next_id += c.count
    return AllocationSolution(BatchAllocation(tuple(entries)), z, per_class)


def _nearest_totals(p: GradAccumProblem) -> tuple[int | None, int | None]:
    below, above = None, None
    for C in itertools.product(range(p.c_min, p.c_max + 1), repeat=len(p.classes)):
        w = [c.count * Ci for c, Ci in zip(p.classes, C)]
        base = sum(wi * c.b_min for wi, c in zip(w, p.classes))
        top = sum(wi * c.b_max for wi, c in zip(w, p.classes))
        if base > p.B:
            above = base if above is None else min(above, base)
            continue
        r = [min(c.b_max - c.b_min, (p.B - base) // wi + 1) for c, wi in zip(p.classes, w)]
        span = p.B - base + max(w)
        bits = _reachable(w, r, span)[-1]
        for s in range(p.B - base, -1, -1):
            if bits >> s & 1:
                below = base + s if below is None else max(below, base + s)
                break
        if top >= p.B:
            for s in range(p.B - base + 1, span + 1):
                if bits >> s & 1:
                    above = base + s if above is None else min(above, base + s)
                    break
    return below, above


def fixed_batch_split(B: int, weights: Sequence[float], workers: Sequence[int]) -> BatchAllocation:
    """Largest-remainder style split of ``B`` proportional to ``weights`` (each worker >= 1)."""
    sol = solve_batch(BatchProblem(B, weights))
    return BatchAllocation(tuple((wk, b, 1) for wk, (_, b, _) in zip(workers, sol.allocation.per_worker)))


__all__ = [
    "AllocationSolution",
    "BatchProblem",
    "DeviceClassSpec",
    "GradAccumProblem",
    "Infeasible",
    "continuous_relaxation",
    "solve_batch",
    "solve_grad_accum",
    "fixed_batch_split",
]

