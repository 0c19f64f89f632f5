"""Straggler injection: additive delays, comm slowdowns and speed multipliers per node."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from ..core import NodeId, PatternKind, ScenarioConfig, StragglerPattern


@dataclass
class _TransientDraws:
    rng: random.Random
    drawn: list[bool] = field(default_factory=list)

    def disturbed(self, cycle: int, probability: float) -> bool:
        while len(self.drawn) <= cycle:
            self.drawn.append(self.rng.random() < probability)
        return self.drawn[cycle]


@dataclass
class NodeCondition:
    """Per-node injection state; ``restarted_at`` is the last relaunch (seconds) or None."""

    incarnation: int = 0
    restarted_at: float | None = None


class Injector:
    """Answers ``delay(node, t)``, ``comm_factor(node)`` and ``speed_factor(node)``.

    Transient draws come from one PRNG stream per (pattern, node), seeded
    from the run seed and the node identity, so adding nodes leaves the
    other nodes' draws unchanged. A relaunched node sheds its persistent
    slowdowns and any transient disturbance of the cycle it restarted in.
    """

    def __init__(self, cfg: ScenarioConfig):
        self.seed = cfg.seed
        self.patterns = cfg.patterns
        self._draws: dict[tuple[int, NodeId], _TransientDraws] = {}
        self._by_node: dict[NodeId, list[tuple[int, StragglerPattern]]] = {}
        self.cond: dict[NodeId, NodeCondition] = {}
        for node in cfg.workers() + cfg.servers():
            self._by_node[node] = [(i, p) for i, p in enumerate(self.patterns) if p.applies_to(node)]
            self.cond[node] = NodeCondition()

    def _stream(self, idx: int, node: NodeId) -> _TransientDraws:
        key = (idx, node)
        d = self._draws.get(key)
        if d is None:
            d = _TransientDraws(random.Random(f"{self.seed}:{idx}:{node.role.value}:{node.index}"))
            self._draws[key] = d
        return d

    def restarted(self, node: NodeId, t: float) -> None:
        c = self.cond[node]
        c.incarnation += 1
        c.restarted_at = t

    def transient_active(self, idx: int, p: StragglerPattern, node: NodeId, t: float) -> bool:
        cycle = math.floor(t / p.cycle)
        start = cycle * p.cycle
        if t - start >= p.on_period:
            return False
        c = self.cond[node]
        if c.restarted_at is not None and c.restarted_at >= start:
            return False
        return self._stream(idx, node).disturbed(0 if p.fixed_per_run else cycle, p.probability)

    def delay(self, node: NodeId, t: float) -> float:
        total = 0.0
        for idx, p in self._by_node[node]:
            if p.kind is PatternKind.TRANSIENT:
                if self.transient_active(idx, p, node, t):
                    total += p.delay
            elif p.kind is PatternKind.PERSISTENT and p.component == "compute":
                if self.cond[node].incarnation == 0:
                    total += p.delay
        return total

    def comm_factor(self, node: NodeId) -> float:
        for _, p in self._by_node[node]:
            if p.kind is PatternKind.PERSISTENT and p.component == "comm" and self.cond[node].incarnation == 0:
                return 2.0
        return 1.0

    def speed_factor(self, node: NodeId) -> float:
        f = 1.0
        for _, p in self._by_node[node]:
            if p.kind is PatternKind.DETERMINISTIC:
                f *= p.speed_multiplier
        return f
