"""Per-node agents: buffered reporting and synchronized action application."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .core import Action, ActionKind, IterationRecord, NodeId


class LateEnvelope(RuntimeError):
    """An envelope arrived at or after its apply iteration."""


class MonitorUnavailable(ConnectionError):
    pass


@dataclass(frozen=True)
class SyncEnvelope:
    action: Action
    apply_at_iteration: int
    broadcast_seq: int


@dataclass(frozen=True)
class Applied:
    """What a node changes at the barrier."""

    node: NodeId
    seq: int
    iteration: int
    batch: tuple[int, int] | None = None
    backups: int | None = None
    lr_scale: float | None = None
    terminate: bool = False


class Agent:
    def __init__(self, node: NodeId, report_every: int = 10, sink: Callable[[IterationRecord], None] | None = None, buffer_limit: int = 1000):
        if report_every < 1:
            raise ValueError("report_every must be positive")
        self.node = node
        self.report_every = report_every
        self.sink = sink
        self.buffer_limit = buffer_limit
        self.buffer: deque[IterationRecord] = deque()
        self.dropped = 0
        self.flushes = 0
        self._since_flush = 0
        self.last_seq = -1

    def report_tick(self, record: IterationRecord) -> int:
        """Buffer one record; every ``report_every`` ticks push the buffer. Returns records sent."""
        self.buffer.append(record)
        if len(self.buffer) > self.buffer_limit:
            self.buffer.popleft()
            self.dropped += 1
        self._since_flush += 1
        if self._since_flush >= self.report_every:
            self._since_flush = 0
            return self.flush()
        return 0

    def flush(self) -> int:
        sent = 0
        if self.sink is None:
            return 0
        try:
            while self.buffer:
                self.sink(self.buffer[0])
                self.buffer.popleft()
                sent += 1
        except ConnectionError:
            pass  # keep the rest for the next flush
        if sent:
            self.flushes += 1
        return sent

    def reset(self) -> None:
        """A killed node loses its unsent reports."""
        self.buffer.clear()
        self._since_flush = 0

    def barrier_apply(self, envelope: SyncEnvelope, current_iteration: int) -> Applied:
        """Apply at the boundary before ``apply_at_iteration``.

        ``current_iteration`` is the last iteration this node completed.
        """
        if current_iteration >= envelope.apply_at_iteration:
            raise LateEnvelope(
                f"{self.node}: envelope {envelope.broadcast_seq} for iteration {envelope.apply_at_iteration} "
                f"received after iteration {current_iteration}"
            )
        if envelope.broadcast_seq <= self.last_seq:
            raise LateEnvelope(f"{self.node}: envelope {envelope.broadcast_seq} replayed")
        self.last_seq = envelope.broadcast_seq
        a = envelope.action
        at = envelope.apply_at_iteration
        if a.kind is ActionKind.ADJUST_BS:
            return Applied(self.node, envelope.broadcast_seq, at, batch=a.alloc.batch_of(self.node.index))
        if a.kind is ActionKind.BACKUP_WORKERS:
            return Applied(self.node, envelope.broadcast_seq, at, backups=a.backups)
        if a.kind is ActionKind.ADJUST_LR:
            return Applied(self.node, envelope.broadcast_seq, at, lr_scale=a.lr_scale[self.node.index])
        if a.kind is ActionKind.KILL_RESTART:
            return Applied(self.node, envelope.broadcast_seq, at, terminate=a.target == self.node)
        raise ValueError("no envelope is built for NONE")


@dataclass
class SyncGroup:
    """Worker agents that apply global actions at one shared iteration.

    The primary is the live worker with the lowest index. Broadcasting is
    all-or-nothing: if any member is unreachable the envelope is dropped.
    """

    members: set[NodeId] = field(default_factory=set)
    unreachable: set[NodeId] = field(default_factory=set)
    sync_lead: int = 1
    seq: int = 0
    aborted: int = 0
    sent: int = 0

    @property
    def primary(self) -> NodeId | None:
        live = [m for m in self.members if m not in self.unreachable]
        return min(live) if live else None

    def join(self, node: NodeId) -> None:
        self.members.add(node)
        self.unreachable.discard(node)

    def leave(self, node: NodeId) -> None:
        self.members.discard(node)
        self.unreachable.discard(node)

    def broadcast(self, action: Action, current_iteration: int) -> SyncEnvelope | None:
        if action.is_none:
            return None
        if self.primary is None or self.unreachable & self.members:
            self.aborted += 1
            return None
        if action.kind is ActionKind.ADJUST_BS:
            covered = {NodeId.worker(w) for w, _, _ in action.alloc.per_worker}
            if covered != self.members:
                self.aborted += 1
                return None
        env = SyncEnvelope(action, current_iteration + self.sync_lead, self.seq)
        self.seq += 1
        self.sent += 1
        return env
