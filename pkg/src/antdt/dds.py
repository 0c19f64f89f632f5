"""Stateful dynamic data sharding.

Shards are ``(start, length)`` index ranges. A ledger tracks each shard's
TODO / DOING / DONE state for one epoch and hands TODO shards out in a
seeded shuffled order; shards held by a failed node go back to the tail of
the queue.
"""

from __future__ import annotations

import enum
import random
import threading
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterator

from .core import INT64_MAX, ConfigError, NodeId, Role


class IllegalTransition(RuntimeError):
    """A shard state change the protocol forbids; indicates a caller bug."""


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class Shard:
    id: int
    start: int
    length: int
    epoch: int = 0

    @property
    def stop(self) -> int:
        return self.start + self.length

    def to_json(self) -> dict:
        return {"id": self.id, "start": self.start, "len": self.length}


class Status(str, enum.Enum):
    TODO = "TODO"
    DOING = "DOING"
    DONE = "DONE"


@dataclass(frozen=True)
class ShardState:
    status: Status
    node: NodeId | None = None
    at: float | None = None
    lease: int = -1


TODO = ShardState(Status.TODO)


class ShardLedger:
    def __init__(self, shards: list[Shard], order: list[int], epoch: int = 0):
        self.shards = {s.id: s for s in shards}
        self.queue: deque[int] = deque(order)
        self.states: dict[int, ShardState] = {s.id: TODO for s in shards}
        self._counts = {Status.TODO: len(shards), Status.DOING: 0, Status.DONE: 0}
        self.epoch = epoch
        self.K = len(shards)
        self._lease_seq = 0

    def __repr__(self) -> str:
        return f"ShardLedger(epoch={self.epoch}, K={self.K}, progress={self.progress()})"

    def _set(self, sid: int, state: ShardState) -> None:
        self._counts[self.states[sid].status] -= 1
        self._counts[state.status] += 1
        self.states[sid] = state

    # -- operations ---------------------------------------------------------

    def fetch(self, worker: NodeId, now: float, eligible: Callable[[Shard], bool] | None = None) -> Shard | None:
        """Lease the head TODO shard to ``worker``; ``None`` once the queue is empty.

        ``eligible`` restricts the lease to the first queued shard passing the
        filter (used for static partitions).
        """
        if worker.role is not Role.WORKER:
            raise ProtocolError(f"{worker} is not a worker and cannot fetch shards")
        if eligible is None:
            if not self.queue:
                return None
            sid = self.queue.popleft()
        else:
            for pos, sid in enumerate(self.queue):
                if eligible(self.shards[sid]):
                    del self.queue[pos]
                    break
            else:
                return None
        self._set(sid, ShardState(Status.DOING, worker, now, self._lease_seq))
        self._lease_seq += 1
        return self.shards[sid]

    def report_done(self, shard_id: int, worker: NodeId, now: float) -> None:
        st = self.states.get(shard_id)
        if st is None:
            raise IllegalTransition(f"unknown shard {shard_id}")
        if st.status is not Status.DOING:
            raise IllegalTransition(f"shard {shard_id} is {st.status.value}, not DOING")
        if st.node != worker:
            raise IllegalTransition(f"shard {shard_id} is held by {st.node}, not {worker}")
        self._set(shard_id, ShardState(Status.DONE, worker, now))

    def recover_node(self, node: NodeId) -> int:
        held = sorted(
            (st.lease, sid) for sid, st in self.states.items() if st.status is Status.DOING and st.node == node
        )
        for _, sid in held:
            self._set(sid, TODO)
            self.queue.append(sid)
        return len(held)

    def progress(self) -> tuple[int, int, int]:
        c = self._counts
        return c[Status.TODO], c[Status.DOING], c[Status.DONE]

    def _recount(self) -> dict[Status, int]:
        counts = {Status.TODO: 0, Status.DOING: 0, Status.DONE: 0}
        for st in self.states.values():
            counts[st.status] += 1
        return counts

    # -- queries ------------------------------------------------------------

    @property
    def complete(self) -> bool:
        return self.progress()[2] == self.K

    def held_by(self, node: NodeId) -> list[int]:
        return [sid for sid, st in self.states.items() if st.status is Status.DOING and st.node == node]

    def done_shards(self) -> Iterator[tuple[Shard, ShardState]]:
        for sid, st in self.states.items():
            if st.status is Status.DONE:
                yield self.shards[sid], st

    def check(self) -> None:
        """Assert the conservation and queue invariants."""
        assert self._recount() == self._counts, "state counters drifted"
        todo, doing, done = self.progress()
        assert todo + doing + done == self.K
        queued = set(self.queue)
        assert len(queued) == len(self.queue), "duplicate ids in queue"
        assert queued == {sid for sid, st in self.states.items() if st.status is Status.TODO}

    def snapshot(self) -> dict:
        return {
            "queue": list(self.queue),
            "states": dict(self.states),
            "lease_seq": self._lease_seq,
        }

    def restore(self, snap: dict) -> None:
        self.queue = deque(snap["queue"])
        self.states = dict(snap["states"])
        self._counts = self._recount()
        self._lease_seq = snap["lease_seq"]


def shard_count(N: int, B: int, M: int) -> int:
    return -(-N // (B * M))


def build_shards(N: int, B: int, M: int, epoch: int = 0, seed: int = 0) -> ShardLedger:
    """Cut ``[0, N)`` into ``ceil(N / (B*M))`` shards and queue them in shuffled order."""
    if N < 1 or B < 1 or M < 1:
        raise ConfigError("build_shards needs N, B, M >= 1")
    span = B * M
    if span > INT64_MAX or N > INT64_MAX:
        raise ConfigError("shard arithmetic overflows 64 bits")
    K = shard_count(N, B, M)
    shards = [Shard(i, i * span, min(span, N - i * span), epoch) for i in range(K)]
    order = list(range(K))
    random.Random(seed ^ epoch).shuffle(order)
    return ShardLedger(shards, order, epoch)


def fetch_shard(ledger: ShardLedger, worker: NodeId, now: float) -> Shard | None:
    return ledger.fetch(worker, now)


def report_done(ledger: ShardLedger, shard_id: int, worker: NodeId, now: float) -> None:
    ledger.report_done(shard_id, worker, now)


def recover_node(ledger: ShardLedger, node: NodeId) -> int:
    return ledger.recover_node(node)


def epoch_progress(ledger: ShardLedger) -> tuple[int, int, int]:
    return ledger.progress()


class DdsService:
    """Serialized owner of the ledgers; request/response over plain dicts.

    Epochs roll forward automatically: once the current epoch's queue is
    empty and every shard is done, the next fetch builds the next epoch.
    """

    def __init__(self, N: int, B: int, M: int, seed: int = 0, epochs: int = 1, clock: Callable[[], float] | None = None):
        self.N, self.B, self.M, self.seed, self.epochs = N, B, M, seed, epochs
        self.ledger = build_shards(N, B, M, 0, seed)
        self._clock = clock or (lambda: 0.0)
        self._lock = threading.Lock()

    def handle(self, msg: dict) -> dict:
        with self._lock:
            try:
                return self._dispatch(msg)
            except (IllegalTransition, ProtocolError, KeyError, ValueError, TypeError) as exc:
                return {"error": type(exc).__name__, "detail": str(exc)}

    def _dispatch(self, msg: dict) -> dict:
        op = msg.get("op")
        now = self._clock()
        if op == "fetch":
            worker = NodeId.worker(int(msg["worker"]))
            shard = self.ledger.fetch(worker, now)
            if shard is None and self.ledger.complete and self.ledger.epoch + 1 < self.epochs:
                self.ledger = build_shards(self.N, self.B, self.M, self.ledger.epoch + 1, self.seed)
                shard = self.ledger.fetch(worker, now)
            if shard is None:
                return {"epoch_end": True}
            return {"shard": shard.to_json(), "epoch": self.ledger.epoch}
        if op == "done":
            self.ledger.report_done(int(msg["shard"]), NodeId.worker(int(msg["worker"])), now)
            return {"ok": True}
        if op == "recover":
            return {"requeued": self.ledger.recover_node(NodeId.from_json(msg["node"]))}
        if op == "progress":
            todo, doing, done = self.ledger.progress()
            return {"todo": todo, "doing": doing, "done": done, "epoch": self.ledger.epoch, "K": self.ledger.K}
        raise ProtocolError(f"unknown op {op!r}")
