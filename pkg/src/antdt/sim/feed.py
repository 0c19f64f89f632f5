"""Sample supply for simulated workers, backed by per-epoch shard ledgers.

Workers draw samples from leased shards through a cursor. A shard is
reported done once every sample in it belongs to an accepted gradient.
Epochs are pipelined: a worker that finds the current queue empty leases
from the next epoch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from ..core import NodeId
from ..dds import Shard, ShardLedger, Status, build_shards


@dataclass
class Lease:
    epoch: int
    shard: Shard
    cursor: int = 0
    committed: int = 0


class DataFeed:
    def __init__(
        self,
        samples: int,
        shard_batch: int,
        batches_per_shard: int,
        epochs: int,
        seed: int,
        n_workers: int,
        static_partition: bool = False,
        log: Callable[..., None] | None = None,
    ):
        self.N, self.unit, self.M, self.epochs, self.seed = samples, shard_batch, batches_per_shard, epochs, seed
        self.n = n_workers
        self.static = static_partition
        self.ledgers: list[ShardLedger] = []
        self._owner: list[dict[int, int]] = []
        self.leases: dict[int, list[Lease]] = {w: [] for w in range(n_workers)}
        self.log = log if log is not None else (lambda *a, **k: None)
        self.drawn = 0
        self.committed = 0
        self.duplicates = 0
        self.fetches = 0
        self.done_count: dict[int, int] = {}
        self.last_done_at: float | None = None
        self._build()

    # -- ledgers ------------------------------------------------------------

    def _build(self) -> bool:
        e = len(self.ledgers)
        if e >= self.epochs:
            return False
        ledger = build_shards(self.N, self.unit, self.M, e, self.seed)
        self.ledgers.append(ledger)
        # static partition: the i-th shard of the shuffled order belongs to worker i mod n
        self._owner.append({sid: pos % self.n for pos, sid in enumerate(ledger.queue)})
        return True

    def _fetch(self, worker: int, now: float) -> Lease | None:
        node = NodeId.worker(worker)
        e = 0
        while True:
            while e < len(self.ledgers):
                ledger = self.ledgers[e]
                if ledger.queue:
                    if self.static:
                        owner = self._owner[e]
                        shard = ledger.fetch(node, now, lambda s: owner[s.id] == worker)
                    else:
                        shard = ledger.fetch(node, now)
                    if shard is not None:
                        self.fetches += 1
                        self.log(now, "fetch", node, {"epoch": e, "shard": shard.id})
                        lease = Lease(e, shard)
                        self.leases[worker].append(lease)
                        return lease
                e += 1
            if not self._build():
                return None

    # -- worker operations --------------------------------------------------

    def draw(self, worker: int, want: int, now: float) -> tuple[int, int]:
        """Take up to ``want`` samples; returns ``(drawn, new shard fetches)``."""
        got = 0
        fetched = 0
        leases = self.leases[worker]
        i = 0
        while got < want:
            while i < len(leases) and leases[i].cursor >= leases[i].shard.length:
                i += 1
            if i == len(leases):
                if self._fetch(worker, now) is None:
                    break
                fetched += 1
                continue
            lease = leases[i]
            take = min(want - got, lease.shard.length - lease.cursor)
            lease.cursor += take
            got += take
        self.drawn += got
        return got, fetched

    def commit(self, worker: int, now: float) -> list[Lease]:
        """Accept every drawn sample of ``worker``; report shards that are now complete."""
        node = NodeId.worker(worker)
        finished = []
        keep = []
        for lease in self.leases[worker]:
            self.committed += lease.cursor - lease.committed
            lease.committed = lease.cursor
            if lease.committed == lease.shard.length:
                self.ledgers[lease.epoch].report_done(lease.shard.id, node, now)
                self.done_count[lease.epoch] = self.done_count.get(lease.epoch, 0) + 1
                self.last_done_at = now
                self.log(now, "done", node, {"epoch": lease.epoch, "shard": lease.shard.id})
                finished.append(lease)
            else:
                keep.append(lease)
        self.leases[worker] = keep
        return finished

    def put_back(self, worker: int, now: float) -> int:
        """Return the uncommitted draw of a dropped gradient to the worker's shards."""
        back = 0
        for lease in self.leases[worker]:
            back += lease.cursor - lease.committed
            lease.cursor = lease.committed
        if back:
            self.log(now, "put_back", NodeId.worker(worker), {"samples": back})
        return back

    def recover(self, worker: int, now: float) -> tuple[int, int]:
        """Requeue a failed worker's shards. Returns ``(shards requeued, committed samples lost)``."""
        node = NodeId.worker(worker)
        lost = sum(l.committed for l in self.leases[worker])
        shards = 0
        for ledger in self.ledgers:
            shards += ledger.recover_node(node)
        self.committed -= lost
        self.duplicates += lost
        self.leases[worker] = []
        if shards:
            self.log(now, "requeue", node, {"shards": shards, "lost_samples": lost})
        return shards, lost

    # -- run state ----------------------------------------------------------

    @property
    def exhausted(self) -> bool:
        """No epoch remains to be built and nothing is queued or held."""
        if len(self.ledgers) < self.epochs:
            return False
        return all(l.complete for l in self.ledgers)

    def has_queued(self) -> bool:
        return len(self.ledgers) < self.epochs or any(l.queue for l in self.ledgers)

    def holds_work(self, worker: int) -> bool:
        return any(l.cursor < l.shard.length for l in self.leases[worker])

    def snapshot(self) -> dict:
        return {
            "built": len(self.ledgers),
            "ledgers": [l.snapshot() for l in self.ledgers],
            "leases": {w: [(l.epoch, l.shard, l.committed) for l in ls] for w, ls in self.leases.items()},
            "committed": self.committed,
            "done_count": dict(self.done_count),
        }

    def restore(self, snap: dict) -> int:
        """Roll back to ``snap``; returns the number of committed samples discarded."""
        lost = self.committed - snap["committed"]
        del self.ledgers[snap["built"]:]
        del self._owner[snap["built"]:]
        for ledger, s in zip(self.ledgers, snap["ledgers"]):
            ledger.restore(s)
        self.leases = {w: [Lease(e, sh, c, c) for e, sh, c in ls] for w, ls in snap["leases"].items()}
        self.committed = snap["committed"]
        self.done_count = dict(snap["done_count"])
        self.duplicates += lost
        return lost

    def done_ranges(self) -> dict[int, list[tuple[int, int]]]:
        out = {}
        for ledger in self.ledgers:
            out[ledger.epoch] = sorted((s.start, s.stop) for s, _ in ledger.done_shards())
        return out

    def check(self) -> None:
        for ledger in self.ledgers:
            ledger.check()
            for w, ls in self.leases.items():
                for l in ls:
                    if l.epoch == ledger.epoch:
                        st = ledger.states[l.shard.id]
                        assert st.status is Status.DOING and st.node == NodeId.worker(w)
