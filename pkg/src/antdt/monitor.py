"""Sliding-window aggregation of iteration reports and node lifecycle events."""

from __future__ import annotations

import enum
import math
import threading
from bisect import bisect_left, bisect_right
from dataclasses import dataclass

from .core import ErrorCause, IterationRecord, NodeId, Role


class OutOfOrder(ValueError):
    """A report older than the node's latest one; indicates an agent bug."""


class EventKind(str, enum.Enum):
    TERMINATED = "Terminated"
    LAUNCHED = "Launched"
    CHECKPOINT_SAVED = "CheckpointSaved"


@dataclass(frozen=True)
class NodeEvent:
    node: NodeId
    at: float
    kind: EventKind
    reason: ErrorCause | None = None

    def __post_init__(self):
        if (self.kind is EventKind.TERMINATED) != (self.reason is not None):
            raise ValueError("exactly the Terminated events carry an error class")


class Directive(str, enum.Enum):
    REQUEUE_SHARDS = "RequeueShards"
    ABORT_JOB = "AbortJob"
    NONE = "None"


@dataclass(frozen=True)
class ClusterSignal:
    pending_time: float
    busy: bool


class _Series:
    __slots__ = ("times", "iters", "bpt", "tput", "start")

    def __init__(self):
        self.times: list[float] = []
        self.iters: list[int] = []
        self.bpt: list[float] = []
        self.tput: list[float | None] = []
        self.start = 0

    def window(self, horizon: float, now: float) -> tuple[int, int]:
        lo = max(self.start, bisect_left(self.times, now - horizon))
        hi = bisect_right(self.times, now)
        return lo, hi

    def evict_before(self, t: float) -> None:
        self.start = max(self.start, bisect_left(self.times, t))
        if self.start > 4096 and self.start > len(self.times) // 2:
            s = self.start
            del self.times[:s], self.iters[:s], self.bpt[:s], self.tput[:s]
            self.start = 0


class Monitor:
    def __init__(self, retention: float = 1200.0, busy_threshold: float = 120.0):
        self.retention = retention
        self.busy_threshold = busy_threshold
        self._series: dict[NodeId, _Series] = {}
        self._launched_at: dict[NodeId, float] = {}
        self._down: set[NodeId] = set()
        self._pending_time = 0.0
        self.anomalies = 0
        self.lifecycle_violations = 0
        self.events: list[NodeEvent] = []
        self._lock = threading.Lock()

    # -- ingestion ----------------------------------------------------------

    def ingest(self, record: IterationRecord) -> None:
        s = self._series.setdefault(record.node, _Series())
        if s.times and (record.wall_time, record.iteration) <= (s.times[-1], s.iters[-1]):
            raise OutOfOrder(f"{record.node}: report at t={record.wall_time} older than latest t={s.times[-1]}")
        s.times.append(record.wall_time)
        s.iters.append(record.iteration)
        if record.node.is_worker:
            s.bpt.append(record.worker_compute)
            if record.worker_compute > 0:
                s.tput.append(record.batch_size / record.worker_compute)
            else:
                s.tput.append(None)
                self.anomalies += 1
        else:
            s.bpt.append(record.server_compute)
            s.tput.append(None)
        s.evict_before(record.wall_time - self.retention)

    def set_pending_time(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("pending time is non-negative")
        self._pending_time = seconds

    def on_node_event(self, ev: NodeEvent) -> Directive:
        self.events.append(ev)
        if ev.kind is EventKind.TERMINATED:
            self._down.add(ev.node)
            self._series.pop(ev.node, None)
            if not ev.reason.retryable:
                return Directive.ABORT_JOB
            return Directive.REQUEUE_SHARDS if ev.node.is_worker else Directive.NONE
        if ev.kind is EventKind.LAUNCHED:
            if ev.node in self._launched_at and ev.node not in self._down:
                self.lifecycle_violations += 1
            self._down.discard(ev.node)
            self._launched_at[ev.node] = ev.at
            # a relaunched node starts with cold windows
            self._series.pop(ev.node, None)
        return Directive.NONE

    # -- queries ------------------------------------------------------------

    def mean_bpt(self, node: NodeId, horizon: float, now: float) -> float | None:
        """Mean compute time (workers) or server aggregation time (servers) over ``[now-horizon, now]``."""
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        s = self._series.get(node)
        if s is None:
            return None
        lo, hi = s.window(horizon, now)
        if hi <= lo:
            return None
        return math.fsum(s.bpt[lo:hi]) / (hi - lo)

    def fleet_mean_bpt(self, role: Role, horizon: float, now: float, nodes=None) -> float | None:
        """Mean of per-node means over nodes that have data; NoData nodes are skipped."""
        means = self.node_means(role, horizon, now, nodes)
        if not means:
            return None
        return math.fsum(means.values()) / len(means)

    def node_means(self, role: Role, horizon: float, now: float, nodes=None) -> dict[NodeId, float]:
        candidates = nodes if nodes is not None else [n for n in self._series if n.role is role]
        out = {}
        for node in sorted(candidates):
            if node.role is not role:
                continue
            m = self.mean_bpt(node, horizon, now)
            if m is not None:
                out[node] = m
        return out

    def throughput(self, worker: NodeId, horizon: float, now: float) -> float | None:
        """Samples per second: mean of batch_size / worker_compute over the window."""
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        s = self._series.get(worker)
        if s is None:
            return None
        lo, hi = s.window(horizon, now)
        vals = [v for v in s.tput[lo:hi] if v is not None]
        if not vals:
            return None
        return math.fsum(vals) / len(vals)

    def cluster_signal(self) -> ClusterSignal:
        return ClusterSignal(self._pending_time, self._pending_time > self.busy_threshold)

    def launched_at(self, node: NodeId) -> float | None:
        return self._launched_at.get(node)

    def is_down(self, node: NodeId) -> bool:
        return node in self._down

    # -- service mode -------------------------------------------------------

    def handle(self, msg: dict) -> dict:
        """Dict request/response used by the socket service."""
        with self._lock:
            try:
                op = msg.get("op")
                if op == "ingest":
                    body = {k: v for k, v in msg.items() if k != "op"}
                    self.ingest(IterationRecord.from_json(body))
                    return {"ok": True}
                if op == "event":
                    ev = NodeEvent(
                        NodeId.from_json(msg["node"]),
                        float(msg["at"]),
                        EventKind(msg["kind"]),
                        ErrorCause(msg["reason"]) if msg.get("reason") else None,
                    )
                    return {"directive": self.on_node_event(ev).value}
                if op == "query":
                    kind = msg["kind"]
                    horizon, now = float(msg["horizon"]), float(msg["now"])
                    if kind == "mean_bpt":
                        val = self.mean_bpt(NodeId.from_json(msg["node"]), horizon, now)
                    elif kind == "throughput":
                        val = self.throughput(NodeId.from_json(msg["node"]), horizon, now)
                    elif kind == "fleet":
                        val = self.fleet_mean_bpt(Role(msg["role"]), horizon, now)
                    else:
                        raise ValueError(f"unknown query {kind!r}")
                    return {"value": val, "nodata": val is None}
                raise ValueError(f"unknown op {op!r}")
            except OutOfOrder as exc:
                return {"error": "OutOfOrder", "detail": str(exc)}
            except (KeyError, ValueError, TypeError) as exc:
                return {"error": type(exc).__name__, "detail": str(exc)}
