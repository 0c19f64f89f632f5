"""Run outputs: the JSON Lines event log and the metric summary."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..core import NodeId


class EventLog:
    def __init__(self):
        self.events: list[tuple[float, str, str | None, dict]] = []

    def __call__(self, t: float, kind: str, node: NodeId | None = None, payload: dict | None = None) -> None:
        self.events.append((t, kind, str(node) if node is not None else None, payload or {}))

    def __len__(self) -> int:
        return len(self.events)

    def of_kind(self, kind: str) -> list[tuple[float, str, str | None, dict]]:
        return [e for e in self.events if e[1] == kind]

    def lines(self):
        for t, kind, node, payload in self.events:
            yield json.dumps({"t": round(t, 6), "kind": kind, "node": node, "payload": payload}, sort_keys=True)

    def dumps(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


@dataclass
class RunMetrics:
    jct: float = 0.0
    aborted: bool = False
    abort_reason: str | None = None
    iterations: int = 0
    samples_committed: int = 0
    samples_drawn: int = 0
    duplicated_samples: int = 0
    put_back_samples: int = 0
    done_shards: dict[int, int] = field(default_factory=dict)
    done_per_epoch: dict[int, int] = field(default_factory=dict)
    shards_per_epoch: int = 0
    worker_throughput: dict[int, float] = field(default_factory=dict)
    actions: list[dict] = field(default_factory=list)
    kills: int = 0
    failures: int = 0
    envelopes: int = 0
    envelope_aborts: int = 0
    late_envelopes: int = 0
    sync_overhead_s: float = 0.0
    failover_delay: float = 0.0
    checkpoints: int = 0
    allocation_violations: int = 0
    conservation_violations: int = 0
    dominance_violations: int = 0
    iteration_durations: list[float] = field(default_factory=list)
    bpt_traces: dict[str, list[tuple[float, float, int]]] = field(default_factory=dict)

    @property
    def sync_overhead(self) -> float:
        return self.sync_overhead_s / self.jct if self.jct > 0 else 0.0

    def summary(self) -> dict:
        return {
            "jct": round(self.jct, 6),
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
            "iterations": self.iterations,
            "samples_committed": self.samples_committed,
            "samples_drawn": self.samples_drawn,
            "duplicated_samples": self.duplicated_samples,
            "put_back_samples": self.put_back_samples,
            "done_shards": {str(k): v for k, v in sorted(self.done_shards.items())},
            "done_per_epoch": {str(k): v for k, v in sorted(self.done_per_epoch.items())},
            "shards_per_epoch": self.shards_per_epoch,
            "worker_throughput": {str(k): round(v, 6) for k, v in sorted(self.worker_throughput.items())},
            "actions": self.actions,
            "kills": self.kills,
            "failures": self.failures,
            "envelopes": self.envelopes,
            "envelope_aborts": self.envelope_aborts,
            "late_envelopes": self.late_envelopes,
            "sync_overhead": round(self.sync_overhead, 9),
            "failover_delay": round(self.failover_delay, 6),
            "checkpoints": self.checkpoints,
            "allocation_violations": self.allocation_violations,
            "conservation_violations": self.conservation_violations,
            "dominance_violations": self.dominance_violations,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["t", "node", "bpt", "batch_size"])
        rows = [(t, node, bpt, b) for node, tr in self.bpt_traces.items() for t, bpt, b in tr]
        rows.sort(key=lambda r: (r[0], r[1]))
        for t, node, bpt, b in rows:
            w.writerow([f"{t:.6f}", node, f"{bpt:.6f}", b])
        return buf.getvalue()
