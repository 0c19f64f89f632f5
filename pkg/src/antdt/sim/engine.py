"""Deterministic discrete-event cluster simulator.

Time is an integer microsecond clock. BSP runs advance one global
iteration at a time; ASP runs are driven by an event heap of per-worker
arrivals and completions. Both share the node lifecycle, controller ticks,
checkpointing and failover accounting implemented here.
"""

from __future__ import annotations

import heapq
import logging
from collections import deque

from ..agent import Agent, LateEnvelope, SyncEnvelope, SyncGroup
from ..controller import Controller
from ..core import (
    ActionKind,
    Architecture,
    ConfigError,
    Consistency,
    ErrorCause,
    IterationRecord,
    NodeId,
    PolicyKind,
    RecomputeMode,
    ScenarioConfig,
    to_s,
    to_us,
    validate_config,
)
from ..monitor import Directive, EventKind, Monitor, NodeEvent
from ..solver import fixed_batch_split
from .feed import DataFeed
from .metrics import EventLog, RunMetrics
from .patterns import Injector

log = logging.getLogger(__name__)

# event kinds, ordered so that simultaneous events resolve deterministically
_RELAUNCH, _FAIL, _CKPT, _TICK, _ARRIVE, _FINISH, _START = range(7)


class Simulator:
    def __init__(self, cfg: ScenarioConfig, trace: bool = False):
        problems = validate_config(cfg)
        if problems:
            raise ConfigError("; ".join(str(p) for p in problems))
        self.cfg = cfg
        self.trace = trace
        det = cfg.detection
        cl = cfg.cluster
        self.log = EventLog()
        self.monitor = Monitor(retention=2 * det.window_persistent, busy_threshold=det.busy_threshold)
        self.controller = Controller(cfg, self.monitor)
        self.inj = Injector(cfg)
        self.feed = DataFeed(
            cfg.samples,
            cfg.shard_batch,
            cfg.batches_per_shard,
            cfg.epochs,
            cfg.seed,
            cfg.n_workers,
            static_partition=cfg.policy.kind is PolicyKind.NATIVE_ASP,
            log=self.log,
        )
        self.m = RunMetrics(shards_per_epoch=self.feed.ledgers[0].K)
        self.workers = cfg.workers()
        self.servers = cfg.servers() if cfg.architecture is Architecture.PARAMETER_SERVER else []
        self.alive = {n: True for n in self.workers + self.servers}
        self.agents = {n: Agent(n, det.report_every, sink=self.monitor.ingest) for n in self.workers + self.servers}
        self.sync = SyncGroup(members=set(self.workers))
        self.alloc: dict[int, tuple[int, int]] = fixed_batch_split(
            cfg.global_batch, [1.0] * cfg.n_workers, range(cfg.n_workers)
        ).as_dict()
        self.backups = cfg.policy.b if cfg.policy.kind is PolicyKind.BACKUP_WORKERS else 0
        self.speed = [cl.speed_of(w) * self.inj.speed_factor(NodeId.worker(w)) for w in range(cfg.n_workers)]
        self.sat = [(cl.class_of(w).b_min if cl.class_of(w) else 0) for w in range(cfg.n_workers)]
        self.ckpt_mode = cfg.failover.recompute_mode is RecomputeMode.CHECKPOINT_BASED
        self.snapshot = self.feed.snapshot() if self.ckpt_mode else None
        self.snapshot_at = 0.0
        self.pending_env: SyncEnvelope | None = None
        self.iteration = 0
        self.stall_until = 0  # µs; nobody computes before this
        self.aborted: str | None = None
        self._samples = [0] * cfg.n_workers
        self._compute = [0.0] * cfg.n_workers
        self._relaunches: list[tuple[int, NodeId]] = []

    # -- shared helpers -----------------------------------------------------

    def _pending_time(self, now: float) -> float:
        fo = self.cfg.failover
        busy = any(a <= now < b for a, b in self.cfg.cluster.busy_windows)
        return fo.pending_time_busy if busy else fo.pending_time_idle

    def _live_workers(self) -> list[NodeId]:
        return [w for w in self.workers if self.alive[w]]

    def _live_servers(self) -> list[NodeId]:
        return [s for s in self.servers if self.alive[s]]

    def _compute_time(self, w: int, got: int, b: int) -> float:
        sat = self.sat[w]
        full, rem = divmod(got, b)
        work = full * max(b, sat) + (max(rem, sat) if rem else 0)
        return work / self.speed[w]

    def _resplit(self, now: float) -> None:
        """Membership changed outside the sync protocol: re-split B over the live workers."""
        live = [w.index for w in self._live_workers()]
        if not live:
            return
        known = [self.alloc[w][0] * self.alloc[w][1] for w in live if w in self.alloc]
        fill = sum(known) / len(known) if known else 1.0
        weights = [self.alloc[w][0] * self.alloc[w][1] if w in self.alloc else fill for w in live]
        self.alloc = fixed_batch_split(self.cfg.global_batch, weights, live).as_dict()
        self.log(now, "resplit", None, {"alloc": [[w, *self.alloc[w]] for w in live]})

    def _record_worker(self, node: NodeId, iteration: int, t: float, tw: float, ts: float, tm: float, got: int) -> None:
        self.agents[node].report_tick(IterationRecord(node, iteration, t, tw, ts, tm, got))
        self._samples[node.index] += got
        self._compute[node.index] += tw
        if self.trace:
            self.m.bpt_traces.setdefault(str(node), []).append((t, tw + ts + tm, got))

    def _throughput_estimate(self, now: float) -> float:
        if now <= 0 or self.feed.committed <= 0:
            return sum(self.speed)
        return self.feed.committed / now

    def _take_checkpoint(self, t_us: int) -> int:
        now = to_s(t_us)
        cost = self.cfg.failover.checkpoint_cost
        self.snapshot = self.feed.snapshot()
        self.snapshot_at = now + cost
        self.m.checkpoints += 1
        self.m.failover_delay += cost
        self.log(now, "checkpoint", None, {"cost": cost})
        return t_us + to_us(cost)

    def _terminate(self, node: NodeId, t_us: int, cause: ErrorCause) -> int | None:
        """Take ``node`` down. Returns the relaunch time (µs), or None if the job aborts."""
        now = to_s(t_us)
        self.alive[node] = False
        self.agents[node].reset()
        directive = self.monitor.on_node_event(NodeEvent(node, now, EventKind.TERMINATED, cause))
        self.log(now, "terminate", node, {"cause": cause.value})
        if cause is ErrorCause.PROACTIVE_KILL:
            self.m.kills += 1
        else:
            self.m.failures += 1
        if directive is Directive.ABORT_JOB:
            self.aborted = f"{node} failed with unretryable {cause.value}"
            return None
        fo = self.cfg.failover
        downtime = self._pending_time(now) + fo.node_init + fo.restore
        back = t_us + to_us(downtime)
        if node.is_worker:
            self.sync.leave(node)
            if self.ckpt_mode:
                lost = self.feed.restore(self.snapshot)
                rolled = max(0.0, now - self.snapshot_at)
                self.m.failover_delay += downtime + rolled
                self.stall_until = max(self.stall_until, back)
                self.log(now, "rollback", node, {"samples": lost, "seconds": round(rolled, 6)})
            else:
                _, lost = self.feed.recover(node.index, now)
                self.m.failover_delay += downtime + lost / self._throughput_estimate(now)
                self._resplit(now)
        else:
            self.m.failover_delay += downtime
            self._server_down(node, back)
        self.log(now, "downtime", node, {"seconds": round(downtime, 6)})
        return back

    def _relaunch(self, node: NodeId, t_us: int) -> None:
        now = to_s(t_us)
        self.alive[node] = True
        self.inj.restarted(node, now)
        self.agents[node].reset()
        self.monitor.on_node_event(NodeEvent(node, now, EventKind.LAUNCHED))
        self.log(now, "relaunch", node, {})
        if node.is_worker:
            self.sync.join(node)
            if not self.ckpt_mode:
                self._resplit(now)

    def _tick(self, t_us: int) -> None:
        now = to_s(t_us)
        self.monitor.set_pending_time(self._pending_time(now))
        busy = self.monitor.cluster_signal().busy
        actions = self.controller.step(now, self._live_workers(), self._live_servers(), self.iteration)
        for a in actions:
            entry = {"t": round(now, 6), "busy": busy, **a.to_json()}
            self.m.actions.append(entry)
            self.log(now, "action", a.target, entry)
            if a.kind is ActionKind.KILL_RESTART:
                if self.alive.get(a.target):
                    back = self._terminate(a.target, t_us, ErrorCause.PROACTIVE_KILL)
                    if back is not None:
                        self._schedule_relaunch(a.target, back)
            elif a.is_global:
                env = self.sync.broadcast(a, self.iteration)
                if env is None:
                    self.m.envelope_aborts += 1
                    self.log(now, "envelope_abort", None, {"kind": a.kind.value})
                else:
                    self.pending_env = env
                    self.m.envelopes += 1
                    self.log(now, "envelope", self.sync.primary, {"seq": env.broadcast_seq, "apply_at": env.apply_at_iteration, "kind": a.kind.value})

    def _schedule_relaunch(self, node: NodeId, back: int) -> None:
        heapq.heappush(self._relaunches, (back, node))

    def _apply_envelope(self, now: float) -> float:
        """Apply the pending envelope at the start of ``iteration + 1``; returns the barrier wait."""
        env = self.pending_env
        self.pending_env = None
        live = self._live_workers()
        a = env.action
        if a.kind is ActionKind.ADJUST_BS and {NodeId.worker(w) for w, _, _ in a.alloc.per_worker} != set(live):
            self.m.envelope_aborts += 1
            self.log(now, "envelope_abort", None, {"seq": env.broadcast_seq, "reason": "membership changed"})
            return 0.0
        applied = []
        for node in live:
            try:
                res = self.agents[node].barrier_apply(env, self.iteration)
            except LateEnvelope:
                self.m.late_envelopes += 1
                continue
            if res.batch is not None:
                self.alloc[node.index] = res.batch
            if res.backups is not None:
                self.backups = res.backups
            applied.append(node.index)
        self.log(now, "apply", None, {"seq": env.broadcast_seq, "iteration": env.apply_at_iteration, "workers": applied, "kind": a.kind.value})
        return self.cfg.cluster.envelope_latency

    # -- entry point --------------------------------------------------------

    def run(self) -> RunMetrics:
        self.log(0.0, "run_start", None, {"policy": str(self.cfg.policy), "consistency": self.cfg.consistency.value, "seed": self.cfg.seed})
        if self.cfg.consistency is Consistency.BSP:
            self._run_bsp()
        else:
            self._run_asp()
        for a in self.agents.values():
            a.flush()
        m = self.m
        m.aborted = self.aborted is not None
        m.abort_reason = self.aborted
        if not m.aborted:
            m.jct = self.feed.last_done_at or 0.0
        m.iterations = self.iteration
        m.samples_committed = self.feed.committed
        m.samples_drawn = self.feed.drawn
        m.duplicated_samples = self.feed.duplicates
        m.done_per_epoch = dict(self.feed.done_count)
        m.worker_throughput = {w: (self._samples[w] / self._compute[w] if self._compute[w] > 0 else 0.0) for w in range(self.cfg.n_workers)}
        self.log(m.jct, "run_end", None, {"jct": round(m.jct, 6), "aborted": m.aborted})
        return m

    def _due_failures(self):
        return sorted(self.cfg.failover.failures, key=lambda f: (f.at, f.node))

    # -- BSP ----------------------------------------------------------------

    def _run_bsp(self) -> None:
        cfg = self.cfg
        tick_us = to_us(cfg.detection.act_every)
        ckpt_us = to_us(cfg.failover.checkpoint_interval) if self.ckpt_mode else 0
        next_tick = tick_us
        next_ckpt = ckpt_us
        failures = deque(self._due_failures())
        t = 0
        while True:
            while self._relaunches and self._relaunches[0][0] <= t:
                back, node = heapq.heappop(self._relaunches)
                self._relaunch(node, back)
            if failures and to_us(failures[0].at) <= t:
                f = failures.popleft()
                if self.alive[f.node]:
                    back = self._terminate(f.node, t, f.cause)
                    if back is None:
                        self.m.jct = to_s(t)
                        return
                    self._schedule_relaunch(f.node, back)
                continue
            if self.feed.exhausted:
                return
            if self.stall_until > t:
                t = self.stall_until
                continue
            live = self._live_workers()
            if not live or any(not self.alive[s] for s in self.servers):
                t = self._relaunches[0][0]
                continue
            if self.ckpt_mode and t >= next_ckpt:
                t = self._take_checkpoint(t)
                while next_ckpt <= t:
                    next_ckpt += ckpt_us
                continue
            if t >= next_tick:
                self._tick(t)
                next_tick = (t // tick_us + 1) * tick_us
                continue
            t = self._bsp_iteration(t, live)
            if t is None:
                return

    def _bsp_iteration(self, t: int, live: list[NodeId]) -> int | None:
        cfg = self.cfg
        cl = cfg.cluster
        now = to_s(t)
        k = self.iteration + 1
        barrier = 0.0
        if self.pending_env is not None:
            barrier = self._apply_envelope(now)
        rows = []
        drawn = 0
        for node in live:
            w = node.index
            b, c = self.alloc[w]
            got, fetched = self.feed.draw(w, b * c, now)
            if got == 0:
                continue
            drawn += got
            tw = self._compute_time(w, got, b) + self.inj.delay(node, now)
            tm = cl.comm_time * self.inj.comm_factor(node)
            rows.append((node, got, tw, tm, fetched * cl.dds_rpc_latency))
        if not rows:
            if self.feed.exhausted:
                return None
            raise RuntimeError("live workers found no data although shards remain")
        if self.servers:
            ts = cl.server_update_cost + max(self.inj.delay(s, now) for s in self.servers)
            server_times = [(s, cl.server_update_cost + self.inj.delay(s, now)) for s in self.servers]
        else:
            ts, server_times = 0.0, []
        timed = sorted(((tw + ts + tm + rpc, node.index, node, got, tw, tm, rpc) for node, got, tw, tm, rpc in rows))
        keep = max(1, len(timed) - self.backups) if self.backups else len(timed)
        accepted, dropped = timed[:keep], timed[keep:]
        gate = accepted[-1]
        duration = gate[0] + barrier
        self.m.sync_overhead_s += barrier + gate[6]
        end = t + to_us(duration)
        t_end = to_s(end)
        kept = 0
        for d, w, node, got, tw, tm, rpc in accepted:
            if d > duration + 1e-12:
                self.m.dominance_violations += 1
            for lease in self.feed.commit(w, t_end):
                self.m.done_shards[w] = self.m.done_shards.get(w, 0) + 1
            kept += got
        back = 0
        for d, w, node, got, tw, tm, rpc in dropped:
            back += self.feed.put_back(w, t_end)
        self.m.put_back_samples += back
        if kept + back != drawn:
            self.m.conservation_violations += 1
        if sum(self.alloc[n.index][0] * self.alloc[n.index][1] for n in live) != cfg.global_batch:
            self.m.allocation_violations += 1
        for node, got, tw, tm, rpc in rows:
            self._record_worker(node, k, t_end, tw, ts, tm, got)
        for s, st in server_times:
            self.agents[s].report_tick(IterationRecord(s, k, t_end, 0.0, st, 0.0, 0))
        self.m.iteration_durations.append(duration)
        self.iteration = k
        return end

    # -- ASP ----------------------------------------------------------------

    def _run_asp(self) -> None:
        cfg = self.cfg
        self._heap: list = []
        self._seq = 0
        n = cfg.n_workers
        self._inc = [0] * n
        self._idle = [False] * n
        self._local_iter = [0] * n
        self._free = {s: 0 for s in self.servers}
        self._down_until = {s: 0 for s in self.servers}
        self._inflight = {s: deque() for s in self.servers}
        self._pushes = {s: 0 for s in self.servers}
        for w in range(n):
            self._push(0, _START, (w, 0))
        tick_us = to_us(cfg.detection.act_every)
        self._push(tick_us, _TICK, None)
        for i, f in enumerate(self._due_failures()):
            self._push(to_us(f.at), _FAIL, i)
        failures = self._due_failures()
        if self.ckpt_mode:
            self._push(to_us(cfg.failover.checkpoint_interval), _CKPT, None)
        while self._heap:
            t, kind, _, data = heapq.heappop(self._heap)
            if kind == _START:
                w, inc = data
                if inc != self._inc[w] or not self.alive[NodeId.worker(w)]:
                    continue
                if t < self.stall_until:
                    self._push(self.stall_until, _START, data)
                    continue
                self._asp_start(w, t)
            elif kind == _ARRIVE:
                self._asp_arrive(t, *data)
            elif kind == _FINISH:
                w, inc, got, tw, ts, tm = data
                if inc != self._inc[w] or not self.alive[NodeId.worker(w)]:
                    continue
                node = NodeId.worker(w)
                now = to_s(t)
                for lease in self.feed.commit(w, now):
                    self.m.done_shards[w] = self.m.done_shards.get(w, 0) + 1
                self._local_iter[w] += 1
                self.iteration += 1
                self._record_worker(node, self._local_iter[w], now, tw, ts, tm, got)
                self.m.iteration_durations.append(tw + ts + tm)
                if self.feed.exhausted:
                    return
                self._asp_start(w, t)
            elif kind == _TICK:
                self._asp_tick(t)
                if any(e[1] != _TICK for e in self._heap):
                    self._push(t + tick_us, _TICK, None)
            elif kind == _FAIL:
                f = failures[data]
                if self.alive[f.node]:
                    if not self._asp_terminate(f.node, t, f.cause):
                        self.m.jct = to_s(t)
                        return
            elif kind == _RELAUNCH:
                self._relaunch(data, t)
                if data.is_worker:
                    self._inc[data.index] += 1
                    self._idle[data.index] = False
                    self._push(max(t, self.stall_until), _START, (data.index, self._inc[data.index]))
            elif kind == _CKPT:
                self.stall_until = max(self.stall_until, self._take_checkpoint(t))
                self._push(t + to_us(cfg.failover.checkpoint_interval), _CKPT, None)
        if not self.feed.exhausted and self.aborted is None:
            raise RuntimeError("ASP run stalled with work remaining")

    def _push(self, t: int, kind: int, data) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, kind, self._seq, data))

    def _asp_start(self, w: int, t: int) -> None:
        cl = self.cfg.cluster
        node = NodeId.worker(w)
        now = to_s(t)
        b, c = self.alloc[w]
        got, fetched = self.feed.draw(w, b * c, now)
        if got == 0:
            self._idle[w] = True
            return
        self._idle[w] = False
        tw = self._compute_time(w, got, b) + self.inj.delay(node, now)
        tm = cl.comm_time * self.inj.comm_factor(node)
        rpc = fetched * cl.dds_rpc_latency
        self.m.sync_overhead_s += rpc / self.cfg.n_workers
        self._push(t + to_us(tw + tm + rpc), _ARRIVE, (w, self._inc[w], got, tw, tm))

    def _asp_arrive(self, t: int, w: int, inc: int, got: int, tw: float, tm: float) -> None:
        if inc != self._inc[w] or not self.alive[NodeId.worker(w)]:
            return
        cl = self.cfg.cluster
        now = to_s(t)
        end = t
        for s in self.servers:
            q = self._inflight[s]
            while q and q[0] <= t:
                q.popleft()
            service = cl.server_update_cost * (1 + cl.asp_contention * len(q)) + self.inj.delay(s, now)
            start = max(t, self._free[s], self._down_until[s])
            finish = start + to_us(service)
            self._free[s] = finish
            q.append(finish)
            end = max(end, finish)
            if self.alive[s]:
                self._pushes[s] += 1
                self.agents[s].report_tick(IterationRecord(s, self._pushes[s], now, 0.0, service, 0.0, 0))
        ts = to_s(end - t)
        self._push(end, _FINISH, (w, inc, got, tw, ts, tm))

    def _asp_tick(self, t: int) -> None:
        self._tick(t)
        # kills issued by the tick land on the shared relaunch heap
        while self._relaunches:
            back, node = heapq.heappop(self._relaunches)
            self._after_kill(node, t, back)

    def _after_kill(self, node: NodeId, t: int, back: int) -> None:
        if node.is_worker:
            self._inc[node.index] += 1
            if self.ckpt_mode:
                self._restart_all(t)
            else:
                self._wake_idle(t)
        self._push(back, _RELAUNCH, node)

    def _asp_terminate(self, node: NodeId, t: int, cause: ErrorCause) -> bool:
        back = self._terminate(node, t, cause)
        if back is None:
            return False
        self._after_kill(node, t, back)
        return True

    def _server_down(self, node: NodeId, back: int) -> None:
        if self.cfg.consistency is Consistency.BSP:
            self.stall_until = max(self.stall_until, back)
        else:
            self._down_until[node] = back

    def _restart_all(self, t: int) -> None:
        for w in range(self.cfg.n_workers):
            self._inc[w] += 1
            self._idle[w] = False
            if self.alive[NodeId.worker(w)]:
                self._push(max(t, self.stall_until), _START, (w, self._inc[w]))

    def _wake_idle(self, t: int) -> None:
        for w in range(self.cfg.n_workers):
            if self._idle[w] and self.alive[NodeId.worker(w)]:
                self._idle[w] = False
                self._push(t, _START, (w, self._inc[w]))


def run(cfg: ScenarioConfig, trace: bool = False) -> tuple[RunMetrics, EventLog]:
    sim = Simulator(cfg, trace=trace)
    metrics = sim.run()
    return metrics, sim.log
