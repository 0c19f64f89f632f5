"""Straggler mitigation policies.

Each tick the controller reads monitor windows and emits at most one
action per procedure. The non-dedicated policy re-splits the batch for
slow workers and restarts persistently slow nodes while the cluster is
idle; the dedicated policy solves the accumulation split once.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from statistics import fmean

from .core import Action, BatchAllocation, Consistency, NodeId, PolicyKind, Role, ScenarioConfig
from .monitor import Monitor
from .solver import (
    BatchProblem,
    DeviceClassSpec,
    GradAccumProblem,
    Infeasible,
    solve_batch,
    solve_grad_accum,
)

log = logging.getLogger(__name__)


class VerdictKind(str, enum.Enum):
    TRANSIENT = "Transient"
    PERSISTENT = "Persistent"
    NONE = "None"


@dataclass(frozen=True)
class StragglerVerdict:
    node: NodeId
    kind: VerdictKind
    observed_bpt: float
    fleet_bpt: float

    @property
    def ratio(self) -> float:
        return self.observed_bpt / self.fleet_bpt if self.fleet_bpt > 0 else float("inf")

    @property
    def flagged(self) -> bool:
        return self.kind is not VerdictKind.NONE


@dataclass
class PolicyState:
    policy: PolicyKind
    last_action_at: float | None = None
    kill_cooldown_until: dict[NodeId, float] = field(default_factory=dict)
    dd_adjusted: bool = False


class Controller:
    def __init__(self, cfg: ScenarioConfig, monitor: Monitor):
        self.cfg = cfg
        self.monitor = monitor
        self.det = cfg.detection
        self.state = PolicyState(cfg.policy.kind)
        self.diagnostics: list[str] = []

    # -- detection ----------------------------------------------------------

    def _exempt(self, node: NodeId, now: float) -> bool:
        if self.monitor.is_down(node):
            return True
        if now < self.state.kill_cooldown_until.get(node, float("-inf")):
            return True
        launched = self.monitor.launched_at(node)
        return launched is not None and now < launched + self.det.window_persistent

    def detect(self, role: Role, window_kind: VerdictKind, now: float, nodes=None) -> list[StragglerVerdict]:
        """Verdicts for every node with data in the chosen window.

        A node is flagged when its window-mean BPT is at least lambda times
        the fleet mean. Nodes in their post-restart cooldown are reported
        but never flagged.
        """
        horizon = self.det.window_transient if window_kind is VerdictKind.TRANSIENT else self.det.window_persistent
        means = self.monitor.node_means(role, horizon, now, nodes)
        if not means:
            return []
        fleet = fmean(means.values())
        out = []
        for node, m in means.items():
            hit = len(means) > 1 and m >= self.det.lambda_ * fleet and not self._exempt(node, now)
            out.append(StragglerVerdict(node, window_kind if hit else VerdictKind.NONE, m, fleet))
        return out

    # -- allocation helpers -------------------------------------------------

    def _speeds(self, workers: list[NodeId], now: float) -> list[float] | None:
        est = [self.monitor.throughput(w, self.det.window_transient, now) for w in workers]
        known = [v for v in est if v is not None]
        if not known:
            return None
        fill = fmean(known)
        return [fill if v is None else v for v in est]

    def _rebalance(self, workers: list[NodeId], now: float, iteration: int, bounded: bool) -> Action:
        speeds = self._speeds(workers, now)
        if speeds is None:
            return Action.none(iteration)
        try:
            if bounded and self.cfg.cluster.device_classes:
                alloc = self._class_solve(workers, speeds, 1, 1).allocation
            else:
                sol = solve_batch(BatchProblem(self.cfg.global_batch, speeds))
                # solver output is positional; map back to worker ids
                alloc = BatchAllocation(
                    tuple((w.index, b, c) for w, (_, b, c) in zip(workers, sol.allocation.per_worker))
                )
        except Infeasible as exc:
            self.diagnostics.append(f"t={now:.1f} infeasible allocation: {exc}")
            log.warning("allocation infeasible at t=%.1f: %s", now, exc)
            return Action.none(iteration)
        return self._emit(Action.adjust_bs(alloc, iteration), now)

    def _class_solve(self, workers: list[NodeId], speeds: list[float], c_min: int, c_max: int):
        by_index = dict(zip((w.index for w in workers), speeds))
        classes = []
        for dc in self.cfg.cluster.device_classes:
            members = [w for w in dc.workers if w in by_index]
            if not members:
                continue
            v = fmean(by_index[w] for w in members)
            classes.append(DeviceClassSpec(len(members), v, dc.b_min, dc.b_max, tuple(members)))
        return solve_grad_accum(GradAccumProblem(self.cfg.global_batch, classes, c_min, c_max))

    def _emit(self, action: Action, now: float) -> Action:
        if not action.is_none:
            self.state.last_action_at = now
            if action.alloc is not None:
                assert action.alloc.total == self.cfg.global_batch, "allocation lost samples"
        return action

    def _worst(self, verdicts: list[StragglerVerdict]) -> StragglerVerdict:
        return max(verdicts, key=lambda v: (v.ratio, -v.node.index))

    def _kill(self, verdict: StragglerVerdict, now: float, iteration: int) -> Action:
        # cooldown until relaunch is observed; the monitor's launch time extends it
        self.state.kill_cooldown_until[verdict.node] = now + self.det.window_persistent
        return self._emit(Action.kill_restart(verdict.node, iteration), now)

    # -- procedures ---------------------------------------------------------

    def nd_worker_step(self, now: float, workers: list[NodeId], iteration: int = 0, allow_kill: bool = True) -> Action:
        persistent = [v for v in self.detect(Role.WORKER, VerdictKind.PERSISTENT, now, workers) if v.flagged]
        transient = [v for v in self.detect(Role.WORKER, VerdictKind.TRANSIENT, now, workers) if v.flagged]
        busy = self.monitor.cluster_signal().busy
        asp = self.cfg.consistency is Consistency.ASP
        if persistent and allow_kill and not busy:
            return self._kill(self._worst(persistent), now, iteration)
        if asp:
            return Action.none(iteration)
        if transient or persistent:
            return self._rebalance(workers, now, iteration, bounded=False)
        return Action.none(iteration)

    def nd_server_step(self, now: float, servers: list[NodeId], iteration: int = 0) -> Action:
        persistent = [v for v in self.detect(Role.SERVER, VerdictKind.PERSISTENT, now, servers) if v.flagged]
        if persistent and not self.monitor.cluster_signal().busy:
            return self._kill(self._worst(persistent), now, iteration)
        return Action.none(iteration)

    def dd_step(self, now: float, workers: list[NodeId], iteration: int = 0) -> Action:
        if self.state.dd_adjusted:
            return Action.none(iteration)
        est = {w.index: self.monitor.throughput(w, self.det.window_transient, now) for w in workers}
        for dc in self.cfg.cluster.device_classes:
            if not any(est.get(w) is not None for w in dc.workers):
                return Action.none(iteration)
        live = [w for w in workers if est[w.index] is not None]
        try:
            sol = self._class_solve(live, [est[w.index] for w in live], self.cfg.cluster.accum_min, self.cfg.cluster.accum_max)
        except Infeasible as exc:
            self.diagnostics.append(f"t={now:.1f} dd infeasible: {exc} (nearest {exc.below}, {exc.above})")
            log.warning("AntDT-DD allocation infeasible: %s", exc)
            return Action.none(iteration)
        if {e[0] for e in sol.allocation.per_worker} != {w.index for w in workers}:
            return Action.none(iteration)
        self.state.dd_adjusted = True
        return self._emit(Action.adjust_bs(sol.allocation, iteration), now)

    def baseline_step(self, policy: PolicyKind, now: float, workers: list[NodeId], iteration: int = 0) -> Action:
        if policy in (PolicyKind.NATIVE_BSP, PolicyKind.NATIVE_ASP, PolicyKind.ASP_DDS):
            return Action.none(iteration)
        if policy is PolicyKind.BACKUP_WORKERS:
            return Action.backup_workers(self.cfg.policy.b, iteration)
        if policy is PolicyKind.LB_BSP:
            flagged = [v for v in self.detect(Role.WORKER, VerdictKind.TRANSIENT, now, workers) if v.flagged]
            if flagged:
                return self._rebalance(workers, now, iteration, bounded=True)
            return Action.none(iteration)
        raise ValueError(f"{policy} is not a baseline policy")

    def step(self, now: float, workers: list[NodeId], servers: list[NodeId], iteration: int = 0) -> list[Action]:
        """All non-None actions for this tick, server procedure first; at most one kill."""
        kind = self.state.policy
        if kind is PolicyKind.ANTDT_ND:
            server_action = self.nd_server_step(now, servers, iteration) if servers else Action.none(iteration)
            worker_action = self.nd_worker_step(now, workers, iteration, allow_kill=server_action.is_none)
            actions = [server_action, worker_action]
        elif kind is PolicyKind.ANTDT_DD:
            actions = [self.dd_step(now, workers, iteration)]
        else:
            actions = [self.baseline_step(kind, now, workers, iteration)]
        return [a for a in actions if not a.is_none]
