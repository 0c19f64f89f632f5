import pytest

from antdt.agent import Agent, LateEnvelope, SyncEnvelope, SyncGroup
from antdt.core import Action, BatchAllocation, IterationRecord, NodeId

W = NodeId.worker


def rec(i):
    return IterationRecord(W(0), i, float(i), 1.0, 0.0, 0.0, 8)


class FlakySink:
    def __init__(self):
        self.got = []
        self.down = False

    def __call__(self, r):
        if self.down:
            raise ConnectionError("monitor down")
        self.got.append(r)


def test_flush_every_ten():
    sink = FlakySink()
    a = Agent(W(0), 10, sink)
    sent = [a.report_tick(rec(i)) for i in range(1, 11)]
    assert sent == [0] * 9 + [10]
    assert a.flushes == 1 and len(sink.got) == 10


def test_flush_every_tick():
    sink = FlakySink()
    a = Agent(W(0), 1, sink)
    for i in range(3):
        assert a.report_tick(rec(i)) == 1


def test_outage_buffers_then_delivers_in_order():
    sink = FlakySink()
    a = Agent(W(0), 2, sink)
    sink.down = True
    for i in range(6):  # three failed flushes
        a.report_tick(rec(i))
    assert sink.got == [] and len(a.buffer) == 6
    sink.down = False
    a.report_tick(rec(6))
    a.report_tick(rec(7))
    assert [r.iteration for r in sink.got] == list(range(8))


def test_buffer_is_bounded():
    sink = FlakySink()
    sink.down = True
    a = Agent(W(0), 5, sink, buffer_limit=4)
    for i in range(10):
        a.report_tick(rec(i))
    assert a.dropped == 6
    assert [r.iteration for r in a.buffer] == [6, 7, 8, 9]


def test_broadcast_applies_next_iteration():
    g = SyncGroup({W(0), W(1)})
    alloc = BatchAllocation.from_sizes([3, 5])
    env = g.broadcast(Action.adjust_bs(alloc), 100)
    assert env.apply_at_iteration == 101
    res = [Agent(w).barrier_apply(env, 100) for w in (W(0), W(1))]
    assert [r.batch for r in res] == [(3, 1), (5, 1)]
    assert {r.iteration for r in res} == {101}


def test_none_action_sends_nothing():
    g = SyncGroup({W(0)})
    assert g.broadcast(Action.none(), 5) is None and g.sent == 0


def test_unreachable_member_aborts():
    g = SyncGroup({W(0), W(1)}, unreachable={W(1)})
    assert g.broadcast(Action.backup_workers(1), 5) is None
    assert g.aborted == 1


def test_allocation_must_cover_members():
    g = SyncGroup({W(0), W(1), W(2)})
    assert g.broadcast(Action.adjust_bs(BatchAllocation.from_sizes([3, 5])), 5) is None


def test_primary_reelection():
    g = SyncGroup({W(0), W(1), W(2)})
    assert g.primary == W(0)
    g.leave(W(0))
    assert g.primary == W(1)


def test_late_and_replayed_envelopes():
    env = SyncEnvelope(Action.backup_workers(2), 10, 0)
    a = Agent(W(0))
    with pytest.raises(LateEnvelope):
        a.barrier_apply(env, 10)
    assert a.barrier_apply(env, 9).backups == 2
    with pytest.raises(LateEnvelope):
        a.barrier_apply(env, 9)


def test_kill_envelope_terminates_only_target():
    env = SyncEnvelope(Action.kill_restart(W(1)), 4, 0)
    assert Agent(W(1)).barrier_apply(env, 3).terminate
    assert not Agent(W(0)).barrier_apply(env, 3).terminate
