import pytest

from antdt.core import ErrorCause, IterationRecord, NodeId, Role
from antdt.monitor import Directive, EventKind, Monitor, NodeEvent, OutOfOrder

W = NodeId.worker


def rec(node, it, t, tw=1.0, b=64):
    return IterationRecord(node, it, t, tw, 0.0, 0.0, b)


def test_window_mean():
    m = Monitor()
    for i, tw in enumerate([1.0, 2.0, 3.0]):
        m.ingest(rec(W(0), i, 10.0 + i, tw))
    assert m.mean_bpt(W(0), 300, 20.0) == 2.0


def test_empty_window_is_nodata():
    m = Monitor()
    assert m.mean_bpt(W(0), 300, 0.0) is None
    assert m.throughput(W(0), 300, 0.0) is None
    assert m.fleet_mean_bpt(Role.WORKER, 300, 0.0) is None


def test_window_cut():
    m = Monitor()
    m.ingest(rec(W(0), 0, 0.0, 9.0))
    m.ingest(rec(W(0), 1, 500.0, 2.0))
    assert m.mean_bpt(W(0), 300, 500.0) == 2.0


def test_out_of_order_rejected():
    m = Monitor()
    m.ingest(rec(W(0), 5, 10.0))
    with pytest.raises(OutOfOrder):
        m.ingest(rec(W(0), 4, 9.0))


def test_old_records_evicted():
    m = Monitor(retention=100)
    m.ingest(rec(W(0), 0, 0.0, 7.0))
    m.ingest(rec(W(0), 1, 1000.0, 1.0))
    assert m.mean_bpt(W(0), 5000, 1000.0) == 1.0


def test_fleet_mean_skips_nodata():
    m = Monitor()
    for i, tw in enumerate([1.0, 2.0, 3.0]):
        m.ingest(rec(W(i), 0, 1.0, tw))
    assert m.fleet_mean_bpt(Role.WORKER, 300, 1.0) == 2.0
    assert m.fleet_mean_bpt(Role.WORKER, 300, 1.0, nodes=[W(0), W(2), W(7)]) == 2.0


def test_throughput():
    m = Monitor()
    m.ingest(rec(W(0), 0, 1.0, 2.0, 4096))
    m.ingest(rec(W(0), 1, 2.0, 4.0, 4096))
    assert m.throughput(W(0), 300, 2.0) == 1536.0
    m2 = Monitor()
    m2.ingest(rec(W(1), 0, 1.0, 1.0, 100))
    assert m2.throughput(W(1), 300, 1.0) == 100.0


def test_zero_compute_is_anomaly():
    m = Monitor()
    m.ingest(rec(W(0), 0, 1.0, 0.0))
    assert m.anomalies == 1
    assert m.throughput(W(0), 300, 1.0) is None


def test_lifecycle_directives():
    m = Monitor()
    assert m.on_node_event(NodeEvent(W(1), 5.0, EventKind.TERMINATED, ErrorCause.EVICTION)) is Directive.REQUEUE_SHARDS
    assert m.is_down(W(1))
    assert m.on_node_event(NodeEvent(W(1), 9.0, EventKind.LAUNCHED)) is Directive.NONE
    assert not m.is_down(W(1)) and m.launched_at(W(1)) == 9.0
    assert m.on_node_event(NodeEvent(W(2), 9.0, EventKind.TERMINATED, ErrorCause.CONFIG_ERROR)) is Directive.ABORT_JOB
    assert m.on_node_event(NodeEvent(NodeId.server(0), 9.0, EventKind.TERMINATED, ErrorCause.EVICTION)) is Directive.NONE


def test_terminated_events_need_a_cause():
    with pytest.raises(ValueError):
        NodeEvent(W(0), 0.0, EventKind.TERMINATED)


def test_busy_signal():
    m = Monitor(busy_threshold=120)
    m.set_pending_time(30)
    assert not m.cluster_signal().busy
    m.set_pending_time(121)
    assert m.cluster_signal().busy


def test_dict_interface():
    m = Monitor()
    r = rec(W(0), 0, 1.0, 2.0, 10)
    assert m.handle({"op": "ingest", **r.to_json()}) == {"ok": True}
    assert m.handle({"op": "query", "kind": "mean_bpt", "node": ["worker", 0], "horizon": 60, "now": 1.0}) == {"value": 2.0, "nodata": False}
    assert m.handle({"op": "ingest", **r.to_json()})["error"] == "OutOfOrder"
