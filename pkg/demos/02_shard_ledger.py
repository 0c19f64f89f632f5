"""
Handing out data in shards
==========================

Instead of a fixed partition per worker, the data set is cut into shards
that workers lease one at a time. A crash only returns the crashed
worker's lease to the queue, so nothing is lost and nothing is read twice
by healthy workers.
"""

from antdt.core import NodeId
from antdt.dds import DdsService, build_shards
from antdt.service import FrameClient, FrameServer

# %%
# 45M samples, 81,920 per global batch and 100 batches per shard.
ledger = build_shards(45_000_000, 81_920, 100, seed=0)
print(ledger, [ledger.shards[i].length for i in range(ledger.K)])

# %%
# Two workers lease shards; worker 1 dies holding one.
a, b = NodeId.worker(0), NodeId.worker(1)
s0 = ledger.fetch(a, now=0.0)
s1 = ledger.fetch(b, now=0.0)
ledger.report_done(s0.id, a, now=10.0)
print("before crash (todo, doing, done):", ledger.progress())
print("requeued:", ledger.recover_node(b), "queue tail:", ledger.queue[-1] == s1.id)

# %%
# The same ledger behind a TCP socket, framed as length-prefixed JSON.
svc = DdsService(1_000, 10, 5, seed=1)
with FrameServer(svc.handle) as server, FrameClient(*server.address) as client:
    while not (reply := client.call({"op": "fetch", "worker": 3})).get("epoch_end"):
        client.call({"op": "done", "worker": 3, "shard": reply["shard"]["id"]})
    print(client.call({"op": "progress"}))
