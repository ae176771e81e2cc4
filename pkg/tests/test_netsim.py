import math
import random

import pytest

from btcnetsim.chain import Block, ChainView, genesis_block
from btcnetsim.netsim import (
    ChaosRule, EgressOf, Link, LinkBase, MsgKind, Network, Topology, TopologyError, effective_link,
)

G = genesis_block(1.0)


def net(topology, relay="push", rules=(), base=LinkBase()):
    views = [ChainView(i, G) for i in range(topology.nodes)]
    return Network(topology, views, rules=rules, base=base, relay=relay), views


def child(bid, parent=G, miner=0):
    return Block(bid, parent.id, parent.height + 1, miner, 0.0, 1.0, bid)


def test_no_rules_is_free():
    assert effective_link(0, 1, 5.0, []) == (0.0, 0.0)


def test_egress_delay_applies_from_origin_only():
    rule = ChaosRule(EgressOf(2), delay=15.0)
    assert effective_link(2, 0, 100.0, [rule]) == (15.0, 0.0)
    assert effective_link(0, 2, 100.0, [rule]) == (0.0, 0.0)


def test_stacked_losses_compose():
    rules = [ChaosRule(EgressOf(0), loss=0.5), ChaosRule(Link(0, 1), loss=0.5)]
    assert effective_link(0, 1, 0.0, rules)[1] == pytest.approx(0.75)


def test_window_is_half_open():
    rule = ChaosRule(EgressOf(0), delay=3.0, start=10.0, end=20.0)
    assert effective_link(0, 1, 9.99, [rule])[0] == 0.0
    assert effective_link(0, 1, 10.0, [rule])[0] == 3.0
    assert effective_link(0, 1, 20.0, [rule])[0] == 0.0


def test_delays_add_and_clamp():
    base = LinkBase(latency=1.0)
    rules = [ChaosRule(EgressOf(0), delay=2.0), ChaosRule(Link(0, 1), delay=4.0)]
    assert effective_link(0, 1, 0.0, rules, base) == (7.0, 0.0)
    jitter = ChaosRule(EgressOf(0), jitter=50.0)
    rng = random.Random(0)
    assert all(effective_link(0, 1, 0.0, [jitter], LinkBase(), rng)[0] >= 0.0 for _ in range(200))


def test_jitter_stays_in_band():
    rng = random.Random(4)
    rule = ChaosRule(EgressOf(0), delay=10.0, jitter=2.0)
    xs = [effective_link(0, 1, 0.0, [rule], LinkBase(), rng)[0] for _ in range(500)]
    assert 8.0 <= min(xs) and max(xs) <= 12.0
    assert max(xs) - min(xs) > 3.0


def test_non_peer_link_rejected():
    topo = Topology.ring(4)
    with pytest.raises(TopologyError):
        effective_link(0, 2, 0.0, [], topology=topo)


def test_rule_problems():
    assert ChaosRule(EgressOf(0), start=5.0, end=5.0).problems()
    assert ChaosRule(EgressOf(0), loss=1.5).problems()
    assert not ChaosRule(EgressOf(0), delay=1.0, start=0.0, end=2.0).problems()


def test_topologies():
    assert len(Topology.mesh(5).edges) == 10
    assert Topology.ring(4).neighbors(0) == (1, 3)
    assert Topology.ring(2).edges == frozenset({(0, 1)})
    assert not Topology.custom(3, [(0, 1)]).is_connected()
    assert Topology.random(6, 0.5, 3) == Topology.random(6, 0.5, 3)
    with pytest.raises(TopologyError):
        Topology.custom(3, [(1, 1)])
    with pytest.raises(TopologyError):
        Topology.custom(3, [(0, 1), (1, 0)])


def test_mesh_broadcast_reaches_every_peer():
    n, _ = net(Topology.mesh(5))
    out = n.broadcast_block(0, child(1), 0.0)
    assert sorted(m.dst for m in out) == [1, 2, 3, 4]
    assert all(m.kind is MsgKind.BLOCK for m in out)


def test_total_loss_drops_everything():
    n, _ = net(Topology.mesh(5), rules=[ChaosRule(EgressOf(0), loss=1.0)])
    assert n.broadcast_block(0, child(1), 0.0) == []
    assert n.dropped == 4


def test_ring_relay_skips_sender():
    n, views = net(Topology.ring(4))
    b = child(1, miner=3)
    views[3].accept_block(b, 0.0)
    (msg,) = [m for m in n.broadcast_block(3, b, 0.0) if m.dst == 0]
    out = n.on_receive(msg, 0.0)
    assert [(m.src, m.dst) for m in out] == [(0, 1)]


def test_fresh_block_relays_to_degree_minus_one():
    n, views = net(Topology.mesh(5))
    b = child(1)
    (msg,) = [m for m in n.broadcast_block(0, b, 0.0) if m.dst == 2]
    out = n.on_receive(msg, 0.0)
    assert 2 in [v.owner for v in views if b.id in v]
    assert sorted(m.dst for m in out) == [1, 3, 4]


def test_duplicate_push_is_silent():
    n, _ = net(Topology.mesh(3))
    b = child(1)
    msgs = n.broadcast_block(0, b, 0.0)
    n.on_receive(msgs[0], 0.0)
    assert n.on_receive(msgs[0], 1.0) == []


def test_parent_recovery_two_nodes():
    """Lose A on the wire, deliver its child B, and recover A through a ParentRequest."""
    rules = [ChaosRule(EgressOf(0), loss=1.0, start=0.0, end=1.0)]
    n, views = net(Topology.mesh(2), rules=rules)
    a = child(1)
    b = child(2, parent=a)
    views[0].accept_block(a, 0.0)
    assert n.broadcast_block(0, a, 0.5) == []
    n.refresh_rules(2.0)
    views[0].accept_block(b, 2.0)
    (push,) = n.broadcast_block(0, b, 2.0)
    (req,) = n.on_receive(push, 2.0)
    assert (req.kind, req.dst, req.block_id) == (MsgKind.PARENT_REQUEST, 0, a.id)
    (resp,) = n.on_receive(req, 2.0)
    assert resp.kind is MsgKind.PARENT_RESPONSE and resp.block == a
    n.on_receive(resp, 2.0)
    assert views[1].tip == b and not views[1].orphans


def test_two_step_takes_three_hops():
    n, views = net(Topology.mesh(2), relay="two_step", base=LinkBase(latency=1.0))
    b = child(1)
    views[0].accept_block(b, 0.0)
    (inv,) = n.broadcast_block(0, b, 0.0)
    assert inv.kind is MsgKind.INV and inv.deliver_time == 1.0
    (getdata,) = n.on_receive(inv, 1.0)
    assert getdata.kind is MsgKind.GETDATA and getdata.deliver_time == 2.0
    (data,) = n.on_receive(getdata, 2.0)
    assert data.kind is MsgKind.BLOCK and data.deliver_time == 3.0
    n.on_receive(data, 3.0)
    assert views[1].tip == b
    # a second announcement of the same block is ignored
    assert n.on_receive(inv, 4.0) == []


def test_loss_stream_is_per_link():
    topo = Topology.mesh(3)
    views = [ChainView(i, G) for i in range(3)]
    seeds = {}
    n = Network(topo, views, rules=[ChaosRule(EgressOf(0), loss=0.5)],
                rng_for_link=lambda s, d: seeds.setdefault((s, d), random.Random(s * 10 + d)))
    for i in range(20):
        n.broadcast_block(0, child(100 + i), float(i))
    assert set(seeds) == {(0, 1), (0, 2)}
    assert 0 < n.dropped < 40
