import random

import pytest
from hypothesis import given, settings, strategies as st

from btcnetsim.chain import (
    AcceptOutcome, Block, ChainView, InvalidBlock, RewardLedger, best_tip, genesis_block,
    main_chain, path_to_genesis, settle_chain_rewards, settle_rewards, stale_branches,
)

G = genesis_block(1.0)


def blk(bid, parent, height, seq=None, miner=0, t=0.0):
    return Block(bid, parent, height, miner, t, 1.0, bid if seq is None else seq)


def tree_of(*blocks):
    out = {G.id: G}
    out.update({b.id: b for b in blocks})
    return out


def test_extend_genesis():
    v = ChainView(0, G)
    a = blk(1, 0, 1)
    assert v.accept_block(a, 1.0) is AcceptOutcome.CONNECTED
    assert v.tip == a


def test_duplicate_leaves_state_alone():
    v = ChainView(0, G)
    a = blk(1, 0, 1)
    v.accept_block(a, 1.0)
    before = (dict(v.blocks), v.tip, v.fork_witness_count, dict(v.first_seen))
    assert v.accept_block(a, 5.0) is AcceptOutcome.DUPLICATE
    assert (dict(v.blocks), v.tip, v.fork_witness_count, dict(v.first_seen)) == before


def test_equal_height_keeps_first_seen():
    v = ChainView(0, G)
    a, a2 = blk(1, 0, 1), blk(2, 0, 1)
    v.accept_block(a, 1.0)
    assert v.accept_block(a2, 2.0) is AcceptOutcome.CONNECTED
    assert v.tip == a
    assert v.fork_witness_count == 1


def test_equal_first_seen_breaks_on_seq():
    v = ChainView(0, G)
    late, early = blk(1, 0, 1, seq=9), blk(2, 0, 1, seq=3)
    v.accept_block(late, 1.0)
    v.accept_block(early, 1.0)
    assert v.tip == early


def test_longer_branch_reorgs():
    v = ChainView(0, G)
    a, b, b2 = blk(1, 0, 1), blk(2, 0, 1), blk(3, 2, 2)
    for x, t in ((a, 1), (b, 2), (b2, 3)):
        v.accept_block(x, t)
    assert v.tip == b2
    assert [x.id for x in main_chain(v)] == [0, 2, 3]


def test_orphan_connects_when_parent_arrives():
    v = ChainView(0, G)
    a, b, c = blk(1, 0, 1), blk(2, 1, 2), blk(3, 2, 3)
    assert v.accept_block(c, 1.0) is AcceptOutcome.ORPHANED
    assert v.accept_block(b, 2.0) is AcceptOutcome.ORPHANED
    assert v.tip == G
    assert v.accept_block(a, 3.0) is AcceptOutcome.CONNECTED
    assert v.tip == c
    assert [x.id for x in v.last_connected] == [1, 2, 3]
    assert not v.orphans


def test_orphan_is_duplicate_while_waiting():
    v = ChainView(0, G)
    b = blk(2, 1, 2)
    v.accept_block(b, 1.0)
    assert v.accept_block(b, 2.0) is AcceptOutcome.DUPLICATE


def test_bad_height_rejected():
    v = ChainView(0, G)
    with pytest.raises(InvalidBlock):
        v.accept_block(blk(1, 0, 2), 1.0)


def test_bad_difficulty_rejected():
    v = ChainView(0, G)
    with pytest.raises(InvalidBlock):
        v.accept_block(Block(1, 0, 1, 0, 0.0, 0.0, 1), 1.0)


def test_main_chain_cases():
    assert main_chain(ChainView(0, G)) == [G]
    v = ChainView(0, G)
    chain = [blk(i, i - 1, i) for i in range(1, 6)]
    for b in chain:
        v.accept_block(b, float(b.height))
    heights = [b.height for b in main_chain(v)[1:]]
    assert len(heights) == 5 and heights == sorted(set(heights))


def test_main_chain_excludes_stale():
    v = ChainView(0, G)
    blocks = [blk(1, 0, 1), blk(2, 1, 2), blk(3, 2, 3), blk(9, 1, 2)]
    for i, b in enumerate(blocks):
        v.accept_block(b, float(i))
    assert [b.id for b in main_chain(v)] == [0, 1, 2, 3]


def test_stale_branches_linear():
    t = tree_of(blk(1, 0, 1), blk(2, 1, 2))
    assert stale_branches(t) == []


def test_stale_branch_single_loser():
    t = tree_of(blk(1, 0, 1), blk(2, 1, 2), blk(3, 1, 2, t=5.0))
    assert [[b.id for b in br] for br in stale_branches(t)] == [[3]]


def test_two_losers_same_parent_are_two_branches():
    t = tree_of(blk(1, 0, 1), blk(2, 1, 2), blk(3, 2, 3), blk(4, 1, 2, t=5.0), blk(5, 1, 2, t=6.0))
    br = stale_branches(t)
    assert len(br) == 2
    assert sorted(b[0].id for b in br) == [4, 5]


def test_deep_stale_branch_is_one_branch():
    t = tree_of(blk(1, 0, 1), blk(2, 1, 2), blk(3, 2, 3), blk(4, 0, 1, t=1), blk(5, 4, 2, t=2))
    assert [[b.id for b in br] for br in stale_branches(t)] == [[4, 5]]


def test_best_tip_prefers_earlier_found():
    a = blk(1, 0, 1, t=3.0)
    b = blk(2, 0, 1, t=2.0)
    assert best_tip([G, a, b]) == b


def _chain(n, miner_at):
    blocks = [G]
    for h in range(1, n + 1):
        blocks.append(blk(h, h - 1, h, miner=miner_at(h)))
    return blocks


def test_rewards_without_maturity():
    chain = _chain(30, lambda h: 7 if h <= 10 else 1)
    ledger = settle_chain_rewards(chain, RewardLedger(50.0, 0))
    assert ledger.balances[7] == 500.0


def test_rewards_nothing_matured():
    chain = _chain(50, lambda h: 1)
    assert settle_chain_rewards(chain, RewardLedger()).balances == {1: 0.0}


def test_rewards_confirmation_count():
    chain = _chain(150, lambda h: 4 if h in (10, 120) else 2)
    assert settle_chain_rewards(chain, RewardLedger()).balances[4] == 50.0


def test_rewards_boundary_is_inclusive():
    # height 51 of a 150-block chain has exactly 100 confirmations
    chain = _chain(150, lambda h: 4 if h in (51, 52) else 2)
    assert settle_chain_rewards(chain, RewardLedger()).balances[4] == 50.0


def test_settle_rewards_from_view():
    v = ChainView(0, G)
    for b in _chain(3, lambda h: 1)[1:]:
        v.accept_block(b, 0.0)
    assert settle_rewards(v, RewardLedger(50.0, 1)).balances == {1: 150.0}


@st.composite
def block_trees(draw):
    n = draw(st.integers(min_value=1, max_value=25))
    blocks = []
    for i in range(1, n + 1):
        parent = draw(st.sampled_from([G] + blocks))
        blocks.append(Block(i, parent.id, parent.height + 1, 0, float(i), 1.0, i))
    times = draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
    return blocks, times


def _feed(view, blocks, order, times):
    for k in order:
        view.accept_block(blocks[k], float(times[k]))


@settings(max_examples=200)
@given(block_trees(), st.randoms(use_true_random=False))
def test_delivery_order_does_not_change_tree(tree, rnd):
    blocks, times = tree
    order = list(range(len(blocks)))
    v1 = ChainView(0, G)
    _feed(v1, blocks, order, times)
    rnd.shuffle(order)
    v2 = ChainView(0, G)
    _feed(v2, blocks, order, times)
    assert set(v1.blocks) == set(v2.blocks) == {0} | {b.id for b in blocks}
    assert not v1.orphans and not v2.orphans
    # with the same first_seen stamps the tip is a pure function of the tree
    assert v1.tip == v2.tip
    assert v1.fork_witness_count == v2.fork_witness_count


@settings(max_examples=200)
@given(block_trees())
def test_fork_witness_equals_extra_children(tree):
    blocks, times = tree
    v = ChainView(0, G)
    _feed(v, blocks, range(len(blocks)), times)
    kids = {}
    for b in blocks:
        kids[b.parent] = kids.get(b.parent, 0) + 1
    assert v.fork_witness_count == sum(c - 1 for c in kids.values())
    assert v.tip.height == max(b.height for b in blocks)
