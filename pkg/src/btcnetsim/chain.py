"""Block and block-tree data model shared by every node."""
from __future__ import annotations

import enum
import hashlib
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional

BlockId = int

GENESIS_ID: BlockId = 0


class InvalidBlock(ValueError):
    pass


def make_block_id(seed: int, seq: int) -> BlockId:
    """Opaque 256-bit id; stands in for the header hash."""
    digest = hashlib.sha256(b"block:%d:%d" % (seed, seq)).digest()
    return int.from_bytes(digest, "big") or 1


@dataclass(frozen=True, slots=True)
class Block:
    id: BlockId
    parent: Optional[BlockId]
    height: int
    miner: Optional[int]
    found_at: float
    difficulty: float
    seq: int

    @property
    def is_genesis(self) -> bool:
        return self.parent is None


def genesis_block(difficulty: float) -> Block:
    return Block(GENESIS_ID, None, 0, None, 0.0, difficulty, 0)


class AcceptOutcome(enum.Enum):
    CONNECTED = "connected"
    ORPHANED = "orphaned"
    DUPLICATE = "duplicate"


class ChainView:
    """One node's local block tree.

    The tip is the connected block with the greatest
    ``(height, -first_seen, -seq)``, i.e. longest chain with first-received
    tie-break.  ``last_connected`` lists the blocks attached by the most
    recent :meth:`accept_block` call, in attachment order.
    """

    __slots__ = (
        "owner", "blocks", "tip", "orphans", "first_seen",
        "fork_witness_count", "last_connected", "_children", "_waiting",
    )

    def __init__(self, owner: int, genesis: Block):
        self.owner = owner
        self.blocks: Dict[BlockId, Block] = {genesis.id: genesis}
        self.tip: Block = genesis
        self.orphans: Dict[BlockId, Block] = {}
        self.first_seen: Dict[BlockId, float] = {genesis.id: 0.0}
        self.fork_witness_count = 0
        self.last_connected: List[Block] = []
        self._children: Dict[BlockId, int] = {}
        self._waiting: Dict[BlockId, List[Block]] = defaultdict(list)

    def __contains__(self, block_id: BlockId) -> bool:
        return block_id in self.blocks

    def knows(self, block_id: BlockId) -> bool:
        return block_id in self.blocks or block_id in self.orphans

    def accept_block(self, block: Block, now: float) -> AcceptOutcome:
        self.last_connected = []
        if block.id in self.blocks or block.id in self.orphans:
            return AcceptOutcome.DUPLICATE
        if not block.difficulty > 0:
            raise InvalidBlock(f"block {block.id:x} has non-positive difficulty")
        parent = self.blocks.get(block.parent)
        if parent is None:
            self.orphans[block.id] = block
            self.first_seen[block.id] = now
            self._waiting[block.parent].append(block)
            return AcceptOutcome.ORPHANED
        if block.height != parent.height + 1:
            raise InvalidBlock(
                f"block {block.id:x} at height {block.height} does not extend parent at {parent.height}"
            )
        self.first_seen[block.id] = now
        self._connect(block)
        return AcceptOutcome.CONNECTED

    def _connect(self, block: Block) -> None:
        pending = [block]
        while pending:
            b = pending.pop()
            self.blocks[b.id] = b
            self.orphans.pop(b.id, None)
            n = self._children.get(b.parent, 0)
            if n:
                self.fork_witness_count += 1
            self._children[b.parent] = n + 1
            self.last_connected.append(b)
            if self._better(b, self.tip):
                self.tip = b
            for child in self._waiting.pop(b.id, ()):
                if child.height == b.height + 1:
                    pending.append(child)
                else:
                    # malformed orphan: discard it
                    self.orphans.pop(child.id, None)

    def _better(self, a: Block, b: Block) -> bool:
        if a.height != b.height:
            return a.height > b.height
        fa, fb = self.first_seen[a.id], self.first_seen[b.id]
        if fa != fb:
            return fa < fb
        return a.seq < b.seq

    def children_count(self, block_id: BlockId) -> int:
        return self._children.get(block_id, 0)

    def ancestor(self, block: Block, height: int) -> Block:
        while block.height > height:
            block = self.blocks[block.parent]
        return block


def main_chain(view: ChainView) -> List[Block]:
    return path_to_genesis(view.blocks, view.tip)


def path_to_genesis(blocks: Mapping[BlockId, Block], tip: Block) -> List[Block]:
    path = [tip]
    while path[-1].parent is not None:
        path.append(blocks[path[-1].parent])
    path.reverse()
    return path


def best_tip(blocks: Iterable[Block]) -> Block:
    """Longest-chain tip of a global tree, ties to earliest ``found_at`` then ``seq``."""
    return max(blocks, key=lambda b: (b.height, -b.found_at, -b.seq))


def stale_branches(tree: Mapping[BlockId, Block], main: Optional[List[Block]] = None) -> List[List[Block]]:
    """Branches that hang off the final main chain.

    Each branch is rooted at a block whose parent is on the main chain; the
    branch holds that root and all of its descendants.  ``main`` defaults to
    the longest chain of ``tree``.
    """
    if main is None:
        main = path_to_genesis(tree, best_tip(tree.values()))
    on_main = {b.id for b in main}
    children: Dict[BlockId, List[Block]] = defaultdict(list)
    for b in tree.values():
        if b.parent is not None:
            children[b.parent].append(b)
    branches = []
    for b in main:
        for child in children.get(b.id, ()):
            if child.id in on_main:
                continue
            branch, stack = [], [child]
            while stack:
                x = stack.pop()
                branch.append(x)
                stack.extend(children.get(x.id, ()))
            branch.sort(key=lambda x: x.seq)
            branches.append(branch)
    return branches


@dataclass
class RewardLedger:
    subsidy: float = 50.0
    maturity_depth: int = 100
    balances: Dict[int, float] = field(default_factory=dict)


def settle_rewards(final_view: ChainView, ledger: RewardLedger) -> RewardLedger:
    return settle_chain_rewards(main_chain(final_view), ledger)


def settle_chain_rewards(chain: List[Block], ledger: RewardLedger) -> RewardLedger:
    """Credit ``subsidy`` for each main-chain block with enough confirmations.

    The tip has one confirmation, its parent two, and so on.
    """
    tip_height = chain[-1].height
    counts: Dict[int, int] = defaultdict(int)
    for b in chain:
        if b.miner is None:
            continue
        counts.setdefault(b.miner, 0)
        if tip_height - b.height + 1 >= ledger.maturity_depth:
            counts[b.miner] += 1
    balances = {m: ledger.subsidy * n for m, n in sorted(counts.items())}
    return RewardLedger(ledger.subsidy, ledger.maturity_depth, balances)
