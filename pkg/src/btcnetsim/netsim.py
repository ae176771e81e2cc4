"""Peer-to-peer layer: topology, block gossip and netem-style chaos rules.

Handlers are written as functions of ``(state, message) -> messages``; the
engine owns scheduling.  Chaos rules act on egress traffic, like tc/netem
rules installed on the sending interface.
"""
from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

from .chain import AcceptOutcome, Block, BlockId, ChainView, InvalidBlock


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    nodes: int
    edges: FrozenSet[Tuple[int, int]]
    kind: str = "custom"

    def __post_init__(self):
        for a, b in self.edges:
            if a == b:
                raise TopologyError(f"self-loop on node {a}")
            if a > b:
                raise TopologyError(f"edge {(a, b)} is not normalised")
            if not (0 <= a < self.nodes and 0 <= b < self.nodes):
                raise TopologyError(f"edge {(a, b)} references a node outside 0..{self.nodes - 1}")
        adj: Dict[int, List[int]] = {n: [] for n in range(self.nodes)}
        for a, b in sorted(self.edges):
            adj[a].append(b)
            adj[b].append(a)
        object.__setattr__(self, "_adj", {n: tuple(sorted(v)) for n, v in adj.items()})

    @classmethod
    def mesh(cls, n: int) -> "Topology":
        return cls(n, frozenset((a, b) for a in range(n) for b in range(a + 1, n)), "mesh")

    @classmethod
    def ring(cls, n: int) -> "Topology":
        edges = set()
        if n >= 2:
            for a in range(n):
                b = (a + 1) % n
                edges.add((min(a, b), max(a, b)))
        return cls(n, frozenset(edges), "ring")

    @classmethod
    def random(cls, n: int, p: float, seed: int) -> "Topology":
        """Erdos-Renyi G(n, p) drawn from its own seed."""
        if not 0 <= p <= 1:
            raise TopologyError("edge probability must be in [0, 1]")
        rng = random.Random(seed)
        edges = frozenset(
            (a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < p
        )
        return cls(n, edges, "random")

    @classmethod
    def custom(cls, n: int, edges: Iterable[Sequence[int]]) -> "Topology":
        normalised = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise TopologyError(f"self-loop on node {a}")
            pair = (min(a, b), max(a, b))
            if pair in normalised:
                raise TopologyError(f"duplicate edge {pair}")
            normalised.add(pair)
        return cls(n, frozenset(normalised), "custom")

    def neighbors(self, node: int) -> Tuple[int, ...]:
        return self._adj[node]

    def adjacent(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def is_connected(self) -> bool:
        if self.nodes <= 1:
            return True
        seen, stack = {0}, [0]
        while stack:
            for m in self._adj[stack.pop()]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return len(seen) == self.nodes


@dataclass(frozen=True)
class EgressOf:
    node: int


@dataclass(frozen=True)
class Link:
    src: int
    dst: int


Scope = Union[EgressOf, Link]


@dataclass(frozen=True)
class ChaosRule:
    """Delay/jitter/loss on a node's egress or one directed link during ``[start, end)``."""

    scope: Scope
    delay: float = 0.0
    jitter: float = 0.0
    loss: float = 0.0
    start: float = 0.0
    end: float = math.inf

    def problems(self) -> List[str]:
        out = []
        if not self.start < self.end:
            out.append(f"window start {self.start} must be before end {self.end}")
        if not 0 <= self.loss <= 1:
            out.append(f"loss {self.loss} outside [0, 1]")
        if self.delay < 0:
            out.append(f"negative delay {self.delay}")
        if self.jitter < 0:
            out.append(f"negative jitter {self.jitter}")
        return out

    def active(self, at: float) -> bool:
        return self.start <= at < self.end

    def applies(self, src: int, dst: int) -> bool:
        scope = self.scope
        if isinstance(scope, EgressOf):
            return scope.node == src
        return scope.src == src and scope.dst == dst


@dataclass(frozen=True)
class LinkBase:
    latency: float = 0.0
    loss: float = 0.0


def effective_link(
    src: int,
    dst: int,
    at: float,
    rules: Iterable[ChaosRule],
    base: LinkBase = LinkBase(),
    jitter_rng: Optional[random.Random] = None,
    topology: Optional[Topology] = None,
) -> Tuple[float, float]:
    """Delay and loss probability for a message sent ``src -> dst`` at ``at``.

    Active rule delays add up, each with its own uniform jitter draw; losses
    compose as independent drops.  Total delay is clamped at zero.
    """
    if topology is not None and not topology.adjacent(src, dst):
        raise TopologyError(f"nodes {src} and {dst} are not peers")
    delay = base.latency
    keep = 1.0 - base.loss
    for rule in rules:
        if not (rule.start <= at < rule.end and rule.applies(src, dst)):
            continue
        delay += rule.delay
        if rule.jitter:
            if jitter_rng is None:
                raise ValueError("a jitter stream is required for rules with jitter")
            delay += jitter_rng.uniform(-rule.jitter, rule.jitter)
        keep *= 1.0 - rule.loss
    return max(delay, 0.0), 1.0 - keep


class MsgKind(enum.IntEnum):
    BLOCK = 0
    PARENT_REQUEST = 1
    PARENT_RESPONSE = 2
    INV = 3
    GETDATA = 4


@dataclass(slots=True)
class Message:
    kind: MsgKind
    src: int
    dst: int
    send_time: float
    deliver_time: float
    block: Optional[Block] = None
    block_id: Optional[BlockId] = None


@dataclass
class PeerState:
    view: ChainView
    # peer each block first arrived from; excluded when relaying it
    got_from: Dict[BlockId, int] = field(default_factory=dict)
    requested: set = field(default_factory=set)


class Network:
    """Gossip state for every node plus the link model.

    ``rng_for_link(src, dst)`` supplies the per-link loss stream; ``jitter``
    is the shared jitter stream.
    """

    def __init__(
        self,
        topology: Topology,
        views: Sequence[ChainView],
        rules: Sequence[ChaosRule] = (),
        base: LinkBase = LinkBase(),
        link_overrides: Optional[Dict[Tuple[int, int], LinkBase]] = None,
        rng_for_link: Optional[Callable[[int, int], random.Random]] = None,
        jitter: Optional[random.Random] = None,
        relay: str = "push",
        on_block: Optional[Callable[[int, Block, float], None]] = None,
    ):
        if relay not in ("push", "two_step"):
            raise ValueError(f"unknown relay mode {relay!r}")
        self.topology = topology
        self.peers = [PeerState(v) for v in views]
        self.rules = list(rules)
        self.base = base
        self.link_overrides = dict(link_overrides or {})
        self._rng_for_link = rng_for_link or (lambda s, d: random.Random(f"{s}-{d}"))
        self._link_rngs: Dict[Tuple[int, int], random.Random] = {}
        self.jitter = jitter if jitter is not None else random.Random(0)
        self.relay = relay
        self.on_block = on_block
        self.sent = 0
        self.dropped = 0
        self._active: Dict[int, List[ChaosRule]] = {}
        self.refresh_rules(0.0)

    def refresh_rules(self, at: float) -> None:
        """Rebuild the per-sender cache of rules active at ``at``."""
        active: Dict[int, List[ChaosRule]] = {}
        for rule in self.rules:
            if rule.active(at):
                key = rule.scope.node if isinstance(rule.scope, EgressOf) else rule.scope.src
                active.setdefault(key, []).append(rule)
        self._active = active

    def boundaries(self) -> List[float]:
        times = set()
        for rule in self.rules:
            times.add(rule.start)
            if math.isfinite(rule.end):
                times.add(rule.end)
        return sorted(t for t in times if t > 0)

    def base_for(self, src: int, dst: int) -> LinkBase:
        pair = (min(src, dst), max(src, dst))
        return self.link_overrides.get(pair, self.base)

    def link(self, src: int, dst: int, at: float) -> Tuple[float, float]:
        return effective_link(
            src, dst, at, self._active.get(src, ()), self.base_for(src, dst), self.jitter
        )

    def _link_rng(self, src: int, dst: int) -> random.Random:
        rng = self._link_rngs.get((src, dst))
        if rng is None:
            rng = self._link_rngs[(src, dst)] = self._rng_for_link(src, dst)
        return rng

    def transmit(self, kind: MsgKind, src: int, dst: int, now: float,
                 block: Optional[Block] = None, block_id: Optional[BlockId] = None) -> Optional[Message]:
        """Build the message, or return ``None`` if the link drops it."""
        delay, loss = self.link(src, dst, now)
        self.sent += 1
        if loss > 0 and (loss >= 1 or self._link_rng(src, dst).random() < loss):
            self.dropped += 1
            return None
        return Message(kind, src, dst, now, now + delay, block, block_id)

    def broadcast_block(self, origin: int, block: Block, now: float,
                        exclude: Optional[int] = None) -> List[Message]:
        kind = MsgKind.INV if self.relay == "two_step" else MsgKind.BLOCK
        out = []
        for peer in self.topology.neighbors(origin):
            if peer == exclude:
                continue
            if kind is MsgKind.INV:
                msg = self.transmit(kind, origin, peer, now, block_id=block.id)
            else:
                msg = self.transmit(kind, origin, peer, now, block=block)
            if msg is not None:
                out.append(msg)
        return out

    def on_receive(self, msg: Message, now: float) -> List[Message]:
        node = msg.dst
        state = self.peers[node]
        kind = msg.kind
        if kind is MsgKind.BLOCK or kind is MsgKind.PARENT_RESPONSE:
            return self._receive_block(state, node, msg.src, msg.block, now)
        if kind is MsgKind.INV:
            if state.view.knows(msg.block_id) or msg.block_id in state.requested:
                return []
            state.requested.add(msg.block_id)
            reply = self.transmit(MsgKind.GETDATA, node, msg.src, now, block_id=msg.block_id)
            return [reply] if reply is not None else []
        if kind is MsgKind.GETDATA or kind is MsgKind.PARENT_REQUEST:
            block = state.view.blocks.get(msg.block_id)
            if block is None:
                return []
            reply_kind = MsgKind.BLOCK if kind is MsgKind.GETDATA else MsgKind.PARENT_RESPONSE
            reply = self.transmit(reply_kind, node, msg.src, now, block=block)
            return [reply] if reply is not None else []
        raise ValueError(f"unknown message kind {kind!r}")

    def _receive_block(self, state: PeerState, node: int, sender: int, block: Block,
                       now: float) -> List[Message]:
        view = state.view
        try:
            outcome = view.accept_block(block, now)
        except InvalidBlock:
            return []
        if outcome is AcceptOutcome.DUPLICATE:
            return []
        if self.on_block is not None:
            self.on_block(node, block, now)
        state.got_from[block.id] = sender
        if outcome is AcceptOutcome.ORPHANED:
            req = self.transmit(MsgKind.PARENT_REQUEST, node, sender, now, block_id=block.parent)
            return [req] if req is not None else []
        out = []
        for b in view.last_connected:
            out.extend(self.broadcast_block(node, b, now, exclude=state.got_from.get(b.id)))
        return out
