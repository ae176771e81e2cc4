"""Deterministic discrete-event scheduler and scenario runner."""
from __future__ import annotations

import heapq
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, List, Optional, Tuple

from . import mining
from .chain import Block, ChainView, genesis_block, make_block_id
from .config import ConfigError, ScenarioConfig, validate
from .netsim import Message, Network
from .rng import stream

log = logging.getLogger(__name__)

BLOCK_FOUND = 0
DELIVER = 1
RULE_BOUNDARY = 2
SAMPLE_METRICS = 3
END_OF_RUN = 4
MINER_TOGGLE = 5

EVENT_NAMES = {
    BLOCK_FOUND: "block_found",
    DELIVER: "deliver",
    RULE_BOUNDARY: "rule_boundary",
    SAMPLE_METRICS: "sample_metrics",
    END_OF_RUN: "end_of_run",
    MINER_TOGGLE: "miner_toggle",
}


class DeadNetworkError(RuntimeError):
    pass


@dataclass
class MinerState:
    node: int
    hash_rate: float
    enabled: bool
    rng: Any
    difficulty: float = 0.0
    # bumped to invalidate the pending BlockFound event
    token: int = 0


@dataclass
class Sample:
    clock: float
    height: int
    tip_count: int


class Simulation:
    """State of one run: clock, event queue, per-node views and RNG streams.

    Events are ``(fire_at, seq, kind, payload)`` tuples; ``seq`` is assigned
    at scheduling time, which makes the dispatch order total.
    """

    def __init__(self, config: ScenarioConfig, record_trace: bool = False):
        checked = validate(config)
        if not checked.ok:
            raise ConfigError(checked.errors)
        for w in checked.warnings:
            log.warning("%s: %s", config.name, w)
        self.config = config
        self.seed = config.seed
        self.clock = 0.0
        self.queue: List[Tuple[float, int, int, Any]] = []
        self._seq = itertools.count()
        self.stopped = False
        self.ended = False
        self.events_processed = 0
        self.discarded = 0
        self.trace: Optional[list] = [] if record_trace else None

        self.mode = config.difficulty
        self.initial_difficulty = mining.initial_difficulty(self.mode, config.enabled_rates())
        self.genesis = genesis_block(self.initial_difficulty)
        self.blocks = {self.genesis.id: self.genesis}
        self.block_seq = 0
        self.views = [ChainView(i, self.genesis) for i in range(config.nodes)]
        self.topology = config.topology.build(config.nodes)
        self.network = Network(
            self.topology,
            self.views,
            rules=config.chaos,
            base=config.link_base(),
            link_overrides=config.link_overrides(),
            rng_for_link=lambda s, d: stream(self.seed, "link", s, d),
            jitter=stream(self.seed, "jitter"),
            relay=config.relay,
            on_block=self._on_block if record_trace else None,
        )
        self.miners = {
            spec.node: MinerState(spec.node, spec.hash_rate, spec.enabled, stream(self.seed, "miner", spec.node))
            for spec in config.miner_specs()
        }
        self.generated = {node: 0 for node in self.miners}
        self.series: List[Sample] = []
        self._pending_enables = sum(1 for t in config.miner_schedule if t.enabled)

        if not any(m.enabled for m in self.miners.values()) and not self._pending_enables:
            raise DeadNetworkError(f"{config.name}: no miner is ever enabled")

        if config.duration is not None:
            self.schedule(config.duration, END_OF_RUN, None)
        for t in self.network.boundaries():
            self.schedule(t, RULE_BOUNDARY, None)
        for toggle in sorted(config.miner_schedule, key=lambda t: t.at):
            self.schedule(toggle.at, MINER_TOGGLE, toggle)
        self.schedule(0.0, SAMPLE_METRICS, None)
        for miner in self.miners.values():
            if miner.enabled:
                self._schedule_mining(miner)

    def schedule(self, at: float, kind: int, payload: Any) -> None:
        heapq.heappush(self.queue, (at, next(self._seq), kind, payload))

    def _schedule_mining(self, miner: MinerState) -> None:
        view = self.views[miner.node]
        miner.difficulty = self.next_difficulty(view, view.tip)
        miner.token += 1
        wait = mining.sample_block_interval(miner.rng, miner.hash_rate, miner.difficulty)
        self.schedule(self.clock + wait, BLOCK_FOUND, (miner.node, miner.token))

    def next_difficulty(self, view: ChainView, parent: Block) -> float:
        mode = self.mode
        if not isinstance(mode, mining.Retarget):
            return self.initial_difficulty
        height = parent.height + 1
        if height % mode.interval:
            return parent.difficulty
        first = view.ancestor(parent, height - mode.interval)
        return mining.retarget(
            parent.difficulty,
            parent.found_at - first.found_at,
            mode.interval * mode.target_block_time,
            mode.clamp,
        )

    def _on_block(self, node: int, block: Block, now: float) -> None:
        self.trace.append(("recv", now, node, block))

    def run(self):
        from .metrics import finalize

        while self.queue and not self.stopped:
            self.step()
        if self.stopped:
            self.discarded += len(self.queue)
            self.queue.clear()
        log.debug("%s seed=%d: %d events, clock %.3f", self.config.name, self.seed,
                  self.events_processed, self.clock)
        return finalize(self)

    def step(self) -> None:
        fire_at, _, kind, payload = heapq.heappop(self.queue)
        if fire_at < self.clock:
            raise AssertionError(f"event at {fire_at} dispatched after clock {self.clock}")
        self.clock = fire_at
        self.events_processed += 1
        if kind == DELIVER:
            self._deliver(payload)
        elif kind == BLOCK_FOUND:
            self._block_found(*payload)
        elif kind == SAMPLE_METRICS:
            self._sample()
            if not self.ended:
                nxt = self.clock + self.config.sample_every
                if self.config.duration is None or nxt < self.config.duration:
                    self.schedule(nxt, SAMPLE_METRICS, None)
        elif kind == RULE_BOUNDARY:
            self.network.refresh_rules(self.clock)
        elif kind == MINER_TOGGLE:
            self._toggle(payload)
        elif kind == END_OF_RUN:
            self._end()

    def _end(self) -> None:
        if self.ended:
            return
        self.ended = True
        if self.config.end_mode == "cut":
            self.stopped = True
        for miner in self.miners.values():
            miner.token += 1

    def _deliver(self, msg: Message) -> None:
        if self.ended and self.config.end_mode == "cut":
            self.discarded += 1
            return
        node = msg.dst
        view = self.views[node]
        before = view.tip
        for out in self.network.on_receive(msg, self.clock):
            self.schedule(out.deliver_time, DELIVER, out)
        if view.tip is not before and not self.ended:
            miner = self.miners.get(node)
            if miner is not None and miner.enabled and isinstance(self.mode, mining.Retarget):
                if self.next_difficulty(view, view.tip) != miner.difficulty:
                    self._schedule_mining(miner)

    def _block_found(self, node: int, token: int) -> None:
        miner = self.miners[node]
        if self.ended or token != miner.token or not miner.enabled:
            return
        now = self.clock
        view = self.views[node]
        parent = view.tip
        self.block_seq += 1
        block = Block(
            make_block_id(self.seed, self.block_seq),
            parent.id,
            parent.height + 1,
            node,
            now,
            self.next_difficulty(view, parent),
            self.block_seq,
        )
        self.blocks[block.id] = block
        self.generated[node] += 1
        if self.trace is not None:
            self.trace.append(("mint", now, node, block))
        view.accept_block(block, now)
        for out in self.network.broadcast_block(node, block, now):
            self.schedule(out.deliver_time, DELIVER, out)
        self._schedule_mining(miner)
        if self.config.sample_on_mint:
            self._sample()
        cap = self.config.block_cap
        if cap is not None and block.height >= cap:
            self._end()

    def _toggle(self, toggle) -> None:
        if self.ended:
            return
        miner = self.miners[toggle.node]
        if toggle.enabled:
            self._pending_enables -= 1
            if not miner.enabled:
                miner.enabled = True
                self._schedule_mining(miner)
            return
        miner.enabled = False
        miner.token += 1
        if (self.config.block_cap is not None and not self._pending_enables
                and not any(m.enabled for m in self.miners.values())):
            raise DeadNetworkError(
                f"{self.config.name}: all miners disabled at t={self.clock} before reaching block_cap"
            )

    def _sample(self) -> None:
        tips = {v.tip.id for v in self.views}
        height = max(v.tip.height for v in self.views)
        self.series.append(Sample(self.clock, height, len(tips)))


def run(config: ScenarioConfig, record_trace: bool = False):
    """Run one scenario to completion and return its :class:`MetricsReport`."""
    return Simulation(config, record_trace=record_trace).run()


def expected_block_time(config: ScenarioConfig) -> float:
    rates = config.enabled_rates()
    d = mining.initial_difficulty(config.difficulty, rates)
    total = math.fsum(rates)
    return d * mining.HASHES_PER_DIFFICULTY / total
