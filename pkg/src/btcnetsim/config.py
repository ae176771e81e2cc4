"""Scenario configuration: schema, file I/O and validation.

Scenario files are YAML (JSON is accepted as well); see ``README.md`` for the
grammar.  ``ScenarioConfig.to_dict`` is the canonical form, and parsing it
back yields an equal config.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from .mining import (
    MIN_DIFFICULTY, Auto, ConfigurationError, DifficultyMode, Fixed, MinerSpec, Retarget, auto_difficulty,
)
from .netsim import ChaosRule, EgressOf, Link, LinkBase, Topology, TopologyError

RELAY_MODES = ("push", "two_step")
END_MODES = ("cut", "drain")
TOPOLOGY_KINDS = ("mesh", "ring", "random", "custom")


class ConfigError(ConfigurationError):
    def __init__(self, errors: Union[str, List[str]]):
        self.errors = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class MinerConfig:
    """A miner entry; the rate is raw ``hash_rate`` or ``cpus * hps_per_cpu``."""

    node: int
    hash_rate: Optional[float] = None
    cpus: Optional[float] = None
    enabled: bool = True

    def rate(self, hps_per_cpu: float) -> float:
        if self.hash_rate is not None:
            return float(self.hash_rate)
        return float(self.cpus) * hps_per_cpu


@dataclass
class TopologySpec:
    kind: str = "mesh"
    p: float = 0.5
    seed: int = 0
    edges: List[List[int]] = field(default_factory=list)

    def build(self, nodes: int) -> Topology:
        if self.kind == "mesh":
            return Topology.mesh(nodes)
        if self.kind == "ring":
            return Topology.ring(nodes)
        if self.kind == "random":
            return Topology.random(nodes, self.p, self.seed)
        if self.kind == "custom":
            return Topology.custom(nodes, self.edges)
        raise TopologyError(f"unknown topology kind {self.kind!r}")


@dataclass
class LinkOverride:
    a: int
    b: int
    latency: float = 0.0
    loss: float = 0.0


@dataclass
class LinkSpec:
    latency: float = 0.0
    loss: float = 0.0
    overrides: List[LinkOverride] = field(default_factory=list)


@dataclass
class RewardSpec:
    subsidy: float = 50.0
    maturity_depth: int = 100


@dataclass
class MinerToggle:
    at: float
    node: int
    enabled: bool


@dataclass
class ScenarioConfig:
    name: str
    seed: int = 0
    nodes: int = 5
    duration: Optional[float] = None
    block_cap: Optional[int] = None
    labels: Optional[List[str]] = None
    topology: TopologySpec = field(default_factory=TopologySpec)
    hps_per_cpu: float = 1.0e6
    miners: List[MinerConfig] = field(default_factory=list)
    difficulty: DifficultyMode = field(default_factory=lambda: Fixed(1.0))
    links: LinkSpec = field(default_factory=LinkSpec)
    chaos: List[ChaosRule] = field(default_factory=list)
    relay: str = "push"
    end_mode: str = "cut"
    sample_every: float = 10.0
    sample_on_mint: bool = True
    reward: RewardSpec = field(default_factory=RewardSpec)
    miner_schedule: List[MinerToggle] = field(default_factory=list)

    def node_labels(self) -> List[str]:
        if self.labels:
            return list(self.labels)
        return [f"n{i}" for i in range(self.nodes)]

    def miner_specs(self) -> List[MinerSpec]:
        return [MinerSpec(m.node, m.rate(self.hps_per_cpu), m.enabled) for m in self.miners]

    def enabled_rates(self) -> List[float]:
        return [m.hash_rate for m in self.miner_specs() if m.enabled]

    def link_base(self) -> LinkBase:
        return LinkBase(self.links.latency, self.links.loss)

    def link_overrides(self) -> Dict[tuple, LinkBase]:
        return {
            (min(o.a, o.b), max(o.a, o.b)): LinkBase(o.latency, o.loss)
            for o in self.links.overrides
        }

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "seed": self.seed,
            "nodes": self.nodes,
            "duration": self.duration,
            "block_cap": self.block_cap,
            "labels": list(self.labels) if self.labels else None,
            "topology": {
                "kind": self.topology.kind,
                "p": self.topology.p,
                "seed": self.topology.seed,
                "edges": [list(e) for e in self.topology.edges],
            },
            "hps_per_cpu": self.hps_per_cpu,
            "miners": [
                {"node": m.node, "hash_rate": m.hash_rate, "cpus": m.cpus, "enabled": m.enabled}
                for m in self.miners
            ],
            "difficulty": _mode_to_dict(self.difficulty),
            "links": {
                "latency": self.links.latency,
                "loss": self.links.loss,
                "overrides": [
                    {"a": o.a, "b": o.b, "latency": o.latency, "loss": o.loss}
                    for o in self.links.overrides
                ],
            },
            "chaos": [_rule_to_dict(r) for r in self.chaos],
            "relay": self.relay,
            "end_mode": self.end_mode,
            "sample_every": self.sample_every,
            "sample_on_mint": self.sample_on_mint,
            "reward": {"subsidy": self.reward.subsidy, "maturity_depth": self.reward.maturity_depth},
            "miner_schedule": [
                {"at": t.at, "node": t.node, "enabled": t.enabled} for t in self.miner_schedule
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScenarioConfig":
        data = dict(data)
        errors: List[str] = []
        known = set(cls.__dataclass_fields__)
        for key in sorted(set(data) - known):
            errors.append(f"unknown key {key!r}")
        if "name" not in data:
            errors.append("missing required key 'name'")
        if errors:
            raise ConfigError(errors)
        try:
            topo = data.get("topology") or {}
            if isinstance(topo, str):
                topo = {"kind": topo}
            links = data.get("links") or {}
            reward = data.get("reward") or {}
            return cls(
                name=str(data["name"]),
                seed=int(data.get("seed", 0)),
                nodes=int(data.get("nodes", 5)),
                duration=_opt_float(data.get("duration")),
                block_cap=_opt_int(data.get("block_cap")),
                labels=[str(x) for x in data["labels"]] if data.get("labels") else None,
                topology=TopologySpec(
                    kind=str(topo.get("kind", "mesh")),
                    p=float(topo.get("p", 0.5)),
                    seed=int(topo.get("seed", 0)),
                    edges=[[int(a), int(b)] for a, b in topo.get("edges", [])],
                ),
                hps_per_cpu=float(data.get("hps_per_cpu", 1.0e6)),
                miners=[
                    MinerConfig(
                        node=int(m["node"]),
                        hash_rate=_opt_float(m.get("hash_rate")),
                        cpus=_opt_float(m.get("cpus")),
                        enabled=bool(m.get("enabled", True)),
                    )
                    for m in data.get("miners", [])
                ],
                difficulty=_mode_from_dict(data.get("difficulty", {"mode": "fixed", "difficulty": 1.0})),
                links=LinkSpec(
                    latency=float(links.get("latency", 0.0)),
                    loss=float(links.get("loss", 0.0)),
                    overrides=[
                        LinkOverride(int(o["a"]), int(o["b"]), float(o.get("latency", 0.0)),
                                     float(o.get("loss", 0.0)))
                        for o in links.get("overrides", [])
                    ],
                ),
                chaos=[_rule_from_dict(r) for r in data.get("chaos", [])],
                relay=str(data.get("relay", "push")),
                end_mode=str(data.get("end_mode", "cut")),
                sample_every=float(data.get("sample_every", 10.0)),
                sample_on_mint=bool(data.get("sample_on_mint", True)),
                reward=RewardSpec(float(reward.get("subsidy", 50.0)), int(reward.get("maturity_depth", 100))),
                miner_schedule=[
                    MinerToggle(float(t["at"]), int(t["node"]), bool(t["enabled"]))
                    for t in data.get("miner_schedule", [])
                ],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed scenario: {exc}") from exc


def _opt_float(v) -> Optional[float]:
    return None if v is None else float(v)


def _opt_int(v) -> Optional[int]:
    return None if v is None else int(v)


def _mode_to_dict(mode: DifficultyMode) -> Dict[str, Any]:
    if isinstance(mode, Fixed):
        return {"mode": "fixed", "difficulty": mode.difficulty}
    if isinstance(mode, Auto):
        return {"mode": "auto", "target_block_time": mode.target_block_time}
    return {
        "mode": "retarget",
        "initial": mode.initial,
        "target_block_time": mode.target_block_time,
        "interval": mode.interval,
        "clamp": mode.clamp,
    }


def _mode_from_dict(d: Dict[str, Any]) -> DifficultyMode:
    mode = d.get("mode", "fixed")
    if mode == "fixed":
        return Fixed(float(d["difficulty"]))
    if mode == "auto":
        return Auto(float(d["target_block_time"]))
    if mode == "retarget":
        return Retarget(
            initial=float(d["initial"]),
            target_block_time=float(d.get("target_block_time", 600.0)),
            interval=int(d.get("interval", 2016)),
            clamp=float(d.get("clamp", 4.0)),
        )
    raise ValueError(f"unknown difficulty mode {mode!r}")


def _rule_to_dict(rule: ChaosRule) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    if isinstance(rule.scope, EgressOf):
        out["egress"] = rule.scope.node
    else:
        out["link"] = [rule.scope.src, rule.scope.dst]
    out.update(
        delay=rule.delay, jitter=rule.jitter, loss=rule.loss, start=rule.start,
        end=None if math.isinf(rule.end) else rule.end,
    )
    return out


def _rule_from_dict(d: Dict[str, Any]) -> ChaosRule:
    if ("egress" in d) == ("link" in d):
        raise ValueError("a chaos rule needs exactly one of 'egress' or 'link'")
    scope = EgressOf(int(d["egress"])) if "egress" in d else Link(int(d["link"][0]), int(d["link"][1]))
    end = d.get("end")
    return ChaosRule(
        scope=scope,
        delay=float(d.get("delay", 0.0)),
        jitter=float(d.get("jitter", 0.0)),
        loss=float(d.get("loss", 0.0)),
        start=float(d.get("start", 0.0)),
        end=math.inf if end is None else float(end),
    )


def load_data(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return json.loads(text)
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return data


def load(path: Union[str, Path]) -> ScenarioConfig:
    return ScenarioConfig.from_dict(load_data(path))


def dumps(config: ScenarioConfig, fmt: str = "yaml") -> str:
    if fmt == "json":
        return json.dumps(config.to_dict(), indent=2) + "\n"
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


@dataclass
class Validation:
    errors: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate(config: ScenarioConfig) -> Validation:
    """Check every invariant and report all violations at once."""
    v = Validation()
    err = v.errors.append
    n = config.nodes

    if n < 1:
        err(f"nodes must be >= 1, got {n}")
    if not 0 <= config.seed < 2**64:
        err(f"seed {config.seed} is not a 64-bit unsigned integer")
    has_duration = config.duration is not None
    has_cap = config.block_cap is not None
    if has_duration == has_cap:
        err("exactly one of duration or block_cap must be set")
    if has_duration and not config.duration > 0:
        err(f"duration must be positive, got {config.duration}")
    if has_cap and not config.block_cap > 0:
        err(f"block_cap must be positive, got {config.block_cap}")
    labels = config.node_labels()
    if len(labels) != n:
        err(f"{len(labels)} labels given for {n} nodes")
    elif len(set(labels)) != len(labels):
        err("node labels must be unique")

    topology = None
    if config.topology.kind not in TOPOLOGY_KINDS:
        err(f"unknown topology kind {config.topology.kind!r}")
    else:
        try:
            topology = config.topology.build(max(n, 0))
        except TopologyError as exc:
            err(f"topology: {exc}")
    if topology is not None and not topology.is_connected():
        v.warnings.append("topology is disconnected; some nodes will never hear of all blocks")

    seen = set()
    for i, m in enumerate(config.miners):
        where = f"miner #{i} (node {m.node})"
        if not 0 <= m.node < n:
            err(f"{where}: node outside 0..{n - 1}")
        if m.node in seen:
            err(f"{where}: duplicate miner for node")
        seen.add(m.node)
        if (m.hash_rate is None) == (m.cpus is None):
            err(f"{where}: give exactly one of hash_rate or cpus")
            continue
        if m.enabled and not m.rate(config.hps_per_cpu) > 0:
            err(f"{where}: enabled miner needs a positive hash rate")
    if not config.hps_per_cpu > 0:
        err("hps_per_cpu must be positive")

    mode = config.difficulty
    if isinstance(mode, Fixed):
        if not mode.difficulty > 0:
            err(f"fixed difficulty must be positive, got {mode.difficulty}")
        elif mode.difficulty < MIN_DIFFICULTY:
            err(f"fixed difficulty {mode.difficulty} saturates the 256-bit target (minimum {MIN_DIFFICULTY:.3e})")
    elif isinstance(mode, Auto):
        rates = [r for r in _safe_rates(config) if r > 0]
        if not mode.target_block_time > 0:
            err("auto difficulty needs a positive target_block_time")
        elif not rates:
            err("auto difficulty needs at least one enabled miner")
        else:
            d = auto_difficulty(mode.target_block_time, rates)
            if d < MIN_DIFFICULTY:
                err(f"auto difficulty {d:.3e} saturates the 256-bit target")
    elif isinstance(mode, Retarget):
        if not mode.initial > 0 or mode.initial < MIN_DIFFICULTY:
            err(f"retarget initial difficulty {mode.initial} out of range")
        if mode.interval < 1:
            err("retarget interval must be >= 1")
        if mode.clamp < 1:
            err("retarget clamp must be >= 1")
        if not mode.target_block_time > 0:
            err("retarget target_block_time must be positive")

    if not 0 <= config.links.loss <= 1:
        err(f"base link loss {config.links.loss} outside [0, 1]")
    if config.links.latency < 0:
        err("base link latency must be >= 0")
    for o in config.links.overrides:
        if topology is not None and not topology.adjacent(o.a, o.b):
            err(f"link override {o.a}-{o.b} is not an edge of the topology")
        if o.latency < 0 or not 0 <= o.loss <= 1:
            err(f"link override {o.a}-{o.b} has invalid latency/loss")

    for i, rule in enumerate(config.chaos):
        name = f"chaos rule #{i} ({_describe_scope(rule)})"
        for p in rule.problems():
            err(f"{name}: {p}")
        if isinstance(rule.scope, EgressOf):
            if not 0 <= rule.scope.node < n:
                err(f"{name}: node outside 0..{n - 1}")
        elif topology is not None and not topology.adjacent(rule.scope.src, rule.scope.dst):
            err(f"{name}: link is not an edge of the topology")

    if config.relay not in RELAY_MODES:
        err(f"relay must be one of {RELAY_MODES}, got {config.relay!r}")
    if config.end_mode not in END_MODES:
        err(f"end_mode must be one of {END_MODES}, got {config.end_mode!r}")
    if not config.sample_every > 0:
        err("sample_every must be positive")
    if not config.reward.subsidy > 0:
        err("reward subsidy must be positive")
    if config.reward.maturity_depth < 0:
        err("maturity_depth must be >= 0")
    miner_nodes = {m.node for m in config.miners}
    for t in config.miner_schedule:
        if t.node not in miner_nodes:
            err(f"miner_schedule at {t.at}: node {t.node} has no miner entry")
        if t.at < 0:
            err(f"miner_schedule at {t.at}: time must be >= 0")
    return v


def _safe_rates(config: ScenarioConfig) -> List[float]:
    out = []
    for m in config.miners:
        if m.enabled and (m.hash_rate is None) != (m.cpus is None):
            out.append(m.rate(config.hps_per_cpu))
    return out


def _describe_scope(rule: ChaosRule) -> str:
    if isinstance(rule.scope, EgressOf):
        return f"egress of {rule.scope.node}"
    return f"link {rule.scope.src}->{rule.scope.dst}"
