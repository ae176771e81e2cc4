"""Parameter sweeps and the experiment presets.

A sweep varies one axis of a base scenario over a list of points, with
several repetitions per point.  Repetition ``r`` uses the same derived seed
at every point (common random numbers), so the differences between points
come from the swept parameter, not the draws.
"""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from .config import ConfigError, MinerConfig, ScenarioConfig, TopologySpec, LinkSpec, load_data, validate
from .engine import run
from .metrics import MetricsReport, aggregate, dat_text, fmt6
from .mining import Auto, Fixed
from .netsim import ChaosRule, EgressOf
from .rng import derive_seed

log = logging.getLogger(__name__)

AXES = ("egress_delay", "difficulty", "hash_allocation")

# Per-CPU hash rate used by every preset.  No reference host rate exists, so
# presets fix one value and only ratios and trends are meaningful.
HPS_PER_CPU = 1.0e6

PRESET_NAMES = ("fig5", "fig6", "fig7", "fig8", "fig9")


@dataclass
class SweepSpec:
    base: ScenarioConfig
    axis: str
    points: List[Any]
    repetitions: int = 1
    outputs: Optional[str] = None
    # nodes whose egress gets the swept delay; None means every node
    delay_nodes: Optional[List[int]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "base": self.base.to_dict(),
            "axis": self.axis,
            "points": list(self.points),
            "repetitions": self.repetitions,
            "outputs": self.outputs,
            "delay_nodes": self.delay_nodes,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "SweepSpec":
        unknown = set(d) - {"base", "axis", "points", "repetitions", "outputs", "delay_nodes"}
        if unknown:
            raise ConfigError([f"unknown sweep key {k!r}" for k in sorted(unknown)])
        try:
            return cls(
                base=ScenarioConfig.from_dict(d["base"]),
                axis=str(d["axis"]),
                points=list(d["points"]),
                repetitions=int(d.get("repetitions", 1)),
                outputs=d.get("outputs"),
                delay_nodes=[int(n) for n in d["delay_nodes"]] if d.get("delay_nodes") is not None else None,
            )
        except KeyError as exc:
            raise ConfigError(f"sweep is missing key {exc}") from exc

    def seed_for(self, repetition: int) -> int:
        return derive_seed(self.base.seed, "sweep", repetition)

    def point_config(self, index: int, repetition: int) -> ScenarioConfig:
        value = self.points[index]
        cfg = apply_point(self.base, self.axis, value, self.delay_nodes)
        return replace(cfg, name=f"{self.base.name}-{index}", seed=self.seed_for(repetition))


def apply_point(base: ScenarioConfig, axis: str, value: Any,
                delay_nodes: Optional[List[int]] = None) -> ScenarioConfig:
    if axis == "egress_delay":
        nodes = range(base.nodes) if delay_nodes is None else delay_nodes
        extra = [ChaosRule(EgressOf(n), delay=float(value)) for n in nodes] if float(value) > 0 else []
        return replace(base, chaos=list(base.chaos) + extra)
    if axis == "difficulty":
        return replace(base, difficulty=Fixed(float(value)))
    if axis == "hash_allocation":
        cpus = list(value)
        if len(cpus) != len(base.miners):
            raise ConfigError(f"allocation {cpus} does not match {len(base.miners)} miners")
        miners = [replace(m, cpus=float(c), hash_rate=None) for m, c in zip(base.miners, cpus)]
        return replace(base, miners=miners)
    raise ConfigError(f"unknown sweep axis {axis!r}")


def validate_sweep(spec: SweepSpec) -> List[str]:
    errors = []
    if spec.axis not in AXES:
        errors.append(f"axis must be one of {AXES}, got {spec.axis!r}")
    if not spec.points:
        errors.append("sweep needs at least one point")
    if spec.repetitions < 1:
        errors.append("repetitions must be >= 1")
    if errors:
        return errors
    for i in range(len(spec.points)):
        try:
            cfg = spec.point_config(i, 0)
        except (ConfigError, TypeError, ValueError) as exc:
            errors.append(f"point {i} ({spec.points[i]!r}): {exc}")
            continue
        errors.extend(f"point {i} ({spec.points[i]!r}): {e}" for e in validate(cfg).errors)
    return errors


def load_sweep(path: Union[str, Path]) -> SweepSpec:
    return SweepSpec.from_dict(load_data(path))


@dataclass
class PointResult:
    index: int
    value: Any
    reports: List[MetricsReport] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)

    @property
    def summary(self) -> Optional[Dict[str, Any]]:
        return aggregate(self.reports) if self.reports else None


@dataclass
class SweepResult:
    spec: SweepSpec
    points: List[PointResult]
    files: List[Path] = field(default_factory=list)

    @property
    def failures(self) -> List[str]:
        return [f for p in self.points for f in p.failures]


def _run_one(cfg: ScenarioConfig):
    try:
        return run(cfg), None
    except Exception as exc:  # reported per point, the sweep carries on
        return None, f"{cfg.name} seed={cfg.seed}: {type(exc).__name__}: {exc}"


def run_sweep(spec: SweepSpec, workers: Optional[int] = None,
              outputs: Optional[Union[str, Path]] = None) -> SweepResult:
    """Run every (point, repetition) pair and write reports plus figure files.

    Results are independent of ``workers``; each run owns its state and the
    aggregation happens after all runs finish.
    """
    errors = validate_sweep(spec)
    if errors:
        raise ConfigError(errors)
    jobs = [(i, r) for i in range(len(spec.points)) for r in range(spec.repetitions)]
    configs = [spec.point_config(i, r) for i, r in jobs]
    workers = workers or os.cpu_count() or 1
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_one, configs))
    else:
        outcomes = [_run_one(c) for c in configs]

    points = [PointResult(i, v) for i, v in enumerate(spec.points)]
    for (i, _), (report, failure) in zip(jobs, outcomes):
        if report is not None:
            points[i].reports.append(report)
        else:
            points[i].failures.append(failure)
            log.error("%s", failure)

    result = SweepResult(spec, points)
    out = outputs if outputs is not None else spec.outputs
    if out is not None:
        result.files = write_sweep(result, Path(out))
    return result


def write_sweep(result: SweepResult, out: Path) -> List[Path]:
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for p in result.points:
        for rep in p.reports:
            run_dir = out / rep.config["name"] / str(rep.seed)
            run_dir.mkdir(parents=True, exist_ok=True)
            f = run_dir / "report.json"
            f.write_text(rep.to_json(), encoding="utf-8")
            files.append(f)
    spec = result.spec
    (out / "sweep.yaml").write_text(yaml.safe_dump(spec.to_dict(), sort_keys=False), encoding="utf-8")
    files.append(out / "sweep.yaml")

    rows = []
    for p in result.points:
        s = p.summary
        rows.append({"index": p.index, "value": p.value, "summary": s, "failures": p.failures})
    agg = out / "aggregate.json"
    agg.write_text(json.dumps(rows, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    files.append(agg)

    lines = ["point,value,runs,committed_mean,committed_std,forks_mean,forks_std,"
             "stale_branches_mean,block_time_mean,block_time_std,failures"]
    for p in result.points:
        s = p.summary
        if s is None:
            lines.append(f"{p.index},{_value_text(p.value)},0,,,,,,,,{len(p.failures)}")
            continue
        lines.append(",".join([
            str(p.index), _value_text(p.value), str(s["runs"]),
            fmt6(s["committed"]["mean"]), fmt6(s["committed"]["std"]),
            fmt6(s["forks"]["mean"]), fmt6(s["forks"]["std"]),
            fmt6(s["stale_branches"]["mean"]),
            fmt6(s["block_time"]["mean"]), fmt6(s["block_time"]["std"]),
            str(len(p.failures)),
        ]))
    csv_path = out / "aggregate.csv"
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    files.append(csv_path)

    files.extend(write_figures(result, out))
    return files


def _value_text(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return '"' + " ".join(fmt6(v) for v in value) + '"'
    return fmt6(value)


def write_figures(result: SweepResult, out: Path) -> List[Path]:
    axis = result.spec.axis
    done = [p for p in result.points if p.reports]
    files = []

    def write(name, comment, rows):
        path = out / name
        path.write_text(dat_text(comment, rows), encoding="utf-8")
        files.append(path)

    if axis == "egress_delay":
        write("fig6.dat", ["network delay (s) vs committed blocks", "delay committed"],
              [(p.value, p.summary["committed"]["mean"]) for p in done])
        write("fig7.dat", ["network delay (s) vs forks (stale blocks)", "delay forks"],
              [(p.value, p.summary["forks"]["mean"]) for p in done])
    elif axis == "difficulty":
        write("fig8.dat", ["mining difficulty vs mean block time (s)", "difficulty block_time"],
              [(p.value, p.summary["block_time"]["mean"]) for p in done])
        write("fig9.dat", ["mining difficulty vs forks (stale blocks)", "difficulty forks"],
              [(p.value, p.summary["forks"]["mean"]) for p in done])
    elif axis == "hash_allocation":
        rows: List[tuple] = []
        for k, p in enumerate(done):
            if k:
                rows.extend([(), ()])
            for m in p.summary["per_miner"]:
                rows.append((m["share_expected"], m["committed"]["mean"]))
        write("fig5.dat", ["hash-rate share vs committed blocks", "share committed"], rows)
    return files


def _five_node_base(name: str, **kw) -> ScenarioConfig:
    base = dict(
        name=name,
        seed=2020,
        nodes=5,
        labels=["node-a", "node-b", "node-c", "node-d", "node-e"],
        topology=TopologySpec("mesh"),
        hps_per_cpu=HPS_PER_CPU,
        miners=[MinerConfig(i, cpus=10.0) for i in range(5)],
        relay="two_step",
        sample_every=60.0,
        sample_on_mint=False,
    )
    base.update(kw)
    return ScenarioConfig(**base)


def preset(name: str) -> SweepSpec:
    """The sweep behind each experiment preset, at desk-scale run lengths.

    fig5: hash allocation 4/8/12/16/20 CPUs, difficulty 1, no delay.
    fig6/fig7: 10 s block time, egress delay 0..60 s on every node.
    fig8/fig9: equal miners, difficulty 0.001..0.1, 3 ms base link latency.
    """
    if name == "fig5":
        base = _five_node_base(
            "fig5",
            miners=[MinerConfig(i, cpus=c) for i, c in enumerate([4.0, 8.0, 12.0, 16.0, 20.0])],
            difficulty=Fixed(1.0),
            # ~5600 blocks at 2**32 / 6e7 = 71.6 s each
            duration=400_000.0,
        )
        return SweepSpec(base, "hash_allocation", [[4, 8, 12, 16, 20]], repetitions=3)
    if name in ("fig6", "fig7"):
        # 90000 s keeps the 60 s point above 2000 main-chain blocks
        base = _five_node_base(name, difficulty=Auto(10.0), duration=90_000.0)
        return SweepSpec(base, "egress_delay", [0, 15, 30, 45, 60], repetitions=10)
    if name in ("fig8", "fig9"):
        base = _five_node_base(
            name,
            difficulty=Fixed(0.05),
            block_cap=3000,
            links=LinkSpec(latency=0.003),
        )
        return SweepSpec(base, "difficulty", [0.001, 0.005, 0.01, 0.05, 0.1], repetitions=10)
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
