"""Performance analysis: the default statistics, hash shares and report output.

"Forks" in aggregates and figure outputs counts stale blocks, the blocks of
the union tree left off the final main chain.  Stale branches and per-node
witnessed forks are carried alongside.
"""
from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from .chain import RewardLedger, best_tip, path_to_genesis, settle_chain_rewards, stale_branches
from .mining import HASHES_PER_DIFFICULTY, difficulty_to_target


class ReportInconsistent(AssertionError):
    pass


def hash_share(rates: Sequence[float]) -> List[float]:
    """Each miner's fraction of the total hash rate."""
    if not rates:
        raise ValueError("hash_share needs at least one rate")
    if any(not r > 0 for r in rates):
        raise ValueError("hash rates must be positive")
    total = math.fsum(rates)
    return [r / total for r in rates]


@dataclass
class MinerStats:
    node: int
    label: str
    enabled: bool
    hash_rate: float
    generated: int
    committed: int
    share_expected: float
    share_observed: float
    balance: float


@dataclass
class NodeStats:
    node: int
    label: str
    forks_witnessed: int
    tip_height: int
    known_blocks: int
    orphans: int


@dataclass
class GlobalStats:
    main_chain_height: int
    total_blocks: int
    stale_branches: int
    stale_blocks: int
    mean_block_time: Optional[float]
    block_time_stdev: Optional[float]
    network_hash_rate: float
    best_miner: Optional[int]
    worst_miner: Optional[int]
    difficulty: float
    nbits: str
    final_clock: float
    messages_sent: int
    messages_dropped: int
    events: int


@dataclass
class MetricsReport:
    per_miner: List[MinerStats]
    per_node: List[NodeStats]
    global_: GlobalStats
    series: List[Dict[str, float]] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "per_miner": [asdict(m) for m in self.per_miner],
            "per_node": [asdict(n) for n in self.per_node],
            "global": asdict(self.global_),
            "series": list(self.series),
            "config": self.config,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "MetricsReport":
        return cls(
            per_miner=[MinerStats(**m) for m in d["per_miner"]],
            per_node=[NodeStats(**n) for n in d["per_node"]],
            global_=GlobalStats(**d["global"]),
            series=list(d.get("series", [])),
            config=d.get("config", {}),
            seed=d.get("seed", 0),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def check(self) -> None:
        g = self.global_
        expected = [m.share_expected for m in self.per_miner if m.enabled]
        if expected and abs(math.fsum(expected) - 1.0) > 1e-9:
            raise ReportInconsistent(f"expected shares sum to {math.fsum(expected)}")
        committed = sum(m.committed for m in self.per_miner)
        if committed != g.main_chain_height:
            raise ReportInconsistent(f"committed blocks {committed} != main chain height {g.main_chain_height}")
        for m in self.per_miner:
            observed = m.committed / g.main_chain_height if g.main_chain_height else 0.0
            if observed != m.share_observed:
                raise ReportInconsistent(f"miner {m.node}: observed share mismatch")
        if sum(m.generated for m in self.per_miner) != g.total_blocks:
            raise ReportInconsistent("generated blocks do not add up to the union tree")


def finalize(sim) -> MetricsReport:
    """Compute the report from the union block tree and the per-node views."""
    config = sim.config
    labels = config.node_labels()
    tree = sim.blocks
    tip = best_tip(tree.values())
    main = path_to_genesis(tree, tip)
    branches = stale_branches(tree, main)
    height = tip.height

    committed: Dict[int, int] = {node: 0 for node in sim.miners}
    for b in main[1:]:
        committed[b.miner] = committed.get(b.miner, 0) + 1
    ledger = settle_chain_rewards(
        main, RewardLedger(config.reward.subsidy, config.reward.maturity_depth)
    )

    specs = config.miner_specs()
    enabled_rates = [s.hash_rate for s in specs if s.enabled]
    shares = iter(hash_share(enabled_rates)) if enabled_rates else iter(())
    per_miner = []
    for s in specs:
        per_miner.append(MinerStats(
            node=s.node,
            label=labels[s.node],
            enabled=s.enabled,
            hash_rate=s.hash_rate,
            generated=sim.generated[s.node],
            committed=committed[s.node],
            share_expected=next(shares) if s.enabled else 0.0,
            share_observed=committed[s.node] / height if height else 0.0,
            balance=ledger.balances.get(s.node, 0.0),
        ))

    per_node = [
        NodeStats(v.owner, labels[v.owner], v.fork_witness_count, v.tip.height, len(v.blocks), len(v.orphans))
        for v in sim.views
    ]

    best = worst = None
    if per_miner:
        # ties go to the lowest node id
        best = min(per_miner, key=lambda m: (-m.committed, m.node)).node
        worst = min(per_miner, key=lambda m: (m.committed, m.node)).node

    deltas = [b.found_at - a.found_at for a, b in zip(main, main[1:])]
    report = MetricsReport(
        per_miner=per_miner,
        per_node=per_node,
        global_=GlobalStats(
            main_chain_height=height,
            total_blocks=len(tree) - 1,
            stale_branches=len(branches),
            stale_blocks=sum(len(br) for br in branches),
            mean_block_time=tip.found_at / height if height else None,
            block_time_stdev=statistics.stdev(deltas) if len(deltas) > 1 else None,
            network_hash_rate=math.fsum(enabled_rates),
            best_miner=best,
            worst_miner=worst,
            difficulty=sim.initial_difficulty,
            nbits=difficulty_to_target(sim.initial_difficulty).hex,
            final_clock=sim.clock,
            messages_sent=sim.network.sent,
            messages_dropped=sim.network.dropped,
            events=sim.events_processed,
        ),
        series=[{"clock": s.clock, "height": s.height, "tip_count": s.tip_count} for s in sim.series],
        config=config.to_dict(),
        seed=config.seed,
    )
    report.check()
    return report


def expected_interval(difficulty: float, total_rate: float) -> float:
    return difficulty * HASHES_PER_DIFFICULTY / total_rate


def _mean_std(values: Sequence[float]) -> Dict[str, float]:
    values = [float(v) for v in values]
    if not values:
        return {"mean": math.nan, "std": math.nan, "n": 0}
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return {"mean": statistics.fmean(values), "std": std, "n": len(values)}


def aggregate(reports: Sequence[MetricsReport]) -> Dict[str, Any]:
    """Mean and sample standard deviation across repetitions, plus count totals.

    Runs that committed no blocks have no block time and are left out of that
    statistic only.
    """
    if not reports:
        raise ValueError("nothing to aggregate")
    nodes = [m.node for m in reports[0].per_miner]
    per_miner = []
    for i, node in enumerate(nodes):
        per_miner.append({
            "node": node,
            "label": reports[0].per_miner[i].label,
            "share_expected": reports[0].per_miner[i].share_expected,
            "committed": _mean_std([r.per_miner[i].committed for r in reports]),
            "generated": _mean_std([r.per_miner[i].generated for r in reports]),
            "share_observed": _mean_std([r.per_miner[i].share_observed for r in reports]),
        })
    return {
        "runs": len(reports),
        "committed": _mean_std([r.global_.main_chain_height for r in reports]),
        "forks": _mean_std([r.global_.stale_blocks for r in reports]),
        "stale_branches": _mean_std([r.global_.stale_branches for r in reports]),
        "block_time": _mean_std([r.global_.mean_block_time for r in reports
                                 if r.global_.mean_block_time is not None]),
        "witnessed_forks": _mean_std([sum(n.forks_witnessed for n in r.per_node) for r in reports]),
        "totals": {
            "blocks": sum(r.global_.total_blocks for r in reports),
            "committed": sum(r.global_.main_chain_height for r in reports),
            "stale_blocks": sum(r.global_.stale_blocks for r in reports),
            "stale_branches": sum(r.global_.stale_branches for r in reports),
        },
        "per_miner": per_miner,
    }


def fmt6(x: Any) -> str:
    """Six significant digits, no locale."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".6g")


CSV_COLUMNS = [
    "row", "node", "label", "enabled", "hash_rate", "generated", "committed",
    "share_expected", "share_observed", "balance", "main_chain_height", "total_blocks",
    "stale_branches", "mean_block_time", "network_hash_rate", "best_miner", "worst_miner",
]


def report_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for m in report.per_miner:
        w.writerow(["miner", m.node, m.label, fmt6(m.enabled), fmt6(m.hash_rate), m.generated,
                    m.committed, fmt6(m.share_expected), fmt6(m.share_observed), fmt6(m.balance),
                    "", "", "", "", "", "", ""])
    g = report.global_
    w.writerow(["global", "", "", "", "", g.total_blocks, g.main_chain_height, "", "", "",
                g.main_chain_height, g.total_blocks, g.stale_branches, fmt6(g.mean_block_time),
                fmt6(g.network_hash_rate), fmt6(g.best_miner), fmt6(g.worst_miner)])
    return buf.getvalue()


def dat_text(comment: Iterable[str], rows: Iterable[Sequence[Any]]) -> str:
    """Whitespace-separated columns with ``#`` comment header (gnuplot style)."""
    lines = [f"# {c}" for c in comment]
    for row in rows:
        lines.append(" ".join(fmt6(x) for x in row) if row else "")
    return "\n".join(lines) + "\n"


def emit(report: MetricsReport, fmt: str, path: Union[str, Path]) -> List[Path]:
    """Write ``report`` as ``json``, ``csv`` or ``plot`` files into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        p = out / "report.json"
        p.write_text(report.to_json(), encoding="utf-8")
        return [p]
    if fmt == "csv":
        p = out / "report.csv"
        p.write_text(report_csv(report), encoding="utf-8")
        return [p]
    if fmt == "plot":
        fig5 = out / "fig5.dat"
        fig5.write_text(dat_text(
            ["hash share vs committed blocks", "share committed"],
            [(m.share_expected, m.committed) for m in report.per_miner],
        ), encoding="utf-8")
        series = out / "series.dat"
        series.write_text(dat_text(
            ["main-chain height and distinct tips over virtual time", "clock height tip_count"],
            [(s["clock"], s["height"], s["tip_count"]) for s in report.series],
        ), encoding="utf-8")
        return [fig5, series]
    raise ValueError(f"unknown report format {fmt!r}")
