import csv
import io
import json
import statistics

import pytest

from btcnetsim.config import MinerConfig, ScenarioConfig
from btcnetsim.engine import run
from btcnetsim.metrics import (
    CSV_COLUMNS, MetricsReport, ReportInconsistent, aggregate, emit, fmt6, hash_share, report_csv,
)
from btcnetsim.mining import Fixed

from conftest import mesh5, small_config


def test_hash_share_of_cpu_allocation():
    shares = hash_share([4, 8, 12, 16, 20])
    assert [round(s, 4) for s in shares] == [0.0667, 0.1333, 0.2, 0.2667, 0.3333]
    assert sum(shares) == pytest.approx(1.0)


def test_hash_share_trivial():
    assert hash_share([5.0]) == [1.0]
    assert hash_share([3.0] * 5) == [0.2] * 5


@pytest.mark.parametrize("bad", [[], [1.0, 0.0], [-1.0]])
def test_hash_share_rejects(bad):
    with pytest.raises(ValueError):
        hash_share(bad)


def test_single_miner_report():
    cfg = ScenarioConfig(name="solo", seed=1, nodes=1, duration=500.0,
                         miners=[MinerConfig(0, hash_rate=1e6)], difficulty=Fixed(1e-3))
    r = run(cfg)
    assert [m.share_observed for m in r.per_miner] == [1.0]
    assert r.global_.stale_branches == 0
    assert r.global_.best_miner == r.global_.worst_miner == 0
    # 1000 * 0xffff << 208 = 0x03e7fc18 << 208, a 30-byte number
    assert r.global_.nbits == "1e03e7fc"


def test_report_invariants_hold(small):
    r = run(small)
    r.check()
    assert sum(m.committed for m in r.per_miner) == r.global_.main_chain_height
    assert r.global_.total_blocks == r.global_.main_chain_height + r.global_.stale_blocks


def test_check_catches_tampering(small):
    r = run(small)
    r.per_miner[0].committed += 1
    with pytest.raises(ReportInconsistent):
        r.check()


def test_json_round_trip(small):
    r = run(small)
    again = MetricsReport.from_dict(json.loads(r.to_json()))
    assert again.to_json() == r.to_json()


def test_merge_same_seed_identical(small):
    a, b = run(small), run(small)
    assert aggregate([a])["committed"] == {"mean": a.global_.main_chain_height, "std": 0.0, "n": 1}
    assert a.to_dict() == b.to_dict()


def test_aggregate_matches_brute_force():
    reports = [run(small_config(seed=s)) for s in range(4)]
    agg = aggregate(reports)
    heights = [r.global_.main_chain_height for r in reports]
    stale = [r.global_.stale_blocks for r in reports]
    assert agg["committed"]["mean"] == pytest.approx(sum(heights) / 4)
    assert agg["committed"]["std"] == pytest.approx(statistics.stdev(heights))
    assert agg["forks"]["mean"] == pytest.approx(sum(stale) / 4)
    assert agg["totals"]["blocks"] == sum(r.global_.total_blocks for r in reports)
    assert agg["per_miner"][1]["committed"]["mean"] == pytest.approx(
        sum(r.per_miner[1].committed for r in reports) / 4)


def test_csv_has_miner_rows_and_global(tmp_path):
    r = run(mesh5(block_cap=30))
    rows = list(csv.reader(io.StringIO(report_csv(r))))
    assert rows[0] == CSV_COLUMNS
    assert [row[0] for row in rows[1:]] == ["miner"] * 5 + ["global"]


def test_fmt6():
    assert fmt6(1 / 3) == "0.333333"
    assert fmt6(12345678.0) == "1.23457e+07"
    assert fmt6(None) == ""
    assert fmt6(7) == "7"


def test_emit_formats(tmp_path, small):
    r = run(small)
    (j,) = emit(r, "json", tmp_path)
    assert j.read_bytes() == r.to_json().encode("utf-8")
    (c,) = emit(r, "csv", tmp_path)
    assert c.name == "report.csv"
    files = emit(r, "plot", tmp_path)
    assert {f.name for f in files} == {"fig5.dat", "series.dat"}
    lines = [ln for ln in files[0].read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 3
    with pytest.raises(ValueError):
        emit(r, "xml", tmp_path)
