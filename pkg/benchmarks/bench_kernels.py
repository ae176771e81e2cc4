"""Compare the compiled and interpreted hashing kernels.

    python benchmarks/bench_kernels.py [--hashes N] [--repeat R]

Also times one small scenario so the kernel speed-up can be read against the
cost of the (always interpreted) event loop.
"""
import argparse
import time

from btcnetsim import _purepy, kernels
from btcnetsim.config import LinkSpec, MinerConfig, ScenarioConfig
from btcnetsim.engine import Simulation
from btcnetsim.mining import Fixed

SEED = b"benchmark header prefix"
TARGET = 2**240 - 1


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hashes", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    n = args.hashes

    backends = [("python", _purepy)]
    if kernels.COMPILED is not None:
        backends.insert(0, ("compiled", kernels.COMPILED))
    else:
        print("compiled extension not available; timing the fallback only")

    rates = {}
    for name, mod in backends:
        secs, hits = best_of(lambda: mod.count_hits(SEED, TARGET, 0, n), args.repeat)
        rates[name] = n / secs
        print(f"count_hits {name:8s} {n} double-SHA256 in {secs:.3f} s "
              f"({rates[name] / 1e6:.2f} MH/s, {hits} hits)")
        secs, (found, iters) = best_of(lambda: mod.grind(SEED, 0, n // 10), args.repeat)
        print(f"grind      {name:8s} {iters} iterations in {secs:.3f} s")
    if "compiled" in rates:
        print(f"speed-up compiled/python: {rates['compiled'] / rates['python']:.2f}x")

    cfg = ScenarioConfig(name="bench", seed=1, nodes=5, block_cap=2000,
                         miners=[MinerConfig(i, cpus=10.0) for i in range(5)],
                         difficulty=Fixed(0.01), links=LinkSpec(latency=0.003), sample_on_mint=False)
    sim = Simulation(cfg)
    t0 = time.perf_counter()
    sim.run()
    secs = time.perf_counter() - t0
    print(f"engine: {sim.events_processed} events in {secs:.3f} s "
          f"({secs / sim.events_processed * 1e6:.2f} us/event)")


if __name__ == "__main__":
    main()
