"""Detection counts and analysis time over growing capture sizes.

Rows are the published dataset sizes (packets, injected runs). Only the first two are
run by default; wall-clock numbers are only indicative of this machine.
"""
import argparse
import time

from airs.analysis import run_analysis
from airs.capture import scale_dataset
from airs.signatures import DEFAULT_RULES

ROWS = [(130_000, 306), (700_000, 803), (1_400_000, 1_481), (3_625_000, 1_851),
        (7_250_000, 2_138), (8_845_000, 2_822)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-packets", type=int, default=700_000)
    args = parser.parse_args()
    print("packets\truns\taggregates\tseconds")
    for packets, runs in ROWS:
        if packets > args.max_packets:
            continue
        records = scale_dataset(packets, runs, seed=args.seed)
        start = time.perf_counter()
        aggs = run_analysis(records, DEFAULT_RULES, args.workers)
        elapsed = time.perf_counter() - start
        print(f"{packets}\t{runs}\t{len(aggs)}\t{elapsed:.3f}")
        assert len(aggs) == runs


if __name__ == "__main__":
    main()
