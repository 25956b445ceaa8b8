"""Per-window latency and real-time factor of a trained cascade.

    python scripts/benchmark_latency.py --manifest corpus/manifest.csv --checkpoints ck
"""

import argparse
import sys

from voxdesk.bundle import load_bundle
from voxdesk.evaluate import measure_latency
from voxdesk.synthcorpus import read_manifest


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoints", required=True)
    p.add_argument("--seconds", type=float, default=60.0, help="minimum audio to stream")
    args = p.parse_args(argv)
    stats = measure_latency(load_bundle(args.checkpoints), read_manifest(args.manifest), args.seconds)
    for k, v in stats.items():
        print(f"{k:26s}{v:.4f}")
    ok = stats["median_ms"] < 500 and stats["rtf"] < 0.5
    print("within budget" if ok else "OVER BUDGET")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
