"""Generate benchmark bundles and score RCA methods over them.

Wraps the CLI: `simulate` for each seed, then `bench` across methods, and
prints the aggregated metrics table.

Usage: python scripts/run_rca_benchmark.py --cases 10 --d 6 --out-dir runs/rca
"""

import argparse
import csv
import sys
from pathlib import Path

from causalab.cli import main as cli_main


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cases", type=int, default=10)
    ap.add_argument("--d", type=int, default=6)
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--anomalies", type=int, default=10)
    ap.add_argument("--magnitude", type=float, default=10.0)
    ap.add_argument("--mode", choices=["soft", "hard"], default="soft")
    ap.add_argument("--methods", default="traversal,counterfactual,cholesky")
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--out-dir", default="runs/rca")
    args = ap.parse_args(argv)

    out_dir = Path(args.out_dir)
    cases_dir = out_dir / "cases"
    for seed in range(args.cases):
        code = cli_main(
            [
                "simulate",
                "--d", str(args.d),
                "--n", str(args.n),
                "--anomalies", str(args.anomalies),
                "--magnitude", str(args.magnitude),
                "--mode", args.mode,
                "--seed", str(seed),
                "--out", str(cases_dir / f"case{seed:03d}"),
            ]
        )
        if code != 0:
            return code
    metrics_csv = out_dir / "metrics.csv"
    code = cli_main(
        [
            "bench",
            "--cases", str(cases_dir),
            "--methods", args.methods,
            "--k", str(args.k),
            "--out", str(metrics_csv),
        ]
    )
    if code != 0:
        return code

    with metrics_csv.open() as f:
        rows = list(csv.DictReader(f))
    by_method: dict[str, list[dict]] = {}
    for row in rows:
        by_method.setdefault(row["method"], []).append(row)
    print(f"\naggregate over {args.cases} cases (k={args.k}):")
    for method, items in sorted(by_method.items()):
        acc = sum(float(r["accuracy_top1"]) for r in items) / len(items)
        ndcg = sum(float(r["ndcg"]) for r in items) / len(items)
        mrr = sum(float(r["mrr"]) for r in items) / len(items)
        print(f"{method:>16}: top-1 {acc:.3f}  ndcg {ndcg:.3f}  mrr {mrr:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
