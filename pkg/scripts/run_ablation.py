"""Run the four ablation rows over several seeds and print mean validation metrics."""
import argparse
import json
import logging

from asgk.experiments import ablation_ordering, run_ablation, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--json", help="write per-seed results here")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    results = run_ablation(args.out, seeds=args.seeds)
    summary = summarize(results)
    for name, metrics in summary.items():
        print(f"{name:<8} " + "  ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
    for text, ok in ablation_ordering(summary):
        print(f"{'PASS' if ok else 'FAIL'}  {text}")
    if args.json:
        with open(args.json, "w") as f:
            json.dump({"runs": results, "mean": summary}, f, indent=1)


if __name__ == "__main__":
    main()
