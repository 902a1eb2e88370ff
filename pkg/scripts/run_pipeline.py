"""Full desk-scale pipeline (5/10/10 epochs) on the default synthetic dataset."""
import argparse
import logging

from asgk.experiments import run_full


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/pipeline")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    res = run_full(args.out, seed=args.seed)
    print(res.test.table())
    print(f"wall time {res.seconds:.1f} s; validation {res.val}")


if __name__ == "__main__":
    main()
