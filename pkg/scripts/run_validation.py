"""Run the Monte Carlo validation scenarios and print a compact table.

    python3 scripts/run_validation.py [--suite all] [--seed 42] [--n-paths N] [--jsonl out.jsonl]
"""
import argparse
import time

from lazyclock import harness


def run():
    ap = argparse.ArgumentParser()
    ap.add_argument("--suite", default="all")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--n-paths", type=int, default=None)
    ap.add_argument("--jsonl", default=None)
    args = ap.parse_args()
    names = list(harness.SCENARIOS) if args.suite == "all" else [args.suite]
    all_reps = []
    for name in names:
        t0 = time.perf_counter()
        reps = harness.run_suite(name, args.n_paths, args.seed)
        dt = time.perf_counter() - t0
        for r in reps:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.scenario:24s} {r.check:52s} {r.statistic:10.4g} {r.threshold:10.4g}")
        print(f"      {name} took {dt:.1f}s")
        all_reps += reps
    if args.jsonl:
        with open(args.jsonl, "w") as fh:
            fh.writelines(r.to_json() + "\n" for r in all_reps)
    bad = sum(not r.passed for r in all_reps)
    print(f"{len(all_reps) - bad}/{len(all_reps)} checks pass")
    raise SystemExit(1 if bad else 0)


if __name__ == "__main__":
    run()
