"""Run the desk-scale oracle experiment over several seeds and summarize.

    python3 scripts/oracle_experiment.py --seeds 0 1 2 3 4 --out results/oracle.jsonl
"""
import argparse
import logging
import sys
from pathlib import Path

from irlgen.experiments import OracleExperimentConfig, judge, run_oracle_experiment


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--iterations", type=int, default=None)
    ap.add_argument("--out", default=None, help="write one JSON line per seed")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    cfg = OracleExperimentConfig()
    if args.iterations is not None:
        cfg.iterations = args.iterations
    results = []
    print(f"{'seed':>4} {'truth':>7} {'pre':>7} {'mle':>7} {'epoch':>5} {'irl':>7} "
          f"{'H_mle':>6} {'H_irl':>6} {'secs':>6}", flush=True)
    for seed in args.seeds:
        r = run_oracle_experiment(seed, cfg)
        results.append(r)
        print(f"{r.seed:>4} {r.ground_truth:7.4f} {r.pretrained:7.4f} {r.mle_converged:7.4f} "
              f"{r.mle_best_epoch:>5} {r.irl:7.4f} {r.entropy['mle']:6.3f} {r.entropy['irl']:6.3f} "
              f"{r.seconds:6.1f}", flush=True)
    passed, wins = judge(results)
    print(f"IRL strictly better on {wins}/{len(results)} seeds; criterion {'met' if passed else 'NOT met'}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text("".join(r.to_json() + "\n" for r in results))
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
