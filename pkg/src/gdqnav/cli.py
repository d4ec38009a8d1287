"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 training fault (partial
outputs are left in place).
"""

from __future__ import annotations

import argparse
import sys

from .config import apply_paper_scale, load_config
from .errors import ConfigurationError, TrainingFault
from .harness import aggregate_runs, evaluate, run_experiment


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gdqnav",
        description="Seeded multi-agent RL experiments: train, evaluate, aggregate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one seeded run from a config file")
    p_train.add_argument("--config", required=True, help="key = value config file")
    p_train.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--paper-scale", action="store_true",
                         help="stretch budgets to published-experiment scale (slow)")

    p_eval = sub.add_parser("eval", help="greedy evaluation of a checkpoint on a scene")
    p_eval.add_argument("--checkpoint-dir", required=True)
    p_eval.add_argument("--scene", required=True,
                        help="scene file path, or builtin name (train / test)")
    p_eval.add_argument("--episodes", type=int, required=True)
    p_eval.add_argument("--eval-seed", type=int, default=1000,
                        help="seed of the shared goal stream")
    p_eval.add_argument("--out", default=None, help="output directory")

    p_agg = sub.add_parser("aggregate", help="combine per-seed metric files")
    p_agg.add_argument("--in", dest="in_dir", required=True)
    p_agg.add_argument("--out", required=True)
    p_agg.add_argument("--window", type=int, default=None,
                       help="smoothing window (default: from the metric headers)")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "train":
            overrides = {} if args.seed is None else {"seed": args.seed}
            config = load_config(args.config, overrides)
            if args.paper_scale:
                config = apply_paper_scale(config)
            path = run_experiment(config, args.out)
            print(f"wrote {path}")
        elif args.command == "eval":
            summary = evaluate(args.checkpoint_dir, args.scene, args.episodes,
                               eval_seed=args.eval_seed, out_dir=args.out)
            print(f"evaluation over {summary['episodes']} episodes "
                  f"(config {summary['config_hash']}):")
            for key in ("avg_reward", "avg_steps", "collision_pct",
                        "success_rate", "goals_reached"):
                mean, std = summary[key]
                print(f"  {key:>14}: {mean:.3f} +- {std:.3f}")
            print(f"wrote {summary['out_dir']}")
        else:
            aggregate_runs(args.in_dir, args.out, args.window)
            print(f"wrote {args.out}")
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except TrainingFault as e:
        print(f"training fault: {e}", file=sys.stderr)
        return 3
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
