import argparse
import logging
import os
import sys

from dotenv import load_dotenv

from src.cli import cmd_compare, cmd_evaluate, cmd_oracle, cmd_train
from src.config import LOG_LEVEL_ENV
from src.errors import NumericFault, RpdeError, UsageError

load_dotenv()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Residual-network surrogates for random PDEs")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="Train a surrogate from a config file")
    train.add_argument("--config", help="Path to a run config file")
    train.add_argument("--resume", help="Checkpoint to resume from")
    train.add_argument("--seed", type=int, help="Override train.seed")
    train.add_argument("--out", help="Override output.dir")
    train.add_argument("--threads", type=int, help="Worker threads (overrides RPDE_THREADS)")

    oracle = commands.add_parser("oracle", help="Run the Monte Carlo finite-difference reference")
    oracle.add_argument("--config", help="Path to a run config file")
    oracle.add_argument("--probes", help="CSV of probe coordinates")
    oracle.add_argument("--seed", type=int, help="Override oracle.seed")
    oracle.add_argument("--out", help="Override output.dir")
    oracle.add_argument("--threads", type=int, help="Worker threads (overrides RPDE_THREADS)")

    evaluate = commands.add_parser("evaluate", help="Evaluate a trained surrogate at probes")
    evaluate.add_argument("checkpoint", help="Checkpoint file to evaluate")
    evaluate.add_argument("--probes", help="CSV of probe coordinates")
    evaluate.add_argument("--seed", type=int, help="Override evaluate.seed")
    evaluate.add_argument("--out", help="Override output.dir")

    compare = commands.add_parser("compare", help="Compare a surrogate summary against an oracle summary")
    compare.add_argument("surrogate", help="Surrogate summary.csv")
    compare.add_argument("oracle", help="Oracle summary.csv")
    compare.add_argument("--out", help="Where to write report.json")
    return parser


def run(args: argparse.Namespace) -> int:
    if args.command == "train":
        cmd_train(args.config, resume=args.resume, seed=args.seed, out=args.out, threads=args.threads)
    elif args.command == "oracle":
        cmd_oracle(args.config, probes_path=args.probes, seed=args.seed, out=args.out, threads=args.threads)
    elif args.command == "evaluate":
        cmd_evaluate(args.checkpoint, probes_path=args.probes, seed=args.seed, out=args.out)
    else:
        cmd_compare(args.surrogate, args.oracle, out=args.out)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.getenv(LOG_LEVEL_ENV, "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except UsageError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except NumericFault as e:
        print(f"Numeric fault: {e}", file=sys.stderr)
        return e.exit_code
    except RpdeError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
