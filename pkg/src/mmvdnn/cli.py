"""Command-line entry point: ``mmvdnn {gen-data,train,run,inspect-weights}``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .data_gen import DatasetError
from .harness import cmd_gen_data, cmd_run, cmd_train, describe_weights
from .neural import WeightFileError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="YAML config (defaults are used when omitted)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("-o", "--output-dir", help="override the output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mmvdnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="write training datasets")
    g.add_argument("--t-pilots", type=int, help="pilot length (default: scene.t_pilots)")
    g.add_argument("--only", choices=("mlp", "rnn"), help="generate one dataset only")

    t = sub.add_parser("train", parents=[common], help="train a network on a dataset file")
    t.add_argument("dataset")
    t.add_argument("--weights", help="output weight file (default: dataset path with .bin)")

    sub.add_parser("run", parents=[common], help="run the configured sweep")

    i = sub.add_parser("inspect-weights", help="print the layout of a weight file")
    i.add_argument("weights")
    i.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "inspect-weights":
            print(describe_weights(args.weights))
            return EXIT_OK
        cfg = load_config(args.config).with_overrides(args.seed, args.output_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, WeightFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    try:
        if args.command == "gen-data":
            which = (args.only,) if args.only else ("mlp", "rnn")
            for kind, path in cmd_gen_data(cfg, args.t_pilots, which).items():
                print(f"{kind}: {path}")
        elif args.command == "train":
            weights, curve = cmd_train(cfg, args.dataset, args.weights)
            print(f"weights: {weights}\nloss curve: {curve}")
        else:
            results, summary = cmd_run(cfg)
            print(f"results: {results}\nsummary: {summary}")
    except (OSError, ValueError, RuntimeError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
