"""Experiment runner CLI.

Runs one of the experiment pipelines from a TOML/JSON config and writes
``results.csv``, ``summary.csv`` and ``config.snapshot.json`` to the output
directory.
"""
import argparse
import logging
import sys
from pathlib import Path

from .. import env
from ..exceptions import ConfigError, NumericalError, SpecmapError
from ..experiments import EXPERIMENTS, load_config

EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INTERRUPTED = 130


def run(args) -> Path:
    cfg = load_config(args.config, workers=args.workers)
    out = Path(args.out or cfg.output_dir or env.SPECMAP_OUTPUT_DIR)
    dump_dir = out / "matrices" if args.dump else None

    print(f"Running {args.command} (config {cfg.config_hash})", file=sys.stderr)
    table = EXPERIMENTS[args.command](cfg, dump_dir=dump_dir)
    return table.write(out, cfg)


def main(argv: list[str] | None = None):
    parser = argparse.ArgumentParser(
        description="Spectral map experiments between graphs and their subgraphs",
        prog="specmap",
    )

    parser.add_argument("--log-level",
                        default=env.SPECMAP_LOG_LEVEL,
                        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
                        type=str.upper,
                        help="Log level (default: SPECMAP_LOG_LEVEL)")

    subparsers = parser.add_subparsers(dest="command", help="Experiment to run", required=True)

    helps = {
        "rewire-robustness": "Spectral map change under edge rewiring vs. Gaussian noise",
        "transfer-sweep": "Positional-encoding transfer error across basis sizes",
        "matching-eval": "Node correspondence MAP across partiality levels and basis sizes",
    }
    for name in EXPERIMENTS:
        sub = subparsers.add_parser(name, help=helps[name])
        sub.add_argument("--config", required=True, help="Experiment config (.toml or .json)")
        sub.add_argument("--out", help="Output directory (default: config output_dir, then SPECMAP_OUTPUT_DIR)")
        sub.add_argument("--workers", type=int, help="Worker pool size (default: config, then SPECMAP_WORKERS)")
        sub.add_argument("--dump", action="store_true", help="Also write per-run matrices under <out>/matrices")

    args = parser.parse_args(argv)

    logging.basicConfig(
        level=args.log_level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        out = run(args)
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)
    except NumericalError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_NUMERICAL)
    except SpecmapError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_ERROR)
    except KeyboardInterrupt:
        print("Interrupted", file=sys.stderr)
        sys.exit(EXIT_INTERRUPTED)

    print(f"Results written to {out}", file=sys.stderr)


if __name__ == "__main__":
    main()
