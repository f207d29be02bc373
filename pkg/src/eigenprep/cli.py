"""Command-line entry point: ``eigenprep <subcommand> --config run.yaml``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__, experiments
from .config import load_config
from .errors import ConfigError, NumericalError

log = logging.getLogger("eigenprep")

COMMANDS = {
    "converge": experiments.cmd_converge,
    "bounds": experiments.cmd_bounds,
    "noise-sweep": experiments.cmd_noise_sweep,
    "morph-sweep": experiments.cmd_morph_sweep,
    "gen": experiments.cmd_gen,
    "rte-error": experiments.cmd_rte_error,
}

HELP = {
    "converge": "fidelity traces per regime with bound curves",
    "bounds": "closed-form iteration counts, gamma and cost bounds",
    "noise-sweep": "density-matrix runs under depolarizing noise",
    "morph-sweep": "cost of staged preparation through H(alpha)",
    "gen": "write a synthetic spectrum, initial Hamiltonian or random Pauli sum",
    "rte-error": "measured Trotter error of the evolution along the schedule",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eigenprep", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", "-c", help="YAML run configuration")
        p.add_argument("--out", dest="output_dir", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        p.add_argument("--jobs", type=int, help="worker processes for sweeps")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = {"output_dir": args.output_dir, "seed": args.seed, "jobs": args.jobs}
    try:
        cfg = load_config(args.config, overrides)
        result = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"eigenprep: configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"eigenprep: numerical failure: {exc}", file=sys.stderr)
        return 3
    if args.command == "bounds":
        print(result.table())
    elif args.command == "morph-sweep":
        regions = ", ".join(f"[{a:.6g}, {b:.6g}]" for a, b in result.advantage_regions) or "none"
        print(f"baseline cost {result.baseline_cost:.6g}; advantage regions {regions}")
    log.info("outputs in %s", cfg.output_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
