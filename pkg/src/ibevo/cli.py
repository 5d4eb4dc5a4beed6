"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 partial sweep failure,
4 numerical non-convergence while computing the frontier.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config, preset_config
from .harness import (
    MissingInputError,
    cmd_analyze,
    cmd_baselines,
    cmd_ib_bound,
    cmd_simulate,
    cmd_sweep,
    resolve_workers,
)
from .ib_solver import NonConvergence

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3
EXIT_NONCONVERGENCE = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ibevo",
        description="Frontier bounds, imitation-dynamics sweeps and baselines "
                    "for the noisy signaling-game domain.",
    )
    parser.add_argument("--config", type=Path, default=None,
                        help="YAML config file layered over the preset")
    parser.add_argument("--output", type=Path, default=None,
                        help="output directory (default: config output_dir)")
    parser.add_argument("--workers", type=int, default=None,
                        help="parallel worker processes (env IBEVO_WORKERS, "
                             "default: cpu count)")
    parser.add_argument("--preset", choices=("paper", "desk"), default="paper",
                        help="base parameter set before config overlays")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ib-bound", help="compute the frontier curve")

    sim = sub.add_parser("simulate", help="run one imitation simulation")
    sim.add_argument("--gamma", type=float, required=True)
    sim.add_argument("--seed", type=int, required=True)

    sub.add_parser("sweep", help="run the full gamma x seed grid with baselines")

    base = sub.add_parser("baselines", help="permutation and NK99 baselines for a sweep")
    base.add_argument("sweep_dir", nargs="?", type=Path, default=None,
                      help="sweep directory (default: the output directory)")

    ana = sub.add_parser("analyze", help="rebuild aggregate tables for a sweep")
    ana.add_argument("sweep_dir", type=Path)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = (load_config(args.config, preset=args.preset)
               if args.config else preset_config(args.preset))
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.output if args.output is not None else Path(cfg.output_dir)

    try:
        if args.command == "ib-bound":
            bound_dir = cmd_ib_bound(cfg, out_dir)
            print(f"frontier written to {bound_dir}")
        elif args.command == "simulate":
            run_dir = cmd_simulate(cfg, args.gamma, args.seed, out_dir)
            print(f"run written to {run_dir}")
        elif args.command == "sweep":
            report = cmd_sweep(cfg, out_dir, resolve_workers(args.workers))
            print(f"sweep of {report.n_runs} runs written to {report.sweep_dir}")
            if report.failed:
                for rec in report.failed:
                    print(f"  failed gamma={rec['gamma']} seed={rec['seed']}: "
                          f"{rec['error']}", file=sys.stderr)
                return EXIT_PARTIAL
        elif args.command == "baselines":
            target = args.sweep_dir if args.sweep_dir is not None else out_dir
            base_dir = cmd_baselines(cfg, target)
            print(f"baselines written to {base_dir}")
        elif args.command == "analyze":
            analysis_dir = cmd_analyze(args.sweep_dir)
            print(f"analysis written to {analysis_dir}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        print(f"frontier solve failed: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except MissingInputError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
