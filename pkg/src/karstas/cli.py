"""Command-line interface.

Subcommands: synthetic, simulate, subspace, invert, pushforward. Options
mirror the configuration keys; a key=value config file supplies defaults
that individual flags override. Exit codes: 0 success, 2 configuration
error, 3 input error, 4 parameter error, 5 evaluation/sampler error,
1 unexpected failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import (ChainError, ConfigError, EvaluationError, InputError,
                     KarstasError, ParameterError)
from .pipeline import (config_from_sources, run_invert, run_pushforward,
                       run_simulate, run_subspace, run_synthetic)

_EXIT_CODES = (
    (ConfigError, 2, "config"),
    (InputError, 3, "input"),
    (ParameterError, 4, "parameter"),
    ((EvaluationError, ChainError), 5, "evaluation"),
    (KarstasError, 5, "error"),
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--outdir", help="artifact directory (default: out)")
    parser.add_argument("--prior", help="prior interval table")
    parser.add_argument("--seed", type=int, help="root seed for all stages")
    parser.add_argument("--workers", type=int, help="parallel worker count")
    parser.add_argument("--no-figures", action="store_true",
                        help="skip PNG rendering")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="karstas",
        description="Lumped karst-spring model with active-subspace "
                    "Bayesian calibration")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthetic", help="generate a synthetic twin data set")
    _add_common(p)
    p.add_argument("--years", type=int, help="length of the daily series")
    p.add_argument("--noise", type=float, help="relative observation noise")
    p.add_argument("--truth-coords", dest="truth_coords",
                   help="calibration CSV with the truth coordinates")

    p = sub.add_parser("simulate", help="run the forward model once")
    _add_common(p)
    p.add_argument("--forcing", help="forcing CSV (date,precip_mm,temp_c)")
    p.add_argument("--params", help="physical parameter table (name,value)")
    p.add_argument("--observations", help="observed discharge CSV for NSE")
    p.add_argument("--components", action="store_true",
                   help="write per-component discharge columns")

    p = sub.add_parser("subspace", help="estimate the active subspace")
    _add_common(p)
    p.add_argument("--forcing")
    p.add_argument("--observations")
    p.add_argument("--noise", type=float)
    p.add_argument("--gradient-samples", dest="gradient_samples", type=int)
    p.add_argument("--fd-step", dest="fd_step", type=float)
    p.add_argument("--subspace-dim", dest="subspace_dim", type=int)
    p.add_argument("--bootstrap-replicates", dest="bootstrap_replicates", type=int)

    p = sub.add_parser("invert", help="surrogate, subspace MCMC and lifting")
    _add_common(p)
    p.add_argument("--forcing")
    p.add_argument("--observations")
    p.add_argument("--noise", type=float)
    p.add_argument("--gradient-samples", dest="gradient_samples", type=int)
    p.add_argument("--subspace-dim", dest="subspace_dim", type=int)
    p.add_argument("--degree", dest="surrogate_degree", type=int)
    p.add_argument("--surrogate-extra-samples", dest="surrogate_extra_samples",
                   type=int)
    p.add_argument("--chain-steps", dest="chain_steps", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--proposal-std", dest="proposal_std",
                   help="fixed proposal std, or 'auto'")
    p.add_argument("--thin-target", dest="thin_target", type=int)

    p = sub.add_parser("pushforward", help="propagate an ensemble to discharge bands")
    _add_common(p)
    p.add_argument("--forcing")
    p.add_argument("--observations")
    p.add_argument("--noise", type=float)
    p.add_argument("--ensemble", help="posterior ensemble CSV")
    p.add_argument("--truth-discharge", dest="truth_discharge",
                   help="noiseless series for coverage scoring")
    p.add_argument("--pushforward-samples", dest="pushforward_samples", type=int)
    return parser


_RUNNERS = {
    "synthetic": run_synthetic,
    "simulate": run_simulate,
    "subspace": run_subspace,
    "invert": run_invert,
    "pushforward": run_pushforward,
}

_NON_CONFIG_KEYS = {"command", "config", "verbose", "no_figures"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    overrides = {key: value for key, value in vars(args).items()
                 if key not in _NON_CONFIG_KEYS}
    if args.no_figures:
        overrides["write_figures"] = False
    try:
        cfg = config_from_sources(args.config, overrides)
        _RUNNERS[args.command](cfg)
    except KarstasError as exc:
        for types, code, label in _EXIT_CODES:
            if isinstance(exc, types):
                print(f"error [{label}]: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
