"""``probmod`` command line.

Usage::

    probmod {fit|predict|diagnose|demo-branching|lift} [--config FILE] [--seed N] [--out DIR] [flags...]

Exit status: 0 success, 2 configuration error, 3 data error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .infer import NumericalAbort
from .workbench import commands
from .workbench.config import METHODS, MODELS, SEED_ENV, ConfigError, build_config, load_config_file
from .workbench.data import DataError

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, help=f"random seed (falls back to ${SEED_ENV}, then 0)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--data", help="CSV data file")
    p.add_argument("--synthetic", help="synthetic data spec, e.g. a=1.5,b=-2,sigma=0.5,n=200")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="probmod", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="fit an example model")
    _common(fit)
    fit.add_argument("--model", choices=MODELS)
    fit.add_argument("--method", choices=METHODS)
    fit.add_argument("--steps", type=int)
    fit.add_argument("--lr", type=float)
    fit.add_argument("--beta2", type=float, help="Adam second-moment decay")
    fit.add_argument("--n-samples", type=int, dest="n_samples")
    fit.add_argument("--burn-in", type=int, dest="burn_in")
    fit.add_argument("--step-scale", type=float, dest="step_scale")
    fit.add_argument("--n-chains", type=int, dest="n_chains")
    fit.add_argument("--warmup", type=int)
    fit.add_argument("--lift-scope", dest="lift_scope")
    fit.add_argument("--prior-scale", type=float, dest="prior_scale")
    fit.add_argument("--pretrain-steps", type=int, dest="pretrain_steps")

    for name, text in (("predict", "posterior-predictive summaries"), ("diagnose", "calibration report")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--manifest", required=True, help="model manifest written by fit")
        p.add_argument("--n-draws", type=int, dest="n_draws")
        p.add_argument("--level", type=float)

    demo = sub.add_parser("demo-branching", help="stochastic control flow statistics")
    demo.add_argument("--config")
    demo.add_argument("--seed", type=int)
    demo.add_argument("--out")
    demo.add_argument("--n-passes", type=int, dest="n_passes")

    lift = sub.add_parser("lift", help="make a deterministic MLP (or a sub-tree) Bayesian")
    _common(lift)
    lift.add_argument("--manifest", help="deterministic MLP manifest; pretrained here if omitted")
    lift.add_argument("--lift-scope", dest="lift_scope")
    lift.add_argument("--prior-scale", type=float, dest="prior_scale")
    lift.add_argument("--pretrain-steps", type=int, dest="pretrain_steps")
    lift.add_argument("--lr", type=float)
    return parser


def _run(argv: Optional[List[str]]) -> int:
    args = build_parser().parse_args(argv)
    values = vars(args).copy()
    command = values.pop("command")
    config_path = values.pop("config", None)
    manifest = values.pop("manifest", None)
    file_values = load_config_file(config_path) if config_path else {}
    if command == "lift":
        file_values.setdefault("model", "lifted-mlp")
    cfg = build_config(file_values, values)
    if command == "fit":
        written = commands.cmd_fit(cfg)
    elif command == "predict":
        written = commands.cmd_predict(cfg, manifest)
    elif command == "diagnose":
        written = commands.cmd_diagnose(cfg, manifest)
    elif command == "demo-branching":
        written = commands.cmd_demo_branching(cfg)
    else:
        written = commands.cmd_lift(cfg, manifest)
    for name in sorted(written):
        print(written[name])
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    try:
        return _run(argv)
    except ConfigError as exc:
        print(f"probmod: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"probmod: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as exc:
        print(f"probmod: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
