"""Command-line entry point.

Every subcommand builds a RunConfig (config file plus flag overrides, flags
winning) and hands it to ``run_pipeline``.  A seed is mandatory: there are
no wall-clock defaults anywhere.

Example:

    stochsurr fit --testbed ocean2d --surrogate het --seed 7 --out results/fit
    stochsurr figure-recipe fish-fig1 --seed 1 --out results/fig1
    stochsurr calibrate koh --seed 3 --out results/koh --opt mcmc.draws=500
"""

from __future__ import annotations

import argparse
import sys

from . import config as cfgmod
from .pipelines import PIPELINES, RunConfig, run_pipeline

SUBCOMMANDS = ("fit", "predict", "design", "calibrate", "abc", "hm",
               "optimize", "sensitivity", "testbed", "figure-recipe", "compare")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stochsurr",
        description="surrogates, designs, and calibration for stochastic simulators")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--seed", type=int, required=False)
        p.add_argument("--out", type=str, required=False)
        p.add_argument("--config", type=str, help="key = value config file")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--opt", action="append", default=[],
                       metavar="KEY=VALUE", help="override any config key")
        if name == "fit":
            p.add_argument("--testbed", type=str)
            p.add_argument("--dataset", type=str)
            p.add_argument("--bounds", type=str)
            p.add_argument("--surrogate", choices=("hom", "het", "sk"))
        if name == "predict":
            p.add_argument("--model", type=str)
            p.add_argument("--points", type=str)
        if name == "design":
            p.add_argument("--kind", dest="design_kind",
                           choices=("lhd", "maximin", "sobol", "two-stage",
                                    "sequential"))
            p.add_argument("--sites", dest="design_sites", type=int)
            p.add_argument("--reps", dest="design_reps", type=int)
            p.add_argument("--budget", type=int)
            p.add_argument("--testbed", type=str)
            p.add_argument("--surrogate", choices=("hom", "het", "sk"))
        if name == "calibrate":
            p.add_argument("method", choices=("koh", "ols", "single", "nocal"))
            p.add_argument("--chains", type=int)
            p.add_argument("--draws", type=int)
            p.add_argument("--surrogate", choices=("hom", "het", "sk"))
        if name == "abc":
            p.add_argument("--method", dest="abc_method",
                           choices=("direct", "surrogate"))
            p.add_argument("--draws", type=int)
            p.add_argument("--tolerance", type=float)
            p.add_argument("--observed", type=int)
            p.add_argument("--surrogate", choices=("hom", "het", "sk"))
        if name == "hm":
            p.add_argument("--waves", type=int)
            p.add_argument("--observed", type=int)
            p.add_argument("--surrogate", choices=("hom", "het", "sk"))
        if name == "optimize":
            p.add_argument("--budget", dest="opt_budget", type=int)
            p.add_argument("--testbed", type=str)
            p.add_argument("--surrogate", choices=("hom", "het", "sk"))
        if name == "sensitivity":
            p.add_argument("--n-mc", dest="n_mc", type=int)
            p.add_argument("--testbed", type=str)
            p.add_argument("--surrogate", choices=("hom", "het", "sk"))
        if name == "testbed":
            p.add_argument("--name", dest="testbed", type=str)
            p.add_argument("--inputs", type=str,
                           help="comma-separated input coordinates")
            p.add_argument("--reps", type=int)
        if name == "figure-recipe":
            p.add_argument("recipe",
                           choices=("fish-fig1", "ocean-fig2", "fish-qk",
                                    "fish-abc", "ocean-seq"))
            p.add_argument("--sites", dest="design_sites", type=int)
            p.add_argument("--reps", dest="design_reps", type=int)
            p.add_argument("--budget", type=int)
        if name == "compare":
            p.add_argument("--repetitions", type=int)
            p.add_argument("--methods", type=str)
            p.add_argument("--sites", dest="design_sites", type=int)
            p.add_argument("--reps", dest="design_reps", type=int)
            p.add_argument("--testbed", type=str)
    return parser


FLAG_TO_KEY = {
    "design_kind": "design.kind", "design_sites": "design.sites",
    "design_reps": "design.reps", "abc_method": "abc.method",
    "chains": "mcmc.chains", "draws": None, "tolerance": "abc.tolerance",
    "observed": "abc.observed", "waves": "hm.waves", "n_mc": "sensitivity.n_mc",
    "opt_budget": "optimize.budget",
}


def overrides_from_args(args):
    over = {}
    skip = {"command", "config", "opt"}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        if key == "draws":
            # the flag means MCMC draws for calibrate, draw count for abc
            over["mcmc.draws" if args.command == "calibrate" else "abc.draws"] = value
            continue
        mapped = FLAG_TO_KEY.get(key, key)
        if mapped is not None:
            over[mapped] = value
    if getattr(args, "command", None) == "calibrate":
        over["method"] = args.method
    if getattr(args, "command", None) == "figure-recipe":
        over["recipe"] = args.recipe
    if getattr(args, "inputs", None) is not None:
        over["inputs"] = cfgmod.parse_value(args.inputs)
    for item in args.opt:
        if "=" not in item:
            raise SystemExit(f"--opt expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        over[k.strip()] = cfgmod.parse_value(v)
    over["pipeline"] = args.command
    return over


def main(argv=None):
    args = build_parser().parse_args(argv)
    over = overrides_from_args(args)
    try:
        if args.config:
            config = RunConfig.from_file(args.config, over)
        else:
            config = RunConfig.from_dict(over)
        store = run_pipeline(config)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {store.root}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
