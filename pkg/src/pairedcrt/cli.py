"""Command line interface for matching, assignment, analysis and simulation.

Subcommands compose into a pipeline over CSV files::

    pairedcrt match    --clusters c.csv --mode nn_xn --out design.csv
    pairedcrt assign   --clusters c.csv --design design.csv --seed 7 --out ct.csv
    pairedcrt analyze  --units u.csv --clusters ct.csv --design design.csv
    pairedcrt randtest --units u.csv --clusters ct.csv --design design.csv --mode exact
    pairedcrt simulate --preset null --pairs 50 --reps 200 --seed 1

Results go to stdout as JSON (with a ``schema_version`` field); CSV outputs
go to the ``--out`` paths. Exit codes: 0 on success, 2 on invalid data
(with a JSON error object on stderr), 64 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .assignment import assign_within_pairs
from .core import load_dataset, read_clusters, summarize, write_clusters
from .errors import PairedCrtError
from .estimation import estimate_equal_weighted
from .inference import infer
from .matching import imbalance_report, order_pairs_for_variance, read_design, write_design
from .randtest import randomization_test
from .simulation import (
    MATCH_MODES,
    PRESET_NAMES,
    DgpSpec,
    SimConfig,
    match_records,
    monte_carlo,
    preset,
)

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_DATA = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits with the usage code instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2))


def _check_alpha(args) -> None:
    if not 0.0 < args.alpha < 1.0:
        args.subparser.error("--alpha must be strictly between 0 and 1")


def cmd_match(args) -> None:
    records = read_clusters(args.clusters)
    design = match_records(records, args.mode)
    write_design(design, records, args.out)
    report = imbalance_report(design, records)
    _emit(
        {
            "schema_version": SCHEMA_VERSION,
            "command": "match",
            "pairs": design.pair_count,
            "mode": args.mode,
            "matched_on_size": design.matched_on_size,
            "out": str(args.out),
            "imbalance": report.to_json_dict(),
        }
    )


def cmd_assign(args) -> None:
    records = read_clusters(args.clusters)
    design = read_design(args.design, records)
    treatments = assign_within_pairs(design, args.seed)
    updated = [replace(r, treatment=int(treatments[i])) for i, r in enumerate(records)]
    write_clusters(updated, args.out)
    _emit(
        {
            "schema_version": SCHEMA_VERSION,
            "command": "assign",
            "pairs": design.pair_count,
            "seed": args.seed,
            "n_treated": int(treatments.sum()),
            "out": str(args.out),
        }
    )


def _load_for_analysis(args):
    dataset = load_dataset(args.units, args.clusters)
    design = read_design(args.design, dataset.clusters, matched_on_size=args.matched_on_size)
    # reordering is idempotent, so match-produced designs pass through unchanged
    return dataset, order_pairs_for_variance(design, dataset.clusters)


def cmd_analyze(args) -> None:
    _check_alpha(args)
    dataset, design = _load_for_analysis(args)
    result = infer(dataset, design, alpha=args.alpha, delta0=args.delta0)
    equal = estimate_equal_weighted(summarize(dataset))
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "analyze",
        "pairs": design.pair_count,
        **result.to_json_dict(),
        "delta_hat_equal": equal.delta_hat,
    }
    _emit(payload)


def cmd_randtest(args) -> None:
    _check_alpha(args)
    if args.mode == "stochastic":
        if args.draws is None:
            args.subparser.error("--draws is required in stochastic mode")
        if args.seed is None:
            args.subparser.error("--seed is required in stochastic mode")
    dataset, design = _load_for_analysis(args)
    result = randomization_test(
        dataset,
        design,
        alpha=args.alpha,
        delta0=args.delta0,
        mode=args.mode,
        draws=args.draws,
        seed=args.seed,
    )
    _emit(
        {
            "schema_version": SCHEMA_VERSION,
            "command": "randtest",
            "pairs": design.pair_count,
            **result.to_json_dict(),
        }
    )


def cmd_simulate(args) -> None:
    _check_alpha(args)
    if args.rand_mode == "stochastic" and args.rand_draws is None:
        args.subparser.error("--rand-draws is required with --rand-mode stochastic")
    if args.preset is not None:
        dgp = preset(args.preset)
    else:
        with open(args.dgp_json, encoding="utf-8") as fh:
            dgp = DgpSpec.from_json_dict(json.load(fh))
    config = SimConfig(
        dgp=dgp,
        pair_count=args.pairs,
        replications=args.reps,
        match_mode=args.match_mode,
        alpha=args.alpha,
        null_delta=args.null_delta,
        seed=args.seed,
        rand_mode=args.rand_mode,
        rand_draws=args.rand_draws,
        oracle_draws=args.oracle_draws,
    )
    report = monte_carlo(config)
    _emit(
        {
            "schema_version": SCHEMA_VERSION,
            "command": "simulate",
            **report.to_json_dict(),
        }
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="pairedcrt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_match = sub.add_parser("match", help="pair clusters on baseline features")
    p_match.add_argument("--clusters", required=True, help="clusters CSV")
    p_match.add_argument("--mode", choices=MATCH_MODES, default="nn_xn")
    p_match.add_argument("--out", required=True, help="design CSV to write")
    p_match.set_defaults(func=cmd_match)

    p_assign = sub.add_parser("assign", help="randomize treatment within pairs")
    p_assign.add_argument("--clusters", required=True, help="clusters CSV")
    p_assign.add_argument("--design", required=True, help="design CSV")
    p_assign.add_argument("--seed", type=int, required=True)
    p_assign.add_argument("--out", required=True, help="clusters CSV to write, with treatment")
    p_assign.set_defaults(func=cmd_assign)

    def add_analysis_inputs(p):
        p.add_argument("--units", required=True, help="units CSV")
        p.add_argument("--clusters", required=True, help="clusters CSV with treatment")
        p.add_argument("--design", required=True, help="design CSV")
        p.add_argument(
            "--matched-on-size",
            action="store_true",
            help="the design was matched on cluster size as well as covariates",
        )
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--delta0", type=float, default=0.0, help="hypothesized effect")

    p_analyze = sub.add_parser("analyze", help="estimate the effect and test it")
    add_analysis_inputs(p_analyze)
    p_analyze.set_defaults(func=cmd_analyze)

    p_rand = sub.add_parser("randtest", help="randomization test over pair swaps")
    add_analysis_inputs(p_rand)
    p_rand.add_argument("--mode", choices=("exact", "stochastic"), default="exact")
    p_rand.add_argument("--draws", type=int, help="draw count for stochastic mode")
    p_rand.add_argument("--seed", type=int, help="seed for stochastic mode")
    p_rand.set_defaults(func=cmd_randtest)

    p_sim = sub.add_parser("simulate", help="Monte Carlo study of a DGP")
    source = p_sim.add_mutually_exclusive_group(required=True)
    source.add_argument("--preset", choices=PRESET_NAMES)
    source.add_argument("--dgp-json", help="JSON file describing a DGP")
    p_sim.add_argument("--pairs", type=int, required=True)
    p_sim.add_argument("--reps", type=int, required=True)
    p_sim.add_argument("--match-mode", choices=MATCH_MODES, default="nn_xn")
    p_sim.add_argument("--alpha", type=float, default=0.05)
    p_sim.add_argument("--null-delta", type=float, default=0.0)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--rand-mode", choices=("exact", "stochastic"), default=None)
    p_sim.add_argument("--rand-draws", type=int, default=None)
    p_sim.add_argument("--oracle-draws", type=int, default=0)
    p_sim.set_defaults(func=cmd_simulate)

    for name, p in (
        ("match", p_match),
        ("assign", p_assign),
        ("analyze", p_analyze),
        ("randtest", p_rand),
        ("simulate", p_sim),
    ):
        p.set_defaults(subparser=p, command=name)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except PairedCrtError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return EXIT_DATA
    except OSError as exc:
        print(json.dumps({"error": "OSError", "message": str(exc)}), file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
