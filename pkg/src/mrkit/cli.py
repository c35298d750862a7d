"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or malformed
input, bad configuration), 3 numeric failure (well-formed input for which the
requested quantity cannot be computed).
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

import numpy as np

from . import estimands, io, report
from .errors import DataError, MRError, NoRelevantInstruments, NumericError
from .summary import (
    egger_estimate,
    ivw_estimate,
    mode_based_estimate,
    weighted_median_estimate,
)
from .types import jsonable

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
METHODS = ("ivw", "ivw-re", "median", "mode", "egger")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n\n{self.format_help()}")


def _add_inputs(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("input")
    g.add_argument("--exposure", help="exposure summary statistics (TSV)")
    g.add_argument("--outcome", help="outcome summary statistics (TSV)")
    g.add_argument("--harmonized", help="already harmonized dataset (canonical TSV)")
    g.add_argument("--palindromic", choices=("drop", "eaf"), default="drop",
                   help="policy for A/T and C/G variants (default: drop)")
    g.add_argument("--strict", action="store_true", help="abort on the first malformed row")


def _add_output(p: argparse.ArgumentParser, formats=("csv", "json", "svg")) -> None:
    p.add_argument("--format", choices=formats, default=formats[0])
    p.add_argument("--output", "-o", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mrkit", description="Mendelian randomization toolkit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("estimate", help="summary-data causal estimates")
    _add_inputs(p)
    p.add_argument("--method", action="append", choices=METHODS + ("all",),
                   help="estimator (repeatable; default ivw)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--n-boot", type=int, default=1000)
    p.add_argument("--seed", type=int, help="bootstrap seed (generated and reported if omitted)")
    p.add_argument("--bandwidth-factor", type=float, default=1.0)
    _add_output(p)

    p = sub.add_parser("select-ivs", help="clump, screen, vote and pick the maximum clique")
    _add_inputs(p)
    p.add_argument("--ld", help="LD matrix (dense TSV or triplets); clumping skipped if absent")
    p.add_argument("--r2", type=float, default=0.01, help="clumping r^2 threshold")
    p.add_argument("--window", type=int, help="clumping window in base pairs")
    p.add_argument("--p-threshold", type=float, default=5e-8)
    p.add_argument("--lambda", dest="lam", type=float, help="vote threshold multiplier")
    p.add_argument("--plugin-se", action="store_true", help="vote SE with beta_j held fixed")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--output", "-o")

    p = sub.add_parser("robust-ci", help="selection-robust confidence interval")
    _add_inputs(p)
    p.add_argument("--ld")
    p.add_argument("--r2", type=float, default=0.01)
    p.add_argument("--window", type=int)
    p.add_argument("--p-threshold", type=float, default=5e-8)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--plugin-se", action="store_true")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--n-resamples", type=int, default=1000)
    p.add_argument("--seed", type=int, help="resampling seed (generated and reported if omitted)")
    p.add_argument("--threads", type=int, help="worker threads (default: MRKIT_THREADS or 1)")
    p.add_argument("--output", "-o")

    p = sub.add_parser("simulate", help="run a bias experiment from a TOML/JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--replicates", type=int, help="override the config replicate count")
    p.add_argument("--threads", type=int)
    _add_output(p, ("csv", "json"))

    p = sub.add_parser("estimand-check", help="estimands and assumptions of a population JSON")
    p.add_argument("--population", required=True)
    p.add_argument("--float", dest="exact", action="store_false",
                   help="use floating point instead of exact rationals")
    p.add_argument("--output", "-o")

    p = sub.add_parser("parse-check", help="validate summary-statistics files")
    p.add_argument("files", nargs="+")
    p.add_argument("--strict", action="store_true")
    return parser


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from None


def _dump(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def _load_dataset(args):
    if args.harmonized:
        if args.exposure or args.outcome:
            raise UsageError("--harmonized excludes --exposure/--outcome")
        return io.read_dataset(args.harmonized), None
    if not (args.exposure and args.outcome):
        raise UsageError("need --exposure and --outcome, or --harmonized")
    exp = io.parse_summary_stats(args.exposure, strict=args.strict)
    out = io.parse_summary_stats(args.outcome, strict=args.strict)
    for half in (exp, out):
        for err in half.errors:
            print(f"warning: {half.source}: {err}", file=sys.stderr)
    return io.harmonize(exp, out, palindromic=args.palindromic)


def _cmd_estimate(args) -> int:
    data, _ = _load_dataset(args)
    methods = args.method or ["ivw"]
    if "all" in methods:
        methods = list(METHODS)
    seed = args.seed
    if seed is None and {"median", "mode"} & set(methods):
        seed = int(np.random.SeedSequence().generate_state(1)[0])
        print(f"note: generated seed {seed}", file=sys.stderr)
    results = []
    for m in dict.fromkeys(methods):
        if m == "ivw":
            results.append(ivw_estimate(data, alpha=args.alpha))
        elif m == "ivw-re":
            results.append(ivw_estimate(data, random_effects=True, alpha=args.alpha))
        elif m == "median":
            results.append(weighted_median_estimate(data, args.n_boot, seed, args.alpha))
        elif m == "mode":
            results.append(mode_based_estimate(data, args.bandwidth_factor, args.n_boot, seed,
                                               args.alpha))
        else:
            results.append(egger_estimate(data, alpha=args.alpha))
    _write(report.render(results, args.format), args.output)
    return EXIT_OK


def _selection_input(args):
    from .selection import ld_clump, select_relevant

    data, harm = _load_dataset(args)
    if args.ld:
        data = ld_clump(data, io.read_ld(args.ld), args.r2, args.window)
    relevant = select_relevant(data, args.p_threshold)
    return relevant, harm


def _cmd_select(args) -> int:
    from .selection import spi_select

    relevant, harm = _selection_input(args)
    sel = spi_select(relevant, p_threshold=None, lam=args.lam, plugin_se=args.plugin_se,
                     alpha=args.alpha)
    out = sel.to_dict()
    if harm is not None:
        out["harmonization"] = harm.to_dict()
    _write(_dump(out), args.output)
    return EXIT_OK


def _cmd_robust(args) -> int:
    from .selection import robust_confidence_interval

    relevant, _ = _selection_input(args)
    ci = robust_confidence_interval(
        relevant, alpha=args.alpha, n_resamples=args.n_resamples, seed=args.seed,
        lam=args.lam, plugin_se=args.plugin_se, threads=args.threads,
    )
    _write(_dump(ci.to_dict()), args.output)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    from dataclasses import replace

    from .bias import run_bias_experiment

    cfg = io.load_experiment_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.replicates is not None:
        cfg = replace(cfg, replicates=args.replicates)
    rep = run_bias_experiment(cfg, threads=args.threads)
    text = report.bias_report_csv(rep) if args.format == "csv" else report.bias_report_json(rep)
    _write(text, args.output)
    return EXIT_OK


def _cmd_estimand(args) -> int:
    pop = io.read_population(args.population)
    exact = None if args.exact else False
    out: dict = {"compliance": estimands.enumerate_compliance(pop, exact)}
    values = {}
    for kind in estimands.EstimandKind:
        try:
            values[kind.value] = estimands.compute_estimand(pop, kind, exact)
        except NumericError as exc:
            values[kind.value] = f"undefined: {exc}"
    out["estimands"] = values
    rep = estimands.check_assumptions(pop, exact=exact)
    out["assumptions"] = rep.to_dict()
    out["identification"] = {
        k.value if hasattr(k, "value") else str(k): {"licensed": lic, "equal": eq}
        for k, (lic, eq) in estimands.verify_identification(pop, exact).items()
    }
    _write(_dump(out), args.output)
    return EXIT_OK


def _cmd_parse_check(args) -> int:
    summary, bad = [], False
    for path in args.files:
        half = io.parse_summary_stats(path, strict=args.strict)
        bad |= bool(half.errors)
        summary.append({
            "file": path,
            "n_records": len(half.records),
            "n_errors": len(half.errors),
            "errors": [str(e) for e in half.errors],
        })
    sys.stdout.write(_dump({"files": summary}))
    return EXIT_DATA if bad else EXIT_OK


COMMANDS = {
    "estimate": _cmd_estimate,
    "select-ivs": _cmd_select,
    "robust-ci": _cmd_robust,
    "simulate": _cmd_simulate,
    "estimand-check": _cmd_estimand,
    "parse-check": _cmd_parse_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except NoRelevantInstruments as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, MRError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
