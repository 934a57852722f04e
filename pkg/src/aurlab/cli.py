"""Command-line entry point: ``aurlab {sample,fit,audit,experiment,report}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 audit failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AurlabError, ConfigError
from .geometry import PenaltyMode, UncertaintySet, ridge_lambda

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_AUDIT = 0, 1, 2, 3
HELP_WIDTH = 100


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, width=HELP_WIDTH)


def _add_common(p, seed_default=0):
    p.add_argument("--seed", type=int, default=None,
                   help=f"random seed; when unset, the global --seed, else {seed_default}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aurlab", formatter_class=_formatter,
                     description="Averaged- and worst-case-uncertainty robust regression toolkit.")
    parser.add_argument("--version", action="version", version=f"aurlab {__version__}")
    parser.add_argument("--seed", dest="global_seed", type=int, default=None, help="global random seed")
    parser.add_argument("--workers", type=int, default=1, help="maximum parallel workers")
    parser.add_argument("--quiet", action="store_true", help="suppress the reproducibility stanza and tables")
    sub = parser.add_subparsers(dest="verb", metavar="{sample,fit,audit,experiment,report}", parser_class=_Parser)

    p = sub.add_parser("sample", help="draw uniform perturbations from a set", formatter_class=_formatter)
    p.add_argument("--set", required=True, help="set descriptor as JSON text or @file.json")
    p.add_argument("--count", type=int, default=1000, help="number of samples")
    _add_common(p)
    p.add_argument("--method", choices=["har", "rej", "direct"], default="har", help="sampler")
    p.add_argument("--burn-in", type=int, default=1000, help="hit-and-run burn-in steps")
    p.add_argument("--thinning", type=int, default=10, help="hit-and-run steps per recorded sample")
    p.add_argument("--out", required=True, help="output CSV, one flattened sample per row")

    p = sub.add_parser("fit", help="fit OLS, AUR or WUR to a CSV dataset", formatter_class=_formatter)
    p.add_argument("--data", required=True, help="input CSV with a header row")
    p.add_argument("--target", default=None, help="target column; when unset, the last column")
    p.add_argument("--method", choices=["aur", "wur", "ols"], default="aur", help="estimator")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--lambda", dest="lam", type=float, default=None, help="explicit penalty")
    grp.add_argument("--cv", action="store_true", help="choose the penalty by 5-fold CV on the 0..1 grid")
    p.add_argument("--set", default=None,
                   help="set descriptor (JSON or @file) giving the theorem penalty; n and k default to the data shape")
    p.add_argument("--mode", choices=["paper", "derived"], default="derived", help="closed-form constants")
    p.add_argument("--no-preprocess", action="store_true",
                   help="skip column/row dropping and min-max scaling; rows with missing cells are then rejected")
    _add_common(p)

    p = sub.add_parser("audit", help="Monte Carlo audit of the closed-form constants", formatter_class=_formatter)
    p.add_argument("--set", required=True, help="set descriptor as JSON text or @file.json")
    p.add_argument("--samples", type=int, default=100_000, help="Monte Carlo sample count")
    _add_common(p)
    p.add_argument("--method", choices=["har", "rej"], default="har", help="sampler for the moment rows")
    p.add_argument("--problem", default=None,
                   help="CSV regression problem for the equivalence check; when unset, a seeded Gaussian toy problem")
    p.add_argument("--target", default=None, help="target column of --problem; when unset, the last column")

    p = sub.add_parser("experiment", help="run an experiment matrix from a JSON config", formatter_class=_formatter)
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="results file (JSON lines)")
    p.add_argument("--append", action="store_true", help="append to --out instead of replacing it")

    p = sub.add_parser("report", help="summarize a results file", formatter_class=_formatter)
    p.add_argument("--in", dest="inp", required=True, help="results file (JSON lines)")
    p.add_argument("--out", default=None, help="summary CSV (plot data)")
    p.add_argument("--lambda-table", default=None, help="optional CSV of distinct-lambda counts")
    return parser


def _read_set(text: str, n=None, k=None) -> UncertaintySet:
    if text.startswith("@"):
        try:
            text = Path(text[1:]).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read set descriptor: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"set descriptor is not valid JSON: {exc}") from exc
    if isinstance(obj, dict) and n is not None:
        for key, value in (("n", n), ("k", k)):
            if key in obj and obj[key] != value:
                raise ConfigError(f"set descriptor {key}={obj[key]} does not match the data ({value})")
            obj.setdefault(key, value)
    return UncertaintySet.from_dict(obj)


def _stanza(args, seed) -> str:
    canon = {k: v for k, v in sorted(vars(args).items()) if k not in ("quiet",)}
    # input files are part of the configuration; hash their bytes too
    for name in ("config", "data", "problem", "inp"):
        path = getattr(args, name, None)
        if path and os.path.isfile(path):
            canon[f"{name}_sha256"] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    digest = hashlib.sha256(json.dumps(canon, sort_keys=True, default=str).encode()).hexdigest()[:16]
    argv = " ".join(shlex.quote(a) for a in args._argv)
    return f"# aurlab {__version__} seed={seed} config_digest={digest}\n# command: aurlab {argv}"


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return args.global_seed if args.global_seed is not None else 0


def _load_problem(path, target, preprocess_data=True):
    from .dataio import ingest_csv, preprocess
    from .regression import RegressionProblem
    from .errors import DataError

    table = ingest_csv(path, target)
    if preprocess_data:
        clean = preprocess(table)
        return RegressionProblem(clean.X, clean.y)
    if np.isnan(table.cells).any():
        raise DataError("data has missing cells; drop --no-preprocess to clean them")
    tj = table.columns.index(table.target)
    X = np.delete(table.cells, tj, axis=1)
    return RegressionProblem(X, table.cells[:, tj])


def cmd_sample(args, out) -> int:
    from .sampling import SamplerConfig, direct_sample, hit_and_run, rejection_sample

    uset = _read_set(args.set)
    seed = _seed(args)
    if args.count < 1:
        raise ConfigError("--count must be positive")
    if args.method == "har":
        batch = hit_and_run(uset, SamplerConfig(seed, args.burn_in, args.thinning), args.count)
    elif args.method == "rej":
        batch = rejection_sample(uset, seed, args.count)
    else:
        batch = direct_sample(uset, seed, args.count)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"d{i}_{j}" for i in range(uset.n) for j in range(uset.k)])
        for row in batch.flat:
            writer.writerow([repr(float(v)) for v in row])
    if not args.quiet:
        print(json.dumps({"set": uset.to_dict(), "count": len(batch), "method": args.method, "seed": seed,
                          "acceptance_rate": batch.acceptance_rate, "out": args.out}), file=out)
    return EXIT_OK


def cmd_fit(args, out) -> int:
    from .regression import CvSpec, Method, fit_aur, fit_ols, fit_wur, select_lambda_cv

    problem = _load_problem(args.data, args.target, not args.no_preprocess)
    method = Method(args.method)
    seed = _seed(args)
    source = None
    if method is Method.OLS:
        if args.lam not in (None, 0.0) or args.cv or args.set:
            raise ConfigError("ols takes no penalty options")
        lam = 0.0
    elif args.lam is not None:
        lam, source = args.lam, "explicit"
    elif args.cv:
        lam, _ = select_lambda_cv(problem, method, CvSpec(seed=seed), workers=args.workers)
        source = "cv"
    elif args.set is not None:
        uset = _read_set(args.set, problem.n, problem.k)
        lam, source = ridge_lambda(uset, PenaltyMode(args.mode)), f"theorem_{args.mode}"
    else:
        raise UsageError("fit: one of --lambda, --cv or --set is required for aur/wur")
    fitter = {Method.OLS: lambda p, _: fit_ols(p), Method.AUR: fit_aur, Method.WUR: fit_wur}[method]
    result = fitter(problem, lam)
    doc = result.to_dict()
    doc.update({"lambda_source": source, "n": problem.n, "k": problem.k})
    print(json.dumps(doc, indent=2), file=out)
    return EXIT_OK


def cmd_audit(args, out) -> int:
    from .audit import audit_moments, verify_equivalence, MIN_EQUIVALENCE_SAMPLES, Verdict
    from .regression import RegressionProblem

    seed = _seed(args)
    if args.problem:
        problem = _load_problem(args.problem, args.target)
        uset = _read_set(args.set, problem.n, problem.k)
    else:
        uset = _read_set(args.set)
        rng = np.random.default_rng([seed, 2])
        X = rng.standard_normal((uset.n, uset.k))
        problem = RegressionProblem(X, X @ rng.standard_normal(uset.k) + 0.1 * rng.standard_normal(uset.n))
    if args.samples < 2:
        raise ConfigError("--samples must be at least 2")
    ledger = audit_moments(uset, args.samples, seed, method=args.method)
    equivalence = []
    if args.samples >= MIN_EQUIVALENCE_SAMPLES:
        for mode in PenaltyMode:
            equivalence.extend(verify_equivalence(problem, uset, mode, args.samples, seed))
    derived_bad = [r for r in equivalence if r.mode is PenaltyMode.DERIVED and r.verdict is not Verdict.AGREE]
    if not args.quiet:
        print(ledger.to_table(), file=out)
        for r in equivalence:
            print(f"equivalence {r.mode.value:8s} {r.probe:7s} closed={r.closed_form_loss:.6g} "
                  f"mc={r.mc_mean_loss:.6g} gap={r.relative_gap:.3%} {r.verdict.value}", file=out)
    doc = {"ledger": ledger.to_dict(), "equivalence": [r.to_dict() for r in equivalence]}
    print(json.dumps(doc, indent=2), file=out)
    return EXIT_AUDIT if (ledger.derived_failures or derived_bad) else EXIT_OK


def cmd_experiment(args, out) -> int:
    from .harness import ExperimentConfig, apply_seed_override, run_experiment

    config = apply_seed_override(ExperimentConfig.from_json_file(args.config))
    if args.global_seed is not None:
        config = config.with_master_seed(args.global_seed)
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    result = run_experiment(config, args.out, workers=args.workers, append=args.append)
    if not args.quiet:
        print(json.dumps({"records": len(result.records), "failed_cells": len(result.failures),
                          "master_seed": config.master_seed, "config_digest": config.digest(),
                          "out": args.out}), file=out)
    return EXIT_OK


def cmd_report(args, out) -> int:
    from .harness import emit_plot_data, lambda_stability_table, load_records, summarize, write_table_csv

    records = load_records(args.inp)
    summary = summarize(records)
    if args.out:
        emit_plot_data(summary, args.out)
    if args.lambda_table:
        write_table_csv(lambda_stability_table(records), args.lambda_table)
    if not args.quiet:
        print(f"{'set':12s} {'rho':>7s} {'aur':>16s} {'wur':>16s} {'improve%':>10s} {'stderr':>9s} "
              f"{'n':>4s} {'#lam':>5s}", file=out)
        for r in summary:
            print(f"{r.set:12s} {r.rho:7.3g} {r.aur_policy:>16s} {r.wur_policy:>16s} "
                  f"{r.mean_improvement:10.4f} {r.stderr:9.4f} {r.count:4d} {r.lambda_distinct_count:5d}",
                  file=out)
    return EXIT_OK


COMMANDS = {"sample": cmd_sample, "fit": cmd_fit, "audit": cmd_audit,
            "experiment": cmd_experiment, "report": cmd_report}


def main(argv=None, out=None, err=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verb is None:
            raise UsageError(parser.format_usage() + "aurlab: error: a command is required")
    except UsageError as exc:
        print(str(exc).rstrip(), file=err)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    args._argv = argv
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="aurlab: %(levelname)s: %(message)s", stream=err)
    if not args.quiet:
        seed = _seed(args)
        if args.verb == "experiment" and os.environ.get("AURLAB_SEED") and args.global_seed is None:
            seed = f"env:{os.environ['AURLAB_SEED']}"
        print(_stanza(args, seed), file=err)
    try:
        return COMMANDS[args.verb](args, out)
    except UsageError as exc:
        print(f"aurlab: error: {exc}", file=err)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"aurlab: error: {exc}", file=err)
        return EXIT_USAGE
    except (AurlabError, OSError) as exc:
        print(f"aurlab: error: {exc}", file=err)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
