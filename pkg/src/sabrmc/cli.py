"""Command-line interface.

Subcommands mirror the benchmark protocols: `price` runs a repeated pricing
benchmark, `converge` the RMS-vs-cost schedule, `martingale` the forward
drift study, `moments` dumps conditional-moment curves, and `cev-cdf`
validates the exact CEV sampler against its analytic survival function.

Exit codes: 0 on success, 2 on configuration errors, 3 when a bias was
requested but a benchmark fixture is missing.
"""

import argparse
import math
import sys
import warnings

import numpy as np

from . import condvar
from .cev import CevParams, cev_sample, cev_survival
from .engine import ConfigError
from .harness import (
    BUILTIN_CASES,
    build_case,
    build_run_config,
    convergence_study,
    load_config,
    martingale_study,
    run_case,
    stats_to_rows,
    write_results,
)
from .sampling import RngStream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING_FIXTURE = 3


def _common_run_flags(p):
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--case", choices=sorted(BUILTIN_CASES), help="built-in case name")
    p.add_argument("--scheme", choices=("cev", "islah", "lognormal", "euler"))
    p.add_argument("--h", type=float, help="time step (must divide each maturity)")
    p.add_argument("--n-paths", type=int)
    p.add_argument("--n-reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-jobs", type=int, help="parallel worker processes")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.add_argument("--force", action="store_true", help="overwrite an existing output file")


def _load_case_config(args):
    raw = {}
    if args.config:
        case, _ = load_config(args.config)
        import json

        with open(args.config) as f:
            raw = json.load(f)
    if args.case:
        raw["case"] = args.case
    if "case" not in raw and "params" not in raw:
        raise ConfigError("specify --case or a --config file with case/params")
    case = build_case(raw)
    config = build_run_config(
        raw,
        scheme=args.scheme,
        h=args.h,
        n_paths=getattr(args, "n_paths", None),
        n_reps=getattr(args, "n_reps", None),
        seed=args.seed,
        n_jobs=getattr(args, "n_jobs", None),
    )
    return case, config


def _emit(path, rows, columns, force):
    if path:
        write_results(path, rows, columns, force=force)
    else:
        import csv

        writer = csv.writer(sys.stdout)
        writer.writerow(columns)
        from .harness import _format_field

        for row in rows:
            writer.writerow([_format_field(row.get(c, "")) for c in columns])


def cmd_price(args):
    case, config = _load_case_config(args)
    missing_fixture = False
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        stats = run_case(case, config)
        for w in caught:
            if "no benchmark fixture" in str(w.message):
                missing_fixture = True
            print(f"warning: {w.message}", file=sys.stderr)
    rows = stats_to_rows(case, config, stats)
    from .harness import RESULT_COLUMNS

    _emit(args.out, rows, RESULT_COLUMNS, args.force)
    if missing_fixture and not args.no_bias:
        return EXIT_MISSING_FIXTURE
    return EXIT_OK


def cmd_converge(args):
    case, config = _load_case_config(args)
    schedule = []
    for part in args.schedule.split(","):
        n_str, h_str = part.split(":")
        schedule.append((int(n_str), float(h_str)))
    rows = convergence_study(
        case,
        schedule,
        scheme=config.scheme,
        n_reps=config.n_reps,
        base_seed=config.base_seed,
        n_jobs=config.n_jobs,
    )
    for row in rows:
        row["case"] = case.label
        row["scheme"] = config.scheme
    cols = ("case", "scheme", "n_paths", "h", "price", "bias", "stdev", "rms", "cpu_seconds")
    _emit(args.out, rows, cols, args.force)
    return EXIT_OK


def cmd_martingale(args):
    case, config = _load_case_config(args)
    schemes = tuple(args.schemes.split(","))
    h_list = tuple(float(x) for x in args.h_list.split(","))
    rows = martingale_study(
        case,
        schemes=schemes,
        h_list=h_list,
        n_paths=config.n_paths,
        base_seed=config.base_seed,
        n_jobs=config.n_jobs,
    )
    for row in rows:
        row["case"] = case.label
    cols = ("case", "scheme", "h", "T", "fwd_mean", "fwd_error", "stderr",
            "price", "atm_price_error", "cpu_seconds")
    _emit(args.out, rows, cols, args.force)
    return EXIT_OK


def cmd_moments(args):
    """Conditional-moment curves against their SLN/LN fits over a z grid."""
    nu_hat = args.nu_hat
    grid = np.linspace(args.z_min, args.z_max, args.n_points)
    rows = []
    for z in grid:
        mom = condvar.cond_moments(nu_hat, float(z))
        var = mom.mu2p - mom.mu**2
        fit56 = condvar.sln_fit_small_time(mom)
        w56 = math.expm1(fit56.log_sd**2)
        fit3 = condvar.sln_fit_three_moments(mom.mu, mom.cv, mom.skew)
        w3 = math.expm1(fit3.log_sd**2)
        wln = mom.cv**2  # lognormal matched to mean and cv
        rows.append(
            dict(
                z_hat=float(z),
                variance=var,
                skewness=mom.skew,
                exkurtosis=mom.exkurt,
                sln56_variance=(fit56.weight * math.sqrt(w56) * mom.mu) ** 2,
                sln56_skewness=math.sqrt(w56) * (w56 + 3.0),
                sln56_exkurtosis=w56 * (w56**3 + 6 * w56**2 + 15 * w56 + 16),
                sln3_skewness=math.sqrt(w3) * (w3 + 3.0),
                sln3_exkurtosis=w3 * (w3**3 + 6 * w3**2 + 15 * w3 + 16),
                ln_skewness=math.sqrt(wln) * (wln + 3.0),
                ln_exkurtosis=wln * (wln**3 + 6 * wln**2 + 15 * wln + 16),
            )
        )
    cols = tuple(rows[0])
    _emit(args.out, rows, cols, args.force)
    return EXIT_OK


def cmd_cev_cdf(args):
    """Analytic vs empirical CEV survival on a strike grid."""
    params = CevParams(args.beta, args.mean, args.var_scale)
    stream = RngStream(args.seed, 0)
    sample = cev_sample(stream, params, args.n_samples)
    sample.sort()
    grid = np.linspace(args.grid_min, args.grid_max, args.grid_points)
    rows = []
    for y in grid:
        if y <= 0:
            continue
        analytic = cev_survival(float(y), params)
        empirical = 1.0 - np.searchsorted(sample, y, side="right") / sample.size
        rows.append(dict(y=float(y), survival_analytic=analytic, survival_empirical=float(empirical)))
    _emit(args.out, rows, ("y", "survival_analytic", "survival_empirical"), args.force)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="sabrmc", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", help="repeated pricing benchmark with bias/stdev/rms")
    _common_run_flags(p)
    p.add_argument("--no-bias", action="store_true", help="skip fixture lookup (no exit code 3)")
    p.set_defaults(fn=cmd_price)

    p = sub.add_parser("converge", help="RMS error along an (n_paths, h) schedule")
    _common_run_flags(p)
    p.add_argument(
        "--schedule",
        default="160000:1,320000:0.5,640000:0.25,1280000:0.125,2560000:0.0625",
        help="comma-separated n_paths:h pairs",
    )
    p.set_defaults(fn=cmd_converge)

    p = sub.add_parser("martingale", help="forward drift study per maturity")
    _common_run_flags(p)
    p.add_argument("--schemes", default="cev,islah")
    p.add_argument("--h-list", default="1", help="comma-separated step sizes")
    p.set_defaults(fn=cmd_martingale)

    p = sub.add_parser("moments", help="conditional-moment curves over a z grid")
    p.add_argument("--nu-hat", type=float, required=True)
    p.add_argument("--z-min", type=float, default=-3.0)
    p.add_argument("--z-max", type=float, default=3.0)
    p.add_argument("--n-points", type=int, default=121)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_moments)

    p = sub.add_parser("cev-cdf", help="empirical vs analytic CEV survival function")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--mean", type=float, required=True)
    p.add_argument("--var-scale", type=float, required=True)
    p.add_argument("--n-samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--grid-min", type=float, default=0.01)
    p.add_argument("--grid-max", type=float, default=3.0)
    p.add_argument("--grid-points", type=int, default=100)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_cev_cdf)

    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        return args.fn(args)
    except (ConfigError, FileExistsError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
