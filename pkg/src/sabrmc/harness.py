"""Benchmark cases, pricing statistics, fixtures, and reproduction protocols.

Five built-in parameter sets drive all experiments; finite-difference
benchmark prices for them ship as package data and anchor the bias
statistics.  A benchmark run prices European calls over m independent
repetitions (repetition r on seed base_seed + r), reporting per-strike
bias, across-repetition standard deviation, and their RMS combination
sqrt(bias^2 + stdev^2).

Timing recorded per repetition covers the simulation loop only; repetitions
may execute in parallel processes without changing any reported number
except wall-clock totals.
"""

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .engine import ConfigError, SabrParams, SCHEMES, simulate_terminal

__all__ = [
    "BUILTIN_CASES",
    "CaseSpec",
    "RunConfig",
    "RunStats",
    "convergence_study",
    "fdm_price",
    "load_config",
    "load_fdm_fixtures",
    "martingale_study",
    "price_european_call",
    "rms_error",
    "run_case",
    "write_results",
]


@dataclass(frozen=True)
class CaseSpec:
    """One benchmark case: model parameters plus maturity and strike grids."""

    params: SabrParams
    maturities: tuple
    strikes: tuple
    label: str

    def __post_init__(self):
        if not self.maturities or not self.strikes:
            raise ValueError("maturities and strikes must be nonempty")


@dataclass(frozen=True)
class RunConfig:
    """Execution protocol: scheme, step size, paths, repetitions, seed."""

    scheme: str
    h: float
    n_paths: int
    n_reps: int
    base_seed: int
    n_jobs: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not (self.h > 0.0):
            raise ConfigError(f"h must be > 0, got {self.h}")
        if self.n_paths < 1 or self.n_reps < 1:
            raise ConfigError("n_paths and n_reps must be >= 1")


@dataclass
class RunStats:
    """Per-(T, K) results; bias/stdev/rms are NaN when unavailable."""

    price_mean: float
    bias: float
    stdev: float
    rms: float
    cpu_seconds: float


def _case(f0, sigma0, vov, beta, rho, maturities, strikes, label):
    return CaseSpec(SabrParams(f0, sigma0, vov, beta, rho), maturities, strikes, label)


BUILTIN_CASES = {
    "case1": _case(1.0, 0.25, 0.3, 0.3, -0.8, (10.0,), (0.2, 0.4, 0.8, 1.0, 1.2, 1.6, 2.0), "case1"),
    "case2": _case(1.0, 0.25, 0.3, 0.6, -0.5, (10.0,), (0.2, 0.4, 0.8, 1.0, 1.2, 1.6, 2.0), "case2"),
    "case3": _case(0.05, 0.4, 0.6, 0.3, 0.0, (1.0,), (0.02, 0.04, 0.05, 0.06, 0.08, 0.10), "case3"),
    "case4": _case(1.1, 0.4, 0.8, 0.3, -0.3, (4.0,), (1.1,), "case4"),
    "case5": _case(1.1, 0.3, 0.5, 0.4, -0.8, tuple(float(t) for t in range(1, 11)), (1.1,), "case5"),
}


def load_fdm_fixtures():
    """Benchmark prices keyed by (case label, T, K).

    Shipped as package data; the `source` column records provenance (finite
    difference tables vs. our own high-resolution simulation references).
    """
    out = {}
    with resources.files("sabrmc").joinpath("data/fdm_prices.csv").open() as f:
        for row in csv.DictReader(filter(lambda ln: not ln.startswith("#"), f)):
            out[(row["case"], float(row["T"]), float(row["K"]))] = float(row["price"])
    return out


def fdm_price(case_label, T, K, fixtures=None):
    """Fixture price or None when the combination is not tabulated."""
    if fixtures is None:
        fixtures = load_fdm_fixtures()
    return fixtures.get((case_label, float(T), float(K)))


def price_european_call(terminal_prices, strike):
    """Mean of max(F_T - K, 0), accumulated with exact (fsum) summation."""
    pay = np.maximum(np.asarray(terminal_prices, dtype=float) - strike, 0.0)
    return math.fsum(pay) / pay.size


def rms_error(bias, stdev):
    """Root-mean-square combination sqrt(bias^2 + stdev^2)."""
    return math.hypot(bias, stdev)


def _rep_prices(args):
    """One repetition: prices for every (T, K) plus simulation seconds."""
    params, scheme, h, n_paths, seed, maturities, strikes = args
    prices = np.empty((len(maturities), len(strikes)))
    seconds = 0.0
    for i, t_mat in enumerate(maturities):
        t0 = time.perf_counter()
        ft = simulate_terminal(scheme, params, t_mat, h, n_paths, seed + 1_000_000 * i)
        seconds += time.perf_counter() - t0
        for j, k in enumerate(strikes):
            prices[i, j] = price_european_call(ft, k)
    return prices, seconds


def _pmap(fn, tasks, n_jobs):
    if n_jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def run_case(case, config, fixtures=None):
    """Benchmark one case: m repetitions, per-(T, K) statistics.

    bias = mean over repetitions of (price - benchmark); stdev = sample
    standard deviation of the repetition prices; rms combines the two.  With
    a single repetition stdev and rms are NaN; with no benchmark fixture the
    bias and rms are NaN and a warning is issued.

    Returns:
        dict mapping (T, K) to RunStats.
    """
    if fixtures is None:
        fixtures = load_fdm_fixtures()
    tasks = [
        (
            case.params,
            config.scheme,
            config.h,
            config.n_paths,
            config.base_seed + r,
            case.maturities,
            case.strikes,
        )
        for r in range(config.n_reps)
    ]
    results = _pmap(_rep_prices, tasks, config.n_jobs)
    prices = np.stack([p for p, _ in results])  # (rep, T, K)
    rep_seconds = np.array([s for _, s in results])

    out = {}
    for i, t_mat in enumerate(case.maturities):
        for j, k in enumerate(case.strikes):
            col = prices[:, i, j]
            mean = math.fsum(col) / col.size
            stdev = float(col.std(ddof=1)) if config.n_reps > 1 else math.nan
            ref = fdm_price(case.label, t_mat, k, fixtures)
            if ref is None:
                warnings.warn(
                    f"no benchmark fixture for ({case.label}, T={t_mat}, K={k}); bias omitted",
                    RuntimeWarning,
                    stacklevel=2,
                )
                bias = math.nan
            else:
                bias = mean - ref
            rms = rms_error(bias, stdev) if not (math.isnan(bias) or math.isnan(stdev)) else math.nan
            out[(t_mat, k)] = RunStats(mean, bias, stdev, rms, float(rep_seconds.mean()))
    return out


def convergence_study(case, schedule, scheme="cev", n_reps=20, base_seed=1234, n_jobs=1, fixtures=None):
    """RMS error and timing along a (n_paths, h) schedule.

    Uses the case's first maturity and strike.  Returns one row per schedule
    entry, in order: dict with n_paths, h, price, bias, stdev, rms,
    cpu_seconds (mean per-repetition simulation seconds).
    """
    if not schedule:
        raise ConfigError("schedule must be nonempty")
    if fixtures is None:
        fixtures = load_fdm_fixtures()
    t_mat, k = case.maturities[0], case.strikes[0]
    sub = CaseSpec(case.params, (t_mat,), (k,), case.label)
    rows = []
    for n_paths, h in schedule:
        config = RunConfig(scheme, h, int(n_paths), n_reps, base_seed, n_jobs)
        stats = run_case(sub, config, fixtures)[(t_mat, k)]
        rows.append(
            dict(
                n_paths=int(n_paths),
                h=h,
                price=stats.price_mean,
                bias=stats.bias,
                stdev=stats.stdev,
                rms=stats.rms,
                cpu_seconds=stats.cpu_seconds,
            )
        )
    return rows


def _mart_row(args):
    params, scheme, h, t_mat, n_paths, seed, strike, ref = args
    t0 = time.perf_counter()
    ft = simulate_terminal(scheme, params, t_mat, h, n_paths, seed)
    seconds = time.perf_counter() - t0
    fwd = math.fsum(ft) / ft.size
    stderr = float(ft.std()) / math.sqrt(ft.size)
    price = price_european_call(ft, strike)
    atm_err = price - ref if ref is not None else math.nan
    return dict(
        scheme=scheme,
        h=h,
        T=t_mat,
        fwd_mean=fwd,
        fwd_error=fwd - params.f0,
        stderr=stderr,
        price=price,
        atm_price_error=atm_err,
        cpu_seconds=seconds,
    )


def martingale_study(case, schemes=("cev", "islah"), h_list=(1.0,), n_paths=1_000_000,
                     base_seed=777, n_jobs=1, fixtures=None):
    """Forward-price drift E[F_T] - F0 per maturity for each scheme and step.

    One repetition per (scheme, h, T) at n_paths paths; reports the drift
    with its standard error and the ATM option price error against the
    fixture when one exists.
    """
    if fixtures is None:
        fixtures = load_fdm_fixtures()
    strike = case.params.f0
    if strike not in case.strikes:
        raise ConfigError("martingale study expects an ATM strike (K = F0) in the case")
    tasks = []
    idx = 0
    for scheme in schemes:
        for h in h_list:
            for t_mat in case.maturities:
                ref = fdm_price(case.label, t_mat, strike, fixtures)
                tasks.append(
                    (case.params, scheme, h, t_mat, n_paths, base_seed + 10_000 * idx, strike, ref)
                )
                idx += 1
    return _pmap(_mart_row, tasks, n_jobs)


def _format_field(x):
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return f"{x:.17g}"
    return str(x)


RESULT_COLUMNS = (
    "case", "scheme", "T", "K", "h", "n_paths", "n_reps",
    "price", "bias", "stdev", "rms", "cpu_seconds",
)


def stats_to_rows(case, config, stats):
    """Flatten run_case output into result rows in fixed column order."""
    rows = []
    for (t_mat, k), st in sorted(stats.items()):
        rows.append(
            dict(
                case=case.label,
                scheme=config.scheme,
                T=t_mat,
                K=k,
                h=config.h,
                n_paths=config.n_paths,
                n_reps=config.n_reps,
                price=st.price_mean,
                bias=st.bias,
                stdev=st.stdev,
                rms=st.rms,
                cpu_seconds=st.cpu_seconds,
            )
        )
    return rows


def write_results(path, rows, columns=RESULT_COLUMNS, force=False):
    """Write result rows as CSV with a fixed column order.

    Floats carry 17 significant digits; NaN prints as an empty field.
    Refuses to overwrite an existing file unless force is set.
    """
    if os.path.exists(path) and not force:
        raise FileExistsError(f"{path} exists; pass force=True (or --force) to overwrite")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_field(row.get(c, "")) for c in columns])


_CONFIG_KEYS = {"case", "params", "maturities", "strikes", "label", "scheme", "h",
                "n_paths", "n_reps", "seed", "n_jobs"}


def load_config(path):
    """Parse a JSON run configuration into (CaseSpec, RunConfig).

    The file either names a built-in case ("case": "case3") or spells out
    "params"/"maturities"/"strikes"; scheme, h, n_paths, n_reps, and seed
    complete the protocol.  Raises ConfigError naming the offending field.
    """
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed config {path}: {e}") from e
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    case = build_case(raw)
    config = build_run_config(raw)
    return case, config


def build_case(raw):
    """CaseSpec from a config mapping (built-in name or explicit fields)."""
    if "case" in raw:
        name = raw["case"]
        if name not in BUILTIN_CASES:
            raise ConfigError(f"field 'case': unknown case {name!r}; have {sorted(BUILTIN_CASES)}")
        return BUILTIN_CASES[name]
    if "params" not in raw:
        raise ConfigError("config needs either 'case' or 'params'")
    p = raw["params"]
    required = ("f0", "sigma0", "vov", "beta", "rho")
    for key in required:
        if key not in p:
            raise ConfigError(f"field 'params.{key}': missing")
        if not isinstance(p[key], (int, float)):
            raise ConfigError(f"field 'params.{key}': expected a number, got {p[key]!r}")
    extra = set(p) - set(required)
    if extra:
        raise ConfigError(f"field 'params': unknown entries {sorted(extra)}")
    try:
        params = SabrParams(**{k: float(p[k]) for k in required})
    except ValueError as e:
        raise ConfigError(f"field 'params': {e}") from e
    for key in ("maturities", "strikes"):
        if key not in raw or not isinstance(raw[key], list) or not raw[key]:
            raise ConfigError(f"field '{key}': expected a nonempty list")
        for x in raw[key]:
            if not isinstance(x, (int, float)) or x <= 0:
                raise ConfigError(f"field '{key}': expected positive numbers, got {x!r}")
    return CaseSpec(
        params,
        tuple(float(t) for t in raw["maturities"]),
        tuple(float(k) for k in raw["strikes"]),
        str(raw.get("label", "custom")),
    )


def build_run_config(raw, **overrides):
    """RunConfig from a config mapping, with keyword overrides."""
    merged = dict(raw)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    for key, default in (("scheme", "cev"), ("h", 1.0), ("n_paths", 100_000),
                         ("n_reps", 1), ("seed", 42), ("n_jobs", 1)):
        merged.setdefault(key, default)
    for key, kind in (("h", float), ("n_paths", int), ("n_reps", int),
                      ("seed", int), ("n_jobs", int)):
        try:
            merged[key] = kind(merged[key])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"field '{key}': {e}") from e
    return RunConfig(
        scheme=str(merged["scheme"]),
        h=merged["h"],
        n_paths=merged["n_paths"],
        n_reps=merged["n_reps"],
        base_seed=merged["seed"],
        n_jobs=merged["n_jobs"],
    )
