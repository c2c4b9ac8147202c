"""SABR Monte Carlo: exact-distribution simulation and benchmark harness.

Two-step scheme per time step: the conditional average variance is drawn
from a moment-matched shifted lognormal, and the conditional forward price
from a mean-preserving CEV distribution sampled exactly via its
gamma-Poisson-gamma mixture representation.
"""

from .cev import CevParams, absorption_prob, cev_sample, cev_survival, islah_sample
from .condvar import (
    CondVarInputs,
    MomentSet,
    SlnParams,
    cond_moments,
    sample_avg_var,
    sln_fit_small_time,
    sln_fit_three_moments,
    small_time_stats,
)
from .engine import PathState, SabrParams, simulate_terminal
from .harness import BUILTIN_CASES, CaseSpec, RunConfig, RunStats, run_case
from .sampling import RngStream

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_CASES",
    "CaseSpec",
    "CevParams",
    "CondVarInputs",
    "MomentSet",
    "PathState",
    "RngStream",
    "RunConfig",
    "RunStats",
    "SabrParams",
    "SlnParams",
    "absorption_prob",
    "cev_sample",
    "cev_survival",
    "cond_moments",
    "islah_sample",
    "run_case",
    "sample_avg_var",
    "simulate_terminal",
    "sln_fit_small_time",
    "sln_fit_three_moments",
    "small_time_stats",
]
