"""Vectorized SABR path simulation.

One step advances a batch of paths together: sample the terminal volatility,
sample the conditional average variance from the weight-5/6 SLN fit, form the
conditional mean, then draw the terminal price from the matching conditional
distribution.  Four schemes share this skeleton:

    cev        conditional CEV draw (martingale-preserving, the default)
    islah      NCX2 approximation with modified degrees of freedom,
               sampled through its power-of-CEV representation
    lognormal  exact beta = 1 branch
    euler      Euler baseline with absorption at the origin

The cev and islah steps both reduce the price update to the z coordinate
z = y^(2 beta*)/(beta*^2 var): the gamma mixing draw X absorbs the path when
X >= z_t/2, and otherwise the surviving transition z' ~ 2 G(Poisson(z_t/2-X)+1)
is drawn through the equivalent noncentral chi-squared identity
z' ~ chi2(2, z_t - 2X) = (Z1 + sqrt(z_t - 2X))^2 + Z2^2, which is the same
mixture law at a third of the sampling cost.  With zero correlation the two
schemes execute identical arithmetic and hence identical streams.

Paths are partitioned into fixed-size chunks; chunk c of a run advances on
RngStream(seed, stream_id=c), drawing whole-array variates step by step.  The
chunk layout never depends on worker count, so serial and parallel runs of
the same seed produce bit-identical vectors.  Absorbed paths are compacted
out of the working arrays; their terminal prices stay zero.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cev import CevParams, cev_sample
from .condvar import CondVarTable
from .sampling import RngStream, sample_gamma

__all__ = [
    "CHUNK_PATHS",
    "ConfigError",
    "PathState",
    "SabrParams",
    "SCHEMES",
    "StepDiagnostics",
    "cond_mean",
    "sabr_step_cev",
    "sabr_step_euler",
    "sabr_step_islah",
    "sabr_step_lognormal",
    "simulate_terminal",
    "vol_step",
]

SCHEMES = ("cev", "islah", "lognormal", "euler")

# paths per stream chunk; fixed so results are independent of worker count
CHUNK_PATHS = 65536

# below this per-step log-vol sd, conditional-moment evaluation switches to
# its small-time expansion (relative error < ~1e-7 at the threshold)
NU_HAT_SMALL_STEP = 0.02


class ConfigError(ValueError):
    """Incompatible scheme/parameter/step configuration."""


@dataclass(frozen=True)
class SabrParams:
    """SABR model constants.

    Attributes:
        f0: initial forward price, > 0
        sigma0: initial volatility, > 0
        vov: vol-of-vol nu, >= 0
        beta: elasticity of variance, in [0, 1]
        rho: driver correlation, in [-1, 1]
    """

    f0: float
    sigma0: float
    vov: float
    beta: float
    rho: float

    def __post_init__(self):
        if not (self.f0 > 0.0):
            raise ValueError(f"f0 must be > 0, got {self.f0}")
        if not (self.sigma0 > 0.0):
            raise ValueError(f"sigma0 must be > 0, got {self.sigma0}")
        if not (self.vov >= 0.0):
            raise ValueError(f"vov must be >= 0, got {self.vov}")
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if not (-1.0 <= self.rho <= 1.0):
            raise ValueError(f"rho must be in [-1, 1], got {self.rho}")

    @property
    def beta_star(self):
        return 1.0 - self.beta

    @property
    def rho_star(self):
        return math.sqrt(max(1.0 - self.rho * self.rho, 0.0))


@dataclass
class PathState:
    """Running state of a batch of paths at common time t.

    Absorbed paths have f = 0 and stay there.
    """

    t: float
    f: np.ndarray
    sigma: np.ndarray
    absorbed: np.ndarray

    @classmethod
    def initial(cls, params, n_paths):
        return cls(
            t=0.0,
            f=np.full(n_paths, params.f0),
            sigma=np.full(n_paths, params.sigma0),
            absorbed=np.zeros(n_paths, dtype=bool),
        )


@dataclass
class StepDiagnostics:
    """Per-path intermediates of one conditional step."""

    z_hat: np.ndarray
    avg_var: np.ndarray
    cond_mean: np.ndarray


def vol_step(stream, sigma_t, vov, h):
    """Advance the volatility over h: sigma exp(nu_hat Z), Z ~ N(-nu_hat/2, 1).

    Returns:
        (sigma_next, z_hat): arrays shaped like sigma_t.
    """
    sigma_t = np.asarray(sigma_t, dtype=float)
    nu_hat = vov * math.sqrt(h)
    z_hat = stream.normal_vec(sigma_t.size)
    z_hat -= 0.5 * nu_hat
    sigma_next = sigma_t * np.exp(nu_hat * z_hat)
    return sigma_next, z_hat


def cond_mean(params, f_t, sigma_t, sigma_next, avg_var, h):
    """Conditional mean of the next forward price given (sigma_next, I).

    F_t exp(rho (sigma_next - sigma_t) / (nu F_t^b*)
            - rho^2 sigma_t^2 h I / (2 F_t^(2 b*))),
    the lognormal-step mean transplanted to elasticity beta; its expectation
    over the true joint law of (sigma_next, I) returns F_t.
    """
    if not (params.vov > 0.0):
        raise ValueError("cond_mean requires vov > 0")
    f_t = np.asarray(f_t, dtype=float)
    g = f_t**params.beta_star
    x = params.rho * (np.asarray(sigma_next) - np.asarray(sigma_t)) / (params.vov * g)
    x -= 0.5 * params.rho**2 * np.asarray(sigma_t) ** 2 * h * np.asarray(avg_var) / (g * g)
    return f_t * np.exp(x)


def _mu_v2(nu_hat, z_hat, vol_ratio, table):
    """Mean and squared cv of the conditional average variance."""
    if nu_hat < NU_HAT_SMALL_STEP:
        m1 = z_hat * z_hat
        m1 += 2.0
        m1 *= nu_hat * nu_hat / 6.0
        m1 += 1.0
        m1 *= vol_ratio
        return m1, np.full_like(z_hat, nu_hat * nu_hat / 3.0)
    return table.mu_v2(z_hat, vol_ratio)


def _draw_avg_var(stream, mu, v2):
    """Weight-5/6 SLN draw matched to (mu, v); consumes mu and v2 in place."""
    sig2 = v2
    sig2 *= 1.44
    np.log1p(sig2, out=sig2)
    x = stream.normal_vec(mu.size)
    x *= np.sqrt(sig2)
    x -= 0.5 * sig2
    np.exp(x, out=x)
    x *= 5.0
    x += 1.0
    x *= mu
    x *= 1.0 / 6.0
    return x


@lru_cache(maxsize=8)
def _cached_table(nu_hat):
    return CondVarTable(nu_hat)


def _get_table(params, h):
    nu_hat = params.vov * math.sqrt(h)
    if nu_hat < NU_HAT_SMALL_STEP:
        return None
    return _cached_table(nu_hat)


def _step_conditional(stream, params, state, h, table, islah, with_diagnostics):
    """Shared cev/islah step; see module docstring for the z-space update."""
    if state.f.size and not (state.f > 0).all():
        raise ValueError("conditional steps require strictly positive prices")
    bs = params.beta_star
    rho, vov = params.rho, params.vov
    rs2 = 1.0 - rho * rho
    if islah and vov == 0.0:
        raise ConfigError("islah scheme requires vov > 0")
    f = state.f
    sigma = state.sigma
    fbar = None

    with np.errstate(all="ignore"):
        if vov == 0.0:
            # no conditioning information: the step is exactly CEV(f, sigma^2 h)
            sigma_next, z_hat = sigma, np.zeros_like(f)
            avg_var = np.ones_like(f)
            var = sigma * sigma * h
            g = f**bs
            w = g.copy()
        else:
            nu_hat = vov * math.sqrt(h)
            sigma_next, z_hat = vol_step(stream, sigma, vov, h)
            mu, v2 = _mu_v2(nu_hat, z_hat, sigma_next / sigma, table)
            avg_var = _draw_avg_var(stream, mu, v2)
            var = sigma * sigma
            var *= h * rs2
            var *= avg_var
            g = f**bs
            if islah:
                w = sigma_next - sigma
                w *= bs * rho / vov
                w += g
            else:
                x = sigma_next - sigma
                x *= rho / vov
                x /= g
                x2 = sigma * sigma
                x2 *= avg_var
                x2 *= 0.5 * rho * rho * h
                x2 /= g
                x2 /= g
                x -= x2
                np.clip(x, -745.0, 700.0, out=x)
                if with_diagnostics or rs2 <= 0.0:
                    fbar = f * np.exp(x)
                x *= bs
                np.exp(x, out=x)
                w = x
                w *= g

        if rs2 <= 0.0 and vov > 0.0:
            # |rho| = 1: the conditional variance budget vanishes
            if islah:
                raise ConfigError("islah scheme requires |rho| < 1")
            new_state = PathState(state.t + h, fbar, sigma_next, state.absorbed.copy())
            diag = StepDiagnostics(z_hat, avg_var, fbar.copy()) if with_diagnostics else None
            return new_state, diag

        alpha = (1.0 - bs * rho * rho) / (2.0 * bs * rs2) if islah else 0.5 / bs
        q = var
        q *= bs * bs
        np.minimum(w, 1e150, out=w)
        z_t = w
        np.square(w, out=z_t)
        z_t /= q

        xg = sample_gamma(stream, alpha, f.size)
        xg *= 2.0
        nonc = z_t
        nonc -= xg
        alive = nonc > 0.0  # NaN from pathological states compares False
        n_alive = int(alive.sum())

        f_next = np.zeros_like(f)
        if n_alive:
            zz = stream.normal_vec(2 * n_alive)
            z1 = zz[:n_alive]
            z1 += np.sqrt(nonc[alive])
            np.square(z1, out=z1)
            z2 = zz[n_alive:]
            np.square(z2, out=z2)
            z1 += z2
            z1 *= q[alive]
            f_next[alive] = z1 ** (0.5 / bs)

    new_state = PathState(state.t + h, f_next, sigma_next, state.absorbed | ~alive)
    if with_diagnostics:
        if fbar is None:
            fbar = f.copy()
        return new_state, StepDiagnostics(z_hat, avg_var, fbar)
    return new_state, None


def sabr_step_cev(stream, params, state, h, table=None, with_diagnostics=False):
    """One step of the martingale-preserving conditional-CEV scheme."""
    if not (0.0 < params.beta < 1.0):
        raise ConfigError(f"cev scheme requires 0 < beta < 1, got {params.beta}")
    if table is None:
        table = _get_table(params, h)
    out, diag = _step_conditional(stream, params, state, h, table, False, with_diagnostics)
    return (out, diag) if with_diagnostics else out


def sabr_step_islah(stream, params, state, h, table=None, with_diagnostics=False):
    """One step using the NCX2 approximation with modified degrees of freedom."""
    if not (0.0 < params.beta < 1.0):
        raise ConfigError(f"islah scheme requires 0 < beta < 1, got {params.beta}")
    if abs(params.rho) >= 1.0 or params.vov == 0.0:
        raise ConfigError("islah scheme requires |rho| < 1 and vov > 0")
    if table is None:
        table = _get_table(params, h)
    out, diag = _step_conditional(stream, params, state, h, table, True, with_diagnostics)
    return (out, diag) if with_diagnostics else out


def sabr_step_lognormal(stream, params, state, h, table=None):
    """Exact beta = 1 step: conditional lognormal given (sigma_next, I)."""
    if params.beta != 1.0:
        raise ConfigError(f"lognormal scheme requires beta = 1, got {params.beta}")
    rho, vov = params.rho, params.vov
    rs2 = 1.0 - rho * rho
    sig2h = state.sigma**2 * h

    if vov == 0.0:
        z_raw = stream.normal_vec(state.f.size)
        sigma_next = state.sigma
        avg_var = np.ones_like(state.f)
        dterm = state.sigma * math.sqrt(h) * z_raw
    else:
        nu_hat = vov * math.sqrt(h)
        sigma_next, z_hat = vol_step(stream, state.sigma, vov, h)
        mu, v2 = _mu_v2(nu_hat, z_hat, sigma_next / state.sigma, table or _get_table(params, h))
        avg_var = _draw_avg_var(stream, mu, v2)
        dterm = (sigma_next - state.sigma) / vov

    tot = sig2h * avg_var
    fbar = state.f * np.exp(rho * dterm - 0.5 * rho * rho * tot)
    if rs2 <= 0.0:
        f_next = fbar
    else:
        x = stream.normal_vec(state.f.size)
        f_next = fbar * np.exp(np.sqrt(rs2 * tot) * x - 0.5 * rs2 * tot)
    return PathState(state.t + h, f_next, sigma_next, state.absorbed.copy())


def sabr_step_euler(stream, params, state, h):
    """Euler step with absorption: F += sigma max(F,0)^beta sqrt(h) W1."""
    n = state.f.size
    w2 = stream.normal_vec(n)
    wp = stream.normal_vec(n)
    wp *= params.rho_star
    w1 = wp
    w1 += params.rho * w2
    w1 *= math.sqrt(h)
    w1 *= np.maximum(state.f, 0.0) ** params.beta
    w1 *= state.sigma
    f_next = w1
    f_next += state.f
    hit = f_next <= 0.0
    f_next[hit] = 0.0
    nuh = params.vov * math.sqrt(h)
    w2 *= nuh
    w2 -= 0.5 * nuh * nuh
    np.exp(w2, out=w2)
    sigma_next = w2
    sigma_next *= state.sigma
    return PathState(state.t + h, f_next, sigma_next, state.absorbed | hit)


def _n_steps(T, h):
    n = round(T / h)
    if n < 1 or abs(n * h - T) > 2.0 * np.spacing(max(T, 1.0)):
        raise ConfigError(f"h={h} does not divide T={T} into whole steps")
    return n


def _check_scheme(scheme, params):
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if scheme == "lognormal" and params.beta != 1.0:
        raise ConfigError("lognormal scheme requires beta = 1")
    if scheme in ("cev", "islah") and not (0.0 < params.beta < 1.0):
        raise ConfigError(f"{scheme} scheme requires 0 < beta < 1")
    if scheme == "islah" and (abs(params.rho) >= 1.0 or params.vov == 0.0):
        raise ConfigError("islah scheme requires |rho| < 1 and vov > 0")


def _simulate_chunk(scheme, params, T, h, n_paths, seed, chunk_id, n_steps):
    stream = RngStream(seed, chunk_id)

    if scheme == "cev" and params.vov == 0.0:
        # zero vol-of-vol: the terminal law is exactly CEV(F0, sigma0^2 T)
        return cev_sample(stream, CevParams(params.beta, params.f0, params.sigma0**2 * T), n_paths)

    table = None
    if scheme in ("cev", "islah", "lognormal") and params.vov > 0.0:
        table = _get_table(params, h)

    out = np.zeros(n_paths)
    active = np.arange(n_paths)
    state = PathState.initial(params, n_paths)

    for _ in range(n_steps):
        if scheme == "cev":
            state, _ = _step_conditional(stream, params, state, h, table, False, False)
        elif scheme == "islah":
            state, _ = _step_conditional(stream, params, state, h, table, True, False)
        elif scheme == "lognormal":
            state = sabr_step_lognormal(stream, params, state, h, table)
        else:
            state = sabr_step_euler(stream, params, state, h)
        if state.absorbed.any():
            keep = ~state.absorbed
            active = active[keep]
            state = PathState(
                state.t, state.f[keep], state.sigma[keep], np.zeros(active.size, dtype=bool)
            )
            if active.size == 0:
                return out

    out[active] = state.f
    return out


def simulate_terminal(scheme, params, T, h, n_paths, base_seed, n_jobs=1):
    """Simulate n_paths terminal forward prices F_T.

    Args:
        scheme: one of 'cev', 'islah', 'lognormal', 'euler'
        params: SabrParams (scheme-compatible beta/rho enforced)
        T: maturity in years
        h: step size; T/h must be a whole number of steps
        n_paths: paths per run
        base_seed: stream seed for this run (repetition r of a benchmark uses
            base_seed + r); paths are chunked onto stream ids 0, 1, ...
        n_jobs: process workers for chunk evaluation; any value returns the
            same vector

    Returns:
        ndarray of n_paths terminal prices, absorbed paths carrying 0.
    """
    _check_scheme(scheme, params)
    n_steps = _n_steps(T, h)

    sizes = [CHUNK_PATHS] * (n_paths // CHUNK_PATHS)
    if n_paths % CHUNK_PATHS:
        sizes.append(n_paths % CHUNK_PATHS)
    args = [
        (scheme, params, T, h, size, base_seed, cid, n_steps) for cid, size in enumerate(sizes)
    ]
    if n_jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_simulate_chunk_star, args))
    else:
        parts = [_simulate_chunk(*a) for a in args]
    return parts[0] if len(parts) == 1 else np.concatenate(parts)


def _simulate_chunk_star(args):
    return _simulate_chunk(*args)
