"""Conditional average variance of the volatility path over one step.

The average variance over a step, normalized by sigma_t^2 h and conditioned
on the terminal volatility (equivalently on the standardized log-increment
Z-hat), has closed-form raw moments built from normal CDF difference ratios
m_k.  This module evaluates those moments, fits shifted-lognormal (SLN)
approximations to them, samples the fitted SLN, and provides a Brownian
bridge Monte Carlo oracle for validating the closed forms.

Precision strategy: the m_k ratios are evaluated in double precision with
tail-reflected normal CDFs (full relative accuracy for |z| up to ~37, log
space beyond).  The third/fourth moment brackets cancel ~nu_hat^6 of leading
digits, so below NU_HAT_FULL_DOUBLE the full moment set is evaluated in
extended precision; below NU_HAT_EXPANSION the small-time expansions take
over entirely.
"""

import math
import warnings
from dataclasses import dataclass

import mpmath as mp
import numpy as np
from scipy import special as sp

from .sampling import sample_normal

__all__ = [
    "CondVarInputs",
    "CondVarTable",
    "BridgeMoments",
    "MomentSet",
    "SlnParams",
    "bridge_moment_oracle",
    "cond_moments",
    "m_k",
    "sample_avg_var",
    "sln_fit_small_time",
    "sln_fit_three_moments",
    "small_time_stats",
]

_SQRT3 = math.sqrt(3.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# below this the extended-precision brackets are retired in favour of the
# small-time expansions (their relative error is then < ~1e-10)
NU_HAT_EXPANSION = 1e-5
# below this the skew/kurtosis brackets lose too many digits in double
NU_HAT_FULL_DOUBLE = 0.3
# below this (z-independent to leading order) a * m_k is evaluated by series
_A_SERIES = 1e-4
# beyond this the normal density underflows; switch m_k to log space
_Z_LOGSPACE = 36.0


@dataclass(frozen=True)
class CondVarInputs:
    """Conditioning variables for one volatility step.

    Attributes:
        nu_hat: per-step log-volatility standard deviation, > 0
        z_hat: standardized conditioning normal variate
    """

    nu_hat: float
    z_hat: float

    def __post_init__(self):
        if not (self.nu_hat > 0.0):
            raise ValueError(f"nu_hat must be > 0, got {self.nu_hat}")

    @property
    def vol_ratio(self):
        """Terminal over initial volatility, exp(nu_hat * z_hat)."""
        return math.exp(self.nu_hat * self.z_hat)

    @classmethod
    def from_vol_ratio(cls, nu_hat, vol_ratio):
        if not (vol_ratio > 0.0):
            raise ValueError(f"vol_ratio must be > 0, got {vol_ratio}")
        return cls(nu_hat, math.log(vol_ratio) / nu_hat)


@dataclass(frozen=True)
class MomentSet:
    """First four raw moments of the conditional average variance plus the
    derived coefficient of variation, skewness, and excess kurtosis."""

    mu: float
    mu2p: float
    mu3p: float
    mu4p: float
    cv: float
    skew: float
    exkurt: float


@dataclass(frozen=True)
class SlnParams:
    """Shifted lognormal Y = mean * [(1-weight) + weight*exp(sd*X - sd^2/2)].

    weight in (0, 1]; log_sd = 0 denotes the degenerate constant `mean`.
    """

    mean: float
    log_sd: float
    weight: float

    def __post_init__(self):
        if not (self.mean > 0.0):
            raise ValueError(f"mean must be > 0, got {self.mean}")
        if not (self.log_sd >= 0.0):
            raise ValueError(f"log_sd must be >= 0, got {self.log_sd}")
        if not (0.0 < self.weight <= 1.0):
            raise ValueError(f"weight must be in (0, 1], got {self.weight}")


def _mk_arrays(nu_hat, z_hat, ks):
    """m_k for each k in `ks` at array-valued z_hat; returns list of arrays.

    m_k = [N(z+a) - N(z-a)] / (2a n(sqrt(z^2+a^2))) with a = k nu_hat,
    evaluated at |z| (the ratio is even in z) with both CDFs reflected into
    the lower tail so the difference keeps relative accuracy.
    """
    z = np.abs(np.asarray(z_hat, dtype=float))
    out = []
    for k in ks:
        a = k * nu_hat
        if a < _A_SERIES:
            out.append(1.0 + a * a * (z * z + 2.0) / 6.0)
            continue
        with np.errstate(over="ignore"):
            num = sp.ndtr(a - z) - sp.ndtr(-a - z)
            den = 2.0 * a * _INV_SQRT_2PI * np.exp(-0.5 * (z * z + a * a))
            m = num / den
        big = z > _Z_LOGSPACE
        if np.any(big):
            zb = z[big]
            l1 = sp.log_ndtr(a - zb)
            l2 = sp.log_ndtr(-a - zb)
            log_m = (
                l1
                + np.log1p(-np.exp(l2 - l1))
                + 0.5 * (zb * zb + a * a)
                - math.log(2.0 * a * _INV_SQRT_2PI)
            )
            m = np.asarray(m)
            m[big] = np.exp(log_m)
        out.append(m)
    return out


def m_k(nu_hat, z_hat, k):
    """Normal CDF difference ratio m_k; tends to 1 as nu_hat -> 0."""
    if not (nu_hat > 0.0):
        raise ValueError(f"nu_hat must be > 0, got {nu_hat}")
    if not k == int(k) or not 1 <= k:
        raise ValueError(f"k must be a positive integer, got {k}")
    (m,) = _mk_arrays(nu_hat, z_hat, (int(k),))
    return m if np.ndim(z_hat) else float(m)


def _derived_stats(mu, mu2p, mu3p, mu4p):
    var = mu2p - mu * mu
    cv = math.sqrt(var) / mu
    skew = (mu3p - 3.0 * mu * mu2p + 2.0 * mu**3) / var**1.5
    exkurt = (mu4p - 4.0 * mu * mu3p + 6.0 * mu * mu * mu2p - 3.0 * mu**4) / var**2 - 3.0
    return cv, skew, exkurt


def _cond_moments_double(nu_hat, z_hat):
    m1, m2, m3, m4 = (float(m) for m in _mk_arrays(nu_hat, z_hat, (1, 2, 3, 4)))
    c = math.cosh(nu_hat * z_hat)
    r = math.exp(nu_hat * z_hat)
    nh2 = nu_hat * nu_hat
    mu = r * m1
    mu2p = r**2 * (m2 - c * m1) / nh2
    mu3p = r**3 * (3.0 * m3 - 8.0 * c * m2 + (4.0 * c * c + 1.0) * m1) / (8.0 * nh2 * nh2)
    mu4p = (
        r**4
        * (2.0 * m4 - 9.0 * c * m3 + (12.0 * c * c + 2.0) * m2 - c * (4.0 * c * c + 3.0) * m1)
        / (24.0 * nh2 * nh2 * nh2)
    )
    return mu, mu2p, mu3p, mu4p


def _cond_moments_mp(nu_hat, z_hat):
    # ~nu_hat^6 of digits cancel in the fourth-moment bracket; 60 digits
    # covers nu_hat down to 1e-5 with ample headroom
    with mp.workdps(60):
        nh = mp.mpf(nu_hat)
        z = abs(mp.mpf(z_hat))

        def mk(k):
            a = k * nh
            num = mp.ncdf(a - z) - mp.ncdf(-a - z)
            return num / (2 * a * mp.npdf(mp.sqrt(z * z + a * a)))

        m1, m2, m3, m4 = mk(1), mk(2), mk(3), mk(4)
        c = mp.cosh(nh * z)
        r = mp.exp(nh * mp.mpf(z_hat))
        mu = r * m1
        mu2p = r**2 * (m2 - c * m1) / nh**2
        mu3p = r**3 * (3 * m3 - 8 * c * m2 + (4 * c**2 + 1) * m1) / (8 * nh**4)
        mu4p = (
            r**4
            * (2 * m4 - 9 * c * m3 + (12 * c**2 + 2) * m2 - c * (4 * c**2 + 3) * m1)
            / (24 * nh**6)
        )
        return float(mu), float(mu2p), float(mu3p), float(mu4p)


def cond_moments(nu_hat, z_hat):
    """Exact conditional moments of the average variance given z_hat.

    Args:
        nu_hat: per-step log-vol standard deviation, > 0
        z_hat: conditioning normal variate (scalar)

    Returns:
        MomentSet with raw moments and derived cv/skewness/excess kurtosis.
    """
    if not (nu_hat > 0.0):
        raise ValueError(f"nu_hat must be > 0, got {nu_hat}")
    if nu_hat < NU_HAT_EXPANSION:
        v, s, kappa = small_time_stats(nu_hat)
        (m1,) = _mk_arrays(nu_hat, z_hat, (1,))
        mu = math.exp(nu_hat * z_hat) * float(m1)
        # raw moments reconstructed from the expansion statistics
        mu2p = mu * mu * (1.0 + v * v)
        mu3p = mu**3 * (1.0 + 3.0 * v * v + s * v**3)
        mu4p = mu**4 * (1.0 + 6.0 * v * v + 4.0 * s * v**3 + (kappa + 3.0) * v**4)
        return MomentSet(mu, mu2p, mu3p, mu4p, v, s, kappa)
    if nu_hat < NU_HAT_FULL_DOUBLE:
        mu, mu2p, mu3p, mu4p = _cond_moments_mp(nu_hat, z_hat)
    else:
        mu, mu2p, mu3p, mu4p = _cond_moments_double(nu_hat, z_hat)
    cv, skew, exkurt = _derived_stats(mu, mu2p, mu3p, mu4p)
    return MomentSet(mu, mu2p, mu3p, mu4p, cv, skew, exkurt)


def small_time_stats(nu_hat):
    """Leading-order cv, skewness, excess kurtosis for nu_hat -> 0."""
    if not (nu_hat > 0.0):
        raise ValueError(f"nu_hat must be > 0, got {nu_hat}")
    v = nu_hat / _SQRT3
    s = (6.0 * _SQRT3 / 5.0) * nu_hat
    kappa = (276.0 / 35.0) * nu_hat * nu_hat
    return v, s, kappa


def sln_fit_three_moments(mean, cv, skew):
    """SLN parameters reproducing (mean, cv, skew) exactly.

    Solves skew^2 = w (w+3)^2 through its hyperbolic closed form; note
    arcosh(1 + s^2/2) = 2 asinh(s/2), which stays accurate as s -> 0.
    Infeasible fits (weight > 1) degrade to the plain lognormal matched to
    mean and cv, with a warning.
    """
    if not (mean > 0.0 and cv > 0.0):
        raise ValueError("mean and cv must be > 0")
    if not (skew > 0.0):
        raise ValueError(f"skew must be > 0, got {skew}")
    sh = math.sinh(math.asinh(0.5 * skew) / 3.0)
    weight = 0.5 * cv / sh
    if weight > 1.0:
        warnings.warn(
            f"SLN fit infeasible (weight={weight:.6g} > 1); "
            "falling back to lognormal matched to mean and cv",
            RuntimeWarning,
            stacklevel=2,
        )
        return SlnParams(mean, math.sqrt(math.log1p(cv * cv)), 1.0)
    w = 4.0 * sh * sh
    return SlnParams(mean, math.sqrt(math.log1p(w)), weight)


def sln_fit_small_time(moments):
    """SLN with the fixed small-time weight 5/6, matched to mean and cv."""
    v = moments.cv
    if v <= 0.0 or moments.skew <= 0.0:
        # only reachable for vanishing vol-of-vol; the average variance is
        # then the deterministic constant mu
        return SlnParams(moments.mu, 0.0, 5.0 / 6.0)
    return SlnParams(moments.mu, math.sqrt(math.log1p(1.44 * v * v)), 5.0 / 6.0)


def sample_avg_var(stream, params, size=None):
    """Draw the average variance from a fitted SLN; strictly positive."""
    x = sample_normal(stream, size)
    sd = params.log_sd
    lognorm = np.exp(sd * np.asarray(x) - 0.5 * sd * sd)
    out = params.mean * ((1.0 - params.weight) + params.weight * lognorm)
    return float(out) if size is None else out


class CondVarTable:
    """Interpolated m_1 and squared cv on a |z| grid, for bulk evaluation.

    Built once per (nu_hat, grid) from the exact double-precision formulas;
    linear interpolation on the default grid is accurate to ~1e-8 relative,
    far below Monte Carlo resolution.  Inputs beyond z_max (reached with
    probability < 1e-300 per draw) are clamped.
    """

    def __init__(self, nu_hat, z_max=14.0, n_nodes=16385):
        if not (nu_hat > 0.0):
            raise ValueError(f"nu_hat must be > 0, got {nu_hat}")
        self.nu_hat = nu_hat
        self.z_max = z_max
        self._inv_dz = (n_nodes - 1) / z_max
        self._top = n_nodes - 2
        grid = np.linspace(0.0, z_max, n_nodes)
        m1, m2 = _mk_arrays(nu_hat, grid, (1, 2))
        c = np.cosh(nu_hat * grid)
        v2 = (m2 - c * m1) / (nu_hat * nu_hat * m1 * m1) - 1.0
        self._m1 = m1
        self._v2 = v2
        self._dm1 = np.diff(m1, append=m1[-1])
        self._dv2 = np.diff(v2, append=v2[-1])

    def mu_v2(self, z_hat, vol_ratio=None):
        """Mean of the average variance and its squared cv at each z_hat.

        vol_ratio = exp(nu_hat * z_hat) may be passed to avoid recomputing it.
        """
        t = np.abs(z_hat)
        t *= self._inv_dz
        idx = t.astype(np.intp)
        np.minimum(idx, self._top, out=idx)
        t -= idx
        np.minimum(t, 1.0, out=t)
        m1 = self._dm1.take(idx)
        m1 *= t
        m1 += self._m1.take(idx)
        v2 = self._dv2.take(idx)
        v2 *= t
        v2 += self._v2.take(idx)
        if vol_ratio is None:
            vol_ratio = np.exp(self.nu_hat * z_hat)
        return vol_ratio * m1, v2


@dataclass(frozen=True)
class BridgeMoments:
    """Monte Carlo estimates of the first four raw moments with standard errors."""

    raw: np.ndarray
    stderr: np.ndarray


def bridge_moment_oracle(nu_hat, z_hat, n_steps, n_paths, stream, batch=4096):
    """Brute-force conditional moments via Brownian bridge quadrature.

    Simulates free Brownian paths B on [0, 1], pins them into bridges
    Z_s = B_s + s (z_hat - B_1), and integrates exp(2 nu_hat Z_s) by the
    trapezoidal rule.  Returns raw-moment estimates of the integral with
    standard errors.  Test support only.

    Args:
        nu_hat, z_hat: conditioning variables
        n_steps: trapezoid panels per bridge (>= 1000 for negligible bias)
        n_paths: number of bridges
        stream: RngStream consumed batch-by-batch
        batch: bridges per vectorized block
    """
    sums = np.zeros(4)
    sq_sums = np.zeros(4)
    done = 0
    dt = 1.0 / n_steps
    s_grid = np.arange(1, n_steps + 1) * dt
    sqrt_dt = math.sqrt(dt)
    while done < n_paths:
        m = min(batch, n_paths - done)
        db = stream.normal_vec(m * n_steps).reshape(m, n_steps)
        db *= sqrt_dt
        b = np.cumsum(db, axis=1)
        z = b + np.outer(z_hat - b[:, -1], s_grid)
        integ = np.exp((2.0 * nu_hat) * z)
        # trapezoid with Z_0 = 0: interior points at full weight
        i1 = dt * (0.5 + np.sum(integ[:, :-1], axis=1) + 0.5 * integ[:, -1])
        acc = i1.copy()
        for k in range(4):
            sums[k] += acc.sum()
            sq_sums[k] += (acc * acc).sum()
            acc *= i1
        done += m
    raw = sums / n_paths
    var = np.maximum(sq_sums / n_paths - raw * raw, 0.0)
    return BridgeMoments(raw, np.sqrt(var / n_paths))
