"""Special functions underlying the distribution evaluations.

Standard normal PDF/CDF, the regularized lower incomplete gamma function,
and the noncentral chi-squared CDF evaluated as a Poisson mixture of central
chi-squared CDFs.  A series-based modified Bessel function of the first kind
is included as test support for validating the density identity behind the
mixture-gamma sampler.

All functions are pure; `norm_pdf`/`norm_cdf` accept scalars or arrays, the
gamma/chi-squared routines are scalar.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sp

__all__ = [
    "ConvergenceError",
    "Ncx2Params",
    "absorption_complement",
    "bessel_i",
    "ncx2_cdf",
    "norm_cdf",
    "norm_pdf",
    "reg_gamma_lower",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_EPS = np.finfo(float).eps
_TINY = np.finfo(float).tiny


class ConvergenceError(RuntimeError):
    """A series or continued fraction did not meet its truncation bound."""


def norm_pdf(z):
    """Standard normal density exp(-z^2/2)/sqrt(2*pi)."""
    z = np.asarray(z, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    return out if out.ndim else float(out)


def norm_cdf(z):
    """Standard normal CDF, evaluated through the complementary error function.

    The erfc route keeps full relative accuracy in the lower tail, which the
    moment ratios rely on when dividing tail differences by tail densities.
    """
    z = np.asarray(z, dtype=float)
    out = 0.5 * sp.erfc(-z * _INV_SQRT2)
    return out if out.ndim else float(out)


def _gamma_series(x, alpha, itmax):
    # lower series: P(x;a) = x^a e^-x / Gamma(a) * sum_n x^n / (a(a+1)...(a+n))
    ap = alpha
    term = 1.0 / alpha
    total = term
    for _ in range(itmax):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(alpha * math.log(x) - x - math.lgamma(alpha))
    raise ConvergenceError(f"incomplete gamma series stalled at x={x}, alpha={alpha}")


def _gamma_contfrac(x, alpha, itmax):
    # modified Lentz continued fraction for the upper function Q(x;a)
    b = x + 1.0 - alpha
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, itmax + 1):
        an = -i * (i - alpha)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h * math.exp(alpha * math.log(x) - x - math.lgamma(alpha))
    raise ConvergenceError(f"incomplete gamma fraction stalled at x={x}, alpha={alpha}")


def reg_gamma_lower(x, alpha):
    """Regularized lower incomplete gamma function P(x; alpha).

    Series expansion for x < alpha + 1, continued fraction otherwise, both
    with a log-scaled prefactor so tiny values keep relative accuracy.

    Args:
        x: evaluation point, x >= 0
        alpha: shape parameter, alpha > 0

    Returns:
        gamma(alpha, x) / Gamma(alpha) in [0, 1].
    """
    if not (x >= 0.0):
        raise ValueError(f"x must be >= 0, got {x}")
    if not (alpha > 0.0):
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    itmax = 1000 + int(10.0 * math.sqrt(alpha))
    if x < alpha + 1.0:
        return min(_gamma_series(x, alpha, itmax), 1.0)
    return max(1.0 - _gamma_contfrac(x, alpha, itmax), 0.0)


@dataclass(frozen=True)
class Ncx2Params:
    """Noncentral chi-squared parameters.

    Attributes:
        dof: degrees of freedom, > 0
        noncentrality: noncentrality, >= 0
    """

    dof: float
    noncentrality: float

    def __post_init__(self):
        if not (self.dof > 0.0):
            raise ValueError(f"dof must be > 0, got {self.dof}")
        if not (self.noncentrality >= 0.0):
            raise ValueError(f"noncentrality must be >= 0, got {self.noncentrality}")

    @property
    def alpha(self):
        """Order of the Bessel function appearing in the density, dof/2 - 1."""
        return 0.5 * self.dof - 1.0


def ncx2_cdf(x, params):
    """Noncentral chi-squared CDF as a Poisson mixture of gamma CDFs.

    Sums Poisson(r/2)-weighted central chi-squared CDFs starting from the
    modal Poisson index and expanding in both directions, so the leading
    weights never underflow for large noncentrality.  Truncates once the
    unadded Poisson tail mass (an upper bound of the remaining contribution)
    drops below 1e-13.

    Args:
        x: evaluation point, x >= 0
        params: Ncx2Params with dof delta and noncentrality r

    Returns:
        P(chi2(delta, r) <= x) in [0, 1].

    Raises:
        ConvergenceError: tail bound not met within the 10*r + 1000 term cap.
    """
    if not (x >= 0.0):
        raise ValueError(f"x must be >= 0, got {x}")
    if x == 0.0:
        return 0.0
    half_a = 0.5 * params.dof
    if params.noncentrality == 0.0:
        return reg_gamma_lower(0.5 * x, half_a)

    hx = 0.5 * x
    hr = 0.5 * params.noncentrality
    cap = int(10.0 * params.noncentrality) + 1000

    k0 = int(hr)
    log_w0 = -hr + k0 * math.log(hr) - math.lgamma(k0 + 1.0)
    w0 = math.exp(log_w0)
    p0 = reg_gamma_lower(hx, half_a + k0)
    # t_k = hx^(a+k) e^-hx / Gamma(a+k+1) links successive gamma CDFs:
    # P(hx; a+k+1) = P(hx; a+k) - t_k
    t0 = math.exp((half_a + k0) * math.log(hx) - hx - math.lgamma(half_a + k0 + 1.0))

    total = w0 * p0
    mass = w0
    terms = 1
    converged_up = converged_down = False

    w, p, t = w0, p0, t0
    k = k0
    while terms < cap:
        w *= hr / (k + 1.0)
        p = max(p - t, 0.0)
        t *= hx / (half_a + k + 1.0)
        k += 1
        total += w * p
        mass += w
        terms += 1
        if 1.0 - mass < 1e-13:
            converged_up = converged_down = True
            break
        # geometric bound of the unadded upper Poisson tail
        q = hr / (k + 2.0)
        if q < 1.0 and w * q / (1.0 - q) < 5e-14:
            converged_up = True
            break

    if not converged_down:
        w, p, t = w0, p0, t0
        k = k0
        while k > 0 and terms < cap:
            t *= (half_a + k) / hx
            p = min(p + t, 1.0)
            w *= k / hr
            k -= 1
            total += w * p
            mass += w
            terms += 1
            if 1.0 - mass < 1e-13:
                converged_down = True
                break
            q = k / hr
            if q < 1.0 and w * q / (1.0 - q) < 5e-14:
                converged_down = True
                break
        else:
            converged_down = k == 0

    if not (converged_up and converged_down):
        raise ConvergenceError(
            f"ncx2_cdf truncation bound not met after {terms} terms "
            f"(x={x}, dof={params.dof}, r={params.noncentrality})"
        )
    return min(total, 1.0)


def absorption_complement(z0_half, alpha):
    """Survival mass 1 - P(z0/2; alpha) of the gamma mixing variable."""
    return 1.0 - reg_gamma_lower(z0_half, alpha)


def bessel_i(alpha, z, itmax=10_000):
    """Modified Bessel function of the first kind, by its power series.

    Test support only: used to validate the mixture decomposition of the
    noncentral chi-squared density.

    Args:
        alpha: order, alpha > -1
        z: argument, 0 <= z (overflow signaled for z large enough that the
            leading exponential growth exceeds double range)

    Returns:
        I_alpha(z) = sum_k (z/2)^(alpha+2k) / (k! Gamma(k+alpha+1))
    """
    if not (alpha > -1.0):
        raise ValueError(f"alpha must be > -1, got {alpha}")
    if not (z >= 0.0):
        raise ValueError(f"z must be >= 0, got {z}")
    if z > 700.0:
        raise OverflowError(f"bessel_i overflows double range for z={z}")
    if z == 0.0:
        return 1.0 if alpha == 0.0 else 0.0
    half = 0.5 * z
    term = math.exp(alpha * math.log(half) - math.lgamma(alpha + 1.0))
    total = term
    q = half * half
    for k in range(itmax):
        term *= q / ((k + 1.0) * (k + alpha + 1.0))
        total += term
        if term < total * _EPS:
            return total
    raise ConvergenceError(f"bessel_i series stalled at alpha={alpha}, z={z}")
