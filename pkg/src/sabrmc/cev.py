"""The CEV terminal distribution with absorption at zero, and its samplers.

The terminal value of dF = sigma F^beta dW with an absorbing origin has mean
F_0 regardless of beta and of the variance budget.  Its survival function is
a noncentral chi-squared CDF evaluated with the spatial variable in the
noncentrality slot, and its positive part can be sampled exactly through a
shifted-Poisson mixture of gamma variates:

    X ~ G(1/(2 beta*));  absorbed if X >= z0/2;
    else z_T = 2 G(Poisson(z0/2 - X) + 1), mapped back through z^-1.

The same machinery samples the Islah-style NCX2 approximation of the
conditional forward price, which is a power of a CEV variate with modified
elasticity.
"""

import math
from dataclasses import dataclass

import numpy as np

from .numerics import Ncx2Params, ncx2_cdf, reg_gamma_lower
from .sampling import sample_gamma, sample_poisson

__all__ = [
    "CevParams",
    "absorption_prob",
    "cev_sample",
    "cev_survival",
    "islah_dof",
    "islah_sample",
    "z_inverse",
    "z_transform",
]

_BETA_TOL = 1e-6


@dataclass(frozen=True)
class CevParams:
    """CEV distribution parameters.

    Attributes:
        beta: elasticity of variance, in (0, 1) away from both ends
            (beta = 1 belongs to the lognormal branch, beta = 0 out of scope)
        mean: distribution mean, >= 0 (0 means already absorbed)
        var_scale: total variance budget, > 0
    """

    beta: float
    mean: float
    var_scale: float

    def __post_init__(self):
        if not (_BETA_TOL < self.beta < 1.0 - _BETA_TOL):
            raise ValueError(f"beta must be inside ({_BETA_TOL}, {1 - _BETA_TOL}), got {self.beta}")
        if not (self.mean >= 0.0):
            raise ValueError(f"mean must be >= 0, got {self.mean}")
        if not (self.var_scale > 0.0):
            raise ValueError(f"var_scale must be > 0, got {self.var_scale}")

    @property
    def beta_star(self):
        return 1.0 - self.beta

    @property
    def alpha(self):
        """Gamma shape of the mixing variable, 1/(2 beta*) > 1/2."""
        return 0.5 / self.beta_star

    @property
    def z0(self):
        """z-coordinate of the mean."""
        return z_transform(self.mean, self)


def z_transform(y, params):
    """Map price y >= 0 to z = y^(2 beta*) / (beta*^2 var_scale)."""
    bs = params.beta_star
    return np.asarray(y, dtype=float) ** (2.0 * bs) / (bs * bs * params.var_scale)


def z_inverse(z, params):
    """Map z back to price y = (beta*^2 var_scale z)^(1/(2 beta*))."""
    bs = params.beta_star
    return (bs * bs * params.var_scale * np.asarray(z, dtype=float)) ** (0.5 / bs)


def cev_survival(y, params):
    """P(F_T > y) for y > 0, an NCX2 CDF with z(y) as noncentrality."""
    if not (y > 0.0):
        raise ValueError(f"y must be > 0, got {y}")
    if params.mean == 0.0:
        return 0.0
    return ncx2_cdf(float(params.z0), Ncx2Params(1.0 / params.beta_star, float(z_transform(y, params))))


def absorption_prob(params):
    """Mass at zero, 1 - P(z0/2; 1/(2 beta*))."""
    if params.mean == 0.0:
        return 1.0
    return 1.0 - reg_gamma_lower(0.5 * float(params.z0), params.alpha)


def cev_sample(stream, params, size=None):
    """Exact draw(s) from the CEV distribution.

    Gamma-Poisson-gamma composition: the single G(alpha) draw doubles as the
    absorption test (X >= z0/2 exactly reproduces the mass at zero), so no
    rejection loop is ever needed.

    Args:
        stream: RngStream to consume
        params: CevParams; mean 0 short-circuits to 0 (absorbed is permanent)
        size: None for a scalar, else number of draws

    Returns:
        float or ndarray of non-negative terminal values.
    """
    n = 1 if size is None else int(size)
    if params.mean == 0.0:
        return 0.0 if size is None else np.zeros(n)
    half_z0 = 0.5 * float(params.z0)
    x = sample_gamma(stream, params.alpha, n)
    out = np.zeros(n)
    alive = x < half_z0
    lam = half_z0 - x[alive]
    npois = sample_poisson(stream, lam)
    z_t = 2.0 * stream.generator.standard_gamma(npois + 1.0)
    out[alive] = z_inverse(z_t, params)
    return float(out[0]) if size is None else out


def islah_dof(beta, rho):
    """Degrees of freedom of the Islah NCX2 approximation, (1-b* rho^2)/(b* rho*^2)."""
    bs = 1.0 - beta
    rs2 = 1.0 - rho * rho
    return (1.0 - bs * rho * rho) / (bs * rs2)


def islah_sample(stream, beta, rho, f_prev, d_sigma_term, var_scale, size=None):
    """Draw(s) of the conditional forward price under the Islah approximation.

    The approximated price is a power of a CEV variate with modified
    elasticity beta' = beta / (1 - beta* rho^2):

        ((beta*'/beta*) F^(beta*))^(1/beta*') ~ CEV_beta'(fbar', var_scale)

    with fbar' = |(beta*'/beta*) (f_prev^(beta*) + d_sigma_term)|^(1/beta*').
    Samples the primed CEV exactly and inverts the power map.

    Args:
        stream: RngStream to consume
        beta: elasticity in (0, 1)
        rho: correlation in (-1, 1)
        f_prev: current forward price, > 0
        d_sigma_term: (beta* rho / nu) (sigma_next - sigma_t)
        var_scale: conditional variance budget rho*^2 sigma_t^2 h I, > 0
        size: None for a scalar, else number of draws

    Returns:
        float or ndarray of non-negative forward prices.
    """
    bs = 1.0 - beta
    if rho == 0.0:
        # exact collapse: beta' = beta and the power map is the identity
        mean = f_prev if d_sigma_term == 0.0 else abs(f_prev**bs + d_sigma_term) ** (1.0 / bs)
        return cev_sample(stream, CevParams(beta, mean, var_scale), size)
    denom = 1.0 - bs * rho * rho
    beta_p = beta / denom
    bs_p = 1.0 - beta_p
    fbar_p = abs(bs_p / bs * (f_prev**bs + d_sigma_term)) ** (1.0 / bs_p)
    y = cev_sample(stream, CevParams(beta_p, fbar_p, var_scale), size)
    return (bs / bs_p * np.asarray(y) ** bs_p) ** (1.0 / bs) if size is not None else float(
        (bs / bs_p * y**bs_p) ** (1.0 / bs)
    )
