"""Signal-to-noise training objectives and the gamma-approximated HSIC threshold."""

import enum
from dataclasses import dataclass

import numpy as np

from . import diffnet as dn
from .errors import ConfigError, GradientUnavailableError, SampleSizeError, ThresholdUnavailableError
from .estimators import hsic_biased, hsic_variance, nds_stat, sample_variances, t0_vstat
from .kernels import GramPair
from .numkit import gamma_cdf, gamma_pdf, gamma_quantile, normal_quantile

__all__ = [
    "Variant",
    "ObjectiveConfig",
    "GammaThreshold",
    "j_nds",
    "j_hsic",
    "gamma_threshold",
    "gamma_params_from_moments",
    "gamma_threshold_grad",
]


class Variant(str, enum.Enum):
    NDS_WITH_THRESHOLD = "nds_with_threshold"
    NDS_PLAIN = "nds_plain"
    HSIC_PLAIN = "hsic_plain"
    HSIC_WITH_GAMMA_THRESHOLD = "hsic_with_gamma_threshold"


@dataclass(frozen=True)
class ObjectiveConfig:
    lam: float = 1e-8
    alpha: float = 0.05
    m_target: int = None  # None: use the batch size
    variant: Variant = None  # None: the family default
    n_gamma_perms: int = 20

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be nonnegative, got {self.lam}")
        if self.m_target is not None and self.m_target < 1:
            raise ConfigError(f"m_target must be >= 1, got {self.m_target}")


def j_nds(F, cfg=ObjectiveConfig()):
    """SNR of the paired-mean statistic minus the normal threshold term.

    ``F`` is the critic grid of the batch; with the plain variant the
    threshold term is dropped.
    """
    m = dn.value_of(F).shape[0]
    if m < 2:
        raise SampleSizeError("NDS objective needs a batch of at least 2")
    tau1_sq, tau0_sq = sample_variances(F, cfg.lam)
    tau1 = dn.sqrt(tau1_sq)
    snr = (nds_stat(F) - t0_vstat(F)) / tau1
    if cfg.variant == Variant.NDS_PLAIN:
        return snr
    m_t = cfg.m_target or m
    return snr - dn.sqrt(tau0_sq) / (np.sqrt(m_t) * tau1) * float(normal_quantile(1.0 - cfg.alpha))


def j_hsic(g, cfg=ObjectiveConfig(), rng=None):
    """``HSIC_u / sigma_H1`` with optional gamma threshold term ``r / (m_target sigma_H1)``."""
    m = dn.value_of(g.K).shape[0]
    if m < 5:
        raise SampleSizeError("HSIC objective needs a batch of at least 5")
    var = hsic_variance(g, cfg.lam)
    sigma = dn.sqrt(var.sigma2)
    out = var.hsic_u / sigma
    if cfg.variant == Variant.HSIC_WITH_GAMMA_THRESHOLD:
        if rng is None:
            raise ConfigError("gamma threshold variant needs an rng for its permutations")
        thr = gamma_threshold(g, cfg.alpha, n_perms=cfg.n_gamma_perms, rng=rng)
        m_t = cfg.m_target or m
        out = out - thr.r / (float(m_t) * sigma)
    return out


@dataclass
class GammaThreshold:
    r: object
    nu: object
    theta: object
    mean: object
    var: object


def gamma_params_from_moments(mean, var, m):
    """Shape ``mean^2/var`` and scale ``m var/mean`` matching ``m * HSIC_b``."""
    return mean * mean / var, m * var / mean


def gamma_threshold(g, alpha=0.05, n_perms=20, rng=None):
    """Gamma-approximated ``1 - alpha`` quantile of ``m * HSIC_b`` under the null.

    The null mean and variance of the biased HSIC come from ``n_perms``
    in-batch random permutations of the y Gram matrix. Differentiable through
    the Gram entries when they are tape nodes.
    """
    if rng is None:
        raise ConfigError("gamma_threshold needs an rng")
    if n_perms < 2:
        raise ConfigError("gamma_threshold needs at least 2 permutations")
    m = dn.value_of(g.K).shape[0]
    vals = []
    for _ in range(n_perms):
        p = rng.permutation(m)
        vals.append(hsic_biased(GramPair(g.K, g.L[np.ix_(p, p)])))
    mean = vals[0]
    for v in vals[1:]:
        mean = mean + v
    mean = mean / float(n_perms)
    ss = 0.0
    for v in vals:
        d = v - mean
        ss = ss + d * d
    var = ss / float(n_perms - 1)
    mu_v, var_v = float(dn.value_of(mean)), float(dn.value_of(var))
    if not (mu_v > 0 and var_v > 0):
        raise ThresholdUnavailableError(f"degenerate null moments mean={mu_v}, var={var_v}")
    nu, theta = gamma_params_from_moments(mean, var, float(m))
    nu_v, th_v = float(dn.value_of(nu)), float(dn.value_of(theta))
    r_v = gamma_quantile(1.0 - alpha, nu_v, th_v)
    if isinstance(nu, dn.Node):
        d_nu, d_theta = gamma_threshold_grad(r_v, nu_v, th_v)
        r = dn.custom_scalar_op(r_v, (nu, theta), (d_nu, d_theta), "gamma_quantile")
    else:
        r = r_v
    return GammaThreshold(r=r, nu=nu, theta=theta, mean=mean, var=var)


def gamma_threshold_grad(r, nu, theta, rel_step=1e-5):
    """Implicit-function partials ``(dr/dnu, dr/dtheta)`` of ``r = F^{-1}_{nu,theta}(1 - alpha)``.

    The scale partial of the cdf has the closed form
    ``-(r/theta)^nu exp(-r/theta) / (theta Gamma(nu))``; the shape partial is a
    central finite difference with step ``rel_step * nu``.
    """
    from scipy.special import gammaln

    if not (np.isfinite(r) and r > 0):
        raise GradientUnavailableError(f"threshold {r} is not a positive finite value")
    dens = gamma_pdf(r, nu, theta)
    if not dens > 0:
        raise GradientUnavailableError("gamma density vanishes at the threshold")
    z = r / theta
    dF_dtheta = -np.exp(nu * np.log(z) - z - gammaln(nu)) / theta
    h = rel_step * nu
    dF_dnu = (gamma_cdf(r, nu + h, theta) - gamma_cdf(r, nu - h, theta)) / (2.0 * h)
    return -dF_dnu / dens, -dF_dtheta / dens
