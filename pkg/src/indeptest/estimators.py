"""HSIC estimators, critic-based statistics and the permuted MMD estimator.

Functions taking a :class:`~indeptest.kernels.GramPair` or a critic grid work
on plain arrays and on tape nodes alike. A critic grid ``F`` is the m x m
matrix ``F[i, j] = f(x_i, y_j)``; its diagonal holds the paired values.
"""

from dataclasses import dataclass

import numpy as np

from . import diffnet as dn
from .errors import InvalidPermutationError, SampleSizeError

__all__ = [
    "VarianceEstimate",
    "hsic_biased",
    "hsic_unbiased",
    "hsic_variance",
    "nds_stat",
    "t0_vstat",
    "infonce",
    "nwj",
    "sample_variances",
    "mmd2_biased_perm",
    "check_permutation",
]


def _m(g):
    return dn.value_of(g.K).shape[0]


def hsic_biased(g):
    """``<K, H L H>_F / m^2`` using row/column/grand means instead of products with H."""
    m = _m(g)
    if m < 2:
        raise SampleSizeError("biased HSIC needs m >= 2")
    K, L = g.K, g.L
    k_row = K.mean(axis=1)
    l_row = L.mean(axis=1)
    return (K * L).mean() - 2.0 * (k_row * l_row).mean() + K.mean() * L.mean()


def _unbiased_parts(Kt, Lt, m):
    one_K = Kt.sum(axis=1)
    one_L = Lt.sum(axis=1)
    KL = (Kt * Lt).sum()
    sK = one_K.sum()
    sL = one_L.sum()
    cross = (one_K * one_L).sum()
    value = (KL + sK * sL / ((m - 1) * (m - 2)) - 2.0 * cross / (m - 2)) / (m * (m - 3))
    return value, one_K, one_L, KL, sK, sL, cross


def hsic_unbiased(g):
    m = _m(g)
    if m < 4:
        raise SampleSizeError("unbiased HSIC needs m >= 4")
    eye = np.eye(m)
    return _unbiased_parts(g.K * (1.0 - eye), g.L * (1.0 - eye), m)[0]


@dataclass
class VarianceEstimate:
    sigma2: object
    R: object
    hsic_u: object
    lam: float


def hsic_variance(g, lam=1e-8):
    """Regularized asymptotic variance ``16 (R - HSIC_u^2) + lam`` (clamped below at ``lam``).

    ``R`` comes from the O(m^2) h-vector form of the per-index second moment.
    """
    m = _m(g)
    if m < 5:
        raise SampleSizeError("HSIC variance needs m >= 5")
    eye = np.eye(m)
    Kt = g.K * (1.0 - eye)
    Lt = g.L * (1.0 - eye)
    hsic_u, one_K, one_L, KL, sK, sL, cross = _unbiased_parts(Kt, Lt, m)
    n = float(m)
    KLt1 = Kt @ one_L
    LKt1 = Lt @ one_K
    ones = np.ones(m)
    h = (
        (n - 2) ** 2 * (Kt * Lt).sum(axis=1)
        - n * one_K * one_L
        + sL * one_K
        + sK * one_L
        - cross * ones
        + (n - 2) * (KL * ones - KLt1 - LKt1)
    )
    # ((n-4)!)^2 / (4 n ((n-1)!)^2) == 1 / (4 n ((n-1)(n-2)(n-3))^2)
    scale = 1.0 / (4.0 * n * ((n - 1) * (n - 2) * (n - 3)) ** 2)
    R = scale * (h * h).sum()
    sigma2 = dn.clamp_min(16.0 * (R - hsic_u * hsic_u), 0.0) + lam
    return VarianceEstimate(sigma2=sigma2, R=R, hsic_u=hsic_u, lam=lam)


def _grid_diag(F):
    m = dn.value_of(F).shape[0]
    idx = np.arange(m)
    return F[idx, idx]


def nds_stat(F):
    """Mean critic value over the true pairs."""
    return _grid_diag(F).mean()


def t0_vstat(F):
    """Mean critic value over all m^2 cross pairs."""
    return F.mean()


def infonce(F):
    m = dn.value_of(F).shape[0]
    if m < 2:
        raise SampleSizeError("InfoNCE needs m >= 2")
    return _grid_diag(F).mean() - (dn.logsumexp(F, axis=1) - np.log(m)).mean()


def nwj(F):
    m = dn.value_of(F).shape[0]
    if m < 2:
        raise SampleSizeError("NWJ needs m >= 2")
    # e^{-1} mean(e^F) = exp(logsumexp(F) - log(m^2) - 1)
    return _grid_diag(F).mean() - dn.exp(dn.logsumexp(F) - 2.0 * np.log(m) - 1.0)


def sample_variances(F, lam=1e-8):
    """Regularized biased variances ``(tau1_sq, tau0_sq)`` of paired and cross critic values."""
    diag = _grid_diag(F)
    d = diag - diag.mean()
    tau1_sq = (d * d).mean() + lam
    c = F - F.mean()
    tau0_sq = (c * c).mean() + lam
    return tau1_sq, tau0_sq


def check_permutation(perm, m):
    perm = np.asarray(perm)
    if perm.shape != (m,) or not np.array_equal(np.sort(perm), np.arange(m)):
        raise InvalidPermutationError("permutation is not a bijection on range(m)")
    return perm


def mmd2_biased_perm(g, perms):
    """Biased MMD^2 between the paired sample and its union of y-permuted copies.

    With ``perms = [s_1..s_p]`` this is
    ``mean(K*L) - 2/(m^2 p) sum k_ij l_{i,s_q(j)} + 1/(m^2 p^2) sum k_ij l_{s_q(i), s_r(j)}``,
    computed through the averaged permutation matrix ``P[i, t] = #{q: s_q(i) = t} / p``.
    """
    K = np.asarray(dn.value_of(g.K))
    L = np.asarray(dn.value_of(g.L))
    m = K.shape[0]
    perms = [check_permutation(s, m) for s in perms]
    if not perms:
        raise InvalidPermutationError("need at least one permutation")
    p = len(perms)
    t1 = (K * L).sum()
    if p == 1:
        # P is a permutation matrix: L P^T = L[:, s] and P L P^T = L[s][:, s]
        s = perms[0]
        t2 = (K * L[:, s]).sum()
        t3 = (K * L[np.ix_(s, s)]).sum()
    else:
        P = np.zeros((m, m))
        rows = np.arange(m)
        for s in perms:
            P[rows, s] += 1.0
        P /= p
        t2 = (K * (L @ P.T)).sum()
        t3 = (K * (P @ L @ P.T)).sum()
    return float((t1 - 2.0 * t2 + t3) / m**2)
