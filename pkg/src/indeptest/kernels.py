"""Gaussian kernels, deep mixture kernels and Gram-matrix pairs.

Every kernel exposes ``gram(X, params=None)``. When ``params`` holds tape
nodes the returned matrix is a node, so the objectives can differentiate
through Gram entries into bandwidths, mixture weights and featurizer weights.
Gaussian kernels use ``exp(-|x - x'|^2 / (2 sigma^2))`` with ``sigma`` the
bandwidth.
"""

from dataclasses import dataclass

import numpy as np

from . import diffnet as dn
from .errors import DegenerateDataError, DomainError, ShapeError
from .numkit import median_pairwise_sqdist

__all__ = [
    "GaussianKernel",
    "LearnedGaussianKernel",
    "DeepKernel",
    "GramPair",
    "sqdist_matrix",
    "gaussian_eval",
    "deep_kernel_eval",
    "gram_pair",
    "median_heuristic_kernel",
    "init_deep_kernel",
    "hdgm_featurizer_widths",
]


def _as_2d(X):
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def sqdist_matrix(A):
    """Pairwise squared distances between rows; exact zeros on the diagonal."""
    m = dn.value_of(A).shape[0]
    sq = (A * A).sum(axis=1)
    D = sq.reshape(-1, 1) + sq.reshape(1, -1) - 2.0 * (A @ A.T)
    return dn.clamp_min(D, 0.0) * (1.0 - np.eye(m))


def _gauss_from_sqdist(D, log_bw):
    # exp(-D / (2 sigma^2)) with sigma = exp(log_bw)
    return dn.exp(D * (-0.5 * dn.exp(-2.0 * log_bw)))


@dataclass(frozen=True)
class GaussianKernel:
    bandwidth: float

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise DomainError(f"bandwidth must be positive, got {self.bandwidth}")

    def __call__(self, x, xp):
        return gaussian_eval(self, x, xp)

    def gram(self, X, params=None):
        X = _as_2d(X)
        return np.exp(-sqdist_matrix(X) / (2.0 * self.bandwidth**2))


def gaussian_eval(k, x, xp):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    if x.shape != xp.shape:
        raise ShapeError(f"dimension mismatch {x.shape} vs {xp.shape}")
    diff = x - xp
    return float(np.exp(-(diff @ diff) / (2.0 * k.bandwidth**2)))


def median_heuristic_kernel(points):
    """Gaussian kernel with ``bandwidth**2`` equal to the lower-median squared distance."""
    med = median_pairwise_sqdist(points)
    if med <= 0.0:
        raise DegenerateDataError("median pairwise distance is zero")
    return GaussianKernel(float(np.sqrt(med)))


@dataclass(frozen=True)
class LearnedGaussianKernel:
    """Gaussian kernel whose log-bandwidth lives in the parameter store."""

    prefix: str

    def gram(self, X, params):
        return _gauss_from_sqdist(sqdist_matrix(_as_2d(X)), params[f"{self.prefix}log_bw"])

    def bandwidth(self, params):
        return float(np.exp(dn.value_of(params[f"{self.prefix}log_bw"])))


@dataclass(frozen=True)
class DeepKernel:
    """``(1 - eps) * kappa(f(x), f(x')) + eps * q(x, x')``.

    Parameters read from the store under ``prefix``: the featurizer MLP
    (``net.w*``/``net.b*``), ``log_bw_feat`` for kappa, ``log_bw_smooth``
    for q and ``mix_logit`` with ``eps = sigmoid(mix_logit)``. Two kernels
    sharing a prefix share (alias) their parameters.
    """

    prefix: str

    def features(self, X, params):
        return dn.mlp_forward(params, _as_2d(X), prefix=f"{self.prefix}net.")

    def gram(self, X, params):
        X = _as_2d(X)
        p = self.prefix
        feats = self.features(X, params)
        kappa = _gauss_from_sqdist(sqdist_matrix(feats), params[f"{p}log_bw_feat"])
        q = _gauss_from_sqdist(sqdist_matrix(X), params[f"{p}log_bw_smooth"])
        eps = dn.sigmoid(params[f"{p}mix_logit"])
        return (1.0 - eps) * kappa + eps * q

    def eps(self, params):
        return float(dn.sigmoid(dn.value_of(params[f"{self.prefix}mix_logit"])))

    def __call__(self, params, x, xp):
        return deep_kernel_eval(self, params, x, xp)


def deep_kernel_eval(dk, params, x, xp):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    if x.shape != xp.shape:
        raise ShapeError(f"dimension mismatch {x.shape} vs {xp.shape}")
    G = dk.gram(np.stack([x, xp]), params)
    return float(dn.value_of(G)[0, 1]) if not np.array_equal(x, xp) else float(dn.value_of(G)[0, 0])


def hdgm_featurizer_widths(d_side):
    """Featurizer widths used for HDGM: d/2 -> d -> 3d/2 -> d for a side of width d/2."""
    return (d_side, 2 * d_side, 3 * d_side, 2 * d_side)


def init_deep_kernel(widths, rng, prefix, bandwidth=1.0, eps=0.01, jitter=0.1):
    spec = dn.MlpSpec(tuple(int(w) for w in widths))
    out = dn.init_mlp(spec, rng, prefix=f"{prefix}net.")
    out[f"{prefix}log_bw_feat"] = np.array(np.log(bandwidth) + jitter * rng.standard_normal())
    out[f"{prefix}log_bw_smooth"] = np.array(np.log(bandwidth) + jitter * rng.standard_normal())
    out[f"{prefix}mix_logit"] = np.array(np.log(eps / (1.0 - eps)))
    return out


@dataclass
class GramPair:
    K: object
    L: object

    @property
    def m(self):
        return dn.value_of(self.K).shape[0]

    @property
    def K_tilde(self):
        return self.K * (1.0 - np.eye(self.m))

    @property
    def L_tilde(self):
        return self.L * (1.0 - np.eye(self.m))


def gram_pair(kernel_x, kernel_y, sample, params=None):
    """Gram matrices of ``sample.x`` under ``kernel_x`` and ``sample.y`` under ``kernel_y``."""
    return GramPair(kernel_x.gram(sample.x, params), kernel_y.gram(sample.y, params))
