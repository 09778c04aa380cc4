"""Test-statistic families: learned and median-bandwidth HSIC, neural critics, permuted MMD.

A :class:`Method` knows how to initialise trainable parameters, evaluate a
training objective on a minibatch, and turn frozen parameters into a
:class:`Statistic`. Statistics are callables ``stat(x, y) -> float`` that also
offer ``prepare(x, y)``, returning a function of a y-permutation. Permutation
tests use it to reuse Gram matrices or critic grids across shuffles.
"""

from dataclasses import dataclass

import numpy as np

from . import diffnet as dn
from .errors import ConfigError, ShapeError
from .estimators import infonce, mmd2_biased_perm, nds_stat, nwj
from .kernels import (
    DeepKernel,
    GramPair,
    LearnedGaussianKernel,
    hdgm_featurizer_widths,
    init_deep_kernel,
    median_heuristic_kernel,
)
from .numkit import make_rng, median_pairwise_sqdist, stream_id
from .objectives import ObjectiveConfig, Variant, j_hsic, j_nds

__all__ = [
    "METHODS",
    "Method",
    "Statistic",
    "HsicStatistic",
    "CriticStatistic",
    "MmdPermStatistic",
    "critic_grid",
    "critic_pairs",
    "critic_widths",
    "featurizer_widths",
    "get_method",
    "objective_config_for",
]


def _as_2d(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def featurizer_widths(d_side):
    """Per-side deep-kernel featurizer: d -> 2d -> 3d -> 2d, or 1 -> 8 -> 12 -> 8 for scalars."""
    return (1, 8, 12, 8) if d_side == 1 else hdgm_featurizer_widths(d_side)


def critic_widths(d_total):
    """Critic on concatenated pairs: d -> 2d -> 3d -> 2d -> 1, at least 8 hidden units wide."""
    if d_total <= 2:
        return (d_total, 8, 12, 8, 1)
    return (d_total, 2 * d_total, 3 * d_total, 2 * d_total, 1)


def critic_grid(params, x, y, prefix="c."):
    """``F[i, j] = f([x_i, y_j])`` for every pair, sharing the first layer across the grid."""
    x, y = _as_2d(x), _as_2d(y)
    m, dx = x.shape
    if y.shape[0] != m:
        raise ShapeError("x and y must have the same number of rows")
    w0 = params[f"{prefix}w0"]
    if dn.value_of(w0).shape[0] != dx + y.shape[1]:
        raise ShapeError("critic input width does not match x and y widths")
    a = x @ w0[:dx] + params[f"{prefix}b0"]
    b = y @ w0[dx:]
    h = a.shape[1] if not isinstance(a, dn.Node) else a.value.shape[1]
    pre = (a.reshape(m, 1, h) + b.reshape(1, m, h)).reshape(m * m, h)
    out = dn.mlp_forward(params, None, prefix=prefix, first_layer=pre)
    return out.reshape(m, m)


def critic_pairs(params, x, y, prefix="c."):
    """Critic values ``f([x_i, y_i])`` on the given pairing only."""
    z = np.concatenate([_as_2d(x), _as_2d(y)], axis=1)
    return dn.mlp_forward(params, z, prefix=prefix).reshape(-1)


class Statistic:
    """Base class: ``__call__`` evaluates once, ``prepare`` caches work for y-permutations."""

    def prepare(self, x, y):  # pragma: no cover - overridden
        raise NotImplementedError

    def __call__(self, x, y):
        return self.prepare(x, y)(np.arange(_as_2d(x).shape[0]))


class HsicStatistic(Statistic):
    """Unbiased (default) or biased HSIC of Gram matrices from two kernel callables."""

    def __init__(self, gram_x, gram_y, biased=False):
        self.gram_x = gram_x
        self.gram_y = gram_y
        self.biased = biased

    def grams(self, x, y):
        return np.asarray(dn.value_of(self.gram_x(x))), np.asarray(dn.value_of(self.gram_y(y)))

    def prepare(self, x, y):
        K, L = self.grams(x, y)
        m = K.shape[0]
        if self.biased:
            # <HKH, L_p> / m^2 equals the biased HSIC of (K, L_p)
            Kc = K - K.mean(axis=0) - K.mean(axis=1)[:, None] + K.mean()
            return lambda p: float((Kc * L[np.ix_(p, p)]).sum() / m**2)
        if m < 4:
            raise ShapeError("unbiased HSIC needs m >= 4")
        off = 1.0 - np.eye(m)
        Kt, Lt = K * off, L * off
        one_K, one_L = Kt.sum(axis=1), Lt.sum(axis=1)
        const = one_K.sum() * one_L.sum() / ((m - 1) * (m - 2))

        def at(p):
            kl = (Kt * Lt[np.ix_(p, p)]).sum()
            cross = one_K @ one_L[p]
            return float((kl + const - 2.0 * cross / (m - 2)) / (m * (m - 3)))

        return at


class CriticStatistic(Statistic):
    """NDS, InfoNCE or NWJ computed from the critic grid; permuting y permutes grid columns."""

    KINDS = {"nds": nds_stat, "infonce": infonce, "nwj": nwj}

    def __init__(self, grid_fn, kind, pair_fn=None):
        if kind not in self.KINDS:
            raise ConfigError(f"unknown critic statistic {kind!r}")
        self.grid_fn = grid_fn
        self.kind = kind
        self.pair_fn = pair_fn

    def __call__(self, x, y):
        if self.kind == "nds" and self.pair_fn is not None:
            return float(np.mean(dn.value_of(self.pair_fn(x, y))))
        return super().__call__(x, y)

    def prepare(self, x, y):
        F = np.asarray(dn.value_of(self.grid_fn(x, y)))
        fn = self.KINDS[self.kind]
        return lambda p: float(fn(F[:, p]))


class MmdPermStatistic(Statistic):
    """Biased MMD^2 between the paired sample and one y-shuffled copy.

    The shuffle is a fixed function of ``seed`` and the sample size, so the
    statistic stays deterministic across the permutation test.
    """

    def __init__(self, gram_x, gram_y, seed):
        self.gram_x = gram_x
        self.gram_y = gram_y
        self.seed = int(seed)

    def shuffle(self, m):
        return make_rng(self.seed, stream_id("mmd-perm-shuffle", m)).permutation(m)

    def prepare(self, x, y):
        K = np.asarray(dn.value_of(self.gram_x(x)))
        L = np.asarray(dn.value_of(self.gram_y(y)))
        s = self.shuffle(K.shape[0])
        return lambda p: mmd2_biased_perm(GramPair(K, L[np.ix_(p, p)]), [s])


def _median_gram(data):
    return median_heuristic_kernel(_as_2d(data)).gram(_as_2d(data))


@dataclass(frozen=True)
class Method:
    """One statistic family. ``trainable`` families implement ``init_params`` and ``objective``."""

    name: str
    trainable: bool

    def default_variant(self):
        return None

    def init_params(self, train, rng):
        return dn.ParamStore()

    def objective(self, params, batch, cfg, rng=None):
        raise ConfigError(f"{self.name} has no training objective")

    def statistic(self, params, rng=None):
        raise NotImplementedError


@dataclass(frozen=True)
class DeepHsic(Method):
    tied: bool = False

    def _kernels(self):
        return DeepKernel("x."), DeepKernel("x." if self.tied else "y.")

    def default_variant(self):
        return Variant.HSIC_PLAIN

    def init_params(self, train, rng):
        x, y = _as_2d(train.x), _as_2d(train.y)
        if self.tied and x.shape[1] != y.shape[1]:
            raise ConfigError("tied featurizers need equal x and y widths")
        params = dn.ParamStore()
        sides = [("x.", x)] if self.tied else [("x.", x), ("y.", y)]
        for prefix, data in sides:
            sub = data[: min(len(data), 500)]
            params.update(init_deep_kernel(featurizer_widths(data.shape[1]), rng, prefix))
            feats = dn.mlp_forward(params, sub, prefix=f"{prefix}net.")
            med_f = median_pairwise_sqdist(feats)
            med_x = median_pairwise_sqdist(sub)
            if med_f > 0:
                params[f"{prefix}log_bw_feat"] = np.array(0.5 * np.log(med_f))
            if med_x > 0:
                params[f"{prefix}log_bw_smooth"] = np.array(0.5 * np.log(med_x))
        return params

    def grams(self, params, x, y):
        kx, ky = self._kernels()
        return GramPair(kx.gram(x, params), ky.gram(y, params))

    def objective(self, params, batch, cfg, rng=None):
        return j_hsic(self.grams(params, batch.x, batch.y), cfg, rng)

    def statistic(self, params, rng=None):
        kx, ky = self._kernels()
        return HsicStatistic(lambda a: kx.gram(a, params), lambda b: ky.gram(b, params))


@dataclass(frozen=True)
class GaussianHsic(Method):
    """HSIC with one learned Gaussian bandwidth per side, initialised by the median heuristic."""

    def default_variant(self):
        return Variant.HSIC_PLAIN

    def init_params(self, train, rng):
        params = dn.ParamStore()
        for prefix, data in (("x.", train.x), ("y.", train.y)):
            med = median_pairwise_sqdist(_as_2d(data)[:500])
            params[f"{prefix}log_bw"] = np.array(0.5 * np.log(med) if med > 0 else 0.0)
        return params

    def grams(self, params, x, y):
        return GramPair(LearnedGaussianKernel("x.").gram(x, params), LearnedGaussianKernel("y.").gram(y, params))

    def objective(self, params, batch, cfg, rng=None):
        return j_hsic(self.grams(params, batch.x, batch.y), cfg, rng)

    def statistic(self, params, rng=None):
        kx, ky = LearnedGaussianKernel("x."), LearnedGaussianKernel("y.")
        return HsicStatistic(lambda a: kx.gram(a, params), lambda b: ky.gram(b, params))


@dataclass(frozen=True)
class MedianHsic(Method):
    """HSIC with median-heuristic bandwidths taken from the sample under test."""

    def statistic(self, params=None, rng=None):
        return HsicStatistic(_median_gram, _median_gram)


@dataclass(frozen=True)
class Critic(Method):
    kind: str = "nds"

    def default_variant(self):
        return Variant.NDS_WITH_THRESHOLD if self.kind == "nds" else None

    def init_params(self, train, rng):
        d = _as_2d(train.x).shape[1] + _as_2d(train.y).shape[1]
        return dn.ParamStore(dn.init_mlp(dn.MlpSpec(critic_widths(d)), rng, prefix="c."))

    def objective(self, params, batch, cfg, rng=None):
        F = critic_grid(params, batch.x, batch.y)
        if self.kind == "nds":
            return j_nds(F, cfg)
        return CriticStatistic.KINDS[self.kind](F)

    def statistic(self, params, rng=None):
        return CriticStatistic(
            lambda x, y: critic_grid(params, x, y), self.kind, pair_fn=lambda x, y: critic_pairs(params, x, y)
        )


@dataclass(frozen=True)
class MmdPerm(Method):
    """Median-bandwidth product kernel, MMD^2 against one fixed shuffle drawn from ``rng``."""

    def statistic(self, params=None, rng=None):
        if rng is None:
            raise ConfigError("MMD-perm needs an rng to fix its shuffle")
        return MmdPermStatistic(_median_gram, _median_gram, rng.integers(2**63))


METHODS = {
    "hsic-d": DeepHsic("hsic-d", True),
    "hsic-dx": DeepHsic("hsic-dx", True, tied=True),
    "hsic-o": GaussianHsic("hsic-o", True),
    "hsic-m": MedianHsic("hsic-m", False),
    "nds": Critic("nds", True, kind="nds"),
    "infonce": Critic("infonce", True, kind="infonce"),
    "nwj": Critic("nwj", True, kind="nwj"),
    "mmd-perm": MmdPerm("mmd-perm", False),
}


def get_method(name):
    try:
        return METHODS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown method {name!r}; choose from {sorted(METHODS)}") from None


def objective_config_for(method, **overrides):
    """``ObjectiveConfig`` with the family default variant unless one is given."""
    if overrides.get("variant") is None:
        overrides["variant"] = method.default_variant()
    return ObjectiveConfig(**overrides)
