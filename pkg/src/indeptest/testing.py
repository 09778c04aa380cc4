"""Permutation tests and the split -> train -> test pipeline."""

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import diffnet as dn
from .datasets import PairedSample
from .errors import ConfigError, PermutationError, TrainingDivergenceError
from .methods import get_method, objective_config_for
from .numkit import make_rng, stream_id

logger = logging.getLogger(__name__)

__all__ = [
    "SplitSpec",
    "TestResult",
    "TrainConfig",
    "RunConfig",
    "TrainOutcome",
    "permutation_test",
    "split_data",
    "split_indices",
    "train",
    "run_split_train_test",
]


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.2
    test_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if any(not 0.0 <= f <= 1.0 for f in fr):
            raise ConfigError(f"split fractions must lie in [0, 1], got {fr}")
        if not math.isclose(sum(fr), 1.0, abs_tol=1e-9):
            raise ConfigError(f"split fractions must sum to 1, got {sum(fr)}")


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this class

    statistic: float
    perm_values: tuple
    p_value: float
    reject: bool
    alpha: float
    seed: object = None

    @property
    def n_perm(self):
        return len(self.perm_values)


def permutation_test(stat_fn, sample, n_perm=500, alpha=0.05, rng=None, randomize_ties=False, fast=True):
    """Shuffle-y permutation test with the original pairing counted as permutation one.

    ``p = #{i : perm_i >= perm_1} / n_perm`` and the test rejects iff
    ``p <= alpha``. With ``randomize_ties`` the ties beyond the original are
    counted with a uniform random weight instead of fully.

    When ``stat_fn`` has a ``prepare`` method and ``fast`` is set, shuffles are
    evaluated through it, otherwise ``stat_fn(x, y_shuffled)`` is called for
    each one.
    """
    if n_perm < 2:
        raise ConfigError(f"n_perm must be >= 2, got {n_perm}")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if rng is None:
        raise ConfigError("permutation_test needs an rng")
    x, y = sample.x, sample.y
    m = x.shape[0]
    perms = [np.arange(m)] + [rng.permutation(m) for _ in range(n_perm - 1)]

    if fast and hasattr(stat_fn, "prepare"):
        at = stat_fn.prepare(x, y)
        evaluate = at
    else:
        evaluate = lambda p: stat_fn(x, y[p])  # noqa: E731

    values = np.empty(n_perm)
    for i, p in enumerate(perms):
        try:
            values[i] = float(evaluate(p))
        except Exception as exc:  # annotate with the offending index and re-raise
            raise PermutationError(f"statistic failed on permutation {i}: {exc}", index=i) from exc
    stat = values[0]
    if randomize_ties:
        greater = np.count_nonzero(values[1:] > stat)
        ties = np.count_nonzero(values[1:] == stat)
        p_value = (1.0 + greater + rng.uniform() * ties) / n_perm
    else:
        p_value = np.count_nonzero(values >= stat) / n_perm
    return TestResult(
        statistic=float(stat),
        perm_values=tuple(float(v) for v in values),
        p_value=float(p_value),
        reject=bool(p_value <= alpha),
        alpha=alpha,
    )


def split_indices(m, spec):
    """Row indices of the train, val and test parts for ``m`` points under ``spec``."""
    n_test = int(round(spec.test_frac * m))
    n_val = int(round(spec.val_frac * m))
    if n_test < 1:
        raise ConfigError(f"test split is empty for m={m} and test fraction {spec.test_frac}")
    n_train = m - n_test - n_val
    if n_train < 0:
        raise ConfigError("split fractions leave no room for the training split")
    idx = make_rng(spec.seed, stream_id("split")).permutation(m)
    return {"train": idx[:n_train], "val": idx[n_train : n_train + n_val], "test": idx[n_train + n_val :]}


def split_data(sample, spec):
    """Shuffle rows with ``spec.seed`` and cut into (train, val, test); val is None when empty."""
    idx = split_indices(sample.m, spec)
    val = sample.subset(idx["val"]) if len(idx["val"]) else None
    return sample.subset(idx["train"]), val, sample.subset(idx["test"])


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    lr: float = 1e-4
    batch_size: int = 512
    weight_decay: float = 0.01
    lam: float = 1e-8
    alpha: float = 0.05
    variant: str = None
    m_target: int = None
    n_gamma_perms: int = 20
    val_every: int = 1

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 2 or not self.lr > 0:
            raise ConfigError(f"invalid training settings: {self}")


@dataclass
class TrainOutcome:
    params: dn.ParamStore
    history: list = field(default_factory=list)
    best_epoch: int = None
    steps: int = 0


def _objective_cfg(method, tc):
    from .objectives import Variant

    variant = Variant(tc.variant) if tc.variant else None
    return objective_config_for(
        method, lam=tc.lam, alpha=tc.alpha, m_target=tc.m_target, variant=variant, n_gamma_perms=tc.n_gamma_perms
    )


def _batches(m, batch_size, rng):
    order = rng.permutation(m)
    n_full = max(1, m // batch_size)
    # drop the ragged tail so every step sees a full-size batch
    for b in range(n_full):
        yield order[b * batch_size : (b + 1) * batch_size]


def train(method, train_set, tc, rng, val_set=None, init=None):
    """Maximise the method objective with AdamW over epochs of shuffled minibatches.

    With a validation set the parameters with the best validation objective
    are returned. A non-finite objective or parameter raises
    :class:`TrainingDivergenceError` carrying the last good parameters.
    """
    if not method.trainable:
        return TrainOutcome(params=dn.ParamStore())
    cfg = _objective_cfg(method, tc)
    params = dn.ParamStore(init if init is not None else method.init_params(train_set, rng))
    state = dn.AdamWState()
    bs = min(tc.batch_size, train_set.m)
    out = TrainOutcome(params=params)
    best_val, best_params = -np.inf, params.copy()
    for epoch in range(tc.epochs):
        for idx in _batches(train_set.m, bs, rng):
            batch = train_set.subset(idx)
            try:
                val, grads = dn.grad(lambda p: method.objective(p, batch, cfg, rng), params)
                grads = {k: -g for k, g in grads.items()}
                params, state = dn.adamw_step(params, grads, state, tc.lr, weight_decay=tc.weight_decay)
            except TrainingDivergenceError as exc:
                raise TrainingDivergenceError(
                    f"training diverged at epoch {epoch}: {exc}", op=exc.op, checkpoint=params.copy()
                ) from exc
            out.steps += 1
        rec = {"epoch": epoch, "train_objective": float(val)}
        if val_set is not None and val_set.m >= 5 and (epoch % tc.val_every == 0 or epoch == tc.epochs - 1):
            vb = val_set if val_set.m <= 2 * bs else val_set.subset(np.arange(bs))
            try:
                v = float(dn.value_of(method.objective(params, vb, cfg, rng)))
            except TrainingDivergenceError:
                v = -np.inf
            rec["val_objective"] = v
            if v > best_val:
                best_val, best_params, out.best_epoch = v, params.copy(), epoch
        out.history.append(rec)
    out.params = best_params if out.best_epoch is not None else params
    return out


@dataclass(frozen=True)
class RunConfig:
    method: str = "hsic-m"
    split: SplitSpec = SplitSpec()
    train: TrainConfig = TrainConfig()
    n_perm: int = 500
    alpha: float = 0.05
    seed: int = 0

    def to_dict(self):
        return dataclasses.asdict(self)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(type(obj))


def run_split_train_test(config, dataset, manifest_path=None, checkpoint_path=None):
    """Split, train on the train split (skipped for median baselines), permutation-test the test split.

    Returns ``(params, TestResult)``. ``manifest_path`` receives a JSON echo
    of the config, seeds and split indices; ``checkpoint_path`` the trained
    parameters.
    """
    if not isinstance(dataset, PairedSample):
        raise ConfigError("dataset must be a PairedSample")
    method = get_method(config.method)
    idx = split_indices(dataset.m, config.split)
    tr, va, te = split_data(dataset, config.split)
    train_rng = make_rng(config.seed, stream_id("train", config.method))
    outcome = train(method, tr, config.train, train_rng, val_set=va)
    stat_rng = make_rng(config.seed, stream_id("statistic", config.method))
    stat = method.statistic(outcome.params, rng=stat_rng)
    test_rng = make_rng(config.seed, stream_id("permutation-test"))
    result = permutation_test(stat, te, n_perm=config.n_perm, alpha=config.alpha, rng=test_rng)
    result = dataclasses.replace(result, seed=config.seed)
    if checkpoint_path is not None and outcome.params:
        dn.save_params(checkpoint_path, outcome.params)
    if manifest_path is not None:
        manifest = {
            "config": config.to_dict(),
            "seed": config.seed,
            "provenance": dataset.provenance,
            "split_indices": idx,
            "checkpoint": str(checkpoint_path) if checkpoint_path and outcome.params else None,
            "train_steps": outcome.steps,
            "best_epoch": outcome.best_epoch,
            "result": {"statistic": result.statistic, "p_value": result.p_value, "reject": result.reject},
        }
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, default=_jsonable)
    return outcome.params, result
