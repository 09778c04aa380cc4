import json
import math
from dataclasses import dataclass

import numpy as np
import pytest

from indeptest import diffnet as dn
from indeptest.datasets import PairedSample, sample_hdgm, sample_sinusoid
from indeptest.errors import ConfigError, PermutationError, TrainingDivergenceError
from indeptest.methods import Method, get_method
from indeptest.numkit import make_rng
from indeptest.testing import (
    RunConfig,
    SplitSpec,
    TrainConfig,
    permutation_test,
    run_split_train_test,
    split_data,
    train,
)


def _corr_stat(x, y):
    return float(np.corrcoef(x[:, 0], y[:, 0])[0, 1])


def test_constant_statistic_gives_p_one(rng):
    s = sample_hdgm(4, 20, rng)
    r = permutation_test(lambda x, y: 3.0, s, n_perm=50, rng=rng)
    assert r.p_value == 1.0 and not r.reject


def test_dominant_statistic_gives_minimal_p(rng):
    x = np.arange(40.0)
    s = PairedSample(x, x)
    r = permutation_test(lambda a, b: float(np.array_equal(a, b)), s, n_perm=100, alpha=0.05, rng=rng)
    assert r.p_value == pytest.approx(1 / 100) and r.reject


def test_result_invariants(rng):
    s = sample_hdgm(4, 30, rng)
    for _ in range(5):
        r = permutation_test(_corr_stat, s, n_perm=60, alpha=0.1, rng=rng)
        assert r.perm_values[0] == r.statistic
        assert len(r.perm_values) == 60 == r.n_perm
        assert r.p_value == pytest.approx(sum(v >= r.statistic for v in r.perm_values) / 60)
        assert r.p_value >= 1 / 60
        assert r.reject == (r.p_value <= 0.1)


def test_p_value_monotone_in_statistic():
    # with shuffled values held fixed, raising the statistic can only lower p
    fixed = np.linspace(-1, 1, 49)
    ps = []
    for stat in np.linspace(-1.5, 1.5, 31):
        vals = np.concatenate([[stat], fixed])
        ps.append(np.count_nonzero(vals >= stat) / 50)
    assert all(b <= a for a, b in zip(ps, ps[1:]))


def test_fast_and_plain_paths_agree(rng):
    s = sample_hdgm(4, 40, rng)
    stat = get_method("hsic-m").statistic()
    a = permutation_test(stat, s, n_perm=80, rng=make_rng(5))
    b = permutation_test(stat, s, n_perm=80, rng=make_rng(5), fast=False)
    np.testing.assert_allclose(a.perm_values, b.perm_values, rtol=1e-10, atol=1e-15)
    assert a.p_value == b.p_value


def test_failure_reports_permutation_index(rng):
    calls = {"n": 0}

    def flaky(x, y):
        calls["n"] += 1
        if calls["n"] == 4:
            raise FloatingPointError("boom")
        return 0.0

    with pytest.raises(PermutationError) as info:
        permutation_test(flaky, sample_hdgm(4, 10, rng), n_perm=10, rng=rng)
    assert info.value.index == 3


def test_argument_validation(rng):
    s = sample_hdgm(4, 10, rng)
    with pytest.raises(ConfigError):
        permutation_test(_corr_stat, s, n_perm=1, rng=rng)
    with pytest.raises(ConfigError):
        permutation_test(_corr_stat, s, alpha=0.0, rng=rng)


def test_randomized_ties_never_exceed_conservative_p(rng):
    s = sample_hdgm(4, 12, rng)
    r0 = permutation_test(lambda x, y: 1.0, s, n_perm=20, rng=make_rng(1))
    r1 = permutation_test(lambda x, y: 1.0, s, n_perm=20, rng=make_rng(1), randomize_ties=True)
    assert r1.p_value <= r0.p_value and r1.p_value >= 1 / 20


def test_exact_level_any_fixed_statistic():
    n_sets, alpha = 2000, 0.05
    rng = make_rng(77)
    rejects = 0
    for _ in range(n_sets):
        x = rng.standard_normal(15)
        y = rng.standard_normal(15)
        rejects += permutation_test(_corr_stat, PairedSample(x, y), n_perm=40, alpha=alpha, rng=rng).reject
    assert rejects / n_sets <= alpha + 3 * math.sqrt(alpha * (1 - alpha) / n_sets)


def test_split_sizes_and_partition():
    s = sample_hdgm(4, 10, make_rng(0))
    tr, va, te = split_data(s, SplitSpec(0.7, 0.2, 0.1, seed=1))
    assert (tr.m, va.m, te.m) == (7, 2, 1)
    rows = np.vstack([tr.x, va.x, te.x])
    assert sorted(map(tuple, rows)) == sorted(map(tuple, s.x))
    big = sample_hdgm(4, 1000, make_rng(0))
    tr, va, te = split_data(big, SplitSpec(0.6, 0.0, 0.4))
    assert va is None and (tr.m, te.m) == (600, 400)
    # pairing preserved
    lookup = {tuple(x): tuple(y) for x, y in zip(big.x, big.y)}
    assert all(lookup[tuple(x)] == tuple(y) for x, y in zip(te.x, te.y))


def test_split_errors():
    with pytest.raises(ConfigError):
        SplitSpec(0.5, 0.2, 0.2)
    with pytest.raises(ConfigError):
        SplitSpec(1.2, -0.2, 0.0)
    with pytest.raises(ConfigError):
        split_data(sample_hdgm(4, 4, make_rng(0)), SplitSpec(0.9, 0.0, 0.1))


def test_split_is_deterministic():
    s = sample_hdgm(4, 50, make_rng(0))
    a = split_data(s, SplitSpec(seed=3))
    b = split_data(s, SplitSpec(seed=3))
    assert np.array_equal(a[2].x, b[2].x)


def test_pipeline_median_baseline_on_sinusoid(tmp_path):
    data = sample_sinusoid(4, 400, make_rng(1))
    cfg = RunConfig(method="hsic-m", split=SplitSpec(0.5, 0.0, 0.5), n_perm=100, seed=2)
    params, res = run_split_train_test(cfg, data, manifest_path=tmp_path / "m.json")
    assert len(params) == 0
    assert 1 / 100 <= res.p_value <= 1.0 and res.seed == 2
    manifest = json.loads((tmp_path / "m.json").read_text())
    assert manifest["config"]["method"] == "hsic-m"
    assert len(manifest["split_indices"]["test"]) == 200


def test_pipeline_is_bit_reproducible(tmp_path):
    data = sample_hdgm(4, 300, make_rng(3))
    cfg = RunConfig(
        method="nds",
        split=SplitSpec(0.6, 0.2, 0.2, seed=1),
        train=TrainConfig(epochs=3, lr=1e-3, batch_size=64),
        n_perm=50,
        seed=9,
    )
    p1, r1 = run_split_train_test(cfg, data, checkpoint_path=tmp_path / "a.npz")
    p2, r2 = run_split_train_test(cfg, data)
    assert r1 == r2
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)
    back = dn.load_params(tmp_path / "a.npz")
    assert all(np.array_equal(back[k], p1[k]) for k in p1)


def test_infonce_learns_perfect_dependence():
    rng = make_rng(12)
    x = rng.standard_normal(600)
    data = PairedSample(x, x.copy())
    meth = get_method("infonce")
    out = train(meth, data.subset(np.arange(400)), TrainConfig(epochs=40, lr=3e-3, batch_size=100), rng)
    held = data.subset(np.arange(400, 600))
    assert meth.statistic(out.params)(held.x, held.y) > 0.5


def test_validation_selects_best_checkpoint():
    rng = make_rng(4)
    data = sample_hdgm(4, 300, rng)
    meth = get_method("nds")
    out = train(
        meth, data.subset(np.arange(200)), TrainConfig(epochs=5, lr=1e-3, batch_size=50), rng,
        val_set=data.subset(np.arange(200, 300)),
    )
    vals = [h["val_objective"] for h in out.history]
    assert out.best_epoch == int(np.argmax(vals))


@dataclass(frozen=True)
class _Exploding(Method):
    def init_params(self, train, rng):
        return dn.ParamStore({"w": np.array(0.0)})

    def objective(self, params, batch, cfg, rng=None):
        return dn.exp(params["w"] * 500.0)


def test_training_divergence_carries_checkpoint():
    data = sample_hdgm(4, 20, make_rng(0))
    with pytest.raises(TrainingDivergenceError) as info:
        train(_Exploding("boom", True), data, TrainConfig(epochs=50, lr=0.5, batch_size=10), make_rng(0))
    ck = info.value.checkpoint
    assert ck is not None and np.isfinite(ck["w"]) and ck["w"] > 0


def test_untrainable_methods_skip_training():
    out = train(get_method("hsic-m"), sample_hdgm(4, 20, make_rng(0)), TrainConfig(), make_rng(0))
    assert len(out.params) == 0 and out.steps == 0
