import numpy as np
import pytest

from indeptest import diffnet as dn
from indeptest.datasets import PairedSample, sample_hdgm, sample_sinusoid
from indeptest.errors import ConfigError, ShapeError
from indeptest.estimators import hsic_unbiased, infonce, mmd2_biased_perm, nds_stat, nwj
from indeptest.kernels import GaussianKernel, GramPair, median_heuristic_kernel
from indeptest.methods import METHODS, critic_grid, critic_pairs, critic_widths, featurizer_widths, get_method
from indeptest.numkit import make_rng
from oracles import central_diff


def test_architectures():
    assert featurizer_widths(5) == (5, 10, 15, 10)
    assert featurizer_widths(1) == (1, 8, 12, 8)
    assert critic_widths(10) == (10, 20, 30, 20, 1)
    assert critic_widths(2) == (2, 8, 12, 8, 1)


def test_critic_grid_matches_pointwise_loop(rng):
    s = sample_hdgm(4, 7, rng)
    params = get_method("nds").init_params(s, rng)
    F = critic_grid(params, s.x, s.y)
    for i in range(7):
        for j in range(7):
            z = np.concatenate([s.x[i], s.y[j]])[None, :]
            assert F[i, j] == pytest.approx(dn.mlp_forward(params, z, prefix="c.")[0, 0], rel=1e-12)
    np.testing.assert_allclose(critic_pairs(params, s.x, s.y), np.diag(F), rtol=1e-12)
    with pytest.raises(ShapeError):
        critic_grid(params, s.x[:, :1], s.y)


@pytest.mark.parametrize("name", ["hsic-d", "hsic-dx", "hsic-o", "nds", "infonce", "nwj"])
def test_objective_gradients_match_finite_differences(name, rng):
    meth = get_method(name)
    s = sample_hdgm(4, 200, rng)
    batch = sample_hdgm(4, 24, rng)
    params = meth.init_params(s, rng)
    from indeptest.methods import objective_config_for

    cfg = objective_config_for(meth)
    fn = lambda q: meth.objective(q, batch, cfg)  # noqa: E731
    _, g = dn.grad(fn, params)
    num = central_diff(fn, params, h=1e-5)
    an = np.concatenate([g[k].ravel() for k in params])
    fd = np.concatenate([num[k].ravel() for k in params])
    assert np.linalg.norm(an - fd) <= 1e-4 * np.linalg.norm(fd)


def test_fast_paths_agree_with_direct_evaluation(rng):
    s = sample_hdgm(4, 30, rng)
    p = rng.permutation(30)
    shuffled = PairedSample(s.x, s.y[p])
    for name in METHODS:
        meth = get_method(name)
        params = meth.init_params(s, rng) if meth.trainable else {}
        stat = meth.statistic(params, rng=make_rng(4))
        assert stat.prepare(s.x, s.y)(p) == pytest.approx(stat(shuffled.x, shuffled.y), rel=1e-10, abs=1e-14), name


def test_median_hsic_statistic_definition(rng):
    s = sample_hdgm(4, 40, rng)
    kx, ky = median_heuristic_kernel(s.x), median_heuristic_kernel(s.y)
    ref = hsic_unbiased(GramPair(kx.gram(s.x), ky.gram(s.y)))
    assert get_method("hsic-m").statistic()(s.x, s.y) == pytest.approx(ref, rel=1e-12)


def test_critic_statistic_kinds(rng):
    s = sample_sinusoid(1, 20, rng)
    for name, fn in (("nds", nds_stat), ("infonce", infonce), ("nwj", nwj)):
        meth = get_method(name)
        params = meth.init_params(s, make_rng(1))
        F = critic_grid(params, s.x, s.y)
        assert meth.statistic(params)(s.x, s.y) == pytest.approx(fn(F), rel=1e-12)


def test_mmd_perm_statistic_is_fixed_shuffle(rng):
    s = sample_hdgm(4, 25, rng)
    stat = get_method("mmd-perm").statistic(rng=make_rng(2))
    shuffle = stat.shuffle(25)
    kx, ky = median_heuristic_kernel(s.x), median_heuristic_kernel(s.y)
    ref = mmd2_biased_perm(GramPair(kx.gram(s.x), ky.gram(s.y)), [shuffle])
    assert stat(s.x, s.y) == pytest.approx(ref, rel=1e-12)
    assert stat(s.x, s.y) == stat(s.x, s.y)
    with pytest.raises(ConfigError):
        get_method("mmd-perm").statistic()


def test_unknown_method_and_tied_width_check(rng):
    with pytest.raises(ConfigError):
        get_method("c2st")
    s = PairedSample(rng.standard_normal((10, 2)), rng.standard_normal((10, 3)))
    with pytest.raises(ConfigError):
        get_method("hsic-dx").init_params(s, rng)


def test_tied_featurizer_shares_parameters(rng):
    s = sample_hdgm(4, 50, rng)
    params = get_method("hsic-dx").init_params(s, rng)
    assert all(k.startswith("x.") for k in params)
    g = get_method("hsic-dx").grams(params, s.x, s.y)
    from indeptest.kernels import DeepKernel

    np.testing.assert_allclose(g.L, DeepKernel("x.").gram(s.y, params))


def test_hsic_o_initialised_at_median(rng):
    s = sample_hdgm(4, 100, rng)
    params = get_method("hsic-o").init_params(s, rng)
    assert np.exp(params["x.log_bw"]) == pytest.approx(median_heuristic_kernel(s.x).bandwidth, rel=1e-12)
    assert GaussianKernel(float(np.exp(params["y.log_bw"]))).bandwidth > 0
