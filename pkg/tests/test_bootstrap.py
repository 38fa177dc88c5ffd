import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import LINKS, random_design
from tppg import (BootstrapConfig, FitConfig, KernelSpec, LinkSpec, ModelSpec, SimConfig, bootstrap_graph, discretize,
                  extract_graph, fit, lambda_for_sparsity, lambda_max, make_structure, simulate)
from tppg.bootstrap import bootstrap_weights, sparsity, threshold_frequencies
from tppg.estimate import with_lambda


@pytest.fixture(scope="module")
def small_block(block10):
    model, _, d = block10
    return model, d


@pytest.fixture(scope="module")
def strong_block():
    """One 5-node block with unit-size interactions observed for T=1000."""
    model = ModelSpec(0.5, make_structure("block", 5, 1.0), KernelSpec.restricted_linear(), LinkSpec.arctan())
    data = simulate(model, SimConfig(1000, seed=3, burn_in=5))
    return model, discretize(data, 2000, model.kernels)


@given(M=st.integers(1, 500), n=st.integers(1, 1000), seed=st.integers(0, 2**32 - 1))
def test_bootstrap_weights_are_integer_multiplicities(M, n, seed):
    c = bootstrap_weights(M, n, np.random.default_rng(seed))
    assert c.shape == (M,) and c.sum() == n
    assert np.all(c >= 0) and np.all(c == np.round(c))


def test_unit_multiplicities_reproduce_plain_fit(block10):
    model, _, d = block10
    cfg = FitConfig(lam=0.05)
    a = fit(d, model.links, cfg)
    b = fit(d, model.links, cfg, bin_weights=np.ones(d.M))
    np.testing.assert_allclose(b.B_hat, a.B_hat, rtol=1e-12, atol=1e-14)


def test_threshold_frequencies_rules():
    freq = np.zeros((2, 2, 2))
    freq[0, 1] = [0.6, 0.4]
    freq[1, 0] = [0.1, 0.9]
    freq[1, 1] = [0.5, 0.5]  # tie: dropped
    freq[0, 0] = [0.3, 0.3]  # combined 0.6 but neither sign alone passes
    g = threshold_frequencies(freq, 0.5)
    assert g.edges == {(0, 1, 1), (1, 0, -1)}
    assert len(threshold_frequencies(freq, 1.01)) == 0


@given(st.integers(0, 2**32 - 1))
def test_graph_shrinks_as_keep_fraction_grows(seed):
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(10, [0.3, 0.3, 0.4], size=(4, 4))[..., :2]
    freq = counts / 10
    graphs = [threshold_frequencies(freq, k).edges for k in np.linspace(0.05, 1.05, 12)]
    assert all(b <= a for a, b in zip(graphs, graphs[1:]))


# lambda_for_sparsity ----------------------------------------------------------

def test_lambda_for_sparsity_agrees_with_dense_scan(block10):
    model, _, d = block10
    cfg = FitConfig()
    target = 0.2
    lam = lambda_for_sparsity(d, model.links, target, cfg)
    s = sparsity(fit(d, model.links, with_lambda(cfg, lam)).B_hat)
    scan = np.geomspace(lambda_max(d, model.links), 1e-3 * lambda_max(d, model.links), 60)
    best = min(abs(sparsity(fit(d, model.links, with_lambda(cfg, l)).B_hat) - target) for l in scan)
    assert abs(s - target) <= max(0.1 * target, best)


def test_lambda_for_sparsity_full_target_goes_to_small_penalty(rng):
    d = random_design(rng, p=3, M=200, T=50.0)
    link = LINKS["arctan"]
    lam = lambda_for_sparsity(d, link, 1.0, FitConfig())
    assert lam <= 1e-2 * lambda_max(d, link)


def test_lambda_for_sparsity_rejects_bad_target(rng):
    with pytest.raises(ValueError):
        lambda_for_sparsity(random_design(rng), LINKS["arctan"], 0.0, FitConfig())


# bootstrap_graph --------------------------------------------------------------

def test_single_replicate_is_thresholded_single_fit(small_block):
    model, d = small_block
    cfg = BootstrapConfig(n_replicates=1, target_sparsity=0.2, seed=3)
    res = bootstrap_graph(d, model.links, cfg, FitConfig())
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([3, 0])))
    c = bootstrap_weights(d.M, d.M, rng)
    single = fit(d, model.links, FitConfig(lam=res.lambdas[0]), bin_weights=c)
    assert res.graph == extract_graph(single.B_hat)
    assert set(np.unique(res.frequencies)) <= {0.0, 1.0}


def test_bootstrap_deterministic_bounded_and_consistent(strong_block):
    model, d = strong_block
    target = 0.8
    cfg = BootstrapConfig(n_replicates=10, target_sparsity=target, seed=11)
    a = bootstrap_graph(d, model.links, cfg, FitConfig())
    b = bootstrap_graph(d, model.links, cfg, FitConfig())
    np.testing.assert_array_equal(a.frequencies, b.frequencies)
    np.testing.assert_array_equal(a.lambdas, b.lambdas)
    assert a.graph == b.graph
    f = a.frequencies
    assert np.all((f >= 0) & (f <= 1)) and np.all(f.sum(axis=-1) <= 1)
    # kept graph overlaps the support of a plain fit at the full-data target penalty
    lam = lambda_for_sparsity(d, model.links, target, FitConfig())
    ref = extract_graph(fit(d, model.links, FitConfig(lam=lam)).B_hat).edges
    assert len(a.graph.edges & ref) >= 0.8 * len(a.graph.edges)
    assert abs(len(a.graph) / d.p**2 - target) <= 0.1 * target


def test_frozen_lambda_and_empty_graph(small_block):
    model, d = small_block
    cfg = BootstrapConfig(n_replicates=2, target_sparsity=0.2, keep_fraction=1.5, retune_lambda=False, seed=1)
    res = bootstrap_graph(d, model.links, cfg, FitConfig())
    assert res.lambdas[0] == res.lambdas[1]
    assert len(res.graph) == 0


@pytest.mark.parametrize("kwargs", [dict(n_replicates=0), dict(n_bins_sampled=0), dict(target_sparsity=0.0),
                                    dict(target_sparsity=1.5), dict(keep_fraction=0.0)])
def test_bootstrap_config_validation(kwargs):
    with pytest.raises(ValueError):
        BootstrapConfig(**kwargs)
