import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from conftest import LINKS, random_design
from tppg import CVConfig, FitConfig, NodeParams, cross_validate, fit, fit_node, lambda_grid, lambda_max
from tppg.design import DesignMatrix
from tppg.estimate import node_gradient, node_loss
from tppg.selection import fit_cv, heldout_loss, make_folds

TIGHT = dict(tol=1e-14, max_inner=50000)


def is_zero_fit(d, links, lam, penalize_mu=True):
    res = fit(d, links, FitConfig(lam=lam, penalize_mu=penalize_mu, **TIGHT))
    return not np.any(res.B_hat)


# lambda_max -------------------------------------------------------------------

@pytest.mark.parametrize("penalize_mu", [True, False])
@pytest.mark.parametrize("name", sorted(LINKS))
def test_lambda_max_matches_bisection_oracle(rng, name, penalize_mu):
    link = LINKS[name]
    d = random_design(rng, p=3, M=40)
    lam_max = lambda_max(d, link, penalize_mu)
    # bisection on log(lam) of "the fitted B is exactly zero"
    lo, hi = 0.25 * lam_max, 4.0 * lam_max
    for _ in range(20):
        mid = np.sqrt(lo * hi)
        lo, hi = (lo, mid) if is_zero_fit(d, link, mid, penalize_mu) else (mid, hi)
    assert hi == pytest.approx(lam_max, rel=1e-4)
    assert is_zero_fit(d, link, lam_max * (1 + 1e-6), penalize_mu)
    assert not is_zero_fit(d, link, lam_max * 0.99, penalize_mu)


def test_lambda_max_zero_when_intercept_model_fits_exactly(rng):
    link = LINKS["arctan"]
    M, T = 50, 10.0
    y = np.full((2, M), T / M * float(link.h(0.8)))
    d = DesignMatrix(T, y, rng.exponential(1.0, (2, M, 2)), np.ones((2, M)))
    assert lambda_max(d, link, penalize_mu=False) == pytest.approx(0.0, abs=1e-14)


def test_lambda_max_scales_with_covariates(rng):
    link = LINKS["sigmoid"]
    d = random_design(rng)
    d2 = DesignMatrix(d.horizon, d.y, 2 * d.x, d.weights)
    assert lambda_max(d2, link, penalize_mu=False) == pytest.approx(2 * lambda_max(d, link, penalize_mu=False), rel=1e-12)


def test_lambda_max_degenerate_design_warns(caplog):
    d = DesignMatrix(5.0, np.ones((2, 5)), np.zeros((2, 5, 2)), np.ones((2, 5)))
    with caplog.at_level("WARNING", logger="tppg.selection"):
        assert lambda_max(d, LINKS["arctan"]) == 0.0
    assert "zero" in caplog.text


def test_lambda_grid_properties():
    g = lambda_grid(2.0, 30, 1e-3)
    assert g.size == 30 and g[0] == 2.0 and g[-1] == pytest.approx(2e-3)
    assert np.all(np.diff(g) < 0)
    np.testing.assert_allclose(np.diff(np.log(g)), np.log(1e-3) / 29)
    with pytest.raises(ValueError):
        lambda_grid(0.0)


# solver against a generic optimizer -------------------------------------------

@pytest.mark.parametrize("name", sorted(LINKS))
def test_fit_node_matches_split_variable_lbfgsb(rng, name):
    link = LINKS[name]
    d = random_design(rng, p=4, M=60)
    lam = 0.3 * lambda_max(d, link)
    j = 2

    def F(z):
        th = z[:5] - z[5:]
        prm = NodeParams(th[0], th[1:])
        g_mu, g_beta = node_gradient(d, j, prm, link)
        g = np.concatenate([[g_mu], g_beta])
        return node_loss(d, j, prm, link) + lam * z.sum(), np.concatenate([g + lam, -g + lam])

    ref = minimize(F, np.zeros(10), jac=True, method="L-BFGS-B", bounds=[(0, None)] * 10,
                   options=dict(ftol=1e-15, gtol=1e-12, maxiter=10000))
    est = fit_node(d, j, link, FitConfig(lam=lam, **TIGHT))
    np.testing.assert_allclose(est.theta, ref.x[:5] - ref.x[5:], atol=1e-5)


# folds ------------------------------------------------------------------------

@given(M=st.integers(2, 300), K=st.integers(2, 10), seed=st.integers(0, 2**32 - 1),
       scheme=st.sampled_from(["random_bins", "contiguous_blocks"]))
@settings(max_examples=60, deadline=None)
def test_folds_partition_bins(M, K, seed, scheme):
    if K > M:
        with pytest.raises(ValueError):
            make_folds(M, K, scheme, seed)
        return
    folds = make_folds(M, K, scheme, seed)
    allidx = np.concatenate(folds)
    np.testing.assert_array_equal(np.sort(allidx), np.arange(M))
    sizes = [f.size for f in folds]
    assert max(sizes) - min(sizes) <= 1
    if scheme == "contiguous_blocks":
        for f in folds:
            np.testing.assert_array_equal(f, np.arange(f[0], f[-1] + 1))


def test_folds_deterministic_and_seed_dependent():
    a = make_folds(100, 5, "random_bins", 3)
    b = make_folds(100, 5, "random_bins", 3)
    c = make_folds(100, 5, "random_bins", 4)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))


# cross-validation -------------------------------------------------------------

def exhaustive_loo(d, link, lambdas):
    """Leave-one-bin-out curve with cold-start fits and a hand-written held-out loss."""
    losses = np.zeros((d.M, len(lambdas)))
    for m in range(d.M):
        train = np.ones(d.M)
        train[m] = 0.0
        for i, lam in enumerate(lambdas):
            res = fit(d, link, FitConfig(lam=lam, **TIGHT), bin_weights=train)
            for j in range(d.p):
                u = res.mu_hat[j] + d.x[j, m] @ res.B_hat[j]
                losses[m, i] += (d.dt * float(link.H(u)) - d.y[j, m] * u) / d.dt
    return losses


def test_leave_one_bin_out_matches_exhaustive_oracle(rng):
    link = LINKS["arctan"]
    d = random_design(rng, p=2, M=12, T=6.0)
    lambdas = lambda_grid(lambda_max(d, link), 4, 0.1)
    cv = cross_validate(d, link, CVConfig(K=d.M, lambdas=lambdas), FitConfig(**TIGHT))
    oracle = exhaustive_loo(d, link, lambdas)
    np.testing.assert_allclose(cv.fold_losses[np.argsort([f[0] for f in make_folds(d.M, d.M)])], oracle,
                               rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(cv.mean, oracle.mean(axis=0), rtol=1e-6, atol=1e-8)
    assert cv.best_lambda == lambdas[np.argmin(oracle.mean(axis=0))]


def test_cv_curve_shape_membership_and_duplicates(rng):
    link = LINKS["sigmoid"]
    d = random_design(rng, p=3, M=50)
    lm = lambda_max(d, link)
    lambdas = [lm, 0.5 * lm, 0.5 * lm, 0.1 * lm]
    cv = cross_validate(d, link, CVConfig(K=5, lambdas=lambdas, seed=1), FitConfig())
    assert cv.mean.shape == cv.se.shape == (4,) and cv.fold_losses.shape == (5, 4)
    assert cv.best_lambda in lambdas
    assert cv.mean[1] == cv.mean[2]
    np.testing.assert_array_equal(cv.fold_losses[:, 1], cv.fold_losses[:, 2])


def test_cv_grid_of_length_one(rng):
    d = random_design(rng)
    cv = cross_validate(d, LINKS["arctan"], CVConfig(K=3, lambdas=[0.05]), FitConfig())
    assert cv.best_lambda == 0.05 and cv.mean.size == 1


def test_heldout_loss_at_lambda_max_is_intercept_only(rng):
    link = LINKS["arctan"]
    d = random_design(rng, p=3, M=60)
    folds = make_folds(d.M, 4, "random_bins", 2)
    # the penalty must zero B on every training fold, so take the largest fold-wise lambda_max
    lm = max(lambda_max(d, link, False, np.isin(np.arange(d.M), f, invert=True).astype(float)) for f in folds)
    fit_cfg = FitConfig(penalize_mu=False, **TIGHT)
    cv = cross_validate(d, link, CVConfig(K=4, lambdas=[lm * (1 + 1e-6)], seed=2), fit_cfg)
    for k, test_idx in enumerate(folds):
        test = np.zeros(d.M)
        test[test_idx] = 1.0
        train = 1.0 - test
        total = 0.0
        for j in range(d.p):
            est = fit_node(d, j, link, FitConfig(lam=lm * (1 + 1e-6), penalize_mu=False, **TIGHT), bin_weights=train)
            assert not np.any(est.beta)
            mu = est.mu
            total += node_loss(d, j, NodeParams(mu, np.zeros(d.p)), link, test)
        assert cv.fold_losses[k, 0] == pytest.approx(total, rel=1e-8)


def test_cv_is_deterministic_and_thread_independent(block10):
    model, _, d = block10
    cfg = CVConfig(K=3, n_lambdas=4, ratio=0.05, seed=5)
    a = cross_validate(d, model.links, cfg, FitConfig())
    b = cross_validate(d, model.links, cfg, FitConfig(), threads=3)
    np.testing.assert_array_equal(a.fold_losses, b.fold_losses)
    assert a.best_lambda == b.best_lambda


def test_selected_lambda_beats_lambda_max(block10):
    model, _, d = block10
    res, cv = fit_cv(d, model.links, CVConfig(K=5, n_lambdas=8, ratio=0.01), FitConfig())
    assert cv.mean.min() < cv.mean[0]
    assert cv.best_lambda < cv.lambdas[0] and np.any(res.B_hat)


def test_one_se_rule_picks_larger_penalty(block10):
    model, _, d = block10
    kw = dict(K=5, n_lambdas=8, ratio=0.01)
    a = cross_validate(d, model.links, CVConfig(**kw), FitConfig())
    b = cross_validate(d, model.links, CVConfig(rule="1se", **kw), FitConfig())
    assert b.best_lambda >= a.best_lambda
    i = list(b.lambdas).index(b.best_lambda)
    i_min = int(np.argmin(a.mean))
    assert b.mean[i] <= a.mean[i_min] + a.se[i_min]


def test_heldout_loss_modes(rng):
    d = random_design(rng)
    link = LINKS["arctan"]
    res = fit(d, link, FitConfig(lam=0.05))
    test = np.ones(d.M)
    vals = {m: heldout_loss(d, link, res, m, test) for m in ("naive", "mle", "ls")}
    assert len(set(vals.values())) == 3


@pytest.mark.parametrize("kwargs", [dict(K=1), dict(fold_scheme="by_event"), dict(rule="max"),
                                    dict(lambdas=[0.1, 0.2]), dict(lambdas=[0.1, -1.0]), dict(lambdas=[]),
                                    dict(ratio=1.0), dict(n_lambdas=0)])
def test_cv_config_validation(kwargs):
    with pytest.raises(ValueError):
        CVConfig(**kwargs)


def test_cv_needs_enough_bins(rng):
    d = random_design(rng, M=4)
    with pytest.raises(ValueError):
        cross_validate(d, LINKS["arctan"], CVConfig(K=5, lambdas=[0.1]), FitConfig())
