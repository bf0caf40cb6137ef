import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import norm

from lmbart.data import (CLASSIFICATION, REGRESSION, Dataset, ScalingInfo,
                         standardize)
from lmbart.sampler import (Hyperparams, PosteriorDraws, dirichlet_update_splitprobs,
                            mh_accept, partial_residual, predict,
                            run_classification, run_regression,
                            sample_latent_z, sample_sigma2,
                            sample_tau_intercept, sample_tau_slopes)
from lmbart.benchmark import FriedmanSpec, friedman_generate
from oracles import explicit_partial_residual


def hp_small(**kwargs):
    defaults = dict(m=5, burn_in=30, post_burn_in=50, seed=3)
    defaults.update(kwargs)
    return Hyperparams(**defaults)


class TestSampleSigma2:
    def test_posterior_moments(self):
        rng = np.random.default_rng(0)
        draws = np.array([sample_sigma2(2.0, 4, 3.0, 1.0, rng)
                          for _ in range(20_000)])
        # IG(3.5, 2.5): mean 1.0, var 2.5^2 / (2.5^2 * 1.5) = 2/3
        assert_allclose(draws.mean(), 1.0, atol=4 * math.sqrt((2 / 3) / draws.size))
        assert_allclose(draws.var(), 2 / 3, rtol=0.07)

    def test_no_data_recovers_prior(self):
        from scipy.stats import invgamma

        rng = np.random.default_rng(1)
        draws = np.array([sample_sigma2(0.0, 0, 3.0, 1.0, rng)
                          for _ in range(20_000)])
        # prior IG(1.5, scale 1.5); compare medians (the mean has fat tails)
        assert_allclose(np.median(draws), invgamma(1.5, scale=1.5).median(),
                        rtol=0.05)


class TestTauDraws:
    def test_intercepts_example(self):
        rng = np.random.default_rng(2)
        draws = np.array([sample_tau_intercept(np.array([1.0, -1.0]), 1.0, 1.0,
                                               1.0, rng) for _ in range(20_000)])
        # Gamma(2, rate 2): mean 1, var 0.5
        assert_allclose(draws.mean(), 1.0, atol=4 * math.sqrt(0.5 / draws.size))
        assert_allclose(draws.var(), 0.5, rtol=0.07)

    def test_zero_intercepts_reduce_rate_to_prior(self):
        rng = np.random.default_rng(3)
        draws = np.array([sample_tau_intercept(np.zeros(4), 1.0, 1.0, 1.0, rng)
                          for _ in range(20_000)])
        # Gamma(shape 3, rate 1): mean 3
        assert_allclose(draws.mean(), 3.0, atol=4 * math.sqrt(3.0 / draws.size))

    def test_large_sigma2_kills_data_term(self):
        rng = np.random.default_rng(4)
        draws = np.array([sample_tau_intercept(np.array([5.0, 5.0]), 1e12,
                                               1.0, 1.0, rng)
                          for _ in range(20_000)])
        # rate collapses to b0 = 1: Gamma(2, 1), mean 2
        assert_allclose(draws.mean(), 2.0, atol=4 * math.sqrt(2.0 / draws.size))

    def test_slopes_prior_recovery_with_all_stumps(self):
        rng = np.random.default_rng(5)
        draws = np.array([sample_tau_slopes(np.array([]), 1.0, 1.0, 1.0, rng)
                          for _ in range(20_000)])
        # Gamma(1, 1): mean 1, var 1
        assert_allclose(draws.mean(), 1.0, atol=4 * math.sqrt(1.0 / draws.size))
        assert_allclose(draws.var(), 1.0, rtol=0.07)

    def test_slopes_example(self):
        rng = np.random.default_rng(6)
        draws = np.array([sample_tau_slopes(np.ones(3), 1.0, 1.0, 1.0, rng)
                          for _ in range(20_000)])
        # Gamma(2.5, 2.5): mean 1
        assert_allclose(draws.mean(), 1.0, atol=4 * math.sqrt(0.4 / draws.size))

    def test_doubling_sigma2_halves_data_rate(self):
        slopes = np.array([2.0, 2.0])
        for sigma2 in (1.0, 2.0):
            rate_expected = 4.0 / sigma2 + 1.0
            rng = np.random.default_rng(7)
            draws = np.array([sample_tau_slopes(slopes, sigma2, 1.0, 1.0, rng)
                              for _ in range(20_000)])
            assert_allclose(draws.mean(), 2.0 / rate_expected, rtol=0.05)


class TestDirichletBranching:
    def test_count_update_mean(self):
        rng = np.random.default_rng(8)
        draws = np.array([dirichlet_update_splitprobs(np.array([2.0, 0.0, 1.0]),
                                                      1.0, rng)
                          for _ in range(20_000)])
        # Dirichlet(7/3, 1/3, 4/3): mean proportional to parameters
        assert_allclose(draws.mean(axis=0), [7 / 12, 1 / 12, 4 / 12], atol=0.01)

    def test_zero_counts_recover_prior(self):
        rng = np.random.default_rng(9)
        draws = np.array([dirichlet_update_splitprobs(np.zeros(4), 1.0, rng)
                          for _ in range(20_000)])
        assert_allclose(draws.mean(axis=0), 0.25, atol=0.01)

    def test_dominant_feature_has_largest_mean(self):
        rng = np.random.default_rng(10)
        draws = np.array([dirichlet_update_splitprobs(np.array([1.0, 9.0, 2.0]),
                                                      1.0, rng)
                          for _ in range(5_000)])
        means = draws.mean(axis=0)
        assert means[1] == means.max()
        assert_allclose(draws.sum(axis=1), 1.0, rtol=1e-12)


class TestMhAccept:
    def test_equal_terms_always_accepted(self):
        rng = np.random.default_rng(11)
        assert all(mh_accept(0.0, rng) for _ in range(1000))

    def test_log_half_accepts_half_the_time(self):
        rng = np.random.default_rng(12)
        trials = 10_000
        hits = sum(mh_accept(-math.log(2.0), rng) for _ in range(trials))
        se = math.sqrt(0.25 / trials)
        assert abs(hits / trials - 0.5) < 3 * se


class TestLatentZ:
    def test_half_normal_means(self):
        rng = np.random.default_rng(13)
        n = 40_000
        fit = np.zeros(n)
        z_pos = sample_latent_z(np.ones(n), fit, rng)
        z_neg = sample_latent_z(np.zeros(n), fit, rng)
        target = math.sqrt(2 / math.pi)
        assert z_pos.min() > 0 and z_neg.max() <= 0
        assert_allclose(z_pos.mean(), target, atol=0.01)
        assert_allclose(z_neg.mean(), -target, atol=0.01)

    def test_far_from_boundary_is_plain_normal(self):
        rng = np.random.default_rng(14)
        n = 20_000
        z = sample_latent_z(np.ones(n), np.full(n, 10.0), rng)
        assert_allclose(z.mean(), 10.0, atol=0.03)
        assert_allclose(z.std(), 1.0, atol=0.03)

    def test_deep_tail_does_not_stall_or_overflow(self):
        rng = np.random.default_rng(15)
        z = sample_latent_z(np.ones(100), np.full(100, -12.0), rng)
        assert np.all(np.isfinite(z)) and np.all(z > 0)
        assert z.mean() < 0.2   # mass hugs the boundary


def handmade_state(fits, target):
    """Minimal SamplerState with fixed per-tree fit vectors."""
    from lmbart.sampler import SamplerState, TreeState
    from lmbart.trees import Tree

    trees = []
    for fit in fits:
        t = Tree()
        trees.append(TreeState(t, {t.root: 0.0}, {}, {t.root: np.arange(len(fit))},
                               np.asarray(fit, dtype=float)))
    return SamplerState(trees=trees, sigma2=1.0, tau_beta0=1.0, tau_beta=1.0,
                        split_probs=np.array([1.0]),
                        total_fit=np.sum(fits, axis=0).astype(float),
                        target=np.asarray(target, dtype=float), latent_z=None)


class TestPartialResiduals:
    def test_single_tree_residual_is_target(self):
        target = np.array([3.0, -1.0, 2.0])
        state = handmade_state([np.array([0.5, 0.5, 0.5])], target)
        assert_allclose(partial_residual(state, 0), target, rtol=0, atol=0)

    def test_zero_fit_second_tree_leaves_target(self):
        target = np.array([3.0, -1.0, 2.0])
        state = handmade_state([np.array([0.7, -0.2, 0.1]), np.zeros(3)], target)
        assert_allclose(partial_residual(state, 1), target - [0.7, -0.2, 0.1])
        assert_allclose(partial_residual(state, 0), target)

    def test_incremental_matches_explicit_sum_over_100_sweeps(self):
        data = friedman_generate(FriedmanSpec(n=100, p=5, seed=1))
        scaled, info = standardize(data)
        worst = [0.0]

        def check(state):
            for t in range(len(state.trees)):
                gap = np.abs(partial_residual(state, t)
                             - explicit_partial_residual(state, t)).max()
                worst[0] = max(worst[0], gap)

        hp = hp_small(m=5, burn_in=50, post_burn_in=50, leaf_model="linear")
        run_regression(scaled, hp, info, on_sweep=check)
        assert worst[0] < 1e-10


class TestRunRegression:
    def test_constant_response_collapses(self):
        rng = np.random.default_rng(16)
        X = rng.normal(size=(40, 2))
        d = Dataset(X, np.full(40, 7.0), ["a", "b"], REGRESSION)
        scaled, info = standardize(d)
        draws = run_regression(scaled, hp_small(), info)
        assert_allclose(draws.yhat_train.mean(axis=0), 7.0, atol=1e-3)
        assert draws.sigma2.mean() < 1e-6

    def test_fixed_seed_reproduces_draws(self):
        data = friedman_generate(FriedmanSpec(n=80, p=5, seed=3))
        scaled, info = standardize(data)
        hp = hp_small(leaf_model="linear", store_trees=True)
        a = run_regression(scaled, hp, info)
        b = run_regression(scaled, hp, info)
        assert_array_equal(a.sigma2, b.sigma2)
        assert_array_equal(a.yhat_train, b.yhat_train)
        assert_array_equal(a.param_counts, b.param_counts)
        assert a.trees == b.trees

    def test_residual_identity_every_sweep(self):
        # y == R_t + sum_{j != t} fit_j must hold after every sweep, for all t
        data = friedman_generate(FriedmanSpec(n=90, p=5, seed=4))
        scaled, info = standardize(data)
        y = scaled.response
        worst = [0.0]

        def check(state):
            for t in range(len(state.trees)):
                others = state.total_fit - state.trees[t].fit
                recon = partial_residual(state, t) + others
                worst[0] = max(worst[0], np.abs(y - recon).max())

        run_regression(scaled, hp_small(m=4, burn_in=10, post_burn_in=10),
                       info, on_sweep=check)
        assert worst[0] < 1e-8

    def test_acceptance_bookkeeping_sums_to_proposals(self):
        data = friedman_generate(FriedmanSpec(n=80, p=5, seed=5))
        scaled, info = standardize(data)
        hp = hp_small(m=3, burn_in=20, post_burn_in=30)
        draws = run_regression(scaled, hp, info)
        total = sum(sum(rec.values()) for rec in draws.acceptance.values())
        assert total == (hp.burn_in + hp.post_burn_in) * hp.m

    def test_sigma2_draws_positive(self):
        data = friedman_generate(FriedmanSpec(n=80, p=5, seed=6))
        scaled, info = standardize(data)
        draws = run_regression(scaled, hp_small(), info)
        assert np.all(draws.sigma2 > 0)
        assert np.all(draws.sigma2_chain > 0)

    def test_proposal_correction_flag_changes_the_chain(self):
        data = friedman_generate(FriedmanSpec(n=100, p=5, seed=9))
        scaled, info = standardize(data)
        plain = run_regression(scaled, hp_small(seed=2), info)
        corrected = run_regression(scaled, hp_small(seed=2,
                                                    proposal_correction=True),
                                   info)
        assert not np.array_equal(plain.sigma2, corrected.sigma2)
        assert np.all(corrected.sigma2 > 0)

    def test_retained_count_respects_thinning(self):
        data = friedman_generate(FriedmanSpec(n=70, p=5, seed=7))
        scaled, info = standardize(data)
        draws = run_regression(scaled, hp_small(post_burn_in=50, thin=7), info)
        assert draws.retained == 50 // 7

    def test_shrinkage_toward_center_with_tight_leaf_prior(self):
        # with n too small for any valid split and the tightest allowed leaf
        # prior, the ensemble cannot chase the extreme responses and the
        # posterior predictions collapse toward the response center
        rng = np.random.default_rng(17)
        X = rng.normal(size=(9, 2))
        y = np.array([0.0] * 5 + [10.0] * 4)
        d = Dataset(X, y, ["a", "b"], REGRESSION)
        scaled, info = standardize(d)
        hp = hp_small(m=10, c=3.0, burn_in=100, post_burn_in=100, n_min=5)
        draws = run_regression(scaled, hp, info)
        yhat = draws.yhat_train.mean(axis=0)
        assert np.all(np.abs(yhat - 5.0) < 2.0)   # nowhere near 0 or 10

    def test_stationarity_band_on_stump_truth(self):
        rng = np.random.default_rng(18)
        n = 500
        X = rng.normal(size=(n, 3))
        y = 2.0 + rng.standard_normal(n)   # single-stump truth, sigma2 = 1
        d = Dataset(X, y, ["a", "b", "c"], REGRESSION)
        scaled, info = standardize(d)
        hp = Hyperparams(m=10, burn_in=300, post_burn_in=400, seed=9)
        draws = run_regression(scaled, hp, info)
        assert 0.7 <= draws.sigma2.mean() <= 1.4

    def test_rejects_wrong_task(self):
        d = Dataset(np.zeros((4, 1)) + np.arange(4)[:, None],
                    np.array([0.0, 1.0, 0.0, 1.0]), ["a"], CLASSIFICATION)
        with pytest.raises(ValueError):
            run_regression(d, hp_small())

    def test_invalid_proposal_keeps_tree_but_redraws_leaves(self):
        # a 6-row stump with n_min=5 admits no valid move of any kind, so
        # every step must leave the structure alone and only redraw the leaf
        from lmbart.data import split_dictionary
        from lmbart.sampler import SamplerState, TreeState, mh_tree_step
        from lmbart.trees import Tree

        rng = np.random.default_rng(33)
        X = rng.normal(size=(6, 2))
        d = Dataset(X, rng.normal(size=6), ["a", "b"], REGRESSION)
        sd = split_dictionary(d)
        t = Tree()
        ts = TreeState(t, {t.root: 0.0}, {}, {t.root: np.arange(6)}, np.zeros(6))
        state = SamplerState(trees=[ts], sigma2=1.0, tau_beta0=1.0,
                             tau_beta=1.0, split_probs=np.full(2, 0.5),
                             total_fit=np.zeros(6), target=d.response.copy(),
                             latent_z=None)
        hp = Hyperparams(m=1, n_min=5, burn_in=1, post_burn_in=1)
        mus = []
        for _ in range(30):
            kind, outcome = mh_tree_step(state, 0, d.features, sd, hp, rng)
            assert outcome == "invalid"
            assert state.trees[0].tree.n_leaves() == 1
            mus.append(state.trees[0].leaf_params[t.root])
        assert len(set(mus)) == len(mus)   # leaf mean redrawn every step
        counts = state.acceptance
        assert sum(rec["invalid"] for rec in counts.values()) == 30


@pytest.fixture(scope="module")
def class_run():
    rng = np.random.default_rng(19)
    n = 250
    x = rng.uniform(-1.5, 1.5, n)
    y = (rng.uniform(size=n) < norm.cdf(2.0 * x)).astype(float)
    d = Dataset(x[:, None], y, ["x1"], CLASSIFICATION)
    scaled, info = standardize(d, scale_response=False)
    hp = Hyperparams(m=5, burn_in=80, post_burn_in=120, seed=21,
                     leaf_model="linear")
    return x, y, run_classification(scaled, hp, info)


class TestRunClassification:
    def test_sigma2_fixed_at_one(self, class_run):
        _, _, draws = class_run
        assert np.all(draws.sigma2 == 1.0)
        assert np.all(draws.sigma2_chain == 1.0)

    def test_probabilities_in_unit_interval(self, class_run):
        _, _, draws = class_run
        assert draws.yhat_train.min() > 0.0
        assert draws.yhat_train.max() < 1.0

    def test_balanced_noise_centers_on_half(self):
        rng = np.random.default_rng(20)
        n = 200
        X = rng.normal(size=(n, 2))
        y = (rng.uniform(size=n) < 0.5).astype(float)
        d = Dataset(X, y, ["a", "b"], CLASSIFICATION)
        scaled, info = standardize(d, scale_response=False)
        draws = run_classification(scaled, hp_small(burn_in=50, post_burn_in=50), info)
        assert abs(draws.yhat_train.mean() - 0.5) < 0.1

    def test_rejects_wrong_task(self):
        d = Dataset(np.arange(4.0)[:, None], np.arange(4.0), ["a"], REGRESSION)
        with pytest.raises(ValueError):
            run_classification(d, hp_small())


def stump_draws(tree_dicts_per_iter, task=REGRESSION, p=1,
                scaling=None) -> PosteriorDraws:
    """Hand-built PosteriorDraws wrapping explicit serialized trees."""
    k = len(tree_dicts_per_iter)
    m = len(tree_dicts_per_iter[0])
    hp = Hyperparams(m=m, burn_in=1, post_burn_in=k, store_trees=True)
    return PosteriorDraws(
        task=task, hyperparams=hp,
        scaling=scaling if scaling is not None else ScalingInfo.identity(p),
        feature_names=[f"x{j + 1}" for j in range(p)], lam=1.0,
        iterations=np.arange(1, k + 1), sigma2=np.ones(k),
        tau_beta0=None, tau_beta=None, yhat_train=np.zeros((k, 1)),
        terminal_counts=np.ones((k, m), dtype=int),
        param_counts=np.ones((k, m), dtype=int),
        acceptance={}, sigma2_chain=np.ones(k + 1),
        trees=tree_dicts_per_iter,
    )


class TestPredict:
    def test_constant_stump_predicts_mu_everywhere(self):
        draws = stump_draws([[{"kind": "leaf", "mu": 3.0}]])
        res = predict(draws, np.array([[0.0], [5.0], [-2.0]]))
        assert_allclose(res.mean, 3.0)
        assert_allclose(res.lower, 3.0)
        assert_allclose(res.upper, 3.0)

    def test_linear_stump_reproduces_standardized_covariate(self):
        draws = stump_draws([[{"kind": "leaf", "beta": [0.0, 1.0],
                               "covariates": [0]}]])
        X = np.array([[0.3], [-1.2], [4.0]])
        res = predict(draws, X)
        assert_allclose(res.mean, X[:, 0])   # identity scaling

    def test_response_scaling_inverted(self):
        scaling = ScalingInfo(np.zeros(1), np.ones(1), 5.0, 10.0, True)
        draws = stump_draws([[{"kind": "leaf", "mu": 0.5}]], scaling=scaling)
        res = predict(draws, np.array([[1.0]]))
        assert_allclose(res.mean, 10.0)   # 0.5 * 10 + 5

    def test_classification_returns_probability(self):
        draws = stump_draws([[{"kind": "leaf", "mu": 0.0}]], task=CLASSIFICATION)
        res = predict(draws, np.array([[1.0], [2.0]]))
        assert_allclose(res.mean, 0.5)

    def test_column_count_mismatch(self):
        draws = stump_draws([[{"kind": "leaf", "mu": 0.0}]])
        with pytest.raises(ValueError, match="feature columns"):
            predict(draws, np.zeros((3, 2)))

    def test_missing_trees(self):
        draws = stump_draws([[{"kind": "leaf", "mu": 0.0}]])
        draws.trees = None
        with pytest.raises(ValueError, match="store_trees"):
            predict(draws, np.zeros((3, 1)))

    def test_replay_matches_training_record(self):
        data = friedman_generate(FriedmanSpec(n=100, p=5, seed=8))
        scaled, info = standardize(data)
        hp = hp_small(leaf_model="linear", store_trees=True,
                      burn_in=20, post_burn_in=30)
        draws = run_regression(scaled, hp, info)
        res = predict(draws, data.features)
        assert np.abs(res.draws - draws.yhat_train).max() < 1e-8


class TestHyperparams:
    def test_defaults_resolve_per_leaf_model(self):
        hp_lin = Hyperparams(leaf_model="linear")
        assert hp_lin.branching == "dirichlet"
        assert hp_lin.vars_inter_slope
        hp_con = Hyperparams(leaf_model="constant")
        assert hp_con.branching == "uniform"
        assert not hp_con.vars_inter_slope
        assert hp_con.tau_b == float(hp_con.m)

    def test_sigma_mu2(self):
        hp = Hyperparams(m=10, c=2.0)
        assert_allclose(hp.sigma_mu2, (0.5 / (2.0 * math.sqrt(10))) ** 2)

    def test_round_trip(self):
        hp = Hyperparams(m=7, leaf_model="linear", seed=5, lam=0.3)
        assert Hyperparams.from_dict(hp.to_dict()) == hp

    def test_validation(self):
        with pytest.raises(ValueError):
            Hyperparams(alpha=1.5)
        with pytest.raises(ValueError):
            Hyperparams(c=5.0)
        with pytest.raises(ValueError):
            Hyperparams(leaf_model="cubic")
