"""Return environments: determinism, episode mechanics, policy invariances."""

import numpy as np
import pytest
from scipy import stats

from cptopt import CptModel, GaussianMeanEnv, estimate_cpt, substream
from cptopt.envs.ssp import (
    BoltzmannPolicy,
    SspMdp,
    SspReturnEnv,
    boltzmann_probs,
    one_step_chain,
    ssp_episode,
    two_state_chain,
)


class TestGaussianMeanEnv:
    def test_mean_at_optimum(self):
        env = GaussianMeanEnv(optimum=2.0, curvatures=2.0, noise_std=0.1)
        samples = env.sample_returns([2.0], 100_000, substream(0))
        assert abs(samples.mean()) <= 0.004

    def test_identical_substream_identical_samples(self):
        env = GaussianMeanEnv()
        a = env.sample_returns([1.0], 50, substream(3, 1, 2))
        b = env.sample_returns([1.0], 50, substream(3, 1, 2))
        assert np.array_equal(a, b)

    def test_single_sample(self):
        env = GaussianMeanEnv()
        out = env.sample_returns([0.5], 1, substream(1))
        assert out.shape == (1,)
        assert np.isfinite(out[0])

    def test_domain_errors(self):
        env = GaussianMeanEnv()
        with pytest.raises(ValueError):
            env.sample_returns([np.nan], 5, substream(0))
        with pytest.raises(ValueError):
            env.sample_returns([1.0, 2.0], 5, substream(0))
        with pytest.raises(ValueError):
            env.sample_returns([1.0], 0, substream(0))

    def test_substream_batches_are_independent(self):
        # chi-square independence on paired batches from sibling substreams
        env = GaussianMeanEnv()
        a = env.sample_returns([1.0], 4_000, substream(5, 0))
        b = env.sample_returns([1.0], 4_000, substream(5, 1))
        qa = np.quantile(a, [0.25, 0.5, 0.75])
        qb = np.quantile(b, [0.25, 0.5, 0.75])
        table = np.zeros((4, 4))
        for x, y in zip(a, b):
            table[np.searchsorted(qa, x), np.searchsorted(qb, y)] += 1
        result = stats.chi2_contingency(table)
        assert result.pvalue > 1e-3


class TestBoltzmannPolicy:
    def test_zero_weights_uniform(self):
        mdp = two_state_chain()
        policy = BoltzmannPolicy((0.0, 0.0), mdp)
        assert boltzmann_probs(policy, 1) == pytest.approx([0.5, 0.5])

    def test_equal_scores_uniform(self):
        mdp = two_state_chain()
        policy = BoltzmannPolicy((1.0, 1.0), mdp)
        assert boltzmann_probs(policy, 1) == pytest.approx([0.5, 0.5])

    def test_log3_scores(self):
        mdp = two_state_chain()
        policy = BoltzmannPolicy((np.log(3.0), 0.0), mdp)
        assert boltzmann_probs(policy, 1) == pytest.approx([0.75, 0.25])

    def test_probabilities_sum_to_one(self):
        mdp = two_state_chain()
        rng = np.random.default_rng(0)
        for _ in range(100):
            policy = BoltzmannPolicy(tuple(rng.normal(size=2) * 50), mdp)
            probs = boltzmann_probs(policy, 1)
            assert probs.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(probs > 0.0)

    def test_shift_invariance(self):
        # adding a constant vector to every action's features leaves the
        # distribution unchanged
        base = two_state_chain()
        shift = (7.5, -3.25)
        shifted = SspMdp(
            transitions=base.transitions,
            rewards=base.rewards,
            features=(
                tuple(
                    tuple(f + s for f, s in zip(feat, shift))
                    for feat in base.features[0]
                ),
            ),
            start=1,
        )
        theta = (0.37, -1.2)
        assert boltzmann_probs(BoltzmannPolicy(theta, base), 1) == pytest.approx(
            boltzmann_probs(BoltzmannPolicy(theta, shifted), 1)
        )

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            BoltzmannPolicy((1.0,), two_state_chain())

    def test_absorbing_state_has_no_actions(self):
        policy = BoltzmannPolicy((0.0, 0.0), two_state_chain())
        with pytest.raises(ValueError):
            boltzmann_probs(policy, 0)


class TestSspEpisode:
    def test_forced_one_step_absorption(self):
        mdp = one_step_chain(reward=1.0)
        result = ssp_episode(mdp, BoltzmannPolicy((0.0,), mdp), substream(0))
        assert result.ret == 1.0
        assert result.length == 1
        assert not result.truncated

    def test_geometric_series_mean(self):
        # uniform policy: R = 1/2 * 0 + 1/2 * (1 + 1/2 * R)  =>  R = 2/3
        mdp = two_state_chain()
        policy = BoltzmannPolicy((0.0, 0.0), mdp)
        rng = substream(42)
        returns = np.array([ssp_episode(mdp, policy, rng).ret for _ in range(100_000)])
        se = returns.std(ddof=1) / np.sqrt(returns.size)
        assert abs(returns.mean() - 2.0 / 3.0) <= 3 * se

    def test_saturated_policy_mostly_one_step(self):
        mdp = two_state_chain()
        policy = BoltzmannPolicy((50.0, 0.0), mdp)  # absorbing action dominates
        rng = substream(7)
        lengths = [ssp_episode(mdp, policy, rng).length for _ in range(5_000)]
        assert np.mean(np.asarray(lengths) == 1) >= 0.99

    def test_truncation_flag(self):
        mdp = two_state_chain(continue_prob=0.999, t_max=3)
        policy = BoltzmannPolicy((-50.0, 50.0), mdp)  # loop action dominates
        result = ssp_episode(mdp, policy, substream(1))
        assert result.truncated
        assert result.length == 3

    def test_malformed_kernel_rejected_at_construction(self):
        with pytest.raises(ValueError):
            SspMdp(
                transitions=(((0.5, 0.4),),),  # row sums to 0.9
                rewards=((1.0,),),
                features=(((1.0,),),),
            )

    def test_identity_cpt_matches_expected_return(self):
        # with identity utilities/weights the estimated value of the return
        # distribution is the expected return
        mdp = two_state_chain()
        env = SspReturnEnv(mdp)
        returns = env.sample_returns([0.0, 0.0], 100_000, substream(11))
        est = estimate_cpt(
            returns, CptModel.identity(),
        )
        se = returns.std(ddof=1) / np.sqrt(returns.size)
        assert abs(est.value - 2.0 / 3.0) <= 3 * se


class TestSspReturnEnv:
    def test_determinism(self):
        env = SspReturnEnv(two_state_chain())
        a = env.sample_returns([0.3, -0.2], 200, substream(9, 4))
        b = env.sample_returns([0.3, -0.2], 200, substream(9, 4))
        assert np.array_equal(a, b)

    def test_dim(self):
        assert SspReturnEnv(two_state_chain()).dim == 2
