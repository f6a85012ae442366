import math

import numpy as np
import pytest
from scipy import stats

from specgap.chains import BiasedLineChain, DenseMatrixChain, TabularSampler, UniformSampler
from specgap.estimator import UcpiConfig, config_for_budget, finalize_estimate
from specgap.extensions import (
    SquaredChainOracle,
    WeightedReturnAccumulator,
    estimate_nonlazy,
    finalize_weighted,
    weighted_collect,
)
from specgap.sampling import CollectionError, RtfEngine, rtf_collect

FLIP_HEAVY = DenseMatrixChain([[0.1, 0.9], [0.9, 0.1]])  # eigenvalues 1, -0.8
TWO_STATE = DenseMatrixChain([[0.75, 0.25], [0.25, 0.75]])  # eigenvalues 1, 0.5


class CallCounter:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def state_space_size(self):
        return self.inner.state_space_size()

    def next_state(self, x, rng):
        self.calls += 1
        return self.inner.next_state(x, rng)


# ---------------------------------------------------------------------------
# squared-chain oracle
# ---------------------------------------------------------------------------


def test_squared_oracle_makes_exactly_two_inner_calls():
    counter = CallCounter(FLIP_HEAVY)
    squared = SquaredChainOracle(counter)
    rng = np.random.default_rng(0)
    for _ in range(50):
        squared.next_state(0, rng)
    assert counter.calls == 100


def test_squared_oracle_frequencies_match_explicit_square():
    P = FLIP_HEAVY.transition_matrix()
    P2 = P @ P
    squared = SquaredChainOracle(FLIP_HEAVY)
    rng = np.random.default_rng(1)
    draws = 20_000
    for x in range(2):
        observed = np.bincount([squared.next_state(x, rng) for _ in range(draws)], minlength=2)
        _, pvalue = stats.chisquare(observed, draws * P2[x])
        assert pvalue > 1e-3


def test_squared_oracle_three_state_vectorized_vs_square():
    chain = DenseMatrixChain([[0.6, 0.3, 0.1], [0.3, 0.5, 0.2], [0.1, 0.2, 0.7]])
    squared = SquaredChainOracle(chain)
    assert squared.uniforms_per_step == 2
    P2 = chain.transition_matrix() @ chain.transition_matrix()
    rng = np.random.default_rng(2)
    draws = 30_000
    us = rng.random((draws, 2))
    for x in range(3):
        ys = squared.step_with_uniforms(np.full(draws, x, dtype=np.int64), us)
        observed = np.bincount(ys, minlength=3)
        _, pvalue = stats.chisquare(observed, draws * P2[x])
        assert pvalue > 1e-3


def test_squared_oracle_demotes_to_scalar_with_scalar_inner():
    class ScalarOnly:
        def __init__(self, inner):
            self.inner = inner

        def state_space_size(self):
            return self.inner.state_space_size()

        def next_state(self, x, rng):
            return self.inner.next_state(x, rng)

    squared = SquaredChainOracle(ScalarOnly(TWO_STATE))
    assert getattr(squared, "uniforms_per_step", None) is None


# ---------------------------------------------------------------------------
# non-lazy estimation
# ---------------------------------------------------------------------------


def test_nonlazy_square_root_mapping():
    cfg = config_for_budget(10**4 // 2, 2)
    result = estimate_nonlazy(FLIP_HEAVY, cfg, UniformSampler(2), master_seed=5)
    assert result.spectral_radius_bound == math.sqrt(result.squared_estimate.ell_star)
    assert result.inner_calls == 2 * cfg.num_paths * cfg.max_path_length
    # zeta_2 = 0.64 for eigenvalues {1, -0.8}; the bound must sit above |lambda| = 0.8
    assert result.spectral_radius_bound >= 0.8


def test_nonlazy_coverage_on_negative_spectrum():
    cfg = config_for_budget(5000, 2)
    hits = 0
    trials = 60
    for seed in range(trials):
        result = estimate_nonlazy(FLIP_HEAVY, cfg, UniformSampler(2), master_seed=seed)
        hits += result.spectral_radius_bound >= 0.8
    assert hits == trials  # conservative bound: violations should be rare to absent


def test_nonlazy_on_lazy_chain_still_covers():
    cfg = config_for_budget(5000, 2)
    for seed in range(30):
        result = estimate_nonlazy(TWO_STATE, cfg, UniformSampler(2), master_seed=seed)
        assert result.spectral_radius_bound >= 0.5


# ---------------------------------------------------------------------------
# importance-weighted starts
# ---------------------------------------------------------------------------


def test_weighted_accumulator_scaled_counts_bounds():
    acc = WeightedReturnAccumulator.empty(4, w_max=3.0)
    assert acc.max_path_length == 4
    assert np.array_equal(acc.weighted_sums, np.zeros(4))
    with pytest.raises(ValueError):
        WeightedReturnAccumulator.empty(0, w_max=2.0)
    with pytest.raises(ValueError):
        WeightedReturnAccumulator.empty(3, w_max=0.5)


def test_weighted_uniform_reduces_to_plain_counts():
    chain = BiasedLineChain(20, 0.7)
    cfg = UcpiConfig(20, 3000, 12, 0.05)
    sampler = UniformSampler(20)
    weighted = weighted_collect(chain, sampler, cfg, master_seed=9)
    plain = rtf_collect(RtfEngine(chain, sampler, cfg, 9))
    assert np.array_equal(weighted.scaled_counts, plain.counts.astype(float))
    assert np.array_equal(weighted.weighted_sums, plain.counts * 20.0)


def test_weighted_uniform_finalizes_identically_to_plain_pipeline():
    chain = BiasedLineChain(20, 0.7)
    cfg = UcpiConfig(20, 3000, 12, 0.05)
    sampler = UniformSampler(20)
    est_w = finalize_weighted(weighted_collect(chain, sampler, cfg, master_seed=9), cfg)
    est_p = finalize_estimate(rtf_collect(RtfEngine(chain, sampler, cfg, 9)), cfg)
    assert np.array_equal(est_w.m_hat, est_p.m_hat)
    assert np.array_equal(est_w.u_hat, est_p.u_hat)
    assert np.array_equal(est_w.ell_hat, est_p.ell_hat)
    assert est_w.ell_star == est_p.ell_star
    assert est_w.argmin_k == est_p.argmin_k


def test_weighted_single_state_support():
    # absorbing state with a point-mass sampler: every weighted term is 1
    absorbing = DenseMatrixChain([[1.0]])
    sampler = TabularSampler([1.0])
    cfg = UcpiConfig(2, 25, 3, 0.1)  # config |S| is irrelevant to collection
    acc = weighted_collect(absorbing, sampler, cfg, master_seed=1)
    assert np.array_equal(acc.weighted_sums, np.full(3, 25.0))
    assert acc.paths_completed == 25


def test_weighted_sums_unbiased_for_trace():
    # E[weighted_sums / I] = tr(P^k) = 1 + 0.5^k on the two-state chain
    cfg = UcpiConfig(2, 10**5, 6, 0.05)
    mu = TabularSampler([0.4, 0.6])
    acc = weighted_collect(TWO_STATE, mu, cfg, master_seed=23)
    I = cfg.num_paths
    P = TWO_STATE.transition_matrix()
    Pk = np.eye(2)
    for k in range(1, 7):
        Pk = Pk @ P
        trace = float(np.trace(Pk))
        # exact per-path variance of 1{return}/mu(start) under start ~ mu
        second_moment = sum(Pk[x, x] / mu.pmf(x) for x in range(2))
        se = math.sqrt((second_moment - trace**2) / I)
        assert abs(acc.weighted_sums[k - 1] / I - trace) <= 5 * se


def test_weighted_zero_mean_closed_form():
    # s_k = 0 forces the trace bound (1 - (delta/2K)^(1/I)) * w_max
    never_return = DenseMatrixChain([[0.0, 1.0], [1.0, 0.0]])
    cfg = UcpiConfig(2, 50, 1, 0.1)
    mu = TabularSampler([0.5, 0.5])
    acc = weighted_collect(never_return, mu, cfg, master_seed=2)
    assert acc.scaled_counts[0] == 0.0
    est = finalize_weighted(acc, cfg)
    expected_trace_bound = (1.0 - (0.1 / 2.0) ** (1.0 / 50)) * 2.0
    assert est.u_hat[0] * 2.0 == pytest.approx(expected_trace_bound, abs=1e-15)


def test_weighted_coverage_near_uniform():
    # min_pmf * |S| = 0.8 >= 0.5, where the rescaled bound stays usable
    cfg = config_for_budget(10**4, 2)
    mu = TabularSampler([0.4, 0.6])
    hits = 0
    trials = 200
    for seed in range(trials):
        est = finalize_weighted(weighted_collect(TWO_STATE, mu, cfg, master_seed=seed), cfg)
        hits += est.ell_star >= 0.5
    assert hits / trials >= 1.0 - cfg.confidence


def test_weighted_rejects_zero_pmf_draws():
    class LyingSampler:
        def sample(self, rng):
            return 1

        def pmf(self, x):
            return 0.0  # inconsistent with sample()

        def min_pmf(self):
            return 0.25

    cfg = UcpiConfig(2, 10, 2, 0.1)
    with pytest.raises(CollectionError, match="zero pmf"):
        weighted_collect(TWO_STATE, LyingSampler(), cfg, master_seed=0)


def test_finalize_weighted_validation():
    cfg = UcpiConfig(2, 10, 3, 0.1)
    acc = WeightedReturnAccumulator.empty(3, w_max=2.0)
    acc.paths_completed = 10
    with pytest.raises(ValueError, match="inconsistent"):
        finalize_weighted(acc, cfg, min_pmf=0.25)
    short = WeightedReturnAccumulator.empty(2, w_max=2.0)
    short.paths_completed = 10
    with pytest.raises(ValueError, match="path lengths"):
        finalize_weighted(short, cfg)
    acc.paths_completed = 9
    with pytest.raises(ValueError, match="completed"):
        finalize_weighted(acc, cfg)


def test_weighted_worker_counts_agree():
    chain = BiasedLineChain(20, 0.5)
    cfg = UcpiConfig(20, 2500, 6, 0.05)
    mu = TabularSampler(np.full(20, 0.05))
    base = weighted_collect(chain, mu, cfg, master_seed=4, worker_count=1)
    many = weighted_collect(chain, mu, cfg, master_seed=4, worker_count=8)
    assert np.array_equal(base.scaled_counts, many.scaled_counts)
