import numpy as np
import pytest
from scipy import stats

from rbmcal.evaluation import kl_joint, total_variation
from rbmcal.rbm import Configuration, RbmParams, exact_distribution, model_expectations, scaled_params
from rbmcal.samplers import (
    NoiseModel,
    NoiseSpec,
    SampleSet,
    block_gibbs_step,
    cd_negative_phase,
    exact_sample,
    gibbs_sample,
    make_noise_model,
    marginal_sample,
    noisy_annealer_sample,
)


def test_block_gibbs_zero_params_gives_fair_bits():
    p = RbmParams.zeros(3, 2)
    rng = np.random.default_rng(0)
    cfg = Configuration([0, 0, 0], [0, 0])
    total = np.zeros(5)
    steps = 100_000
    for _ in range(steps):
        cfg = block_gibbs_step(p, cfg, rng)
        total += np.concatenate([cfg.v, cfg.h])
    means = total / steps
    assert np.all((means > 0.49) & (means < 0.51))


def test_block_gibbs_saturates_to_all_ones():
    p = RbmParams(np.zeros((4, 2)), [50.0] * 4, np.zeros(2))
    rng = np.random.default_rng(1)
    for _ in range(20):
        cfg = Configuration([0] * 4, [0, 0])
        for _ in range(2):
            cfg = block_gibbs_step(p, cfg, rng)
        assert np.all(cfg.v == 1)


@pytest.mark.slow
def test_single_chain_matches_exact_distribution(small_params):
    rng = np.random.default_rng(2)
    cfg = Configuration([0, 0, 0], [0, 0])
    for _ in range(1000):
        cfg = block_gibbs_step(small_params, cfg, rng)
    counts = np.zeros(32)
    for _ in range(200_000):
        cfg = block_gibbs_step(small_params, cfg, rng)
        counts[cfg.index()] += 1
    tv = total_variation(counts / counts.sum(), exact_distribution(small_params).probabilities)
    assert tv <= 0.01


def test_gibbs_sample_shape_order_and_reproducibility(small_params):
    a = gibbs_sample(small_params, 1000, burn_in=50, thinning=2, n_chains=7, rng=3)
    b = gibbs_sample(small_params, 1000, burn_in=50, thinning=2, n_chains=7, rng=3)
    assert a.total_count == 1000 and a.source_tag == "gibbs"
    assert np.array_equal(a.indices, b.indices)


def test_gibbs_sample_fair_bits_and_saturation():
    s = gibbs_sample(RbmParams.zeros(3, 2), 100_000, burn_in=10, thinning=1, n_chains=50, rng=4)
    means = np.concatenate([s.v, s.h], axis=1).mean(axis=0)
    assert np.all((means > 0.49) & (means < 0.51))
    sat = gibbs_sample(RbmParams(np.zeros((3, 2)), [50.0] * 3, np.zeros(2)), 100, burn_in=2, thinning=1, n_chains=4, rng=5)
    assert np.all(sat.v == 1)


def test_gibbs_sample_matches_exact_distribution(small_params):
    s = gibbs_sample(small_params, 200_000, burn_in=1000, thinning=2, n_chains=100, rng=6)
    tv = total_variation(s.counts() / len(s), exact_distribution(small_params).probabilities)
    assert tv <= 0.01


def test_gibbs_sample_rejects_bad_schedule(small_params):
    with pytest.raises(ValueError):
        gibbs_sample(small_params, 10, thinning=0, rng=0)


def test_cd_zero_params_uniform_output():
    data = np.random.default_rng(7).integers(0, 2, (20_000, 3))
    s = cd_negative_phase(RbmParams.zeros(3, 2), data, 1, rng=8)
    means = np.concatenate([s.v, s.h], axis=1).mean(axis=0)
    assert np.all(np.abs(means - 0.5) < 0.02)


def test_cd_rejects_k_zero(small_params):
    with pytest.raises(ValueError):
        cd_negative_phase(small_params, np.zeros((1, 3)), 0)


def test_cd_empty_data_gives_empty_set(small_params):
    assert cd_negative_phase(small_params, np.zeros((0, 3)), 1).total_count == 0


def test_long_cd_reaches_model_moments(small_params):
    rng = np.random.default_rng(9)
    data = exact_sample(exact_distribution(small_params), 50_000, rng).v
    s = cd_negative_phase(small_params, data, 25, rng)
    vh = (s.v.astype(float).T @ s.h) / len(s)
    assert np.abs(vh - model_expectations(small_params)[0]).max() < 0.02


def test_exact_sample_point_mass():
    from rbmcal.rbm import ExactDistribution

    p = np.zeros(32)
    p[13] = 1.0
    d = ExactDistribution(3, 2, p, 0.0, "point")
    s = exact_sample(d, 500, rng=0)
    assert np.all(s.indices == 13)


def test_exact_sample_uniform_counts_within_five_sigma():
    d = exact_distribution(RbmParams.zeros(3, 2))
    n = 32 * 1000
    counts = exact_sample(d, n, rng=1).counts()
    sigma = np.sqrt(n * (1 / 32) * (31 / 32))
    assert np.all(np.abs(counts - 1000) < 5 * sigma)


def test_exact_sample_kl_small_at_one_million(small_params):
    d = exact_distribution(small_params)
    assert kl_joint(exact_sample(d, 10**6, rng=2), d) < 0.005


def test_marginal_sample_agrees_with_table(small_params):
    """Two-stage exact sampling passes a chi-square test against the table."""
    for params in (small_params, RbmParams.random(2, 4, np.random.default_rng(3), 1.5)):
        d = exact_distribution(params)
        counts = marginal_sample(params, 200_000, rng=4).counts()
        assert stats.chisquare(counts, d.probabilities * counts.sum()).pvalue > 1e-3


def test_noisy_annealer_identity_noise_is_clean_model(small_params):
    noisy = noisy_annealer_sample(small_params, NoiseModel.identity(3, 2), 5000, rng=5)
    clean = marginal_sample(small_params, 5000, rng=5)
    assert np.array_equal(noisy.indices, clean.indices)
    assert noisy.source_tag == "noisy_annealer"


def test_noisy_annealer_uniform_noise_is_inverse_temperature(small_params):
    noisy = noisy_annealer_sample(small_params, NoiseModel.uniform(2.0, 3, 2), 5000, rng=6, fidelity="table")
    hot = exact_sample(exact_distribution(scaled_params(small_params, (2.0, 2.0, 2.0))), 5000, rng=6)
    assert np.array_equal(noisy.indices, hot.indices)


def test_noisy_annealer_gibbs_fidelity(small_params):
    s = noisy_annealer_sample(small_params, NoiseModel.uniform(0.5, 3, 2), 100_000, rng=7,
                              fidelity="gibbs", burn_in=200, thinning=2, n_chains=50)
    target = exact_distribution(scaled_params(small_params, (0.5, 0.5, 0.5)))
    assert total_variation(s.counts() / len(s), target.probabilities) < 0.02


def test_noisy_annealer_rejects_unknown_fidelity(small_params):
    with pytest.raises(ValueError):
        noisy_annealer_sample(small_params, NoiseModel.identity(3, 2), 10, rng=0, fidelity="quantum")


def test_fig3_noise_degrades_the_pretrained_model(pretrained):
    params = pretrained
    n, m = params.n_visible, params.n_hidden
    clean = exact_distribution(params)
    floor = kl_joint(marginal_sample(params, 10**6, rng=8), clean)
    noise = make_noise_model(NoiseSpec("constant", 6.8, 0.0, 7.0, 0.5, 4.5, 0.5, seed=1), n, m)
    noisy = kl_joint(noisy_annealer_sample(params, noise, 10**6, rng=8), clean)
    assert noisy > floor


def test_pooled_noise_models_split_budget(small_params):
    models = [make_noise_model(NoiseSpec("gaussian", 1.0, 0.1, 1.0, 0.1, 1.0, 0.1, seed=k), 3, 2) for k in range(3)]
    s = noisy_annealer_sample(small_params, models, 1000, rng=9)
    assert s.total_count == 1000


def test_make_noise_model_modes():
    const = make_noise_model(NoiseSpec("constant", 6.8, 0.0, 7.0, 0.0, 4.5, 0.0, seed=3), 4, 3)
    gauss0 = make_noise_model(NoiseSpec("gaussian", 6.8, 0.0, 7.0, 0.0, 4.5, 0.0, seed=3), 4, 3)
    assert const == gauss0
    assert np.all(const.beta_err_w == 6.8) and np.all(const.beta_err_b == 7.0) and np.all(const.beta_err_c == 4.5)


def test_make_noise_model_deterministic_and_positive():
    spec = NoiseSpec("gaussian", 0.5, 1.0, 0.5, 1.0, 0.5, 1.0, seed=11)
    a = make_noise_model(spec, 12, 6)
    b = make_noise_model(spec, 12, 6)
    assert a == b
    assert np.all(a.beta_err_w > 0) and np.all(a.beta_err_b > 0) and np.all(a.beta_err_c > 0)


def test_noise_spec_and_model_validation():
    with pytest.raises(ValueError):
        NoiseSpec(w_sigma=-1.0)
    with pytest.raises(ValueError):
        NoiseSpec(w_mode="lognormal")
    with pytest.raises(ValueError):
        NoiseModel(np.zeros((2, 2)), np.ones(2), np.ones(2))


def test_samplers_are_reproducible(small_params):
    data = np.random.default_rng(0).integers(0, 2, (50, 3))
    for draw in (
        lambda r: cd_negative_phase(small_params, data, 2, r),
        lambda r: exact_sample(exact_distribution(small_params), 100, r),
        lambda r: marginal_sample(small_params, 100, r),
        lambda r: gibbs_sample(small_params, 100, 10, 2, 4, r),
    ):
        assert np.array_equal(draw(np.random.default_rng(42)).indices, draw(np.random.default_rng(42)).indices)


def test_sample_set_file_round_trip(tmp_path, small_params):
    s = marginal_sample(small_params, 50, rng=1)
    s = SampleSet(s.indices, 3, 2, "exact", seed=1)
    s.write(tmp_path / "s.txt")
    lines = (tmp_path / "s.txt").read_text().splitlines()
    assert lines[0] == "# n_visible=3 n_hidden=2 source_tag=exact seed=1"
    assert len(lines[1].split()[0]) == 3 and len(lines[1].split()[1]) == 2
    back = SampleSet.read(tmp_path / "s.txt")
    assert np.array_equal(back.indices, s.indices) and back.seed == 1 and back.source_tag == "exact"


def test_sample_set_read_reports_line(tmp_path):
    (tmp_path / "bad.txt").write_text("# n_visible=2 n_hidden=1 source_tag=exact seed=\n01 1\n0x 1\n")
    with pytest.raises(ValueError, match=":3:"):
        SampleSet.read(tmp_path / "bad.txt")


def test_sample_set_counts_and_invariants():
    s = SampleSet([0, 3, 3, 7], 2, 1, "exact")
    assert s.total_count == 4 == s.counts().sum()
    with pytest.raises(ValueError):
        SampleSet([8], 2, 1, "exact")
    with pytest.raises(ValueError):
        SampleSet([0], 2, 1, "hardware")
