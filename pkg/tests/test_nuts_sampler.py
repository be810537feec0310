import numpy as np
import pytest

from sfpinfer import Dataset, Diagnostic, Prior, SamplerConfig, SupplyChain, credible_intervals, rhat, sample
from sfpinfer.nuts_sampler import PosteriorDraws, SamplerError, sample_target
from sfpinfer.supply_model import TRACKED

SMALL_PRIOR = Prior("normal", -2.0, 1.0)


def std_normal(x):
    return -0.5 * float(x @ x), -x


def test_standard_normal_moments():
    cfg = SamplerConfig(target_accept=0.8, warmup_draws=1000, inference_draws=10_000, seed=1)
    draws = sample_target(std_normal, 2, cfg).logit_draws
    assert np.all(np.abs(draws.mean(axis=0)) < 0.05)
    assert np.all(np.abs(draws.var(axis=0) - 1.0) < 0.1)


def test_correlated_gaussian_covariance():
    cov = np.array([[1.0, 0.8], [0.8, 1.0]])
    prec = np.linalg.inv(cov)

    def f(x):
        return -0.5 * float(x @ prec @ x), -prec @ x

    draws = sample_target(f, 2, SamplerConfig(target_accept=0.8, warmup_draws=1000,
                                              inference_draws=8000, seed=2)).logit_draws
    np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.1)


def test_dual_averaging_hits_target():
    for delta in (0.4, 0.8):
        cfg = SamplerConfig(target_accept=delta, warmup_draws=2000, inference_draws=2000, seed=3)
        d = sample_target(std_normal, 5, cfg)
        assert abs(d.diagnostics[0].mean_accept - delta) < 0.1


def test_prior_only_quantiles():
    data = Dataset.empty(SupplyChain.numbered(1, 1))
    cfg = SamplerConfig(warmup_draws=1000, inference_draws=4000, seed=4)
    draws = sample(data, Diagnostic(), SMALL_PRIOR, cfg).draws
    q = np.quantile(draws, [0.05, 0.5, 0.95], axis=0)
    for k in range(2):
        np.testing.assert_allclose(q[:, k], [0.03, 0.12, 0.41], atol=0.02)


def test_small_chain_posterior(small_chain):
    draws = sample(small_chain, Diagnostic(), SMALL_PRIOR, SamplerConfig(seed=0))
    iv = credible_intervals(draws, 0.10)
    assert iv[3].median < 0.45
    assert 0.20 <= iv[1].upper <= 0.40
    assert draws.draws.shape == (1000, 5)


def test_seed_determinism(small_chain):
    cfg = SamplerConfig(warmup_draws=300, inference_draws=200, seed=7, chains=2)
    a = sample(small_chain, Diagnostic(), SMALL_PRIOR, cfg)
    b = sample(small_chain, Diagnostic(), SMALL_PRIOR, cfg)
    np.testing.assert_array_equal(a.chain_logit_draws, b.chain_logit_draws)
    assert not np.array_equal(a.chain_logit_draws[0], a.chain_logit_draws[1])
    c = sample(small_chain, Diagnostic(), SMALL_PRIOR, SamplerConfig(warmup_draws=300, inference_draws=200, seed=8, chains=2))
    assert not np.array_equal(a.chain_logit_draws, c.chain_logit_draws)


def test_worker_processes_do_not_change_draws(small_chain):
    cfg = SamplerConfig(warmup_draws=200, inference_draws=100, seed=5, chains=2)
    serial = sample(small_chain, Diagnostic(), SMALL_PRIOR, cfg)
    parallel = sample(small_chain, Diagnostic(), SMALL_PRIOR, SamplerConfig(**{**cfg.__dict__, "workers": 2}))
    np.testing.assert_array_equal(serial.chain_logit_draws, parallel.chain_logit_draws)


def test_draw_count_contract_with_divergences():
    # a funnel-like target that diverges for large steps
    def f(x):
        v = x[0]
        lp = -0.5 * v**2 / 9 - 0.5 * x[1] ** 2 * np.exp(-v) - 0.5 * v
        g = np.array([-v / 9 + 0.5 * x[1] ** 2 * np.exp(-v) - 0.5, -x[1] * np.exp(-v)])
        return lp, g

    cfg = SamplerConfig(target_accept=0.3, warmup_draws=200, inference_draws=500, seed=6)
    d = sample_target(f, 2, cfg)
    assert d.logit_draws.shape == (500, 2)
    assert len(d.diagnostics[0].tree_depth) == 500
    assert np.all(d.diagnostics[0].tree_depth <= cfg.max_tree_depth)


def test_rate_draws_are_expit_of_logit(small_chain):
    d = sample(small_chain, Diagnostic(), SMALL_PRIOR, SamplerConfig(warmup_draws=100, inference_draws=50))
    np.testing.assert_allclose(d.draws, 1 / (1 + np.exp(-d.logit_draws)))
    assert np.all((d.draws > 0) & (d.draws < 1))


def test_initialization_failure():
    def f(x):
        return -np.inf, np.zeros_like(x)

    with pytest.raises(SamplerError):
        sample_target(f, 2, SamplerConfig(warmup_draws=1, inference_draws=1))


def test_nan_draws_rejected():
    with pytest.raises(SamplerError):
        PosteriorDraws(np.full((1, 3, 2), np.nan), [])


def test_adapted_mass_matrix():
    scale = np.array([0.1, 10.0])

    def f(x):
        return -0.5 * float(np.sum((x / scale) ** 2)), -x / scale**2

    d = sample_target(f, 2, SamplerConfig(target_accept=0.8, warmup_draws=1500, inference_draws=4000,
                                          seed=9, adapt_mass=True))
    np.testing.assert_allclose(d.logit_draws.std(axis=0), scale, rtol=0.15)
    assert d.diagnostics[0].inv_mass[1] > 100 * d.diagnostics[0].inv_mass[0]


@pytest.mark.parametrize("kwargs", [
    {"target_accept": 0.0}, {"target_accept": 1.0}, {"warmup_draws": 0},
    {"inference_draws": 0}, {"max_tree_depth": 4}, {"max_tree_depth": 16}, {"chains": 0},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SamplerConfig(**kwargs)


def test_default_config():
    cfg = SamplerConfig()
    assert (cfg.target_accept, cfg.warmup_draws, cfg.inference_draws, cfg.chains, cfg.max_tree_depth) == (
        0.4, 5000, 1000, 1, 10)


# split R-hat

def test_rhat_identical_chains():
    rng = np.random.default_rng(0)
    c = rng.normal(size=(400, 3))
    np.testing.assert_allclose(rhat([c, c]), 1.0, atol=0.01)
    const = np.full((400, 3), 0.2)
    np.testing.assert_array_equal(rhat([const, const]), 1.0)


def test_rhat_disjoint_constants():
    r = rhat([np.zeros((100, 2)), np.ones((100, 2))])
    assert np.all(r > 1.1)
    rng = np.random.default_rng(1)
    r = rhat([rng.normal(0, 0.1, size=(100, 2)), rng.normal(5, 0.1, size=(100, 2))])
    assert np.all(r > 1.1)


def test_rhat_detects_trend_within_chain():
    trend = np.linspace(0, 10, 200)[:, None]
    assert rhat([trend, trend])[0] > 1.1


def test_rhat_errors():
    with pytest.raises(ValueError):
        rhat([np.zeros((10, 2))])
    with pytest.raises(ValueError):
        rhat([np.zeros((10, 2)), np.zeros((12, 2))])


def test_rhat_accepts_posterior_draws(small_chain):
    d = sample(small_chain, Diagnostic(), SMALL_PRIOR, SamplerConfig(warmup_draws=500, inference_draws=400, chains=2))
    np.testing.assert_array_equal(rhat(d), rhat(d.per_chain()))
