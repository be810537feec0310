import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sfpinfer import Dataset, Diagnostic, RateVector, SupplyChain, TestRecord
from sfpinfer.supply_model import TRACKED, UNTRACKED
from sfpinfer.synth import GenConfig, generate_chain, simulate_tests, trace_density

EDGE = 1e-12


def simulate(**kw):
    cfg = GenConfig(**kw)
    chain, q, rates = generate_chain(cfg)
    return simulate_tests(chain, q, rates, cfg), q, rates


def test_single_supply_node_rows():
    _, q, _ = generate_chain(GenConfig(n_test_nodes=5, n_supply_nodes=1))
    np.testing.assert_array_equal(q.q, np.ones((5, 1)))


def test_same_seed_same_outputs():
    cfg = GenConfig(seed=42)
    (c1, q1, r1), (c2, q2, r2) = generate_chain(cfg), generate_chain(cfg)
    assert c1 == c2 and np.array_equal(q1.q, q2.q) and r1 == r2
    assert simulate_tests(c1, q1, r1, cfg) == simulate_tests(c2, q2, r2, cfg)
    _, q3, _ = generate_chain(GenConfig(seed=43))
    assert not np.array_equal(q1.q, q3.q)


@given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 10_000), st.floats(0.2, 3.0))
def test_rows_are_stochastic(A, B, seed, shape):
    _, q, _ = generate_chain(GenConfig(n_test_nodes=A, n_supply_nodes=B, seed=seed, pareto_shape=shape))
    np.testing.assert_allclose(q.q.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(q.q >= 0)
    if B > 1:
        # truncation at the row median zeroes roughly half of each row
        assert np.all((q.q > 0).sum(axis=1) <= B - (B // 2) + 1)


def test_trace_density_50x50_bracket():
    dens = [trace_density(simulate(n_test_nodes=50, n_supply_nodes=50, seed=s)[0]) for s in range(20)]
    assert 0.07 <= np.mean(dens) <= 0.20


def test_zero_rates_perfect_tool_no_positives():
    rates = RateVector(np.full(4, EDGE), np.full(3, EDGE))
    data, _, _ = simulate(n_test_nodes=4, n_supply_nodes=3, rates=rates, n_tests=5000)
    assert data.result.sum() == 0


def test_false_positive_floor():
    rates = RateVector(np.full(4, EDGE), np.full(3, EDGE))
    data, _, _ = simulate(n_test_nodes=4, n_supply_nodes=3, rates=rates, n_tests=10_000, diag=Diagnostic(1.0, 0.95))
    assert data.result.mean() == pytest.approx(0.05, abs=0.01)


def test_positive_fraction_matches_tracked_rate():
    rates = RateVector(np.full(5, 0.1), np.full(4, 0.2))
    data, _, _ = simulate(n_test_nodes=5, n_supply_nodes=4, rates=rates, n_tests=100_000)
    assert data.result.mean() == pytest.approx(0.28, abs=0.005)


def test_positive_fraction_matches_untracked_expectation():
    rng = np.random.default_rng(0)
    rates = RateVector(rng.uniform(0.01, 0.3, 6), rng.uniform(0.01, 0.5, 5))
    diag = Diagnostic(0.9, 0.97)
    cfg = GenConfig(n_test_nodes=6, n_supply_nodes=5, rates=rates, n_tests=100_000, diag=diag, mode=UNTRACKED, seed=3)
    chain, q, _ = generate_chain(cfg)
    data = simulate_tests(chain, q, rates, cfg)
    zs = rates.eta + (1 - rates.eta) * (q.q @ rates.theta)
    p = np.mean(diag.sensitivity * zs + (1 - diag.specificity) * (1 - zs))  # uniform test-node allocation
    se = np.sqrt(p * (1 - p) / 100_000)
    assert abs(data.result.mean() - p) < 3 * se
    assert data.mode == UNTRACKED and np.all(data.supply_idx == -1)


def test_supply_draws_follow_sourcing():
    data, q, _ = simulate(n_test_nodes=3, n_supply_nodes=6, n_tests=60_000, seed=2)
    counts = np.zeros((3, 6))
    np.add.at(counts, (data.test_idx, data.supply_idx), 1)
    np.testing.assert_allclose(counts / counts.sum(axis=1, keepdims=True), q.q, atol=0.015)
    assert np.all(counts[q.q == 0] == 0)


def test_rate_cap():
    _, _, rates = generate_chain(GenConfig(n_test_nodes=30, n_supply_nodes=30, rate_cap=0.10, seed=1))
    assert np.all(rates.as_vector() < 0.10)


def test_explicit_rates_must_match():
    with pytest.raises(ValueError):
        generate_chain(GenConfig(n_test_nodes=2, n_supply_nodes=2, rates=RateVector([0.1], [0.1, 0.2])))


def test_trace_density_examples():
    chain = SupplyChain.numbered(10, 10)
    arcs = [(a, b) for a in range(10) for b in range(10)][:22]
    data = Dataset.from_records(chain, [TestRecord(a, b, 0) for a, b in arcs] * 2)
    assert trace_density(data) == pytest.approx(0.22)
    same = Dataset.from_records(chain, [TestRecord(3, 4, 1)] * 7)
    assert trace_density(same) == pytest.approx(0.01)
    full = Dataset.from_records(SupplyChain.numbered(2, 2), [TestRecord(a, b, 0) for a in range(2) for b in range(2)])
    assert trace_density(full) == 1.0


def test_trace_density_rejects_untracked():
    data, _, _ = simulate(n_tests=10, mode=UNTRACKED)
    with pytest.raises(ValueError):
        trace_density(data)


@pytest.mark.parametrize("kw", [{"n_test_nodes": 0}, {"n_tests": 0}, {"pareto_shape": 0.0},
                                {"truncation_quantile": 1.0}, {"mode": "mixed"}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        GenConfig(**kw)


def test_tracked_mode_records_supply_nodes():
    data, _, _ = simulate(n_tests=200)
    assert data.mode == TRACKED and np.all(data.supply_idx >= 0)
