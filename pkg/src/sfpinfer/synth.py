"""Synthetic supply chains and simulated PMS test data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import priors
from .priors import Prior
from .supply_model import (
    TRACKED,
    UNTRACKED,
    Dataset,
    Diagnostic,
    RateVector,
    SourcingMatrix,
    SupplyChain,
)


@dataclass(frozen=True)
class GenConfig:
    """Settings for :func:`generate_chain` and :func:`simulate_tests`.

    Sourcing rows are Pareto(``pareto_shape``) weights with every weight
    below the row's ``truncation_quantile`` zeroed. ``rates`` fixes the
    true SFP rates; otherwise they are drawn from ``prior``, optionally
    restricted to rates below ``rate_cap``.
    """

    n_test_nodes: int = 10
    n_supply_nodes: int = 10
    pareto_shape: float = 0.7
    truncation_quantile: float = 0.5
    n_tests: int = 1000
    diag: Diagnostic = field(default_factory=Diagnostic)
    rates: Optional[RateVector] = None
    prior: Prior = field(default_factory=Prior)
    rate_cap: Optional[float] = None
    seed: int = 0
    mode: str = TRACKED

    def __post_init__(self):
        if self.n_test_nodes < 1 or self.n_supply_nodes < 1:
            raise ValueError("node counts must be at least 1")
        if self.n_tests < 1:
            raise ValueError("n_tests must be at least 1")
        if self.pareto_shape <= 0:
            raise ValueError("pareto_shape must be positive")
        if not 0.0 <= self.truncation_quantile < 1.0:
            raise ValueError("truncation_quantile must lie in [0, 1)")
        if self.mode not in (TRACKED, UNTRACKED):
            raise ValueError(f"unknown mode {self.mode!r}")


def _sourcing_rows(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    A, B = cfg.n_test_nodes, cfg.n_supply_nodes
    w = rng.pareto(cfg.pareto_shape, size=(A, B)) + 1.0
    if B > 1 and cfg.truncation_quantile > 0:
        cut = np.quantile(w, cfg.truncation_quantile, axis=1, keepdims=True)
        w = np.where(w >= cut, w, 0.0)
    return w / w.sum(axis=1, keepdims=True)


def _draw_rates(cfg: GenConfig, size: int, rng: np.random.Generator) -> np.ndarray:
    if cfg.rate_cap is None:
        return priors.sample_rates(cfg.prior, size, rng)
    out = np.empty(0)
    while out.size < size:
        cand = priors.sample_rates(cfg.prior, 4 * size, rng)
        out = np.concatenate([out, cand[cand < cfg.rate_cap]])
    return out[:size]


def generate_chain(cfg: GenConfig) -> tuple[SupplyChain, SourcingMatrix, RateVector]:
    """Random chain, Pareto sourcing matrix and true SFP rates."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    chain = SupplyChain.numbered(cfg.n_test_nodes, cfg.n_supply_nodes)
    q = SourcingMatrix(_sourcing_rows(cfg, rng))
    if cfg.rates is not None:
        rates = cfg.rates
        if rates.eta.size != cfg.n_test_nodes or rates.theta.size != cfg.n_supply_nodes:
            raise ValueError("explicit rates do not match the node counts")
    else:
        rates = RateVector(
            _draw_rates(cfg, cfg.n_test_nodes, rng),
            _draw_rates(cfg, cfg.n_supply_nodes, rng),
        )
    return chain, q, rates


def simulate_tests(chain: SupplyChain, q: SourcingMatrix, rates: RateVector, cfg: GenConfig) -> Dataset:
    """Simulate ``cfg.n_tests`` PMS tests.

    Each test picks a test node uniformly and a supply node from that
    node's sourcing row. The product is SFP if it became SFP at the supply
    node or, failing that, at the test node; the tool then reports it with
    the configured sensitivity and specificity.
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    n = cfg.n_tests
    a = rng.integers(0, chain.n_test, size=n)
    cum = np.cumsum(q.q, axis=1)
    u = rng.uniform(size=n)
    b = np.minimum((u[:, None] > cum[a]).sum(axis=1), chain.n_supply - 1)
    sfp_supply = rng.uniform(size=n) < rates.theta[b]
    sfp_test = rng.uniform(size=n) < rates.eta[a]
    sfp = sfp_supply | sfp_test
    p_pos = np.where(sfp, cfg.diag.sensitivity, 1.0 - cfg.diag.specificity)
    y = (rng.uniform(size=n) < p_pos).astype(int)
    if cfg.mode == TRACKED:
        return Dataset(chain, a, b, y, mode=TRACKED)
    return Dataset(chain, a, np.full(n, -1), y, mode=UNTRACKED, sourcing=q)


def trace_density(data: Dataset) -> float:
    """Fraction of all (test, supply) arcs observed at least once."""
    if data.mode != TRACKED:
        raise ValueError("trace density is defined for tracked data only")
    arcs = np.unique(data.test_idx * data.chain.n_supply + data.supply_idx)
    return arcs.size / (data.chain.n_test * data.chain.n_supply)
