"""Credible intervals, risk categories, Wald intervals and Q bootstrap."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .nuts_sampler import PosteriorDraws, SamplerConfig, sample
from .priors import Prior
from .supply_model import TRACKED, UNTRACKED, Dataset, Diagnostic, SourcingMatrix

log = logging.getLogger(__name__)

ACT = "act"
INVESTIGATE = "investigate"
NO_ACTION = "no-action"
CATEGORIES = (ACT, INVESTIGATE, NO_ACTION)

WALD_Z90 = 1.645


@dataclass(frozen=True)
class NodeInterval:
    echelon: str
    index: int
    lower: float
    upper: float
    median: float = float("nan")
    category: Optional[str] = None
    label: str = ""

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"interval lower {self.lower} exceeds upper {self.upper}")
        if self.category is not None and self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class Thresholds:
    l: float = 0.05
    u: float = 0.30

    def __post_init__(self):
        if not 0.0 < self.l < self.u < 1.0:
            raise ValueError(f"thresholds need 0 < l < u < 1, got l={self.l}, u={self.u}")


def empirical_quantile(x: np.ndarray, p, axis: int = 0) -> np.ndarray:
    """Quantile by linear interpolation between order statistics at 1 + (n-1)p."""
    return np.quantile(np.asarray(x, dtype=float), p, axis=axis, method="linear")


def credible_intervals(
    draws,
    alpha: float = 0.10,
    n_test: Optional[int] = None,
    labels: Optional[Sequence[str]] = None,
) -> list[NodeInterval]:
    """Per-node equal-tailed ``1 - alpha`` intervals from rate draws.

    ``draws`` is a :class:`PosteriorDraws` or an ``(n, dim)`` array of rates.
    Coordinates before ``n_test`` are test nodes, the rest supply nodes.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if isinstance(draws, PosteriorDraws):
        n_test = draws.n_test if n_test is None else n_test
        rates = draws.draws
    else:
        rates = np.asarray(draws, dtype=float)
        if rates.ndim == 1:
            rates = rates[:, None]
    if rates.shape[0] == 0:
        raise ValueError("no draws to summarize")
    n_test = rates.shape[1] if n_test is None else n_test
    lo, med, hi = empirical_quantile(rates, [alpha / 2, 0.5, 1 - alpha / 2])
    out = []
    for k in range(rates.shape[1]):
        echelon, idx = ("test", k) if k < n_test else ("supply", k - n_test)
        out.append(NodeInterval(
            echelon, idx, float(lo[k]), float(hi[k]), float(med[k]),
            label=labels[k] if labels is not None else "",
        ))
    return out


def categorize(lower: float, upper: float, t: Thresholds) -> str:
    if lower > t.l:
        return ACT
    if upper > t.u:
        return INVESTIGATE
    return NO_ACTION


def classify(intervals: Sequence[NodeInterval], t: Thresholds = Thresholds()) -> list[NodeInterval]:
    return [replace(iv, category=categorize(iv.lower, iv.upper, t)) for iv in intervals]


@dataclass(frozen=True)
class WaldInterval:
    lower: float
    upper: float
    estimate: float
    n: int
    meets_requirement: bool


def wald_interval(positives: int, n: int, z: float = WALD_Z90) -> WaldInterval:
    """Normal-approximation interval for a proportion, clipped to [0, 1].

    ``meets_requirement`` is the usual ``n p >= 5 and n (1 - p) >= 5`` rule.
    """
    if n < 1:
        raise ValueError("wald_interval needs n >= 1")
    if not 0 <= positives <= n:
        raise ValueError("positives must lie in [0, n]")
    p = positives / n
    half = z * np.sqrt(p * (1 - p) / n)
    ok = n * p >= 5 and n * (1 - p) >= 5
    return WaldInterval(max(0.0, p - half), min(1.0, p + half), p, n, bool(ok))


def estimate_q(data: Dataset) -> SourcingMatrix:
    """Empirical sourcing matrix from tracked records."""
    if np.any(data.supply_idx < 0):
        raise ValueError("estimate_q needs a supply node on every record")
    A, B = data.chain.n_test, data.chain.n_supply
    counts = np.zeros((A, B))
    np.add.at(counts, (data.test_idx, data.supply_idx), 1.0)
    totals = counts.sum(axis=1)
    missing = np.flatnonzero(totals == 0)
    if missing.size:
        raise ValueError(f"test node {data.chain.test_node_names[missing[0]]!r} has no records")
    return SourcingMatrix(counts / totals[:, None])


@dataclass
class BootstrapResult:
    """Interval endpoints per bootstrap replicate and their spread.

    ``lower`` and ``upper`` have shape ``(n_boot, dim)``.
    """

    lower: np.ndarray
    upper: np.ndarray
    n_test: int
    q_level: float = 0.05

    def endpoint_band(self, which: str = "upper") -> tuple[np.ndarray, np.ndarray]:
        arr = self.lower if which == "lower" else self.upper
        lo, hi = empirical_quantile(arr, [self.q_level, 1 - self.q_level])
        return lo, hi

    def spread(self) -> np.ndarray:
        """Mean over both endpoints of the 5%-95% range across replicates."""
        lo_l, hi_l = self.endpoint_band("lower")
        lo_u, hi_u = self.endpoint_band("upper")
        return 0.5 * ((hi_l - lo_l) + (hi_u - lo_u))

    def test_spread(self) -> np.ndarray:
        return self.spread()[: self.n_test]

    def supply_spread(self) -> np.ndarray:
        return self.spread()[self.n_test :]


def _resample(data: Dataset, rng: np.random.Generator) -> Dataset:
    idx = rng.integers(0, data.n_records, size=data.n_records)
    return Dataset(data.chain, data.test_idx[idx], data.supply_idx[idx], data.result[idx], mode=TRACKED)


def _bootstrap_q(data: Dataset, rng: np.random.Generator) -> SourcingMatrix:
    """Q from a resample, redrawn until every test node is present."""
    for _ in range(1000):
        boot = _resample(data, rng)
        if np.unique(boot.test_idx).size == data.chain.n_test:
            return estimate_q(boot)
    raise RuntimeError("bootstrap could not cover every test node in 1000 resamples")


def _boot_replicate(args):
    data, diag, prior, cfg, alpha = args
    draws = sample(data, diag, prior, cfg)
    rates = draws.draws
    return empirical_quantile(rates, [alpha / 2, 1 - alpha / 2])


def bootstrap_q_sensitivity(
    data: Dataset,
    diag: Diagnostic,
    prior: Prior,
    cfg: SamplerConfig,
    n_boot: int = 100,
    seed: int = 0,
    alpha: float = 0.10,
    full_records: bool = False,
    workers: int = 1,
) -> BootstrapResult:
    """Sensitivity of untracked intervals to the estimated sourcing matrix.

    Each replicate resamples the tracked records with replacement and
    re-estimates Q. By default the original test results (and so each
    test node's positive count) are kept and only Q changes; with
    ``full_records=True`` the resampled records themselves are analysed.
    Every replicate reuses ``cfg.seed`` so that differences between
    replicates come from Q alone.
    """
    if n_boot < 2:
        raise ValueError("n_boot must be at least 2")
    if np.any(data.supply_idx < 0):
        raise ValueError("bootstrap needs tracked records to estimate Q")
    base = Dataset(data.chain, data.test_idx, data.supply_idx, data.result, mode=TRACKED)
    seeds = np.random.SeedSequence(seed).spawn(n_boot)
    jobs = []
    for ss in seeds:
        rng = np.random.Generator(np.random.PCG64(ss))
        if full_records:
            boot = None
            for _ in range(1000):
                cand = _resample(base, rng)
                if np.unique(cand.test_idx).size == base.chain.n_test:
                    boot = cand
                    break
            if boot is None:
                raise RuntimeError("bootstrap could not cover every test node")
            q = estimate_q(boot)
            rec = boot.as_untracked(q)
        else:
            q = _bootstrap_q(base, rng)
            rec = base.as_untracked(q)
        jobs.append((rec, diag, prior, cfg, alpha))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_boot_replicate, jobs))
    else:
        results = [_boot_replicate(j) for j in jobs]
    lower = np.stack([r[0] for r in results])
    upper = np.stack([r[1] for r in results])
    return BootstrapResult(lower, upper, data.chain.n_test)
