"""Random problem instances and numerical oracles shared by the tests."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from sfpinfer import Dataset, Diagnostic, RateVector, SourcingMatrix, SupplyChain
from sfpinfer.supply_model import TRACKED, UNTRACKED

DATA_DIR = Path(__file__).parent / "data"
SMALL_RECORDS = DATA_DIR / "small_records.csv"

DIAGNOSTICS = (Diagnostic(1.0, 1.0), Diagnostic(0.8, 0.95))


def random_sourcing(rng: np.random.Generator, A: int, B: int, sparse: bool = True) -> SourcingMatrix:
    q = rng.dirichlet(np.ones(B), size=A)
    if sparse and B > 1:
        # knock out some entries but keep at least one per row
        mask = rng.uniform(size=(A, B)) < 0.3
        mask[np.arange(A), rng.integers(0, B, size=A)] = False
        q = np.where(mask, 0.0, q)
        q /= q.sum(axis=1, keepdims=True)
    return SourcingMatrix(q)


def random_instance(rng: np.random.Generator, mode: str, n_records: int | None = None,
                    A: int | None = None, B: int | None = None):
    """Chain, dataset and logit point with 2..10 nodes per echelon."""
    A = int(rng.integers(2, 11)) if A is None else A
    B = int(rng.integers(2, 11)) if B is None else B
    n = int(rng.integers(20, 200)) if n_records is None else n_records
    chain = SupplyChain.numbered(A, B)
    q = random_sourcing(rng, A, B)
    a = rng.integers(0, A, size=n)
    b = np.array([rng.choice(B, p=q.q[i]) for i in a])
    y = rng.integers(0, 2, size=n)
    if mode == TRACKED:
        data = Dataset(chain, a, b, y, mode=TRACKED)
    else:
        data = Dataset(chain, a, np.full(n, -1), y, mode=UNTRACKED, sourcing=q)
    x = rng.normal(-1.5, 1.2, size=A + B)
    return data, x


def random_rates(rng: np.random.Generator, A: int, B: int, lo: float = 0.01, hi: float = 0.6) -> RateVector:
    return RateVector(rng.uniform(lo, hi, size=A), rng.uniform(lo, hi, size=B))


def central_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def central_jacobian(grad, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    J = np.empty((x.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        J[:, i] = (grad(x + e) - grad(x - e)) / (2 * h)
    return J


def rel_err(approx, exact) -> float:
    """Largest |approx - exact| scaled by max(1, |exact|) elementwise."""
    approx, exact = np.asarray(approx), np.asarray(exact)
    return float(np.max(np.abs(approx - exact) / np.maximum(1.0, np.abs(exact))))
