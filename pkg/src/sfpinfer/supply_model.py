"""Two-echelon supply-chain data model and consolidated SFP-rate maps.

Test nodes (echelon A) are where samples are collected; supply nodes
(echelon B) are the upstream locations they source from. A sample is
*tracked* when its supply node is recorded and *untracked* when only the
test node's sourcing distribution is known.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

TRACKED = "tracked"
UNTRACKED = "untracked"
MODES = (TRACKED, UNTRACKED)

STOCHASTIC_TOL = 1e-9


class DomainError(ValueError):
    """An argument lies outside the domain of the model."""


def _check_rate(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError(f"{name} must lie strictly inside (0, 1), got {x!r}")
    return arr


@dataclass(frozen=True)
class SupplyChain:
    test_node_names: tuple[str, ...]
    supply_node_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "test_node_names", tuple(self.test_node_names))
        object.__setattr__(self, "supply_node_names", tuple(self.supply_node_names))
        for echelon, names in (("test", self.test_node_names), ("supply", self.supply_node_names)):
            if len(names) < 1:
                raise DomainError(f"at least one {echelon} node is required")
            if any(not str(n) for n in names):
                raise DomainError(f"empty {echelon} node label")
            if len(set(names)) != len(names):
                raise DomainError(f"duplicate {echelon} node labels")

    @property
    def n_test(self) -> int:
        return len(self.test_node_names)

    @property
    def n_supply(self) -> int:
        return len(self.supply_node_names)

    @property
    def n_nodes(self) -> int:
        return self.n_test + self.n_supply

    @classmethod
    def numbered(cls, n_test: int, n_supply: int) -> "SupplyChain":
        return cls(
            tuple(f"TN{i + 1}" for i in range(n_test)),
            tuple(f"SN{j + 1}" for j in range(n_supply)),
        )

    def node_labels(self) -> list[tuple[str, str]]:
        """(echelon, label) for every coordinate, test nodes first."""
        return [("test", n) for n in self.test_node_names] + [
            ("supply", n) for n in self.supply_node_names
        ]


@dataclass(frozen=True, eq=False)
class SourcingMatrix:
    """Row-stochastic matrix of test-node sourcing probabilities.

    Rows are validated to sum to one within ``STOCHASTIC_TOL`` and then
    renormalized exactly.
    """

    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] < 1 or q.shape[1] < 1:
            raise DomainError(f"sourcing matrix must be 2-D and non-empty, got shape {q.shape}")
        if not np.all(np.isfinite(q)) or np.any(q < 0):
            raise DomainError("sourcing matrix entries must be finite and non-negative")
        sums = q.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL)
        if bad.size:
            raise DomainError(f"sourcing row {bad[0]} sums to {sums[bad[0]]!r}, not 1")
        q = q / sums[:, None]
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def shape(self) -> tuple[int, int]:
        return self.q.shape

    def __eq__(self, other):
        # renormalization is not idempotent in floating point
        return (
            isinstance(other, SourcingMatrix)
            and self.q.shape == other.q.shape
            and np.allclose(self.q, other.q, rtol=0.0, atol=1e-12)
        )


@dataclass(frozen=True)
class TestRecord:
    test_node: int
    supply_node: Optional[int]
    result: int

    __test__ = False  # keep pytest from collecting this class


@dataclass(frozen=True, eq=False)
class Dataset:
    """A collection of PMS test records over a supply chain.

    Records are stored column-wise: ``test_idx``, ``supply_idx`` (``-1``
    where absent) and ``result``. Use :meth:`from_records` to build one
    from :class:`TestRecord` objects.
    """

    chain: SupplyChain
    test_idx: np.ndarray
    supply_idx: np.ndarray
    result: np.ndarray
    mode: str = TRACKED
    sourcing: Optional[SourcingMatrix] = None
    allow_empty: bool = field(default=False, repr=False)

    def __post_init__(self):
        a = np.array(self.test_idx, dtype=np.int64).ravel()
        b = np.array(self.supply_idx, dtype=np.int64).ravel()
        y = np.array(self.result, dtype=np.int64).ravel()
        if not (a.size == b.size == y.size):
            raise DomainError("record columns differ in length")
        if a.size == 0 and not self.allow_empty:
            raise DomainError("a dataset needs at least one record")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if np.any((a < 0) | (a >= self.chain.n_test)):
            raise DomainError("test-node index out of range")
        if np.any((y != 0) & (y != 1)):
            raise DomainError("results must be 0 or 1")
        if self.mode == TRACKED:
            if np.any((b < 0) | (b >= self.chain.n_supply)):
                raise DomainError("tracked records need an in-range supply node")
        else:
            if self.sourcing is None:
                raise DomainError("untracked data requires a sourcing matrix")
            if self.sourcing.shape != (self.chain.n_test, self.chain.n_supply):
                raise DomainError(
                    f"sourcing matrix shape {self.sourcing.shape} does not match chain "
                    f"({self.chain.n_test}, {self.chain.n_supply})"
                )
            b = np.where((b >= 0) & (b < self.chain.n_supply), b, -1)
        for arr in (a, b, y):
            arr.setflags(write=False)
        object.__setattr__(self, "test_idx", a)
        object.__setattr__(self, "supply_idx", b)
        object.__setattr__(self, "result", y)

    @classmethod
    def from_records(
        cls,
        chain: SupplyChain,
        records: Sequence[TestRecord],
        mode: str = TRACKED,
        sourcing: Optional[SourcingMatrix] = None,
        allow_empty: bool = False,
    ) -> "Dataset":
        a = [r.test_node for r in records]
        b = [-1 if r.supply_node is None else r.supply_node for r in records]
        y = [r.result for r in records]
        return cls(chain, a, b, y, mode=mode, sourcing=sourcing, allow_empty=allow_empty)

    @classmethod
    def empty(cls, chain: SupplyChain, mode: str = TRACKED, sourcing=None) -> "Dataset":
        """A record-free dataset; its posterior is the prior."""
        if mode == UNTRACKED and sourcing is None:
            sourcing = SourcingMatrix(np.full((chain.n_test, chain.n_supply), 1.0 / chain.n_supply))
        return cls(chain, [], [], [], mode=mode, sourcing=sourcing, allow_empty=True)

    @property
    def n_records(self) -> int:
        return int(self.result.size)

    def records(self) -> list[TestRecord]:
        return [
            TestRecord(int(a), None if b < 0 else int(b), int(y))
            for a, b, y in zip(self.test_idx, self.supply_idx, self.result)
        ]

    def as_untracked(self, sourcing: SourcingMatrix) -> "Dataset":
        return Dataset(
            self.chain, self.test_idx, self.supply_idx, self.result,
            mode=UNTRACKED, sourcing=sourcing, allow_empty=self.allow_empty,
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.chain == other.chain
            and self.mode == other.mode
            and np.array_equal(self.test_idx, other.test_idx)
            and np.array_equal(self.result, other.result)
            and (self.mode == UNTRACKED or np.array_equal(self.supply_idx, other.supply_idx))
            and self.sourcing == other.sourcing
        )


@dataclass(frozen=True, eq=False)
class RateVector:
    """Test-node rates ``eta`` and supply-node rates ``theta``, all in (0, 1)."""

    eta: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        eta = _check_rate(np.atleast_1d(np.array(self.eta, dtype=float)), "eta")
        theta = _check_rate(np.atleast_1d(np.array(self.theta, dtype=float)), "theta")
        eta.setflags(write=False)
        theta.setflags(write=False)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_vector(cls, x, n_test: int) -> "RateVector":
        x = np.asarray(x, dtype=float)
        return cls(x[:n_test], x[n_test:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.eta, self.theta])

    def __eq__(self, other):
        return (
            isinstance(other, RateVector)
            and np.array_equal(self.eta, other.eta)
            and np.array_equal(self.theta, other.theta)
        )


@dataclass(frozen=True)
class Diagnostic:
    """Testing-tool accuracy; ``sensitivity + specificity`` must exceed 1."""

    sensitivity: float = 1.0
    specificity: float = 1.0

    def __post_init__(self):
        s, r = float(self.sensitivity), float(self.specificity)
        if not (0.5 < s <= 1.0 and 0.5 < r <= 1.0):
            raise DomainError(f"sensitivity and specificity must lie in (0.5, 1], got s={s}, r={r}")
        if s + r <= 1.0:
            raise DomainError("sensitivity + specificity must exceed 1")

    @property
    def signal(self) -> float:
        """Slope ``s + r - 1`` of the positive probability in the SFP rate."""
        return self.sensitivity + self.specificity - 1.0


def consolidated_rate_tracked(eta_a, theta_b):
    """SFP probability of a sample from a known (a, b) arc."""
    eta_a = _check_rate(eta_a, "eta_a")
    theta_b = _check_rate(theta_b, "theta_b")
    out = eta_a + (1.0 - eta_a) * theta_b
    return float(out) if out.ndim == 0 else out


def consolidated_rate_untracked(eta_a, theta, q_row):
    """SFP probability of a sample from test node ``a`` with sourcing ``q_row``."""
    eta_a = float(_check_rate(eta_a, "eta_a"))
    theta = _check_rate(np.atleast_1d(theta), "theta")
    q_row = np.asarray(q_row, dtype=float)
    if q_row.shape != theta.shape:
        raise DomainError(f"q_row has shape {q_row.shape} but theta has {theta.shape}")
    if np.any(q_row < 0) or abs(q_row.sum() - 1.0) > STOCHASTIC_TOL:
        raise DomainError("q_row must be a probability vector")
    return eta_a + (1.0 - eta_a) * float(q_row @ theta)


def positive_probability(z_star, diag: Diagnostic):
    """Probability that a sample with SFP probability ``z_star`` tests positive."""
    if not isinstance(diag, Diagnostic):
        raise DomainError("diag must be a Diagnostic")
    z = _check_rate(z_star, "z_star")
    out = diag.sensitivity * z + (1.0 - diag.specificity) * (1.0 - z)
    return float(out) if out.ndim == 0 else out


def consolidated_rate_three_echelon(eta_a, zeta_c, theta_b):
    """Tracked SFP probability through test node, distributor and supply node."""
    eta_a = _check_rate(eta_a, "eta_a")
    zeta_c = _check_rate(zeta_c, "zeta_c")
    theta_b = _check_rate(theta_b, "theta_b")
    out = eta_a + (1.0 - eta_a) * (zeta_c + (1.0 - zeta_c) * theta_b)
    return float(out) if out.ndim == 0 else out
