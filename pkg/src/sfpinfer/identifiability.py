"""Explicit alternative rate vectors with identical likelihood.

For any rates there is a one-parameter family of different rates that
leaves every consolidated SFP rate, and therefore the likelihood under
any dataset and any testing tool, unchanged. The constructions here
build members of that family.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .supply_model import TRACKED, UNTRACKED, DomainError, RateVector, SourcingMatrix


class EpsilonTooLarge(DomainError):
    pass


@dataclass(frozen=True)
class Witness:
    original: RateVector
    perturbed: RateVector
    epsilon: float
    anchor: int
    mode: str

    def __post_init__(self):
        if self.original == self.perturbed:
            raise DomainError("witness rates must differ from the original")


def _tracked_perturb(rates: RateVector, anchor_a: int, epsilon: float):
    eta, theta = rates.eta, rates.theta
    keep = 1.0 - eta[anchor_a]
    eta_p = eta - epsilon * (1.0 - eta) / keep
    theta_p = (theta * keep + epsilon) / (keep + epsilon)
    return eta_p, theta_p


def max_tracked_epsilon(rates: RateVector, anchor_a: int) -> float:
    """Supremum of feasible epsilons; eta'_a > 0 needs eps < eta_a (1-eta_a') / (1-eta_a)."""
    eta = rates.eta
    return float(np.min(eta * (1.0 - eta[anchor_a]) / (1.0 - eta)))


def tracked_witness(rates: RateVector, anchor_a: int = 0, epsilon: Optional[float] = None) -> Witness:
    """Shift SFP mass from every test node onto every supply node.

    ``epsilon`` defaults to half the largest feasible value.
    """
    if not 0 <= anchor_a < rates.eta.size:
        raise DomainError(f"anchor test node {anchor_a} out of range")
    eps_max = max_tracked_epsilon(rates, anchor_a)
    if epsilon is None:
        epsilon = 0.5 * eps_max
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    eta_p, theta_p = _tracked_perturb(rates, anchor_a, epsilon)
    bad = np.flatnonzero(eta_p <= 0.0)
    if bad.size:
        raise EpsilonTooLarge(
            f"epsilon={epsilon!r} drives test node {bad[0]} to rate {eta_p[bad[0]]!r}; "
            f"must be below {eps_max!r}"
        )
    return Witness(rates, RateVector(eta_p, theta_p), float(epsilon), anchor_a, TRACKED)


def max_untracked_epsilon(rates: RateVector, q: SourcingMatrix, anchor_b: int) -> float:
    """Largest epsilon keeping theta'_b > 0 and every Q_a theta' > 0."""
    theta = rates.theta
    qm = q.q
    mixed = qm @ theta
    col = qm[:, anchor_b]
    with np.errstate(divide="ignore"):
        row_bounds = np.where(col > 0, mixed / col, np.inf)
    return float(min(theta[anchor_b], row_bounds.min()))


def untracked_witness(
    rates: RateVector, q: SourcingMatrix, anchor_b: int = 0, epsilon: Optional[float] = None
) -> Witness:
    """Lower one supply node's rate and raise its customers' rates to compensate."""
    if not 0 <= anchor_b < rates.theta.size:
        raise DomainError(f"anchor supply node {anchor_b} out of range")
    qm = q.q
    if qm.shape != (rates.eta.size, rates.theta.size):
        raise DomainError("sourcing matrix does not match rate dimensions")
    eps_max = max_untracked_epsilon(rates, q, anchor_b)
    if epsilon is None:
        epsilon = 0.5 * eps_max
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    theta_p = rates.theta.copy()
    theta_p[anchor_b] -= epsilon
    if theta_p[anchor_b] <= 0.0 or np.any(qm @ theta_p <= 0.0):
        raise EpsilonTooLarge(f"epsilon={epsilon!r} violates positivity; must be below {eps_max!r}")
    mixed = qm @ rates.theta
    shift = epsilon * qm[:, anchor_b]
    eta_p = (rates.eta * (1.0 - mixed) + shift) / (1.0 - mixed + shift)
    eta_p = np.where(shift == 0.0, rates.eta, eta_p)  # exact when the anchor is not sourced
    return Witness(rates, RateVector(eta_p, theta_p), float(epsilon), anchor_b, UNTRACKED)


def consolidated_rates(rates: RateVector, mode: str, q: Optional[SourcingMatrix] = None) -> np.ndarray:
    """Every consolidated SFP rate: all (a, b) arcs when tracked, all test nodes otherwise."""
    eta, theta = rates.eta, rates.theta
    if mode == TRACKED:
        return eta[:, None] + (1.0 - eta[:, None]) * theta[None, :]
    return eta + (1.0 - eta) * (q.q @ theta)


def max_consolidated_gap(w: Witness, q: Optional[SourcingMatrix] = None) -> float:
    return float(np.max(np.abs(
        consolidated_rates(w.original, w.mode, q) - consolidated_rates(w.perturbed, w.mode, q)
    )))
