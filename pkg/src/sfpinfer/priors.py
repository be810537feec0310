"""Independent logit-scale priors on node SFP rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

NORMAL = "normal"
LAPLACE = "laplace"
FAMILIES = (NORMAL, LAPLACE)


@dataclass(frozen=True)
class Prior:
    """Logit-scale prior shared by every node.

    ``nu`` is the standard deviation for the normal family and the scale
    for the Laplace family. Use :meth:`normal_from_variance` when a
    spread is quoted as a variance.
    """

    family: str = LAPLACE
    gamma: float = -2.5
    nu: float = 1.3

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"prior family must be one of {FAMILIES}, got {self.family!r}")
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise ValueError(f"prior spread nu must be positive, got {self.nu!r}")
        if not np.isfinite(self.gamma):
            raise ValueError("prior location gamma must be finite")

    @classmethod
    def normal_from_variance(cls, gamma: float, variance: float) -> "Prior":
        return cls(NORMAL, gamma, float(np.sqrt(variance)))

    @property
    def dist(self):
        """Frozen scipy distribution of a single logit coordinate."""
        if self.family == NORMAL:
            return stats.norm(loc=self.gamma, scale=self.nu)
        return stats.laplace(loc=self.gamma, scale=self.nu)

    def logit_variance(self) -> float:
        return self.nu**2 if self.family == NORMAL else 2.0 * self.nu**2


def _coords(point) -> np.ndarray:
    if hasattr(point, "as_vector"):
        point = point.as_vector()
    return np.asarray(point, dtype=float)


def log_density(prior: Prior, point) -> float:
    """Normalized log-density of a logit point (a LogitRates or array)."""
    x = _coords(point)
    z = x - prior.gamma
    if prior.family == NORMAL:
        return float(np.sum(-0.5 * (z / prior.nu) ** 2) - x.size * np.log(np.sqrt(2 * np.pi) * prior.nu))
    return float(np.sum(-np.abs(z) / prior.nu) - x.size * np.log(2.0 * prior.nu))


def grad_log_density(prior: Prior, point) -> np.ndarray:
    """Per-coordinate derivative; the Laplace kink takes subgradient 0."""
    z = _coords(point) - prior.gamma
    if prior.family == NORMAL:
        return -z / prior.nu**2
    return -np.sign(z) / prior.nu


def hess_diag_log_density(prior: Prior, point) -> tuple[np.ndarray, bool]:
    """Diagonal curvature and whether any coordinate sits on a Laplace kink."""
    x = _coords(point)
    if prior.family == NORMAL:
        return np.full(x.shape, -1.0 / prior.nu**2), False
    return np.zeros(x.shape), bool(np.any(x == prior.gamma))


def rate_quantile(prior: Prior, p) -> float | np.ndarray:
    """Quantile of a node's SFP rate implied by the prior."""
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0) | (p_arr >= 1)):
        raise ValueError(f"quantile level must lie in (0, 1), got {p!r}")
    out = special.expit(prior.dist.ppf(p_arr))
    return float(out) if out.ndim == 0 else out


def rate_cdf(prior: Prior, rate) -> float | np.ndarray:
    """Prior probability that a node's SFP rate lies below ``rate``."""
    out = prior.dist.cdf(special.logit(np.asarray(rate, dtype=float)))
    return float(out) if np.ndim(out) == 0 else out


def rate_pdf(prior: Prior, rate) -> np.ndarray:
    """Density of the SFP rate itself, including the logit Jacobian."""
    rate = np.asarray(rate, dtype=float)
    return prior.dist.pdf(special.logit(rate)) / (rate * (1.0 - rate))


def prior_mean_rate(prior: Prior, n_draws: int = 1_000_000, seed: int = 0) -> float:
    """Monte Carlo mean of the SFP rate under the prior."""
    if n_draws < 100_000:
        raise ValueError("prior_mean_rate needs at least 1e5 draws")
    rng = np.random.default_rng(seed)
    if prior.family == NORMAL:
        x = rng.normal(prior.gamma, prior.nu, size=n_draws)
    else:
        x = rng.laplace(prior.gamma, prior.nu, size=n_draws)
    return float(np.mean(special.expit(x)))


def sample_rates(prior: Prior, size, rng: np.random.Generator) -> np.ndarray:
    """Draw node SFP rates from the prior."""
    if prior.family == NORMAL:
        x = rng.normal(prior.gamma, prior.nu, size=size)
    else:
        x = rng.laplace(prior.gamma, prior.nu, size=size)
    return np.clip(special.expit(x), 1e-12, 1 - 1e-12)
