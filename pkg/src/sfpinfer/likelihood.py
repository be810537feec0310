"""Tracked/untracked log-likelihood, log-posterior and analytic derivatives.

Sampling works on logit coordinates ``x = (alpha, beta)`` with
``alpha = logit(eta)`` and ``beta = logit(theta)``. Everything here
reduces a :class:`~sfpinfer.supply_model.Dataset` to per-trace counts
first; a trace is an (a, b) arc for tracked data and a test node for
untracked data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, logit

from . import priors
from .priors import Prior
from .supply_model import TRACKED, Dataset, Diagnostic, RateVector

Z_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class LogitRates:
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.atleast_1d(np.asarray(self.alpha, dtype=float)))
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))

    @classmethod
    def from_rates(cls, rates: RateVector) -> "LogitRates":
        return cls(logit(rates.eta), logit(rates.theta))

    @classmethod
    def from_vector(cls, x, n_test: int) -> "LogitRates":
        x = np.asarray(x, dtype=float)
        return cls(x[:n_test], x[n_test:])

    def to_rates(self) -> RateVector:
        return RateVector(expit(self.alpha), expit(self.beta))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta])


@dataclass(frozen=True, eq=False)
class TraceStats:
    """Per-trace test counts.

    ``keys`` is ``(K, 2)`` integer (a, b) pairs for tracked data and
    ``(K,)`` test-node indices for untracked data.
    """

    mode: str
    keys: np.ndarray
    n: np.ndarray
    y: np.ndarray

    def as_dict(self) -> dict:
        if self.mode == TRACKED:
            return {(int(a), int(b)): (int(n), int(y)) for (a, b), n, y in zip(self.keys, self.n, self.y)}
        return {int(a): (int(n), int(y)) for a, n, y in zip(self.keys, self.n, self.y)}

    @property
    def total(self) -> int:
        return int(self.n.sum())


def sufficient_stats(data: Dataset) -> TraceStats:
    """Group records by trace; keys are sorted by index."""
    if data.mode == TRACKED:
        nb = data.chain.n_supply
        flat = data.test_idx * nb + data.supply_idx
        uniq, inv = np.unique(flat, return_inverse=True)
        keys = np.stack([uniq // nb, uniq % nb], axis=1)
    else:
        uniq, inv = np.unique(data.test_idx, return_inverse=True)
        keys = uniq
    n = np.bincount(inv, minlength=uniq.size).astype(np.int64)
    y = np.bincount(inv, weights=data.result, minlength=uniq.size).astype(np.int64)
    if uniq.size == 0:
        keys = np.zeros((0, 2) if data.mode == TRACKED else (0,), dtype=np.int64)
    return TraceStats(data.mode, keys, n, y)


def _bernoulli_loglik(z, iz, n, y) -> float:
    z = np.clip(z, Z_FLOOR, 1.0 - Z_FLOOR)
    iz = np.clip(iz, Z_FLOOR, 1.0 - Z_FLOOR)
    return float(np.sum(y * np.log(z) + (n - y) * np.log(iz)))


def log_likelihood(rates: RateVector, data: Dataset, diag: Diagnostic, stats: Optional[TraceStats] = None) -> float:
    """Log-likelihood of natural-scale rates under the data."""
    stats = sufficient_stats(data) if stats is None else stats
    eta, theta = rates.eta, rates.theta
    if stats.mode == TRACKED:
        a, b = stats.keys[:, 0], stats.keys[:, 1]
        zs = eta[a] + (1 - eta[a]) * theta[b]
        izs = (1 - eta[a]) * (1 - theta[b])
    else:
        a = stats.keys
        q = data.sourcing.q[a]
        zs = eta[a] + (1 - eta[a]) * (q @ theta)
        izs = (1 - eta[a]) * (q @ (1 - theta))
    c = diag.signal
    z = c * zs + (1 - diag.specificity)
    iz = c * izs + (1 - diag.sensitivity)
    return _bernoulli_loglik(z, iz, stats.n, stats.y)


def record_log_likelihood(rates: RateVector, data: Dataset, diag: Diagnostic) -> float:
    """Per-record summation; slow, used to cross-check the trace form."""
    total = 0.0
    s, r = diag.sensitivity, diag.specificity
    for a, b, y in zip(data.test_idx, data.supply_idx, data.result):
        eta = rates.eta[a]
        if data.mode == TRACKED:
            zs = eta + (1 - eta) * rates.theta[b]
        else:
            zs = eta + (1 - eta) * float(data.sourcing.q[a] @ rates.theta)
        z = min(max(s * zs + (1 - r) * (1 - zs), Z_FLOOR), 1 - Z_FLOOR)
        total += np.log(z) if y else np.log(1 - z)
    return float(total)


class PosteriorModel:
    """Log-posterior in logit coordinates with cached trace statistics.

    This is the object the sampler evaluates; the module-level functions
    below are thin wrappers around it.
    """

    def __init__(self, data: Dataset, diag: Diagnostic, prior: Prior):
        self.data = data
        self.diag = diag
        self.prior = prior
        self.stats = sufficient_stats(data)
        self.n_test = data.chain.n_test
        self.n_supply = data.chain.n_supply
        self.dim = self.n_test + self.n_supply
        self.tracked = data.mode == TRACKED
        st = self.stats
        self.n = st.n.astype(float)
        self.y = st.y.astype(float)
        self.ny = self.n - self.y
        if self.tracked:
            self.ka = st.keys[:, 0]
            self.kb = st.keys[:, 1]
        else:
            self.ka = st.keys
            self.q = data.sourcing.q[self.ka]
        self._c = diag.signal
        self._fp = 1.0 - diag.specificity
        self._fn = 1.0 - diag.sensitivity
        self._normal = prior.family == priors.NORMAL

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        return x[: self.n_test], x[self.n_test :]

    def _forward(self, x):
        """Shared intermediate quantities at logit point ``x``."""
        al, be = self._split(x)
        eta, ieta = expit(al), expit(-al)
        th, ith = expit(be), expit(-be)
        a = self.ka
        if self.tracked:
            b = self.kb
            zs = eta[a] + ieta[a] * th[b]
            izs = ieta[a] * ith[b]
            mix = ith[b]
        else:
            mix = self.q @ ith
            zs = eta[a] + ieta[a] * (self.q @ th)
            izs = ieta[a] * mix
        z = self._c * zs + self._fp
        iz = self._c * izs + self._fn
        return eta, ieta, th, ith, mix, z, iz

    def _prior_terms(self, x):
        d = x - self.prior.gamma
        if self._normal:
            lp = -0.5 * np.dot(d, d) / self.prior.nu**2 - self.dim * np.log(np.sqrt(2 * np.pi) * self.prior.nu)
            g = -d / self.prior.nu**2
        else:
            lp = -np.sum(np.abs(d)) / self.prior.nu - self.dim * np.log(2 * self.prior.nu)
            g = -np.sign(d) / self.prior.nu
        return lp, g

    def log_likelihood(self, x) -> float:
        _, _, _, _, _, z, iz = self._forward(x)
        return _bernoulli_loglik(z, iz, self.n, self.y)

    def log_prior(self, x) -> float:
        return priors.log_density(self.prior, x)

    def log_posterior(self, x) -> float:
        return self.log_likelihood(x) + self.log_prior(x)

    def _score(self, z, iz):
        """d loglik / d z per trace; traces with no positives (negatives) drop that term."""
        D = np.divide(self.y, z, out=np.zeros_like(z), where=self.y > 0)
        D -= np.divide(self.ny, iz, out=np.zeros_like(iz), where=self.ny > 0)
        return D

    def _grad_loglik(self, eta, ieta, th, ith, mix, z, iz):
        c = self._c
        a = self.ka
        # far from the data z or 1 - z underflows; the sampler rejects the resulting non-finite values
        with np.errstate(divide="ignore", invalid="ignore"):
            D = self._score(z, iz)
            ga_arc = D * c * mix * eta[a] * ieta[a]
            g_alpha = np.bincount(a, ga_arc, minlength=self.n_test)
            if self.tracked:
                b = self.kb
                g_beta = np.bincount(b, D * c * ieta[a] * th[b] * ith[b], minlength=self.n_supply)
            else:
                g_beta = ((D * c * ieta[a]) @ self.q) * th * ith
        return np.concatenate([g_alpha, g_beta]), D

    def grad_log_likelihood(self, x) -> np.ndarray:
        return self._grad_loglik(*self._forward(x))[0]

    def logp_and_grad(self, x) -> tuple[float, np.ndarray]:
        """Log-posterior and its gradient in one pass."""
        x = np.asarray(x, dtype=float)
        fw = self._forward(x)
        lp, gp = self._prior_terms(x)
        ll = _bernoulli_loglik(fw[5], fw[6], self.n, self.y)
        g, _ = self._grad_loglik(*fw)
        return ll + lp, g + gp

    def grad_log_posterior(self, x) -> np.ndarray:
        return self.logp_and_grad(x)[1]

    def hessian_log_likelihood(self, x) -> np.ndarray:
        eta, ieta, th, ith, mix, z, iz = self._forward(x)
        c = self._c
        D = self._score(z, iz)
        D2 = -np.divide(self.y, z**2, out=np.zeros_like(z), where=self.y > 0)
        D2 -= np.divide(self.ny, iz**2, out=np.zeros_like(iz), where=self.ny > 0)
        a = self.ka
        A, B = self.n_test, self.n_supply
        H = np.zeros((self.dim, self.dim))
        ea = eta[a] * ieta[a]                      # d eta / d alpha
        # d z / d alpha_a and its own second derivative, per trace
        dza = c * mix * ea
        d2za = c * mix * ea * (ieta[a] - eta[a])
        H[:A, :A] += np.diag(np.bincount(a, D2 * dza**2 + D * d2za, minlength=A))
        if self.tracked:
            b = self.kb
            tb = th[b] * ith[b]
            dzb = c * ieta[a] * tb
            d2zb = c * ieta[a] * tb * (ith[b] - th[b])
            H[A:, A:] += np.diag(np.bincount(b, D2 * dzb**2 + D * d2zb, minlength=B))
            cross = D2 * dza * dzb - D * c * ea * tb
            np.add.at(H, (a, A + b), cross)
            np.add.at(H, (A + b, a), cross)
        else:
            tb = th * ith
            # dz_a / d beta_b = c (1 - eta_a) Q_ab theta_b (1 - theta_b)
            dzb = (c * ieta[a])[:, None] * self.q * tb[None, :]
            bb = (dzb * D2[:, None]).T @ dzb
            H[A:, A:] += 0.5 * (bb + bb.T)  # matmul rounding is not symmetric
            H[A:, A:] += np.diag(((D * c * ieta[a]) @ self.q) * tb * (ith - th))
            cross = (D2 * dza)[:, None] * dzb - (D * c * ea)[:, None] * self.q * tb[None, :]
            np.add.at(H, (a, slice(A, None)), cross)
            H[A:, :A] = H[:A, A:].T
        return H

    def hessian_log_posterior(self, x) -> tuple[np.ndarray, bool]:
        H = self.hessian_log_likelihood(x)
        c2, at_kink = priors.hess_diag_log_density(self.prior, x)
        H[np.diag_indices(self.dim)] += c2
        return H, at_kink


def _as_logit_vector(rates) -> np.ndarray:
    if isinstance(rates, LogitRates):
        return rates.as_vector()
    if isinstance(rates, RateVector):
        return LogitRates.from_rates(rates).as_vector()
    return np.asarray(rates, dtype=float)


def log_posterior(rates, data: Dataset, diag: Diagnostic, prior: Prior) -> float:
    """Unnormalized log-posterior at logit-scale rates."""
    return PosteriorModel(data, diag, prior).log_posterior(_as_logit_vector(rates))


def grad_log_posterior(rates, data: Dataset, diag: Diagnostic, prior: Prior) -> np.ndarray:
    """Gradient of :func:`log_posterior` with respect to ``(alpha, beta)``."""
    return PosteriorModel(data, diag, prior).grad_log_posterior(_as_logit_vector(rates))


def hessian_log_posterior(rates, data: Dataset, diag: Diagnostic, prior: Prior, return_flag: bool = False):
    """Hessian of :func:`log_posterior` in logit coordinates.

    With ``return_flag=True`` also returns whether a Laplace prior kink was
    hit, in which case the prior curvature there is taken as zero.
    """
    H, at_kink = PosteriorModel(data, diag, prior).hessian_log_posterior(_as_logit_vector(rates))
    return (H, at_kink) if return_flag else H


# Natural-scale (eta, theta) derivatives of the log-likelihood. These are
# not used for sampling; they cross-check the logit-scale versions via the
# chain rule.

def _natural_parts(rates: RateVector, data: Dataset, diag: Diagnostic):
    st = sufficient_stats(data)
    eta, theta = rates.eta, rates.theta
    c = diag.signal
    if st.mode == TRACKED:
        a, b = st.keys[:, 0], st.keys[:, 1]
        zs = eta[a] + (1 - eta[a]) * theta[b]
    else:
        a, b = st.keys, None
        zs = eta[a] + (1 - eta[a]) * (data.sourcing.q[a] @ theta)
    z = c * zs + (1 - diag.specificity)
    n, y = st.n.astype(float), st.y.astype(float)
    D = y / z - (n - y) / (1 - z)
    D2 = -y / z**2 - (n - y) / (1 - z) ** 2
    return st, a, b, c, D, D2


def natural_grad_log_likelihood(rates: RateVector, data: Dataset, diag: Diagnostic) -> np.ndarray:
    st, a, b, c, D, _ = _natural_parts(rates, data, diag)
    eta, theta = rates.eta, rates.theta
    A, B = eta.size, theta.size
    if st.mode == TRACKED:
        g_eta = np.bincount(a, c * (1 - theta[b]) * D, minlength=A)
        g_theta = np.bincount(b, c * (1 - eta[a]) * D, minlength=B)
    else:
        q = data.sourcing.q[a]
        g_eta = np.bincount(a, c * (1 - q @ theta) * D, minlength=A)
        g_theta = (c * (1 - eta[a]) * D) @ q
    return np.concatenate([g_eta, g_theta])


def natural_hessian_log_likelihood(rates: RateVector, data: Dataset, diag: Diagnostic) -> np.ndarray:
    st, a, b, c, D, D2 = _natural_parts(rates, data, diag)
    eta, theta = rates.eta, rates.theta
    A, B = eta.size, theta.size
    H = np.zeros((A + B, A + B))
    if st.mode == TRACKED:
        H[:A, :A] = np.diag(np.bincount(a, c**2 * (1 - theta[b]) ** 2 * D2, minlength=A))
        H[A:, A:] = np.diag(np.bincount(b, c**2 * (1 - eta[a]) ** 2 * D2, minlength=B))
        cross = c**2 * (1 - theta[b]) * (1 - eta[a]) * D2 - c * D
        np.add.at(H, (a, A + b), cross)
        np.add.at(H, (A + b, a), cross)
    else:
        q = data.sourcing.q[a]
        mix = 1 - q @ theta
        H[:A, :A] = np.diag(np.bincount(a, c**2 * mix**2 * D2, minlength=A))
        w = c * (1 - eta[a])
        H[A:, A:] = (q * (w**2 * D2)[:, None]).T @ q
        cross = q * (c**2 * (1 - eta[a]) * mix * D2 - c * D)[:, None]
        np.add.at(H, (a, slice(A, None)), cross)
        H[A:, :A] = H[:A, A:].T
    return H
