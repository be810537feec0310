"""No-U-Turn sampler with dual-averaging step-size adaptation.

This follows the efficient slice-sampling NUTS of Hoffman & Gelman
(2014, Algorithms 4 and 6) with an identity mass matrix by default. The
target is any callable returning ``(logp, grad)``; :func:`sample` wires in
the SFP log-posterior.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .likelihood import PosteriorModel
from .priors import Prior
from .supply_model import Dataset, Diagnostic

log = logging.getLogger(__name__)

LogpGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]

DELTA_MAX = 1000.0
# dual-averaging constants from Hoffman & Gelman
DA_GAMMA = 0.05
DA_T0 = 10.0
DA_KAPPA = 0.75


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    target_accept: float = 0.4
    warmup_draws: int = 5000
    inference_draws: int = 1000
    max_tree_depth: int = 10
    seed: int = 0
    chains: int = 1
    adapt_mass: bool = False
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.warmup_draws < 1 or self.inference_draws < 1:
            raise ValueError("warmup_draws and inference_draws must be at least 1")
        if not 5 <= self.max_tree_depth <= 15:
            raise ValueError("max_tree_depth must be between 5 and 15")
        if self.chains < 1:
            raise ValueError("chains must be at least 1")


@dataclass
class ChainDiagnostics:
    step_size: float
    accept_stat: np.ndarray
    divergences: int
    tree_depth: np.ndarray
    n_leapfrog: int
    runtime: float
    inv_mass: np.ndarray = field(repr=False, default=None)

    @property
    def mean_accept(self) -> float:
        return float(np.mean(self.accept_stat))


@dataclass
class PosteriorDraws:
    """Inference draws, kept per chain.

    ``chain_logit_draws`` has shape ``(chains, inference_draws, dim)``;
    :attr:`draws` and :attr:`logit_draws` stack the chains.
    """

    chain_logit_draws: np.ndarray
    diagnostics: list[ChainDiagnostics]
    n_test: Optional[int] = None

    def __post_init__(self):
        self.chain_logit_draws = np.asarray(self.chain_logit_draws, dtype=float)
        if self.chain_logit_draws.ndim == 2:
            self.chain_logit_draws = self.chain_logit_draws[None]
        if np.isnan(self.chain_logit_draws).any():
            raise SamplerError("posterior draws contain NaN")

    @property
    def logit_draws(self) -> np.ndarray:
        return self.chain_logit_draws.reshape(-1, self.chain_logit_draws.shape[-1])

    @property
    def draws(self) -> np.ndarray:
        return expit(self.logit_draws)

    @property
    def n_chains(self) -> int:
        return self.chain_logit_draws.shape[0]

    @property
    def dim(self) -> int:
        return self.chain_logit_draws.shape[-1]

    @property
    def divergences(self) -> int:
        return sum(d.divergences for d in self.diagnostics)

    def per_chain(self) -> list["PosteriorDraws"]:
        return [
            PosteriorDraws(self.chain_logit_draws[i], [self.diagnostics[i]], self.n_test)
            for i in range(self.n_chains)
        ]


def _leapfrog(x, r, g, eps, minv, f):
    r = r + 0.5 * eps * g
    x = x + eps * minv * r
    lp, g = f(x)
    r = r + 0.5 * eps * g
    return x, r, g, lp


class _Tree:
    __slots__ = (
        "x_minus", "r_minus", "g_minus", "x_plus", "r_plus", "g_plus",
        "x_prop", "g_prop", "lp_prop", "n", "s", "alpha", "n_alpha", "diverged",
    )


class _NUTS:
    def __init__(self, f: LogpGrad, dim: int, rng: np.random.Generator, max_depth: int, minv=None):
        self.f = f
        self.dim = dim
        self.rng = rng
        self.max_depth = max_depth
        self.minv = np.ones(dim) if minv is None else minv
        self.n_leapfrog = 0

    def kinetic(self, r):
        return 0.5 * float(np.dot(r, self.minv * r))

    def momentum(self):
        return self.rng.standard_normal(self.dim) / np.sqrt(self.minv)

    def find_reasonable_epsilon(self, x, lp, g) -> float:
        eps = 1.0
        r = self.momentum()
        joint0 = lp - self.kinetic(r)

        def log_ratio(eps):
            _, r1, _, lp1 = _leapfrog(x, r, g, eps, self.minv, self.f)
            val = lp1 - self.kinetic(r1) - joint0
            return val if np.isfinite(val) else -np.inf

        lr = log_ratio(eps)
        a = 1.0 if lr > math.log(0.5) else -1.0
        for _ in range(100):
            if not a * lr > -a * math.log(2.0):
                break
            eps *= 2.0**a
            lr = log_ratio(eps)
        return eps

    def build_tree(self, x, r, g, log_u, v, j, eps, joint0) -> _Tree:
        t = _Tree()
        if j == 0:
            x1, r1, g1, lp1 = _leapfrog(x, r, g, v * eps, self.minv, self.f)
            self.n_leapfrog += 1
            joint = lp1 - self.kinetic(r1)
            if not np.isfinite(joint) or not np.all(np.isfinite(g1)):
                joint = -np.inf
            t.x_minus = t.x_plus = t.x_prop = x1
            t.r_minus = t.r_plus = r1
            t.g_minus = t.g_plus = t.g_prop = g1
            t.lp_prop = lp1
            t.n = int(log_u <= joint)
            t.s = int(log_u < joint + DELTA_MAX)
            t.diverged = not t.s
            t.alpha = min(1.0, math.exp(joint - joint0)) if np.isfinite(joint) else 0.0
            t.n_alpha = 1
            return t
        t = self.build_tree(x, r, g, log_u, v, j - 1, eps, joint0)
        if t.s:
            if v == -1:
                t2 = self.build_tree(t.x_minus, t.r_minus, t.g_minus, log_u, v, j - 1, eps, joint0)
                t.x_minus, t.r_minus, t.g_minus = t2.x_minus, t2.r_minus, t2.g_minus
            else:
                t2 = self.build_tree(t.x_plus, t.r_plus, t.g_plus, log_u, v, j - 1, eps, joint0)
                t.x_plus, t.r_plus, t.g_plus = t2.x_plus, t2.r_plus, t2.g_plus
            n_tot = t.n + t2.n
            if n_tot > 0 and self.rng.uniform() < t2.n / n_tot:
                t.x_prop, t.g_prop, t.lp_prop = t2.x_prop, t2.g_prop, t2.lp_prop
            t.alpha += t2.alpha
            t.n_alpha += t2.n_alpha
            t.diverged = t.diverged or t2.diverged
            t.s = t2.s and self._no_uturn(t.x_minus, t.x_plus, t.r_minus, t.r_plus)
            t.n = n_tot
        return t

    def _no_uturn(self, x_minus, x_plus, r_minus, r_plus) -> bool:
        dx = x_plus - x_minus
        return float(np.dot(dx, self.minv * r_minus)) >= 0 and float(np.dot(dx, self.minv * r_plus)) >= 0

    def transition(self, x, lp, g, eps):
        """One NUTS iteration; returns new state and (accept_stat, depth, diverged)."""
        r0 = self.momentum()
        joint0 = lp - self.kinetic(r0)
        log_u = joint0 - self.rng.standard_exponential()
        x_minus = x_plus = x
        r_minus = r_plus = r0
        g_minus = g_plus = g
        x_new, lp_new, g_new = x, lp, g
        n, s, j = 1, True, 0
        alpha, n_alpha, diverged = 0.0, 0, False
        while s and j < self.max_depth:
            v = 1 if self.rng.uniform() < 0.5 else -1
            if v == -1:
                t = self.build_tree(x_minus, r_minus, g_minus, log_u, v, j, eps, joint0)
                x_minus, r_minus, g_minus = t.x_minus, t.r_minus, t.g_minus
            else:
                t = self.build_tree(x_plus, r_plus, g_plus, log_u, v, j, eps, joint0)
                x_plus, r_plus, g_plus = t.x_plus, t.r_plus, t.g_plus
            if t.s and self.rng.uniform() < min(1.0, t.n / n):
                x_new, lp_new, g_new = t.x_prop, t.lp_prop, t.g_prop
            n += t.n
            alpha += t.alpha
            n_alpha += t.n_alpha
            diverged = diverged or t.diverged
            s = t.s and self._no_uturn(x_minus, x_plus, r_minus, r_plus)
            j += 1
        return x_new, lp_new, g_new, alpha / max(n_alpha, 1), j, diverged


def _initial_point(f, dim, rng, init_center, init_radius):
    for _ in range(100):
        x = rng.uniform(init_center - init_radius, init_center + init_radius, size=dim)
        lp, g = f(x)
        if np.isfinite(lp) and np.all(np.isfinite(g)):
            return x, lp, g
    raise SamplerError("could not find a starting point with finite log-posterior in 100 attempts")


def run_chain(
    f: LogpGrad,
    dim: int,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    init_center: float = 0.0,
    init_radius: float = 1.0,
    x0: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, ChainDiagnostics]:
    """Run one chain; returns ``(inference_draws, dim)`` logit draws and diagnostics."""
    t_start = time.perf_counter()
    if x0 is None:
        x, lp, g = _initial_point(f, dim, rng, init_center, init_radius)
    else:
        x = np.asarray(x0, dtype=float)
        lp, g = f(x)
    sampler = _NUTS(f, dim, rng, cfg.max_tree_depth)
    delta = cfg.target_accept
    M = cfg.warmup_draws

    def restart_adaptation(x, lp, g):
        eps = sampler.find_reasonable_epsilon(x, lp, g)
        return eps, math.log(10.0 * eps), 0.0, 0.0

    eps, mu, h_bar, log_eps_bar = restart_adaptation(x, lp, g)
    m_da = 0
    # optional diagonal metric: collect warmup draws from the middle window
    win_lo, win_hi = int(0.15 * M), int(0.75 * M)
    window = [] if cfg.adapt_mass else None

    for m in range(1, M + 1):
        x, lp, g, acc, _, _ = sampler.transition(x, lp, g, eps)
        m_da += 1
        eta_w = 1.0 / (m_da + DA_T0)
        h_bar = (1.0 - eta_w) * h_bar + eta_w * (delta - acc)
        log_eps = mu - math.sqrt(m_da) / DA_GAMMA * h_bar
        w = m_da ** (-DA_KAPPA)
        log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar
        eps = math.exp(log_eps)
        if window is not None and win_lo <= m < win_hi:
            window.append(x)
            if m == win_hi - 1 and len(window) > 10:
                var = np.var(np.asarray(window), axis=0)
                n_w = len(window)
                sampler.minv = (n_w / (n_w + 5.0)) * var + 1e-3 * (5.0 / (n_w + 5.0))
                eps, mu, h_bar, log_eps_bar = restart_adaptation(x, lp, g)
                m_da = 0
    eps = math.exp(log_eps_bar) if M > 0 else eps

    n_draws = cfg.inference_draws
    out = np.empty((n_draws, dim))
    accept = np.empty(n_draws)
    depth = np.empty(n_draws, dtype=int)
    divergences = 0
    leapfrog_warm = sampler.n_leapfrog
    for i in range(n_draws):
        x, lp, g, acc, j, div = sampler.transition(x, lp, g, eps)
        out[i] = x
        accept[i] = acc
        depth[i] = j
        divergences += int(div)
    diag = ChainDiagnostics(
        step_size=eps,
        accept_stat=accept,
        divergences=divergences,
        tree_depth=depth,
        n_leapfrog=sampler.n_leapfrog - leapfrog_warm,
        runtime=time.perf_counter() - t_start,
        inv_mass=sampler.minv.copy(),
    )
    return out, diag


def chain_rngs(seed: int, chains: int) -> list[np.random.Generator]:
    """Independent PCG64 streams, one per chain, fixed by ``seed``."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(chains)]


def sample_target(
    f: LogpGrad,
    dim: int,
    cfg: SamplerConfig,
    init_center: float = 0.0,
    init_radius: float = 1.0,
) -> PosteriorDraws:
    """Sample an arbitrary differentiable log-density."""
    results = [
        run_chain(f, dim, cfg, rng, init_center, init_radius)
        for rng in chain_rngs(cfg.seed, cfg.chains)
    ]
    return PosteriorDraws(np.stack([r[0] for r in results]), [r[1] for r in results])


def _posterior_chain(args):
    data, diag, prior, cfg, rng = args
    model = PosteriorModel(data, diag, prior)
    return run_chain(model.logp_and_grad, model.dim, cfg, rng, prior.gamma, prior.nu)


def sample(data: Dataset, diag: Diagnostic, prior: Prior, cfg: SamplerConfig = SamplerConfig()) -> PosteriorDraws:
    """Draw from the SFP-rate posterior in logit coordinates.

    Chains start uniformly in ``[gamma - nu, gamma + nu]``. With
    ``cfg.workers > 1`` chains run in separate processes; results are
    ordered by chain index, so output does not depend on ``workers``.
    """
    jobs = [(data, diag, prior, cfg, rng) for rng in chain_rngs(cfg.seed, cfg.chains)]
    if cfg.workers > 1 and cfg.chains > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_posterior_chain, jobs))
    else:
        results = [_posterior_chain(job) for job in jobs]
    draws = PosteriorDraws(np.stack([r[0] for r in results]), [r[1] for r in results], data.chain.n_test)
    if draws.divergences:
        log.info("%d divergent transitions after warm-up", draws.divergences)
    return draws


def rhat(draws_per_chain: Sequence) -> np.ndarray:
    """Split-R-hat per coordinate.

    Accepts a list of per-chain :class:`PosteriorDraws` (or arrays of shape
    ``(n, dim)``), or a single multi-chain :class:`PosteriorDraws`.
    """
    if isinstance(draws_per_chain, PosteriorDraws):
        chains = list(draws_per_chain.chain_logit_draws)
    else:
        chains = []
        for c in draws_per_chain:
            if isinstance(c, PosteriorDraws):
                chains.extend(c.chain_logit_draws)
            else:
                chains.append(np.asarray(c, dtype=float))
    if len(chains) < 2:
        raise ValueError("split-R-hat needs at least two chains")
    lengths = {len(c) for c in chains}
    if len(lengths) != 1:
        raise ValueError(f"chains differ in length: {sorted(lengths)}")
    n = lengths.pop()
    half = n // 2
    if half < 2:
        raise ValueError("chains are too short to split")
    x = np.stack(chains)
    if x.ndim == 2:
        x = x[..., None]
    split = np.concatenate([x[:, :half], x[:, n - half :]], axis=0)
    m = split.shape[0]
    chain_means = split.mean(axis=1)
    chain_vars = split.var(axis=1, ddof=1)
    B = half * chain_means.var(axis=0, ddof=1)
    W = chain_vars.mean(axis=0)
    var_plus = (half - 1) / half * W + B / half
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(var_plus / W)
    # rounding leaves tiny variances on constant chains; treat them as zero
    tol = (1e-12 * np.maximum(1.0, np.abs(split.mean(axis=(0, 1))))) ** 2
    w0, b0 = W <= tol, B <= half * tol
    r = np.where(w0 & b0, 1.0, r)
    r = np.where(w0 & ~b0, np.inf, r)
    return r
