"""No-U-Turn sampler with step-size and mass-matrix adaptation.

One self-contained gradient-based MCMC kernel over an arbitrary
differentiable log density:

* multinomial sampling over the doubling trajectory (draws are weighted
  by density along the whole path, with the outer doubling biased
  toward the fresh subtree)
* dual-averaging step-size adaptation toward a target acceptance
  statistic (gamma 0.05, t0 10, kappa 0.75, mu = ln(10 eps0))
* windowed diagonal mass adaptation during warmup: an initial
  step-size-only buffer, then doubling variance-estimation windows,
  then a terminal step-size buffer; after each window the inverse mass
  is set to the regularized sample variance and dual averaging restarts
* a transition is marked divergent when the Hamiltonian error exceeds
  1000 (or turns non-finite) anywhere along the trajectory; divergent
  subtrees are never sampled from

The sampler treats the target as a black box: any (lp, grad) callable
works.  Non-finite log density at a proposed point simply truncates
that trajectory as divergent, so heavy tails or hard support edges
degrade acceptance instead of crashing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DELTA_MAX = 1000.0  # Hamiltonian error beyond which a leaf is divergent

_DA_GAMMA = 0.05
_DA_T0 = 10.0
_DA_KAPPA = 0.75


class ChainError(RuntimeError):
    """Chain could not be initialized (no finite starting density)."""


@dataclass
class ChainResult:
    draws: np.ndarray  # (n_draws, dim), unconstrained coordinates
    log_probs: np.ndarray  # (n_draws,)
    accept_stat: np.ndarray  # (n_draws,) mean leapfrog acceptance statistic
    divergent: np.ndarray  # (n_draws,) bool
    n_leapfrog: np.ndarray  # (n_draws,) int
    tree_depth: np.ndarray  # (n_draws,) int
    step_size: float
    inv_mass: np.ndarray
    warmup_divergences: int


class _DualAveraging:
    def __init__(self, eps0, target):
        self.mu = math.log(10.0 * eps0)
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.count = 0
        self.target = target

    def update(self, alpha):
        self.count += 1
        frac = 1.0 / (self.count + _DA_T0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - alpha)
        self.log_eps = self.mu - math.sqrt(self.count) / _DA_GAMMA * self.h_bar
        w = self.count ** (-_DA_KAPPA)
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar

    @property
    def eps(self):
        return math.exp(self.log_eps)

    @property
    def eps_final(self):
        return math.exp(self.log_eps_bar)


class _RunningVar:
    """Welford accumulator for the diagonal posterior variance."""

    def __init__(self, dim):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x):
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def variance(self):
        if self.n < 2:
            return np.ones_like(self.mean)
        var = self.m2 / (self.n - 1)
        # shrink toward a small constant, as a guard for short windows
        w = self.n / (self.n + 5.0)
        return w * var + (1.0 - w) * 1e-3


def warmup_windows(n_warmup, init_buffer=75, term_buffer=50, base_window=25):
    """Iteration indices (1-based) at which to update the mass matrix."""
    if n_warmup < 20:
        return []
    if init_buffer + base_window + term_buffer > n_warmup:
        init_buffer = max(1, int(0.15 * n_warmup))
        term_buffer = max(1, int(0.10 * n_warmup))
        base_window = n_warmup - init_buffer - term_buffer
        if base_window < 1:
            return []
    ends = []
    pos = init_buffer
    w = base_window
    while pos + w <= n_warmup - term_buffer:
        if pos + w + 2 * w > n_warmup - term_buffer:
            w = n_warmup - term_buffer - pos  # final window absorbs the rest
        ends.append(pos + w)
        pos += w
        w *= 2
    return ends


@dataclass
class _Tree:
    q_minus: np.ndarray
    p_minus: np.ndarray
    g_minus: np.ndarray
    lp_minus: float
    q_plus: np.ndarray
    p_plus: np.ndarray
    g_plus: np.ndarray
    lp_plus: float
    proposal: np.ndarray
    proposal_lp: float
    log_weight: float
    turning: bool
    divergent: bool
    alpha_sum: float = 0.0
    n_alpha: int = 0
    n_leapfrog: int = 0


class _Transition:
    """One NUTS transition; bundles the integrator state and counters."""

    def __init__(self, logp_grad, eps, inv_mass, max_depth, rng):
        self.logp_grad = logp_grad
        self.eps = eps
        self.inv_mass = inv_mass
        self.max_depth = max_depth
        self.rng = rng

    def _kinetic(self, p):
        return 0.5 * float(p * self.inv_mass @ p)

    def _leapfrog(self, q, p, grad, direction):
        e = direction * self.eps
        p1 = p + 0.5 * e * grad
        q1 = q + e * (self.inv_mass * p1)
        lp1, g1 = self.logp_grad(q1)
        if not math.isfinite(lp1):
            return q1, p1, -math.inf, g1
        p1 = p1 + 0.5 * e * g1
        return q1, p1, lp1, g1

    def _no_uturn(self, q_minus, p_minus, q_plus, p_plus):
        dq = q_plus - q_minus
        return (
            float(dq @ (self.inv_mass * p_minus)) >= 0.0
            and float(dq @ (self.inv_mass * p_plus)) >= 0.0
        )

    def _build(self, q, p, grad, lp, direction, depth, h0):
        if depth == 0:
            q1, p1, lp1, g1 = self._leapfrog(q, p, grad, direction)
            if math.isfinite(lp1):
                dh = (-lp1 + self._kinetic(p1)) - h0
            else:
                dh = math.inf
            divergent = not math.isfinite(dh) or dh > DELTA_MAX
            lw = -dh if not divergent else -math.inf
            alpha = math.exp(min(0.0, -dh)) if math.isfinite(dh) else 0.0
            return _Tree(
                q_minus=q1, p_minus=p1, g_minus=g1, lp_minus=lp1,
                q_plus=q1, p_plus=p1, g_plus=g1, lp_plus=lp1,
                proposal=q1, proposal_lp=lp1, log_weight=lw,
                turning=False, divergent=divergent,
                alpha_sum=alpha, n_alpha=1, n_leapfrog=1,
            )
        first = self._build(q, p, grad, lp, direction, depth - 1, h0)
        if first.divergent or first.turning:
            return first
        if direction < 0:
            second = self._build(
                first.q_minus, first.p_minus, first.g_minus, first.lp_minus,
                direction, depth - 1, h0,
            )
            first.q_minus = second.q_minus
            first.p_minus = second.p_minus
            first.g_minus = second.g_minus
            first.lp_minus = second.lp_minus
        else:
            second = self._build(
                first.q_plus, first.p_plus, first.g_plus, first.lp_plus,
                direction, depth - 1, h0,
            )
            first.q_plus = second.q_plus
            first.p_plus = second.p_plus
            first.g_plus = second.g_plus
            first.lp_plus = second.lp_plus
        first.alpha_sum += second.alpha_sum
        first.n_alpha += second.n_alpha
        first.n_leapfrog += second.n_leapfrog
        first.divergent = second.divergent
        if not second.divergent:
            total = np.logaddexp(first.log_weight, second.log_weight)
            if (
                second.log_weight > -math.inf
                and math.log(self.rng.random()) < second.log_weight - total
            ):
                first.proposal = second.proposal
                first.proposal_lp = second.proposal_lp
            first.log_weight = total
            first.turning = second.turning or not self._no_uturn(
                first.q_minus, first.p_minus, first.q_plus, first.p_plus
            )
        return first

    def run(self, q, lp, grad):
        p0 = self.rng.standard_normal(q.shape[0]) / np.sqrt(self.inv_mass)
        h0 = -lp + self._kinetic(p0)
        q_minus = q_plus = q
        p_minus = p_plus = p0
        g_minus = g_plus = grad
        lp_minus = lp_plus = lp
        proposal, proposal_lp = q, lp
        log_weight = 0.0  # initial point has unit relative weight
        alpha_sum = 0.0
        n_alpha = 0
        n_leapfrog = 0
        divergent = False
        depth = 0
        while depth < self.max_depth:
            direction = 1 if self.rng.random() < 0.5 else -1
            if direction < 0:
                sub = self._build(q_minus, p_minus, g_minus, lp_minus, direction, depth, h0)
                q_minus, p_minus, g_minus, lp_minus = (
                    sub.q_minus, sub.p_minus, sub.g_minus, sub.lp_minus,
                )
            else:
                sub = self._build(q_plus, p_plus, g_plus, lp_plus, direction, depth, h0)
                q_plus, p_plus, g_plus, lp_plus = (
                    sub.q_plus, sub.p_plus, sub.g_plus, sub.lp_plus,
                )
            alpha_sum += sub.alpha_sum
            n_alpha += sub.n_alpha
            n_leapfrog += sub.n_leapfrog
            if sub.divergent:
                divergent = True
                break
            if sub.turning:
                break
            # biased progressive sampling: favor the fresh half
            if math.log(self.rng.random()) < sub.log_weight - log_weight:
                proposal = sub.proposal
                proposal_lp = sub.proposal_lp
            log_weight = np.logaddexp(log_weight, sub.log_weight)
            depth += 1
            if not self._no_uturn(q_minus, p_minus, q_plus, p_plus):
                break
        accept_stat = alpha_sum / n_alpha if n_alpha else 0.0
        return proposal, proposal_lp, accept_stat, divergent, n_leapfrog, depth


def _find_initial_step(logp_grad, q, lp, grad, inv_mass, rng):
    """Classic bracketing heuristic: scale eps by 2 until the one-step
    acceptance probability crosses 1/2."""
    eps = 1.0
    dim = q.shape[0]
    p = rng.standard_normal(dim) / np.sqrt(inv_mass)
    h0 = -lp + 0.5 * float(p * inv_mass @ p)

    def one_step(eps):
        t = _Transition(logp_grad, eps, inv_mass, 1, rng)
        q1, p1, lp1, _ = t._leapfrog(q, p, grad, 1)
        if not math.isfinite(lp1):
            return -math.inf
        return -((-lp1 + t._kinetic(p1)) - h0)

    log_ratio = one_step(eps)
    for _ in range(60):
        if math.isfinite(log_ratio):
            break
        eps *= 0.5
        log_ratio = one_step(eps)
    direction = 1.0 if log_ratio > math.log(0.5) else -1.0
    for _ in range(60):
        eps_try = eps * (2.0**direction)
        log_ratio = one_step(eps_try)
        if direction > 0 and not (log_ratio > math.log(0.5)):
            break
        if direction < 0 and not (log_ratio <= math.log(0.5)):
            break
        eps = eps_try
        if eps > 1e7 or eps < 1e-10:
            break
    return eps


def sample_chain(
    logp_grad,
    q0,
    n_warmup,
    n_draws,
    rng,
    target_accept=0.8,
    max_tree_depth=10,
    progress=None,
) -> ChainResult:
    """Run one adaptive NUTS chain.  Returns post-warmup draws only.

    logp_grad: callable q -> (log density, gradient), both finite near q0
    q0: starting position (unconstrained)
    progress: optional callable(iteration, total) called every 200 iterations
    """
    q = np.array(q0, dtype=float)
    lp, grad = logp_grad(q)
    if not (math.isfinite(lp) and np.all(np.isfinite(grad))):
        raise ChainError("non-finite log density or gradient at the initial position")
    # runaway trajectories produce inf/nan transiently; they are caught by
    # the divergence checks, so arithmetic warnings are just noise here
    _seterr = np.seterr(over="ignore", under="ignore", invalid="ignore", divide="ignore")
    try:
        return _sample_chain_inner(
            logp_grad, q, lp, grad, n_warmup, n_draws, rng,
            target_accept, max_tree_depth, progress,
        )
    finally:
        np.seterr(**_seterr)


def _sample_chain_inner(
    logp_grad, q, lp, grad, n_warmup, n_draws, rng,
    target_accept, max_tree_depth, progress,
):

    dim = q.shape[0]
    inv_mass = np.ones(dim)
    eps = _find_initial_step(logp_grad, q, lp, grad, inv_mass, rng)
    da = _DualAveraging(eps, target_accept)
    windows = set(warmup_windows(n_warmup))
    welford = _RunningVar(dim)

    draws = np.empty((n_draws, dim))
    log_probs = np.empty(n_draws)
    accept = np.empty(n_draws)
    divergent = np.zeros(n_draws, dtype=bool)
    n_leap = np.zeros(n_draws, dtype=np.int64)
    depths = np.zeros(n_draws, dtype=np.int64)
    warmup_div = 0

    total = n_warmup + n_draws
    for it in range(total):
        warm = it < n_warmup
        step = da.eps if warm else eps
        trans = _Transition(logp_grad, step, inv_mass, max_tree_depth, rng)
        q, lp, alpha, div, nl, depth = trans.run(q, lp, grad)
        _, grad = logp_grad(q)
        if warm:
            da.update(alpha)
            warmup_div += int(div)
            welford.add(q)
            if (it + 1) in windows:
                inv_mass = welford.variance()
                welford = _RunningVar(dim)
                eps0 = da.eps
                da = _DualAveraging(eps0, target_accept)
            if it + 1 == n_warmup:
                eps = da.eps_final
        else:
            i = it - n_warmup
            draws[i] = q
            log_probs[i] = lp
            accept[i] = alpha
            divergent[i] = div
            n_leap[i] = nl
            depths[i] = depth
        if progress is not None and (it + 1) % 200 == 0:
            progress(it + 1, total)

    return ChainResult(
        draws=draws,
        log_probs=log_probs,
        accept_stat=accept,
        divergent=divergent,
        n_leapfrog=n_leap,
        tree_depth=depths,
        step_size=eps,
        inv_mass=inv_mass,
        warmup_divergences=warmup_div,
    )
