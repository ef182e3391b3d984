"""Probabilistic model tying actor parameters to observed behavior.

The unknowns are (a subset of) the actor parameters plus, by default,
one latent log-measurement per trial; everything is mapped to
unconstrained space for gradient-based sampling:

* positive scales (sigma0, sigma, sigma_r): ``val = exp(u)`` with a
  half-normal prior
* interval parameters (mu0, beta, alpha): logistic-affine into (lo, hi)
  with a uniform prior

The joint is ``prior(theta) * prod_i p(m_i | s_i, sigma) *
p(r_i | a(theta, m_i), sigma_r)`` with log-Jacobians of the transforms
added.  Latent measurements can instead be collapsed to the mode of
their likelihood (``ln m_i = ln s_i - sigma**2``), a fast plug-in
approximation useful for quick point-ish fits; it is not the exact
marginal and underestimates posterior spread.

Any parameter may be fixed to a known value instead of inferred, which
both shrinks the sampling space and resolves the prior/measurement
trade-off degeneracy (only the ratio-like combination of sigma and
sigma0 is well constrained by behavior; see the identifiability tools).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, logit

from . import backends
from .actor import COST_IDS, COST_PARAM_NAMES, Dataset, make_cost
from .network import AmortizerNetwork, CostFamilyMismatch
from .regimes import COST_PARAM_BOXES, INFERENCE_MU0, INFERENCE_SIGMA_SCALE

ROLE_NAMES = ("mu0", "sigma0", "sigma", "sigma_r", None)  # slot 4 named per family


@dataclass(frozen=True)
class ParamPrior:
    """Prior spec for one parameter: 'half_normal' (scale), 'uniform'
    (lo, hi), or 'fixed' (value)."""

    kind: str
    a: float
    b: float = 0.0

    @classmethod
    def half_normal(cls, scale) -> "ParamPrior":
        if scale <= 0:
            raise ValueError("half-normal scale must be positive")
        return cls("half_normal", float(scale))

    @classmethod
    def uniform(cls, lo, hi) -> "ParamPrior":
        if not lo < hi:
            raise ValueError(f"need lo < hi, got ({lo}, {hi})")
        return cls("uniform", float(lo), float(hi))

    @classmethod
    def fixed(cls, value) -> "ParamPrior":
        return cls("fixed", float(value))

    def to_unconstrained(self, value: float) -> float:
        if self.kind == "half_normal":
            if value <= 0:
                raise ValueError(f"value {value} outside support (positive)")
            return math.log(value)
        if self.kind == "uniform":
            if not (self.a < value < self.b):
                raise ValueError(f"value {value} outside support ({self.a}, {self.b})")
            return float(logit((value - self.a) / (self.b - self.a)))
        raise ValueError("fixed parameters have no unconstrained coordinate")

    def to_constrained(self, u: float) -> float:
        if self.kind == "half_normal":
            return math.exp(u)
        if self.kind == "uniform":
            return self.a + (self.b - self.a) * float(expit(u))
        return self.a

    def draw(self, rng) -> float:
        if self.kind == "half_normal":
            return abs(float(rng.normal(0.0, self.a)))
        if self.kind == "uniform":
            return float(rng.uniform(self.a, self.b))
        return self.a


def default_priors(cost_family: str, fixed: Optional[dict] = None) -> dict:
    """Standard inference priors, with selected parameters fixed.

    fixed maps parameter name -> value; e.g. {"sigma": 0.2} pins the
    measurement noise (recommended: behavioral data alone cannot
    separate it from the prior spread).
    """
    pname = COST_PARAM_NAMES[cost_family]
    priors = {
        "mu0": ParamPrior.uniform(INFERENCE_MU0.lo, INFERENCE_MU0.hi),
        "sigma0": ParamPrior.half_normal(INFERENCE_SIGMA_SCALE),
        "sigma": ParamPrior.half_normal(INFERENCE_SIGMA_SCALE),
        "sigma_r": ParamPrior.half_normal(INFERENCE_SIGMA_SCALE),
    }
    if pname is not None:
        box = COST_PARAM_BOXES[cost_family]
        priors[pname] = ParamPrior.uniform(box.lo, box.hi)
    for name, value in (fixed or {}).items():
        if name not in priors:
            raise ValueError(f"cannot fix unknown parameter {name!r}")
        priors[name] = ParamPrior.fixed(value)
    return priors


@dataclass(frozen=True)
class AnalyticSolver:
    """Closed-form action solver (quadratic and quadratic_effort only)."""

    cost_family: str

    def __post_init__(self):
        if self.cost_family not in ("quadratic", "quadratic_effort"):
            raise ValueError(
                f"no closed-form solver for {self.cost_family!r}; use a network"
            )


@dataclass(frozen=True, eq=False)
class NetworkSolver:
    """Amortized action solver wrapping a trained network."""

    net: AmortizerNetwork

    @property
    def cost_family(self):
        return self.net.cost_family


class BehaviorModel:
    """Differentiable unnormalized posterior over actor parameters.

    Positions are ``[free parameters..., latent ln m per trial]`` in
    unconstrained space (latents absent when collapsed).
    """

    def __init__(self, data: Dataset, priors: dict, solver, marginalize_measurements=False):
        fam = solver.cost_family
        pname = COST_PARAM_NAMES[fam]
        expected = {"mu0", "sigma0", "sigma", "sigma_r"} | ({pname} if pname else set())
        if set(priors) != expected:
            raise ValueError(
                f"priors must cover exactly {sorted(expected)}, got {sorted(priors)}"
            )
        self.data = data
        self.priors = dict(priors)
        self.solver = solver
        self.cost_family = fam
        self.collapsed = bool(marginalize_measurements)

        role_names = list(ROLE_NAMES[:4]) + ([pname] if pname else [])
        self.free_names = [n for n in role_names if priors[n].kind != "fixed"]
        self.n_free = len(self.free_names)
        self.n_latent = 0 if self.collapsed else len(data)
        self.dim = self.n_free + self.n_latent

        # kernel role tables: 5 slots (mu0, sigma0, sigma, sigma_r, costp)
        self._free_idx = np.full(5, -1, dtype=np.int64)
        self._fixed = np.zeros(5)
        self._kinds = np.zeros(5, dtype=np.int64)
        self._pa = np.zeros(5)
        self._pb = np.zeros(5)
        slot_names = list(ROLE_NAMES[:4]) + [pname if pname else None]
        k = 0
        for j, name in enumerate(slot_names):
            if name is None:
                continue
            pr = priors[name]
            if pr.kind == "fixed":
                if pr.a <= 0:
                    raise ValueError(f"{name} fixed to non-positive value {pr.a}")
                self._fixed[j] = pr.a
                continue
            self._free_idx[j] = k
            k += 1
            if pr.kind == "half_normal":
                self._kinds[j] = 0
                self._pa[j] = pr.a
            elif pr.kind == "uniform":
                self._kinds[j] = 1
                self._pa[j] = pr.a
                self._pb[j] = pr.b
            else:
                raise ValueError(f"unknown prior kind {pr.kind!r}")

        if isinstance(solver, NetworkSolver):
            self._solver_id = 0
            self._w = solver.net.weights
            self._centers = solver.net.centers
            self._halfw = solver.net.halfwidths
            if solver.net.cost_family != fam:
                raise CostFamilyMismatch(fam)
        elif isinstance(solver, AnalyticSolver):
            self._solver_id = 1
            self._w = np.zeros(1)
            self._centers = np.zeros(1)
            self._halfw = np.ones(1)
        else:
            raise TypeError(f"solver must be NetworkSolver or AnalyticSolver, got {solver!r}")
        self._cost_id = COST_IDS[fam]
        self._ln_s = np.log(data.stimuli)
        self._ln_r = np.log(data.responses)

    def _args(self, q):
        return (
            np.asarray(q, dtype=float),
            self._ln_s,
            self._ln_r,
            self._free_idx,
            self._fixed,
            self._kinds,
            self._pa,
            self._pb,
            self.n_free,
            1 if self.collapsed else 0,
            self._solver_id,
            self._cost_id,
            self._w,
            self._centers,
            self._halfw,
        )

    def log_joint(self, q) -> float:
        return backends.active.log_joint_grad(*self._args(q))[0]

    def log_joint_grad(self, q):
        """(log density, gradient) in unconstrained space."""
        return backends.active.log_joint_grad(*self._args(q))

    # -- coordinate plumbing ------------------------------------------------

    def constrain(self, q) -> dict:
        """Map one unconstrained position to named parameter values."""
        q = np.asarray(q, dtype=float)
        out = {}
        for i, name in enumerate(self.free_names):
            out[name] = self.priors[name].to_constrained(float(q[i]))
        return out

    def constrain_draws(self, draws) -> np.ndarray:
        """Vectorized constrain over rows of draws (..., dim) -> (..., n_free)."""
        draws = np.asarray(draws, dtype=float)
        out = np.empty(draws.shape[:-1] + (self.n_free,))
        for i, name in enumerate(self.free_names):
            pr = self.priors[name]
            u = draws[..., i]
            if pr.kind == "half_normal":
                out[..., i] = np.exp(u)
            else:
                out[..., i] = pr.a + (pr.b - pr.a) * expit(u)
        return out

    def unconstrain(self, values: dict) -> np.ndarray:
        """Named parameter values -> the free block of a position."""
        q = np.empty(self.n_free)
        for i, name in enumerate(self.free_names):
            q[i] = self.priors[name].to_unconstrained(values[name])
        return q

    def latent_draws(self, draws) -> np.ndarray:
        """Latent ln m block of draws (..., dim) -> (..., n_latent)."""
        if self.collapsed:
            raise ValueError("collapsed model has no latent measurements")
        return np.asarray(draws)[..., self.n_free :]

    def initial_position(self, rng) -> np.ndarray:
        """Prior draw for free parameters; latents near the observed
        stimuli perturbed by the drawn measurement noise."""
        q = np.empty(self.dim)
        vals = {}
        for i, name in enumerate(self.free_names):
            v = self.priors[name].draw(rng)
            if self.priors[name].kind == "half_normal":
                v = max(v, 1e-3)  # keep exp/log sane at the start
            vals[name] = v
            q[i] = self.priors[name].to_unconstrained(v)
        if not self.collapsed:
            sigma = vals.get("sigma", self.priors["sigma"].a)
            q[self.n_free :] = self._ln_s + sigma * rng.standard_normal(self.n_latent)
        return q

    def params_at(self, q):
        """ActorParams at one position (handy for posterior predictive)."""
        vals = self.constrain(q)
        pname = COST_PARAM_NAMES[self.cost_family]
        slot_names = list(ROLE_NAMES[:4]) + [pname]
        full = [
            vals.get(name, self._fixed[j]) if name is not None else None
            for j, name in enumerate(slot_names)
        ]
        from .actor import ActorParams

        return ActorParams(
            mu0=full[0],
            sigma0=full[1],
            sigma=full[2],
            sigma_r=full[3],
            cost=make_cost(self.cost_family, full[4]),
        )
