"""Forward model of a Bayesian actor in a continuous reproduction task.

On each trial the environment draws a stimulus ``s``, the actor receives
a noisy measurement ``m ~ LogNormal(s, sigma)``, fuses it with its prior
``s ~ LogNormal(mu0, sigma0)`` into a log-normal posterior, picks the
action ``a`` that minimizes posterior-expected cost, and produces a
response ``r ~ LogNormal(a, sigma_r)`` through noisy execution.

Log-normal convention (used everywhere in this package):
``LogNormal(a, s)`` is the distribution of ``X`` with
``ln X ~ Normal(ln a, s)``.  The first parameter is the *median* of the
distribution in original units, not the log-space location, and ``s``
is the log-space standard deviation.  The mean is ``a * exp(s**2 / 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .ioutil import csv_lines

# Scale parameters are floored here inside density evaluations so that a
# sampler proposing sigma -> 0 sees a finite (if terrible) density
# instead of a crash.
SIGMA_FLOOR = 1e-6

_LN_2PI = math.log(2.0 * math.pi)


class DatasetFormatError(ValueError):
    """Raised when a trials CSV is malformed or contains invalid values."""


# ---------------------------------------------------------------------------
# cost functions


@dataclass(frozen=True)
class Quadratic:
    """Pure squared error ``(r - s)**2``."""

    family = "quadratic"

    def param_value(self) -> float:
        return 0.0


@dataclass(frozen=True)
class QuadraticWithEffort:
    """Squared error plus an effort term penalizing large responses.

    ``beta * (s - r)**2 + (1 - beta) * r**2`` with ``beta`` in (0, 1].
    ``beta = 1`` recovers the pure quadratic cost.
    """

    beta: float
    family = "quadratic_effort"

    def __post_init__(self):
        b = float(self.beta)
        if not (0.0 < b <= 1.0) or not math.isfinite(b):
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        object.__setattr__(self, "beta", b)

    def param_value(self) -> float:
        return self.beta


@dataclass(frozen=True)
class AsymmetricQuadratic:
    """Squared error weighted differently for overshoots and undershoots.

    ``2 * |alpha - [r >= s]| * (r - s)**2`` with ``alpha`` in (0, 1); the
    indicator is 1 when ``r >= s`` (ties count as overshoot, where the
    weight multiplies zero error anyway).  Overshoots carry weight
    ``2 * (1 - alpha)`` and undershoots ``2 * alpha``, so ``alpha < 0.5``
    makes overshooting *more* expensive and pushes the actor to aim low.
    ``alpha = 0.5`` recovers the pure quadratic cost.
    """

    alpha: float
    family = "asymmetric_quadratic"

    def __post_init__(self):
        a = float(self.alpha)
        if not (0.0 < a < 1.0) or not math.isfinite(a):
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        object.__setattr__(self, "alpha", a)

    def param_value(self) -> float:
        return self.alpha


CostSpec = Union[Quadratic, QuadraticWithEffort, AsymmetricQuadratic]

COST_FAMILIES = ("quadratic", "quadratic_effort", "asymmetric_quadratic")

# Integer ids shared with the compiled kernels.
COST_IDS = {"quadratic": 0, "quadratic_effort": 1, "asymmetric_quadratic": 2}

# Name of the scalar cost parameter per family (None = parameter-free).
COST_PARAM_NAMES = {
    "quadratic": None,
    "quadratic_effort": "beta",
    "asymmetric_quadratic": "alpha",
}


def make_cost(family: str, param=None) -> CostSpec:
    """Build a cost spec from its family name and scalar parameter."""
    if family == "quadratic":
        return Quadratic()
    if family == "quadratic_effort":
        if param is None:
            raise ValueError("quadratic_effort requires beta")
        return QuadraticWithEffort(beta=param)
    if family == "asymmetric_quadratic":
        if param is None:
            raise ValueError("asymmetric_quadratic requires alpha")
        return AsymmetricQuadratic(alpha=param)
    raise ValueError(f"unknown cost family {family!r}; expected one of {COST_FAMILIES}")


def cost(spec: CostSpec, r, s):
    """Evaluate the cost of responding ``r`` to true stimulus ``s``.

    Vectorized over ``r`` and ``s`` (NumPy broadcasting rules).
    """
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    d = r - s
    if isinstance(spec, Quadratic):
        out = d * d
    elif isinstance(spec, QuadraticWithEffort):
        out = spec.beta * d * d + (1.0 - spec.beta) * r * r
    elif isinstance(spec, AsymmetricQuadratic):
        w = 2.0 * np.abs(spec.alpha - (r >= s))
        out = w * d * d
    else:
        raise TypeError(f"not a cost spec: {spec!r}")
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# actor parameters and belief


def _check_positive(name, value):
    v = float(value)
    if not math.isfinite(v) or v <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return v


@dataclass(frozen=True)
class ActorParams:
    """Full parameterization of one actor.

    mu0, sigma0: prior median and log-space spread over stimuli
    sigma:       log-space measurement noise
    sigma_r:     log-space motor (execution) noise
    cost:        cost function spec
    """

    mu0: float
    sigma0: float
    sigma: float
    sigma_r: float
    cost: CostSpec

    def __post_init__(self):
        for name in ("mu0", "sigma0", "sigma", "sigma_r"):
            object.__setattr__(self, name, _check_positive(name, getattr(self, name)))
        if not isinstance(self.cost, (Quadratic, QuadraticWithEffort, AsymmetricQuadratic)):
            raise TypeError(f"cost must be a cost spec, got {self.cost!r}")


@dataclass(frozen=True)
class PosteriorBelief:
    """Log-normal posterior over the stimulus after one measurement."""

    mu_post: float
    sigma_post: float


def posterior_log_params(mu0, sigma0, sigma, ln_m):
    """Posterior (ln mu_post, sigma_post) for measurement(s) ln_m.

    Vectorized over all arguments; sigma_post does not depend on the
    measurement.  This is the precision-weighted fusion of the log-space
    Gaussian prior and likelihood.
    """
    s0 = np.maximum(np.asarray(sigma0, dtype=float), SIGMA_FLOOR)
    sm = np.maximum(np.asarray(sigma, dtype=float), SIGMA_FLOOR)
    post_var = 1.0 / (1.0 / (s0 * s0) + 1.0 / (sm * sm))
    ln_mu = post_var * (
        np.log(np.asarray(mu0, dtype=float)) / (s0 * s0)
        + np.asarray(ln_m, dtype=float) / (sm * sm)
    )
    return ln_mu, np.sqrt(post_var)


def posterior(params: ActorParams, m: float) -> PosteriorBelief:
    """Fuse prior and one measurement into the posterior belief."""
    m = _check_positive("m", m)
    ln_mu, sig_post = posterior_log_params(params.mu0, params.sigma0, params.sigma, math.log(m))
    return PosteriorBelief(mu_post=math.exp(float(ln_mu)), sigma_post=float(sig_post))


# ---------------------------------------------------------------------------
# closed-form optimal actions

# For the quadratic cost the posterior-expected loss
#   E[l] = E[r**2] - 2 E[r] E[s] + E[s**2]
# has a unique stationary point in a with
#   a* = mu_post * exp((sigma_post**2 - 3 sigma_r**2) / 2).
# The effort variant rescales it by beta.


def optimal_action_quadratic(params: ActorParams, m: float) -> float:
    """Optimal action under the quadratic cost, in closed form."""
    if not isinstance(params.cost, Quadratic):
        raise ValueError(f"cost family is {params.cost.family!r}, expected quadratic")
    b = posterior(params, m)
    return b.mu_post * math.exp(0.5 * (b.sigma_post**2 - 3.0 * params.sigma_r**2))


def optimal_action_quadratic_effort(params: ActorParams, m: float) -> float:
    """Optimal action under the quadratic-with-effort cost, in closed form."""
    if not isinstance(params.cost, QuadraticWithEffort):
        raise ValueError(f"cost family is {params.cost.family!r}, expected quadratic_effort")
    b = posterior(params, m)
    return params.cost.beta * b.mu_post * math.exp(0.5 * (b.sigma_post**2 - 3.0 * params.sigma_r**2))


def closed_form_action(params: ActorParams, m: float):
    """Closed-form optimal action, or None for families without one."""
    fam = params.cost.family
    if fam == "quadratic":
        return optimal_action_quadratic(params, m)
    if fam == "quadratic_effort":
        return optimal_action_quadratic_effort(params, m)
    return None


# ---------------------------------------------------------------------------
# sampling


def sample_response(a, sigma_r, noise):
    """Map standard-normal noise through the motor model: r = exp(ln a + noise * sigma_r)."""
    a = np.asarray(a, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a <= 0.0):
        raise ValueError("action must be positive and finite")
    return np.exp(np.log(a) + np.asarray(noise, dtype=float) * float(sigma_r))


def sample_posterior_state(belief: PosteriorBelief, noise):
    """Draw stimulus hypotheses from the posterior via standard-normal noise."""
    return np.exp(math.log(belief.mu_post) + np.asarray(noise, dtype=float) * belief.sigma_post)


def simulate_trials(params: ActorParams, stimuli, rng, action_fn=None):
    """Simulate the actor forward over given stimuli.

    action_fn maps (params, m) -> a; defaults to the closed form for the
    actor's cost family and raises if none exists.  Returns a Dataset
    plus the internal measurements and actions for provenance.
    """
    stimuli = np.asarray(stimuli, dtype=float)
    if np.any(stimuli <= 0) or np.any(~np.isfinite(stimuli)):
        raise ValueError("stimuli must be positive and finite")
    if action_fn is None:
        if closed_form_action(params, 1.0) is None:
            raise ValueError(
                f"no closed-form action for {params.cost.family!r}; pass action_fn"
            )
        action_fn = closed_form_action
    n = stimuli.size
    m = np.exp(np.log(stimuli) + rng.standard_normal(n) * params.sigma)
    a = np.array([action_fn(params, float(mi)) for mi in m])
    r = sample_response(a, params.sigma_r, rng.standard_normal(n))
    return Dataset(stimuli, r), m, a


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class Trial:
    stimulus: float
    response: float


class Dataset:
    """Paired (stimulus, response) trials with CSV round-trip support."""

    def __init__(self, stimuli, responses):
        s = np.atleast_1d(np.asarray(stimuli, dtype=float))
        r = np.atleast_1d(np.asarray(responses, dtype=float))
        if s.shape != r.shape or s.ndim != 1:
            raise DatasetFormatError("stimuli and responses must be 1-d and equal length")
        if s.size == 0:
            raise DatasetFormatError("dataset must contain at least one trial")
        bad = ~(np.isfinite(s) & np.isfinite(r) & (s > 0) & (r > 0))
        if np.any(bad):
            i = int(np.argmax(bad))
            raise DatasetFormatError(
                f"trial {i + 1}: stimulus and response must be positive finite "
                f"(got stimulus={s[i]}, response={r[i]})"
            )
        self.stimuli = s
        self.responses = r
        s.flags.writeable = False
        r.flags.writeable = False

    def __len__(self):
        return self.stimuli.size

    def __iter__(self):
        for s, r in zip(self.stimuli, self.responses):
            yield Trial(float(s), float(r))

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and np.array_equal(self.stimuli, other.stimuli)
            and np.array_equal(self.responses, other.responses)
        )

    def to_csv_text(self) -> str:
        return csv_lines(["stimulus", "response"], [self.stimuli, self.responses])

    def write_csv(self, path):
        from .ioutil import atomic_write_text

        atomic_write_text(path, self.to_csv_text())

    @classmethod
    def from_csv_text(cls, text) -> "Dataset":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise DatasetFormatError("empty dataset file")
        header = [h.strip() for h in lines[0].split(",")]
        if header != ["stimulus", "response"]:
            raise DatasetFormatError(
                f"expected header 'stimulus,response', got {lines[0]!r}"
            )
        stim, resp = [], []
        for lineno, ln in enumerate(lines[1:], start=2):
            parts = ln.split(",")
            if len(parts) != 2:
                raise DatasetFormatError(f"line {lineno}: expected 2 fields, got {len(parts)}")
            try:
                s, r = float(parts[0]), float(parts[1])
            except ValueError:
                raise DatasetFormatError(f"line {lineno}: non-numeric value in {ln!r}") from None
            if not (math.isfinite(s) and math.isfinite(r) and s > 0 and r > 0):
                raise DatasetFormatError(
                    f"line {lineno}: stimulus and response must be positive finite, got {ln!r}"
                )
            stim.append(s)
            resp.append(r)
        if not stim:
            raise DatasetFormatError("dataset contains a header but no trials")
        return cls(np.array(stim), np.array(resp))

    @classmethod
    def read_csv(cls, path) -> "Dataset":
        with open(path) as f:
            return cls.from_csv_text(f.read())
