"""Parameter regimes: where actor parameters live in each phase.

Three named regimes are used throughout:

* ``training``    broad uniform box the amortizer is trained over
* ``inference``   priors used when fitting behavioral data
* ``evaluation``  narrower box for benchmarking fidelity and recovery

Cost parameters use the same ranges in every regime.
"""

from dataclasses import dataclass

import numpy as np

from .actor import COST_PARAM_NAMES, ActorParams, make_cost


@dataclass(frozen=True)
class Box:
    lo: float
    hi: float

    def draw(self, rng, n=None):
        return rng.uniform(self.lo, self.hi, size=n)

    def contains(self, x):
        return self.lo <= x <= self.hi


# Noise scales and prior medians per regime.
TRAINING = {
    "mu0": Box(0.1, 7.0),
    "sigma0": Box(0.01, 0.5),
    "sigma": Box(0.01, 0.5),
    "sigma_r": Box(0.01, 0.5),
}

EVALUATION = {
    "mu0": Box(2.0, 5.0),
    "sigma0": Box(0.1, 0.25),
    "sigma": Box(0.1, 0.25),
    "sigma_r": Box(0.1, 0.25),
}

# Cost parameter ranges are regime-independent.
COST_PARAM_BOXES = {
    "quadratic_effort": Box(0.5, 1.0),
    "asymmetric_quadratic": Box(0.1, 0.9),
}

# Inference-time priors: uniform over mu0, half-normal over the noise
# scales (scale below), cost parameter uniform per COST_PARAM_BOXES.
INFERENCE_MU0 = Box(0.1, 5.0)
INFERENCE_SIGMA_SCALE = 0.25

_BOXES = {"training": TRAINING, "evaluation": EVALUATION}


def regime_box(name):
    try:
        return _BOXES[name]
    except KeyError:
        raise ValueError(f"unknown regime {name!r}; expected 'training' or 'evaluation'") from None


def draw_params(regime, cost_family, rng, n):
    """Draw n parameter vectors from a regime as arrays.

    Returns a dict with keys mu0, sigma0, sigma, sigma_r and, for
    parametric families, the cost parameter under its own name.
    """
    if regime == "inference":
        out = {
            "mu0": INFERENCE_MU0.draw(rng, n),
            "sigma0": np.abs(rng.normal(0.0, INFERENCE_SIGMA_SCALE, size=n)),
            "sigma": np.abs(rng.normal(0.0, INFERENCE_SIGMA_SCALE, size=n)),
            "sigma_r": np.abs(rng.normal(0.0, INFERENCE_SIGMA_SCALE, size=n)),
        }
    else:
        box = regime_box(regime)
        out = {k: box[k].draw(rng, n) for k in ("mu0", "sigma0", "sigma", "sigma_r")}
    pname = COST_PARAM_NAMES[cost_family]
    if pname is not None:
        out[pname] = COST_PARAM_BOXES[cost_family].draw(rng, n)
    return out


def params_from_arrays(draws, cost_family, i) -> ActorParams:
    """Materialize entry i of a draw_params result as ActorParams."""
    pname = COST_PARAM_NAMES[cost_family]
    return ActorParams(
        mu0=float(draws["mu0"][i]),
        sigma0=float(draws["sigma0"][i]),
        sigma=float(draws["sigma"][i]),
        sigma_r=float(draws["sigma_r"][i]),
        cost=make_cost(cost_family, float(draws[pname][i]) if pname else None),
    )


def input_normalization(cost_family):
    """Input layout and affine normalization for the amortizer trunk.

    Returns (names, centers, halfwidths).  Each trunk input is mapped to
    roughly [-1, 1] via (x - center) / halfwidth, using the training
    regime extents.  The measurement enters the trunk as ln m; its range
    is padded by three measurement/prior spreads around the prior-median
    extremes so extreme-but-plausible measurements stay in range.
    """
    names = ["mu0", "sigma0", "sigma", "sigma_r"]
    pname = COST_PARAM_NAMES[cost_family]
    if pname is not None:
        names.append(pname)
    names.append("ln_m")

    centers, halfw = [], []
    for k in names[:-1]:
        box = TRAINING[k] if k in TRAINING else COST_PARAM_BOXES[cost_family]
        centers.append(0.5 * (box.lo + box.hi))
        halfw.append(0.5 * (box.hi - box.lo))
    pad = 3.0 * (TRAINING["sigma"].hi + TRAINING["sigma0"].hi)
    lo = np.log(TRAINING["mu0"].lo) - pad
    hi = np.log(TRAINING["mu0"].hi) + pad
    centers.append(0.5 * (lo + hi))
    halfw.append(0.5 * (hi - lo))
    return tuple(names), np.array(centers), np.array(halfw)
