"""Amortized action network: maps (actor parameters, measurement) to the
optimal action in one forward pass.

Architecture (fixed): a fully connected trunk with hidden widths
(16, 64, 16, 8) and swish activations produces three linear outputs
(y1, y2, y3); the action is ``softplus(y1 * m**y2 + y3)``.  The power-law
head bakes in the known form of the optimal policy (a power of the
measurement with parameter-dependent coefficient and exponent), which is
what lets such a small trunk amortize the whole parameter box.

The trunk sees actor parameters normalized to roughly [-1, 1] and the
measurement as normalized ln m; the head sees the raw measurement.  One
network serves exactly one cost family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import backends
from .actor import COST_IDS, COST_PARAM_NAMES, ActorParams, make_cost
from .ioutil import atomic_write_text, dump_json, read_json
from .regimes import input_normalization

WIDTHS = (16, 64, 16, 8)
N_OUT = 3

CHECKPOINT_VERSION = 1


class CostFamilyMismatch(ValueError):
    """Network asked to act under a different cost family than trained for."""


@dataclass(frozen=True, eq=False)
class AmortizerNetwork:
    """Immutable bundle of weights plus the metadata needed to use them.

    weights: flat float64 vector (see backends for the layout)
    input_names: trunk input order, e.g. (mu0, sigma0, sigma, sigma_r, ln_m)
    centers, halfwidths: affine trunk-input normalization
    fidelity: median relative action error on the benchmark set, if known
    """

    cost_family: str
    weights: np.ndarray
    input_names: tuple
    centers: np.ndarray
    halfwidths: np.ndarray
    fidelity: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_inputs(self) -> int:
        return len(self.input_names)

    def with_weights(self, weights) -> "AmortizerNetwork":
        return replace(self, weights=np.asarray(weights, dtype=float))

    def with_fidelity(self, fidelity, **meta) -> "AmortizerNetwork":
        merged = dict(self.meta)
        merged.update(meta)
        return replace(self, fidelity=float(fidelity), meta=merged)


def weight_count(n_inputs: int) -> int:
    n = 0
    prev = n_inputs
    for w in WIDTHS + (N_OUT,):
        n += w * prev + w
        prev = w
    return n


def init_network(cost_family: str, seed: int = 0) -> AmortizerNetwork:
    """Fan-in-scaled uniform init; the head starts near pass-through.

    Output biases are (1, 1, 0) so the initial policy is approximately
    softplus(m): monotone in the measurement with exponent one, a sane
    starting point for every parameter setting.
    """
    if cost_family not in COST_IDS:
        raise ValueError(f"unknown cost family {cost_family!r}")
    names, centers, halfw = input_normalization(cost_family)
    d = len(names)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6E65]))
    w = np.empty(weight_count(d))
    off = 0
    prev = d
    for k, wdt in enumerate(WIDTHS + (N_OUT,)):
        bound = math.sqrt(1.0 / prev)
        if k == len(WIDTHS):  # output layer: small weights, biased head
            w[off : off + wdt * prev] = rng.uniform(-bound, bound, wdt * prev) * 0.1
            off += wdt * prev
            w[off : off + wdt] = (1.0, 1.0, 0.0)
        else:
            w[off : off + wdt * prev] = rng.uniform(-bound, bound, wdt * prev)
            off += wdt * prev
            w[off : off + wdt] = 0.0
        off += wdt
        prev = wdt
    return AmortizerNetwork(
        cost_family=cost_family,
        weights=w,
        input_names=names,
        centers=centers,
        halfwidths=halfw,
    )


def _theta_columns(net: AmortizerNetwork, params: ActorParams):
    cols = [params.mu0, params.sigma0, params.sigma, params.sigma_r]
    pname = COST_PARAM_NAMES[net.cost_family]
    if pname is not None:
        cols.append(params.cost.param_value())
    return cols


def build_inputs(net: AmortizerNetwork, mu0, sigma0, sigma, sigma_r, cost_param, m):
    """Vectorized trunk-input construction from raw parameter arrays."""
    m = np.asarray(m, dtype=float)
    B = m.shape[0]
    Z = np.empty((B, net.n_inputs))
    cols = [mu0, sigma0, sigma, sigma_r]
    if COST_PARAM_NAMES[net.cost_family] is not None:
        cols.append(cost_param)
    for j, c in enumerate(cols):
        Z[:, j] = (np.asarray(c, dtype=float) - net.centers[j]) / net.halfwidths[j]
    j = net.n_inputs - 1
    Z[:, j] = (np.log(np.maximum(m, 1e-300)) - net.centers[j]) / net.halfwidths[j]
    return Z


def forward_batch(net: AmortizerNetwork, mu0, sigma0, sigma, sigma_r, cost_param, m):
    Z = build_inputs(net, mu0, sigma0, sigma, sigma_r, cost_param, m)
    return backends.active.net_forward(net.weights, Z, np.asarray(m, dtype=float))


def forward(net: AmortizerNetwork, params: ActorParams, m: float) -> float:
    """Predicted optimal action for one actor and measurement."""
    if params.cost.family != net.cost_family:
        raise CostFamilyMismatch(
            f"network was trained for {net.cost_family!r}, "
            f"got parameters with {params.cost.family!r}"
        )
    m = float(m)
    if not math.isfinite(m) or m <= 0.0:
        raise ValueError(f"m must be a positive finite number, got {m}")
    cols = _theta_columns(net, params)
    arrs = [np.array([c]) for c in cols[:4]]
    cp = np.array([cols[4]]) if len(cols) > 4 else None
    a = forward_batch(net, arrs[0], arrs[1], arrs[2], arrs[3], cp, np.array([m]))
    return float(a[0])


def gradients(net: AmortizerNetwork, params: ActorParams, m: float) -> dict:
    """d a / d input for one (params, m) point, keyed by input name
    ('m' combines the trunk ln-m path and the raw head path)."""
    if params.cost.family != net.cost_family:
        raise CostFamilyMismatch(
            f"network was trained for {net.cost_family!r}, "
            f"got parameters with {params.cost.family!r}"
        )
    m = float(m)
    cols = _theta_columns(net, params)
    arrs = [np.array([c]) for c in cols[:4]]
    cp = np.array([cols[4]]) if len(cols) > 4 else None
    Z = build_inputs(net, arrs[0], arrs[1], arrs[2], arrs[3], cp, np.array([m]))
    a, gZ, gm = backends.active.net_forward_input_grad(net.weights, Z, np.array([m]))
    out = {"a": float(a[0])}
    for j, name in enumerate(net.input_names[:-1]):
        out[name] = float(gZ[0, j] / net.halfwidths[j])
    j = net.n_inputs - 1
    out["m"] = float(gZ[0, j] / (net.halfwidths[j] * m) + gm[0])
    return out


def relative_errors(net: AmortizerNetwork, eval_set) -> np.ndarray:
    """|a_net - a_ref| / a_ref over an evaluation set."""
    if eval_set.cost_family != net.cost_family:
        raise CostFamilyMismatch(
            f"network family {net.cost_family!r} vs evaluation set "
            f"{eval_set.cost_family!r}"
        )
    a = forward_batch(
        net,
        eval_set.mu0,
        eval_set.sigma0,
        eval_set.sigma,
        eval_set.sigma_r,
        eval_set.cost_param,
        eval_set.m,
    )
    return np.abs(a - eval_set.a_star) / eval_set.a_star


# ---------------------------------------------------------------------------
# checkpoints
#
# Checkpoints are canonical JSON.  Python's repr-based float encoding
# round-trips float64 exactly, so save -> load -> save is byte-stable
# and files from equal runs are byte-identical.


def save_checkpoint(net: AmortizerNetwork, path, extra_meta=None):
    meta = dict(net.meta)
    if extra_meta:
        meta.update(extra_meta)
    obj = {
        "format": "actorinfer-network",
        "version": CHECKPOINT_VERSION,
        "cost_family": net.cost_family,
        "input_names": list(net.input_names),
        "widths": list(WIDTHS),
        "n_outputs": N_OUT,
        "centers": [float(x) for x in net.centers],
        "halfwidths": [float(x) for x in net.halfwidths],
        "weights": [float(x) for x in net.weights],
        "fidelity": net.fidelity,
        "meta": meta,
    }
    atomic_write_text(path, dump_json(obj))


def load_checkpoint(path) -> AmortizerNetwork:
    obj = read_json(path)
    if obj.get("format") != "actorinfer-network":
        raise ValueError(f"{path}: not a network checkpoint")
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"{path}: checkpoint version {obj.get('version')} not supported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    if tuple(obj["widths"]) != WIDTHS or obj["n_outputs"] != N_OUT:
        raise ValueError(f"{path}: unexpected architecture {obj['widths']}")
    names = tuple(obj["input_names"])
    w = np.asarray(obj["weights"], dtype=float)
    if w.shape[0] != weight_count(len(names)):
        raise ValueError(
            f"{path}: weight vector has {w.shape[0]} entries, "
            f"expected {weight_count(len(names))}"
        )
    return AmortizerNetwork(
        cost_family=obj["cost_family"],
        weights=w,
        input_names=names,
        centers=np.asarray(obj["centers"], dtype=float),
        halfwidths=np.asarray(obj["halfwidths"], dtype=float),
        fidelity=obj.get("fidelity"),
        meta=obj.get("meta", {}),
    )


def demo_params(cost_family: str) -> ActorParams:
    """A mid-box parameter point, handy for smoke checks."""
    pname = COST_PARAM_NAMES[cost_family]
    return ActorParams(
        mu0=1.5,
        sigma0=0.15,
        sigma=0.2,
        sigma_r=0.1,
        cost=make_cost(cost_family, 0.7 if pname else None),
    )
