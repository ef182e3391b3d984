"""Unsupervised training of the amortizer network.

No supervised targets are used anywhere: each step draws a batch of
actor parameters and measurements from the generative model, lets the
network act, simulates noisy responses from those actions via the
reparameterization ``r = exp(ln a + sigma_r * eps)``, and scores them
against stimulus hypotheses drawn from the corresponding posterior.
The Monte Carlo average of the cost is differentiable in the weights,
so minimizing it pushes the network toward the Bayes-optimal action for
every parameter setting at once.

Optimization is RMSProp (decay 0.9, eps 1e-8, no momentum).  Given the
same config, the final weights and the written report are bit-identical
across runs on the same backend.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import backends
from .actor import COST_IDS, COST_PARAM_NAMES, posterior_log_params
from .ioutil import atomic_write_text, csv_lines, derive_rng
from .network import AmortizerNetwork, build_inputs, init_network, relative_errors
from .regimes import draw_params

RMSPROP_DECAY = 0.9
RMSPROP_EPS = 1e-8


class NonFiniteLossError(RuntimeError):
    """A training batch produced a non-finite loss."""


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-4
    batch_size: int = 256
    mc_states: int = 128
    mc_responses: int = 128
    total_steps: int = 500_000
    eval_every: int = 2_000
    seed: int = 0
    regime: str = "training"
    # stop early once the benchmark median relative error stays below
    # stop_median for stop_patience consecutive checkpoints
    stop_median: float = 0.005
    stop_patience: int = 3
    warn_median: float = 0.02

    def __post_init__(self):
        if self.batch_size < 1 or self.mc_states < 1 or self.mc_responses < 1:
            raise ValueError("batch_size and MC sample counts must be positive")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class OptState:
    """RMSProp accumulator; explicit so steps are pure and resumable."""

    square_avg: np.ndarray
    step: int = 0

    @classmethod
    def fresh(cls, n_weights: int) -> "OptState":
        return cls(square_avg=np.zeros(n_weights), step=0)


@dataclass
class TrainingReport:
    """Evaluation trace: one row per checkpoint.

    loss is the mean training loss since the previous checkpoint;
    median/p90 are relative action errors on the benchmark set (nan when
    no benchmark set was supplied).  seconds (wall-clock since training
    started) is kept in memory for progress display but deliberately
    left out of the CSV so written artifacts are byte-reproducible.
    """

    steps: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    median_rel_err: list = field(default_factory=list)
    p90_rel_err: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, step, loss, med, p90, sec):
        self.steps.append(int(step))
        self.losses.append(float(loss))
        self.median_rel_err.append(float(med))
        self.p90_rel_err.append(float(p90))
        self.seconds.append(float(sec))

    @property
    def final_median(self):
        return self.median_rel_err[-1] if self.median_rel_err else math.nan

    def to_csv_text(self) -> str:
        return csv_lines(
            ["step", "loss", "median_rel_err", "p90_rel_err"],
            [
                np.asarray(self.steps),
                np.asarray(self.losses, dtype=float),
                np.asarray(self.median_rel_err, dtype=float),
                np.asarray(self.p90_rel_err, dtype=float),
            ],
        )

    def write_csv(self, path):
        atomic_write_text(path, self.to_csv_text())


def _draw_batch(cost_family, cfg, rng):
    """One training batch: parameters from the regime, measurements via
    the generative chain s ~ LogNormal(mu0, sigma0), m ~ LogNormal(s, sigma)."""
    th = draw_params(cfg.regime, cost_family, rng, cfg.batch_size)
    n1 = rng.standard_normal(cfg.batch_size)
    n2 = rng.standard_normal(cfg.batch_size)
    ln_m = np.log(th["mu0"]) + th["sigma0"] * n1 + th["sigma"] * n2
    return th, np.exp(ln_m)


def training_step(net: AmortizerNetwork, theta_batch, m_batch, cfg, opt_state, rng):
    """One RMSProp update on fresh MC noise.  Returns (net, loss, opt_state).

    theta_batch is a dict of parameter arrays (as from regimes.draw_params);
    m_batch the matching measurements.  The incoming net and opt_state are
    not mutated.
    """
    pname = COST_PARAM_NAMES[net.cost_family]
    costp = theta_batch[pname] if pname else None
    Z = build_inputs(
        net, theta_batch["mu0"], theta_batch["sigma0"], theta_batch["sigma"],
        theta_batch["sigma_r"], costp, m_batch,
    )
    ln_mu_post, sigma_post = posterior_log_params(
        theta_batch["mu0"], theta_batch["sigma0"], theta_batch["sigma"], np.log(m_batch)
    )
    zeta = rng.standard_normal(cfg.mc_states)
    eps = rng.standard_normal(cfg.mc_responses)
    cp = np.asarray(costp, dtype=float) if costp is not None else np.zeros(len(m_batch))
    loss, grad, per_elem = backends.active.net_loss_weight_grad(
        net.weights, Z, np.asarray(m_batch, dtype=float),
        np.asarray(ln_mu_post, dtype=float), np.asarray(sigma_post, dtype=float),
        zeta, eps, np.asarray(theta_batch["sigma_r"], dtype=float),
        COST_IDS[net.cost_family], cp,
    )
    if not math.isfinite(loss):
        bad = int(np.argmax(~np.isfinite(per_elem)))
        desc = {k: float(v[bad]) for k, v in theta_batch.items()}
        raise NonFiniteLossError(
            f"non-finite loss at step {opt_state.step}: batch element {bad} "
            f"with parameters {desc}, m={float(m_batch[bad])!r}, "
            f"loss={per_elem[bad]!r}"
        )
    v = RMSPROP_DECAY * opt_state.square_avg + (1.0 - RMSPROP_DECAY) * grad * grad
    w = net.weights - cfg.learning_rate * grad / (np.sqrt(v) + RMSPROP_EPS)
    return net.with_weights(w), float(loss), OptState(square_avg=v, step=opt_state.step + 1)


def train(cost_family: str, cfg: TrainingConfig, eval_set=None, progress=None):
    """Train an amortizer from scratch.  Returns (net, report).

    eval_set: optional EvaluationSet scored at every checkpoint; enables
    the early-stopping rule and the fidelity fields of the report.
    progress: optional callable(step, total_steps, row_dict) invoked at
    each checkpoint.
    """
    net = init_network(cost_family, cfg.seed)
    report = TrainingReport(meta={"cost_family": cost_family, "config": cfg.__dict__.copy()})
    if cfg.total_steps == 0:
        return net, report

    rng = derive_rng(cfg.seed, 0x7AA1)
    opt = OptState.fresh(net.weights.shape[0])
    t0 = time.perf_counter()
    window_losses = []
    good_checkpoints = 0
    step = 0
    while step < cfg.total_steps:
        theta, m = _draw_batch(cost_family, cfg, rng)
        net, loss, opt = training_step(net, theta, m, cfg, opt, rng)
        window_losses.append(loss)
        step += 1
        if step % cfg.eval_every == 0 or step == cfg.total_steps:
            med = p90 = math.nan
            if eval_set is not None:
                rel = relative_errors(net, eval_set)
                med = float(np.median(rel))
                p90 = float(np.quantile(rel, 0.9))
            row = {
                "step": step,
                "loss": float(np.mean(window_losses)),
                "median_rel_err": med,
                "p90_rel_err": p90,
                "seconds": time.perf_counter() - t0,
            }
            report.add(row["step"], row["loss"], med, p90, row["seconds"])
            window_losses = []
            if progress is not None:
                progress(step, cfg.total_steps, row)
            if eval_set is not None and med < cfg.stop_median:
                good_checkpoints += 1
                if good_checkpoints >= cfg.stop_patience:
                    break
            else:
                good_checkpoints = 0

    meta = {"steps_trained": step, "backend": backends.backend_name()}
    if eval_set is not None:
        net = net.with_fidelity(report.final_median, **meta)
        if report.final_median > cfg.warn_median:
            import warnings

            warnings.warn(
                f"amortizer for {cost_family!r} stopped at median relative "
                f"error {report.final_median:.4f} (> {cfg.warn_median}); "
                "downstream inference will inherit this bias",
                stacklevel=2,
            )
    else:
        net = AmortizerNetwork(
            cost_family=net.cost_family,
            weights=net.weights,
            input_names=net.input_names,
            centers=net.centers,
            halfwidths=net.halfwidths,
            fidelity=None,
            meta={**net.meta, **meta},
        )
    report.meta.update(meta)
    return net, report
