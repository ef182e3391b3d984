"""Posterior sampling over actor parameters, and what to do with draws.

``sample_posterior`` runs independent adaptive NUTS chains (seeded per
chain from one root seed) over a BehaviorModel and returns constrained
parameter draws with convergence diagnostics attached.  Latent
measurements are sampled jointly with the parameters but only kept on
request; the parameter block is what lands in CSV outputs.

``posterior_predictive`` pushes posterior draws back through the full
generative chain (measurement -> action -> motor noise) to produce
response distributions for new stimuli.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import backends
from .actor import COST_PARAM_NAMES, Dataset
from .diagnostics import summarize
from .ioutil import atomic_write_text, csv_lines, derive_rng, dump_json
from .model import BehaviorModel, NetworkSolver
from .network import forward_batch
from .nuts import ChainError, sample_chain

FIDELITY_WARN = 0.02


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 4
    n_warmup: int = 5000
    n_draws: int = 5000
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1 or self.n_warmup < 0 or self.n_draws < 1:
            raise ValueError("need n_chains >= 1, n_warmup >= 0, n_draws >= 1")
        if not (0.0 < self.target_accept < 1.0):
            raise ValueError("target_accept must be in (0, 1)")
        if self.max_tree_depth < 1:
            raise ValueError("max_tree_depth must be >= 1")


@dataclass
class PosteriorSamples:
    """Constrained posterior draws plus sampler byproducts.

    draws: (n_chains, n_draws, n_params) in original parameter units
    fixed: name -> value for parameters that were pinned, not sampled
    latent_lnm: (n_chains, n_draws, n_trials) when kept, else None
    """

    param_names: list
    draws: np.ndarray
    fixed: dict
    diagnostics: dict
    divergences: np.ndarray  # per chain, post-warmup
    accept_mean: np.ndarray  # per chain
    step_sizes: np.ndarray  # per chain
    config: SamplerConfig
    meta: dict = field(default_factory=dict)
    latent_lnm: np.ndarray | None = None

    @property
    def n_chains(self):
        return self.draws.shape[0]

    @property
    def n_draws(self):
        return self.draws.shape[1]

    def get(self, name) -> np.ndarray:
        """(n_chains, n_draws) for one parameter."""
        return self.draws[:, :, self.param_names.index(name)]

    def flat(self, name) -> np.ndarray:
        return self.get(name).reshape(-1)

    def value_columns(self, names, idx=None) -> list:
        """Flattened per-draw values for each name, honoring fixed params.

        idx optionally selects a subset of flattened draw indices.
        """
        n = self.n_chains * self.n_draws
        out = []
        for name in names:
            if name in self.param_names:
                col = self.flat(name)
            elif name in self.fixed:
                col = np.full(n, self.fixed[name])
            else:
                raise KeyError(f"parameter {name!r} neither sampled nor fixed")
            out.append(col if idx is None else col[idx])
        return out

    def summary(self) -> dict:
        rows = {}
        for name in self.param_names:
            x = self.flat(name)
            d = self.diagnostics[name]
            rows[name] = {
                "mean": float(x.mean()),
                "sd": float(x.std(ddof=1)),
                "median": float(np.median(x)),
                "q3": float(np.quantile(x, 0.03)),
                "q97": float(np.quantile(x, 0.97)),
                "rhat": d["rhat"],
                "ess_bulk": d["ess_bulk"],
                "degenerate": d["degenerate"],
            }
        return rows

    def convergence_warnings(self, rhat_max=1.01, min_ess=400.0) -> list:
        out = []
        for name in self.param_names:
            d = self.diagnostics[name]
            if d["degenerate"]:
                continue
            if not (d["rhat"] <= rhat_max):
                out.append(f"rhat({name}) = {d['rhat']:.4f} > {rhat_max}")
            if not (d["ess_bulk"] >= min_ess):
                out.append(f"ess_bulk({name}) = {d['ess_bulk']:.0f} < {min_ess:.0f}")
        ndiv = int(self.divergences.sum())
        if ndiv > 0:
            out.append(f"{ndiv} divergent transitions after warmup")
        return out

    # -- persistence --------------------------------------------------------

    def to_csv_text(self) -> str:
        c = self.n_chains
        s = self.n_draws
        chain_col = np.repeat(np.arange(c), s)
        draw_col = np.tile(np.arange(s), c)
        cols = [chain_col, draw_col] + [self.flat(n) for n in self.param_names]
        return csv_lines(["chain", "draw"] + list(self.param_names), cols)

    def sidecar_dict(self) -> dict:
        return {
            "param_names": list(self.param_names),
            "fixed": {k: float(v) for k, v in self.fixed.items()},
            "diagnostics": self.diagnostics,
            "divergences": [int(x) for x in self.divergences],
            "accept_mean": [float(x) for x in self.accept_mean],
            "step_sizes": [float(x) for x in self.step_sizes],
            "config": {
                "n_chains": self.config.n_chains,
                "n_warmup": self.config.n_warmup,
                "n_draws": self.config.n_draws,
                "target_accept": self.config.target_accept,
                "max_tree_depth": self.config.max_tree_depth,
                "seed": self.config.seed,
            },
            "meta": self.meta,
        }

    def write(self, csv_path, sidecar_path=None):
        atomic_write_text(csv_path, self.to_csv_text())
        if sidecar_path is None:
            sidecar_path = str(csv_path) + ".json"
        atomic_write_text(sidecar_path, dump_json(self.sidecar_dict()))


def _init_chain(model, rng, attempts=100):
    last = None
    for _ in range(attempts):
        q0 = model.initial_position(rng)
        lp, grad = model.log_joint_grad(q0)
        if math.isfinite(lp) and np.all(np.isfinite(grad)):
            return q0
        last = lp
    raise ChainError(
        f"no finite log density after {attempts} initialization attempts "
        f"(last lp = {last})"
    )


def sample_posterior(
    data: Dataset,
    priors: dict,
    solver,
    cfg: SamplerConfig = SamplerConfig(),
    marginalize_measurements: bool = False,
    keep_latents: bool = False,
    progress=None,
) -> PosteriorSamples:
    """Fit the behavior model by NUTS.  Chains run sequentially with
    generators derived from (cfg.seed, chain); results are independent
    of that ordering."""
    if isinstance(solver, NetworkSolver):
        f = solver.net.fidelity
        if f is not None and f > FIDELITY_WARN:
            warnings.warn(
                f"action network fidelity is poor (median relative error "
                f"{f:.4f} > {FIDELITY_WARN}); posterior estimates inherit "
                "this approximation error",
                stacklevel=2,
            )
    model = BehaviorModel(data, priors, solver, marginalize_measurements=marginalize_measurements)
    chains = []
    for c in range(cfg.n_chains):
        rng = derive_rng(cfg.seed, 0xC4A1, c)
        q0 = _init_chain(model, rng)
        res = sample_chain(
            model.log_joint_grad,
            q0,
            cfg.n_warmup,
            cfg.n_draws,
            rng,
            target_accept=cfg.target_accept,
            max_tree_depth=cfg.max_tree_depth,
            progress=None if progress is None else (lambda i, t, c=c: progress(c, i, t)),
        )
        chains.append(res)

    free = np.stack([model.constrain_draws(r.draws[:, : model.n_free]) for r in chains])
    fixed = {
        name: pr.a for name, pr in model.priors.items() if pr.kind == "fixed"
    }
    diag = summarize(free, model.free_names)
    latent = None
    if keep_latents and not model.collapsed:
        latent = np.stack([r.draws[:, model.n_free :] for r in chains])
    return PosteriorSamples(
        param_names=list(model.free_names),
        draws=free,
        fixed=fixed,
        diagnostics=diag,
        divergences=np.array([int(r.divergent.sum()) for r in chains]),
        accept_mean=np.array([float(r.accept_stat.mean()) for r in chains]),
        step_sizes=np.array([r.step_size for r in chains]),
        config=cfg,
        meta={
            "backend": backends.backend_name(),
            "solver": "network" if isinstance(solver, NetworkSolver) else "analytic",
            "cost_family": model.cost_family,
            "marginalize_measurements": model.collapsed,
            "n_trials": len(data),
            "warmup_divergences": [r.warmup_divergences for r in chains],
        },
        latent_lnm=latent,
    )


def posterior_predictive(samples: PosteriorSamples, stimuli, solver, rng, max_draws=1000):
    """Simulate responses for new stimuli under posterior parameter draws.

    Uses an evenly thinned subset of at most max_draws joint draws; for
    each draw and stimulus one full generative pass is simulated.
    Returns (draw subset size, len(stimuli)) responses.
    """
    stimuli = np.asarray(stimuli, dtype=float)
    if np.any(stimuli <= 0) or np.any(~np.isfinite(stimuli)):
        raise ValueError("stimuli must be positive finite")
    total = samples.n_chains * samples.n_draws
    take = min(max_draws, total)
    idx = np.unique((np.arange(take) * (total / take)).astype(int))
    names = ["mu0", "sigma0", "sigma", "sigma_r"]
    pname = COST_PARAM_NAMES[solver.cost_family]
    if pname:
        names.append(pname)
    cols = samples.value_columns(names, idx)
    mu0, sig0, sig, sigr = cols[:4]
    costp = cols[4] if pname else None

    n_d = idx.size
    n_s = stimuli.size
    out = np.empty((n_d, n_s))
    for j, s in enumerate(stimuli):
        m = s * np.exp(sig * rng.standard_normal(n_d))
        if isinstance(solver, NetworkSolver):
            a = forward_batch(solver.net, mu0, sig0, sig, sigr, costp, m)
        else:
            from .actor import posterior_log_params

            ln_mu, sp = posterior_log_params(mu0, sig0, sig, np.log(m))
            a = np.exp(ln_mu + 0.5 * sp * sp - 1.5 * sigr * sigr)
            if solver.cost_family == "quadratic_effort":
                a = a * costp
        out[:, j] = a * np.exp(sigr * rng.standard_normal(n_d))
    return out


def predictive_band(responses, stimuli, lo=0.03, hi=0.97):
    """Summarize posterior-predictive responses into mean and an
    equal-tailed 94% band, as CSV-ready columns."""
    stimuli = np.asarray(stimuli, dtype=float)
    return {
        "stimulus": stimuli,
        "mean": responses.mean(axis=0),
        "lo94": np.quantile(responses, lo, axis=0),
        "hi94": np.quantile(responses, hi, axis=0),
    }


def band_csv_text(band) -> str:
    return csv_lines(
        ["stimulus", "mean", "lo94", "hi94"],
        [band["stimulus"], band["mean"], band["lo94"], band["hi94"]],
    )


def read_posterior_csv(path):
    """Round-trip reader for the posterior CSV (params only)."""
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    header = lines[0].split(",")
    if header[:2] != ["chain", "draw"]:
        raise ValueError(f"{path}: expected chain,draw leading columns")
    names = header[2:]
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    chains = rows[:, 0].astype(int)
    n_chains = chains.max() + 1
    n_draws = int(rows[:, 1].max()) + 1
    draws = np.empty((n_chains, n_draws, len(names)))
    for c in range(n_chains):
        sel = rows[chains == c]
        order = np.argsort(sel[:, 1])
        draws[c] = sel[order][:, 2:]
    return names, draws
