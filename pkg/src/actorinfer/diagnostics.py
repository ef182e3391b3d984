"""Convergence diagnostics for multi-chain MCMC output.

R-hat is the rank-normalized split potential scale reduction: chains are
split in half, all draws are converted to normal scores via pooled
average ranks, and the classic between/within variance ratio is
computed on the scores; the reported value is the max of the bulk
statistic and the same statistic on draws folded around the median
(which catches scale mismatches that fool the location-only version).

Effective sample size uses the same rank-normalized split chains with
per-chain FFT autocovariances combined into pooled autocorrelations,
truncated by Geyer's initial-monotone-positive-pair rule.

Chains that are exactly constant (e.g. a fixed parameter slipped into
the draws, or a sampler stuck from step one) make both statistics
0/0; they are reported as rhat 1.0 / ess nan with degenerate=True so
callers can distinguish "perfectly mixed" from "never moved".
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata


class InsufficientDrawsError(ValueError):
    """Too few chains or draws to compute diagnostics."""


def _split_chains(x):
    c, s = x.shape
    half = s // 2
    return np.vstack([x[:, :half], x[:, half : 2 * half]])


def _rank_normalize(x):
    ranks = rankdata(x.ravel(), method="average")
    z = ndtri((ranks - 0.375) / (x.size + 0.25))
    return z.reshape(x.shape)


def _rhat_basic(z):
    m, n = z.shape
    chain_means = z.mean(axis=1)
    chain_vars = z.var(axis=1, ddof=1)
    w = chain_vars.mean()
    b_over_n = chain_means.var(ddof=1)
    var_plus = (n - 1.0) / n * w + b_over_n
    if w <= 0.0:
        return math.inf if b_over_n > 0 else math.nan
    return math.sqrt(var_plus / w)


def _autocov(x):
    n = x.size
    xc = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real
    return acov / n


def _ess_basic(z):
    m, n = z.shape
    if n < 4:
        return math.nan
    acov = np.vstack([_autocov(z[i]) for i in range(m)])
    mean_var = float(acov[:, 0].mean()) * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += float(z.mean(axis=1).var(ddof=1))
    if var_plus <= 0.0:
        return math.nan

    rho = np.zeros(n)
    rho[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - float(acov[:, 1].mean())) / var_plus
    rho[1] = rho_odd
    t = 1
    while t < n - 3 and (rho_even + rho_odd) > 0.0:
        rho_even = 1.0 - (mean_var - float(acov[:, t + 1].mean())) / var_plus
        rho_odd = 1.0 - (mean_var - float(acov[:, t + 2].mean())) / var_plus
        if (rho_even + rho_odd) >= 0.0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0.0:
        rho[max_t + 1] = rho_even
    # Geyer initial monotone sequence: successive pair sums may not increase
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2
    total = m * n
    tau = -1.0 + 2.0 * float(rho[: max_t + 2].sum())
    tau = max(tau, 1.0 / math.log10(total))
    return total / tau


def _validate(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise InsufficientDrawsError(f"expected (chains, draws), got shape {x.shape}")
    c, s = x.shape
    if c < 2:
        raise InsufficientDrawsError(f"need at least 2 chains, got {c}")
    if s < 4:
        raise InsufficientDrawsError(f"need at least 4 draws per chain, got {s}")
    return x


def is_degenerate(x) -> bool:
    x = np.asarray(x)
    return bool(np.all(x == x.flat[0]))


def rhat(x) -> float:
    """Rank-normalized split R-hat (max of bulk and folded statistics).

    x: (chains, draws).  1.0 for exactly constant input.
    """
    x = _validate(x)
    if is_degenerate(x):
        return 1.0
    z = _split_chains(x)
    bulk = _rhat_basic(_rank_normalize(z))
    folded = _rhat_basic(_rank_normalize(np.abs(z - np.median(z))))
    return float(max(bulk, folded))


def ess_bulk(x) -> float:
    """Rank-normalized split effective sample size (bulk).

    x: (chains, draws).  nan for exactly constant input.
    """
    x = _validate(x)
    if is_degenerate(x):
        return math.nan
    return float(_ess_basic(_rank_normalize(_split_chains(x))))


def summarize(draws, names) -> dict:
    """Per-parameter diagnostics for draws shaped (chains, draws, params)."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 3 or draws.shape[2] != len(names):
        raise InsufficientDrawsError(
            f"expected (chains, draws, {len(names)}), got {draws.shape}"
        )
    out = {}
    for i, name in enumerate(names):
        x = draws[:, :, i]
        degen = is_degenerate(x)
        out[name] = {
            "rhat": rhat(x),
            "ess_bulk": ess_bulk(x),
            "degenerate": degen,
        }
    return out
