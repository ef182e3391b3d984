"""NumPy reference implementation of the numerical kernels.

The compiled extension ``actorinfer.backends._core`` implements the same
four functions with identical semantics; this module is the readable
reference and the fallback when the extension is unavailable.  Backend
selection happens in ``actorinfer.backends.__init__``.

Shared conventions:
* network weights are one flat float64 vector, layout
  ``[W1, b1, ..., W5, b5]`` with each ``Wk`` row-major ``(out, in)``;
  trunk widths are (16, 64, 16, 8) with swish activations and a 3-unit
  linear output head
* the head computes ``a = softplus(y1 * m**y2 + y3)``; the power uses
  ``ln max(m, 1e-6)`` and the exponent product is clipped to +-700
  before exponentiation, so all finite inputs give a positive finite
  action (floored at 1e-300 against underflow)
* trunk inputs Z arrive already normalized; the raw measurement m is
  passed separately for the head
* cost ids: 0 quadratic, 1 quadratic_effort, 2 asymmetric_quadratic
* roles in log_joint_grad: 0 mu0, 1 sigma0, 2 sigma, 3 sigma_r,
  4 cost parameter
"""

import math

import numpy as np
from scipy.special import expit

NAME = "numpy"

WIDTHS = (16, 64, 16, 8)
N_OUT = 3

_LN_2PI = math.log(2.0 * math.pi)
_SIGMA_FLOOR = 1e-6
_HEAD_CLIP = 700.0
_M_FLOOR = 1e-6
_A_FLOOR = 1e-300


def weight_count(d):
    n = 0
    prev = d
    for wdt in WIDTHS + (N_OUT,):
        n += wdt * prev + wdt
        prev = wdt
    return n


def _unpack(w, d):
    """Split the flat vector into (W, b) pairs, as views."""
    mats = []
    off = 0
    prev = d
    for wdt in WIDTHS + (N_OUT,):
        W = w[off : off + wdt * prev].reshape(wdt, prev)
        off += wdt * prev
        b = w[off : off + wdt]
        off += wdt
        mats.append((W, b))
        prev = wdt
    return mats


def _softplus_stable(x):
    # softplus(x) = max(x, 0) + log1p(exp(-|x|))
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _swish(u):
    s = expit(u)
    return u * s, s


def _swish_grad(u, s):
    # d/du [u * sigmoid(u)] = sigmoid(u) * (1 + u * (1 - sigmoid(u)))
    return s * (1.0 + u * (1.0 - s))


def _forward_trunk(w, Z):
    mats = _unpack(w, Z.shape[1])
    h = Z
    cache = []
    for W, b in mats[:-1]:
        u = h @ W.T + b
        h, s = _swish(u)
        cache.append((u, s, h))
    W5, b5 = mats[-1]
    y = h @ W5.T + b5
    return y, cache, mats


def _head_forward(y, m):
    m_c = np.maximum(np.asarray(m, dtype=float), _M_FLOOR)
    lnm = np.log(m_c)
    t_raw = y[:, 1] * lnm
    t = np.clip(t_raw, -_HEAD_CLIP, _HEAD_CLIP)
    p = np.exp(t)
    x = y[:, 0] * p + y[:, 2]
    a = np.maximum(_softplus_stable(x), _A_FLOOR)
    return a, (m_c, lnm, t_raw, p, x)


def _head_backward(y, hcache, upstream):
    """Gradients of sum(upstream * a) w.r.t. y and (for the head path) m."""
    m_c, lnm, t_raw, p, x = hcache
    sig = expit(x)
    mask = (np.abs(t_raw) < _HEAD_CLIP).astype(float)
    dy = np.empty_like(y)
    dy[:, 0] = upstream * sig * p
    dy[:, 1] = upstream * sig * y[:, 0] * p * lnm * mask
    dy[:, 2] = upstream * sig
    m_live = (np.asarray(m_c) > _M_FLOOR).astype(float)
    gm = upstream * sig * y[:, 0] * y[:, 1] * p / m_c * mask * m_live
    return dy, gm


def _trunk_backward_inputs(dy, cache, mats):
    h = dy
    for (W, _b), (u, s, _act) in zip(reversed(mats[1:]), reversed(cache)):
        h = (h @ W) * _swish_grad(u, s)
    return h @ mats[0][0]


def net_forward(w, Z, m):
    """Batched forward pass: flat weights, normalized inputs, raw m."""
    y, _, _ = _forward_trunk(np.asarray(w), np.asarray(Z))
    a, _ = _head_forward(y, m)
    return a


def net_forward_input_grad(w, Z, m):
    """Forward pass plus gradients of a w.r.t. Z and the raw head m."""
    w = np.asarray(w)
    Z = np.asarray(Z)
    y, cache, mats = _forward_trunk(w, Z)
    a, hcache = _head_forward(y, m)
    ones = np.ones(Z.shape[0])
    dy, gm = _head_backward(y, hcache, ones)
    gZ = _trunk_backward_inputs(dy, cache, mats)
    return a, gZ, gm


def _loss_and_dloss(a, ln_mu_post, sigma_post, zeta, eps, sigma_r, cost_id, cost_param):
    """Per-element MC loss mean over (state, response) sample pairs and
    its derivative w.r.t. the action, without forming the K x N product.

    States s_k = exp(ln_mu_post + sigma_post * zeta_k) and responses
    r_n = a * exp(sigma_r * eps_n) give factorized sums for the
    (effort-)quadratic families; the asymmetric family sorts states and
    uses prefix sums, splitting pairs at r = s (zero cost there, so the
    moving boundary does not contribute to the derivative).
    """
    B = a.shape[0]
    K = zeta.shape[0]
    N = eps.shape[0]
    s = np.exp(ln_mu_post[:, None] + sigma_post[:, None] * zeta[None, :])  # (B, K)
    E = np.exp(sigma_r[:, None] * eps[None, :])  # (B, N)
    E1 = E.mean(axis=1)
    E2 = (E * E).mean(axis=1)
    if cost_id == 0 or cost_id == 1:
        S1 = s.mean(axis=1)
        S2 = (s * s).mean(axis=1)
        beta = cost_param if cost_id == 1 else np.ones(B)
        loss = beta * S2 - 2.0 * beta * a * E1 * S1 + a * a * E2
        dloss = 2.0 * a * E2 - 2.0 * beta * E1 * S1
        return loss, dloss
    # asymmetric quadratic
    s.sort(axis=1)
    c1 = np.cumsum(s, axis=1)
    c2 = np.cumsum(s * s, axis=1)
    tot1 = c1[:, -1]
    tot2 = c2[:, -1]
    r = a[:, None] * E  # (B, N)
    loss = np.empty(B)
    dloss = np.empty(B)
    for b in range(B):
        wo = 2.0 * (1.0 - cost_param[b])  # overshoot: r >= s
        wu = 2.0 * cost_param[b]
        j = np.searchsorted(s[b], r[b], side="right")
        p1 = np.where(j > 0, c1[b, j - 1], 0.0)
        p2 = np.where(j > 0, c2[b, j - 1], 0.0)
        rb = r[b]
        over = j * rb * rb - 2.0 * rb * p1 + p2
        under = (K - j) * rb * rb - 2.0 * rb * (tot1[b] - p1) + (tot2[b] - p2)
        dover = 2.0 * (j * rb - p1)
        dunder = 2.0 * ((K - j) * rb - (tot1[b] - p1))
        loss[b] = (wo * over.sum() + wu * under.sum()) / (K * N)
        # dr/da = r/a, constant per response sample
        dloss[b] = float((wo * dover + wu * dunder) @ (rb / a[b])) / (K * N)
    return loss, dloss


def net_loss_weight_grad(w, Z, m, ln_mu_post, sigma_post, zeta, eps, sigma_r, cost_id, cost_param):
    """Mean MC training loss over a batch and its gradient w.r.t. weights.

    cost_param is per batch element (ignored for the quadratic family).
    Returns (mean_loss, grad, per_element_loss).
    """
    w = np.asarray(w)
    Z = np.asarray(Z)
    y, cache, mats = _forward_trunk(w, Z)
    a, hcache = _head_forward(y, m)
    loss, dloss = _loss_and_dloss(
        a,
        np.asarray(ln_mu_post),
        np.asarray(sigma_post),
        np.asarray(zeta),
        np.asarray(eps),
        np.asarray(sigma_r),
        int(cost_id),
        np.asarray(cost_param, dtype=float),
    )
    B = Z.shape[0]
    dy, _gm = _head_backward(y, hcache, dloss / B)

    grad = np.empty_like(w)
    d = Z.shape[1]
    acts = [Z] + [c[2] for c in cache]
    # walk layers top-down accumulating gradients, then write them into
    # the flat vector bottom-up
    gWs = []
    h = dy
    for li in range(len(mats) - 1, 0, -1):
        W, _b = mats[li]
        gWs.append((h.T @ acts[li], h.sum(axis=0)))
        h = (h @ W) * _swish_grad(cache[li - 1][0], cache[li - 1][1])
    gWs.append((h.T @ acts[0], h.sum(axis=0)))
    gWs.reverse()
    off = 0
    prev = d
    for (gW, gb), wdt in zip(gWs, WIDTHS + (N_OUT,)):
        grad[off : off + wdt * prev] = gW.ravel()
        off += wdt * prev
        grad[off : off + wdt] = gb
        off += wdt
        prev = wdt
    return float(loss.mean()), grad, loss


def log_joint_grad(
    q,
    ln_s,
    ln_r,
    free_idx,
    fixed_vals,
    kinds,
    pa,
    pb,
    n_free,
    collapsed,
    solver_id,
    cost_id,
    w,
    centers,
    halfw,
):
    """Unnormalized log joint density and gradient in unconstrained space.

    Positions q = [free parameters, latent log-measurements].  Free
    parameters are transformed per role kind (0: exp with half-normal
    prior of scale pa; 1: logistic into (pa, pb) with a uniform prior)
    with log-Jacobians included.  Latents (absent when collapsed) are
    the per-trial ln m, with the measurement density already expressed
    in ln m so no extra Jacobian appears.  solver_id 0 runs the network
    action solver, 1 the closed form (cost_id 0 or 1).
    """
    q = np.asarray(q, dtype=float)
    ln_s = np.asarray(ln_s, dtype=float)
    ln_r = np.asarray(ln_r, dtype=float)
    T = ln_s.shape[0]
    lp = 0.0
    grad = np.zeros_like(q)
    _seterr = np.seterr(over="ignore", under="ignore", invalid="ignore", divide="ignore")
    try:
        return _log_joint_grad_impl(
            q, ln_s, ln_r, free_idx, fixed_vals, kinds, pa, pb, n_free,
            collapsed, solver_id, cost_id, w, centers, halfw, T, lp, grad,
        )
    finally:
        np.seterr(**_seterr)


def _log_joint_grad_impl(
    q, ln_s, ln_r, free_idx, fixed_vals, kinds, pa, pb, n_free,
    collapsed, solver_id, cost_id, w, centers, halfw, T, lp, grad,
):

    vals = np.empty(5)
    dval_du = np.zeros(5)
    for j in range(5):
        fi = int(free_idx[j])
        if fi >= 0:
            u = float(q[fi])
            if int(kinds[j]) == 0:
                if u > 700.0:  # exp would overflow; density is -inf out here anyway
                    return -math.inf, grad
                val = math.exp(u)
                scale = float(pa[j])
                lp += u + 0.5 * math.log(2.0 / math.pi) - math.log(scale)
                lp += -val * val / (2.0 * scale * scale)
                grad[fi] += 1.0 - val * val / (scale * scale)
                dval_du[j] = val
            else:
                lo, hi = float(pa[j]), float(pb[j])
                au = abs(u)
                # log t + log(1 - t); the interval Jacobian log(hi - lo)
                # cancels against the uniform prior density
                lp += -au - 2.0 * math.log1p(math.exp(-au))
                t = float(expit(u))
                val = lo + (hi - lo) * t
                grad[fi] += 1.0 - 2.0 * t
                dval_du[j] = (hi - lo) * t * (1.0 - t)
            vals[j] = val
        else:
            vals[j] = fixed_vals[j]
    mu0, sig0, sig, sigr, costp = (float(v) for v in vals)
    sig0c = max(sig0, _SIGMA_FLOOR)
    sigc = max(sig, _SIGMA_FLOOR)
    sigrc = max(sigr, _SIGMA_FLOOR)
    dsc0 = 1.0 if sig0 > _SIGMA_FLOOR else 0.0
    dsc = 1.0 if sig > _SIGMA_FLOOR else 0.0
    dscr = 1.0 if sigr > _SIGMA_FLOOR else 0.0

    if collapsed:
        x = ln_s - sigc * sigc
        gx = None
        g_sig_meas = 0.0
    else:
        x = q[n_free : n_free + T]
        zm = (x - ln_s) / sigc
        lp += T * (-math.log(sigc) - 0.5 * _LN_2PI) - 0.5 * float(zm @ zm)
        gx = -zm / sigc
        g_sig_meas = -T / sigc + float(zm @ zm) / sigc
        if not math.isfinite(lp):
            return -math.inf, grad

    # action solver: ln a per trial plus partials
    if solver_id == 1:
        sp2 = 1.0 / (1.0 / (sig0c * sig0c) + 1.0 / (sigc * sigc))
        w0 = sp2 / (sig0c * sig0c)
        wm = sp2 / (sigc * sigc)
        ln_mu0 = math.log(mu0)
        lnmup = w0 * ln_mu0 + wm * x
        lna = lnmup + 0.5 * sp2 - 1.5 * sigr * sigr
        if cost_id == 1:
            lna = lna + math.log(costp)
        d_mu0 = np.full(T, w0 / mu0)
        d_sig0 = (2.0 * sp2 / sig0c**3) * (lnmup - ln_mu0) + sp2 * sp2 / sig0c**3
        d_sig = (2.0 * sp2 / sigc**3) * (lnmup - x) + sp2 * sp2 / sigc**3
        d_sigr = np.full(T, -3.0 * sigr)
        d_costp = np.full(T, 1.0 / costp if cost_id == 1 else 0.0)
        d_x = np.full(T, wm)
    else:
        d = centers.shape[0]
        Z = np.empty((T, d))
        theta_cols = [mu0, sig0, sig, sigr] + ([costp] if cost_id != 0 else [])
        for j, v in enumerate(theta_cols):
            Z[:, j] = (v - centers[j]) / halfw[j]
        Z[:, d - 1] = (x - centers[d - 1]) / halfw[d - 1]
        m_arr = np.exp(x)
        a_net, gZ, gm = net_forward_input_grad(w, Z, m_arr)
        lna = np.log(a_net)
        inv_a = 1.0 / a_net
        d_mu0 = gZ[:, 0] / halfw[0] * inv_a
        d_sig0 = gZ[:, 1] / halfw[1] * inv_a
        d_sig = gZ[:, 2] / halfw[2] * inv_a
        d_sigr = gZ[:, 3] / halfw[3] * inv_a
        if cost_id != 0:
            d_costp = gZ[:, 4] / halfw[4] * inv_a
        else:
            d_costp = np.zeros(T)
        d_x = gZ[:, d - 1] / halfw[d - 1] * inv_a + gm * m_arr * inv_a

    e = (ln_r - lna) / sigrc
    lp += float(np.sum(-ln_r)) + T * (-math.log(sigrc) - 0.5 * _LN_2PI) - 0.5 * float(e @ e)
    if not math.isfinite(lp):
        return -math.inf, grad
    up = e / sigrc  # d lp / d ln a
    g_sigr_resp = -T / sigrc + float(e @ e) / sigrc

    gv = np.zeros(5)
    gv[0] = float(up @ d_mu0)
    gv[1] = float(up @ d_sig0) * dsc0
    gv[2] = float(up @ d_sig) * dsc
    gv[3] = float(up @ d_sigr) + g_sigr_resp * dscr
    gv[4] = float(up @ d_costp)
    if collapsed:
        # x = ln s - sigma**2 feeds the solver
        gv[2] += float(up @ d_x) * (-2.0 * sigc) * dsc
    else:
        gv[2] += g_sig_meas * dsc
        grad[n_free : n_free + T] = gx + up * d_x

    for j in range(5):
        fi = int(free_idx[j])
        if fi >= 0:
            grad[fi] += gv[j] * dval_du[j]
    return float(lp), grad
