# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of numpy_backend.

Implements the same four kernels with the same semantics (see
numpy_backend's module docstring for the contract); results agree with
the reference up to floating-point rounding (summation order and the
libm vs numpy exp differ by an ulp here and there).  Gradients returned
alongside a -inf log density are unspecified in both backends.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, M_PI, exp, fabs, isfinite, log, log1p
from libc.stdlib cimport free, malloc

cnp.import_array()

NAME = "cython"

cdef double SIGMA_FLOOR = 1e-6
cdef double HEAD_CLIP = 700.0
cdef double M_FLOOR = 1e-6
cdef double A_FLOOR = 1e-300
cdef double LN_2PI = log(2.0 * M_PI)
cdef double LN_2_OVER_PI_HALF = 0.5 * log(2.0 / M_PI)
cdef double NEG_INF = -INFINITY


cdef struct Layout:
    int d
    int W1
    int b1
    int W2
    int b2
    int W3
    int b3
    int W4
    int b4
    int W5
    int b5
    int total


cdef inline Layout _layout(int d) noexcept nogil:
    cdef Layout L
    L.d = d
    L.W1 = 0
    L.b1 = 16 * d
    L.W2 = L.b1 + 16
    L.b2 = L.W2 + 64 * 16
    L.W3 = L.b2 + 64
    L.b3 = L.W3 + 16 * 64
    L.W4 = L.b3 + 16
    L.b4 = L.W4 + 8 * 16
    L.W5 = L.b4 + 8
    L.b5 = L.W5 + 3 * 8
    L.total = L.b5 + 3
    return L


cdef struct TrunkCache:
    # pre-activations u, sigmoids s, activations h = u * s per layer
    double u1[16]
    double s1[16]
    double h1[16]
    double u2[64]
    double s2[64]
    double h2[64]
    double u3[16]
    double s3[16]
    double h3[16]
    double u4[8]
    double s4[8]
    double h4[8]
    double y[3]
    # head cache: m_c, lnm, t_raw, p, x
    double hd[5]


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _softplus(double x) noexcept nogil:
    if x > 0.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double _swish_grad(double u, double s) noexcept nogil:
    return s * (1.0 + u * (1.0 - s))


cdef inline void _trunk_forward(const double* w, Layout L, const double* z,
                                TrunkCache* c) noexcept nogil:
    cdef int i, j
    cdef double acc, s
    for i in range(16):
        acc = w[L.b1 + i]
        for j in range(L.d):
            acc += w[L.W1 + i * L.d + j] * z[j]
        c.u1[i] = acc
        s = _sigmoid(acc)
        c.s1[i] = s
        c.h1[i] = acc * s
    for i in range(64):
        acc = w[L.b2 + i]
        for j in range(16):
            acc += w[L.W2 + (i << 4) + j] * c.h1[j]
        c.u2[i] = acc
        s = _sigmoid(acc)
        c.s2[i] = s
        c.h2[i] = acc * s
    for i in range(16):
        acc = w[L.b3 + i]
        for j in range(64):
            acc += w[L.W3 + (i << 6) + j] * c.h2[j]
        c.u3[i] = acc
        s = _sigmoid(acc)
        c.s3[i] = s
        c.h3[i] = acc * s
    for i in range(8):
        acc = w[L.b4 + i]
        for j in range(16):
            acc += w[L.W4 + (i << 4) + j] * c.h3[j]
        c.u4[i] = acc
        s = _sigmoid(acc)
        c.s4[i] = s
        c.h4[i] = acc * s
    for i in range(3):
        acc = w[L.b5 + i]
        for j in range(8):
            acc += w[L.W5 + (i << 3) + j] * c.h4[j]
        c.y[i] = acc


cdef inline double _head_forward(TrunkCache* c, double m) noexcept nogil:
    cdef double m_c = m if m > M_FLOOR else M_FLOOR
    cdef double lnm = log(m_c)
    cdef double t_raw = c.y[1] * lnm
    cdef double t = t_raw
    if t > HEAD_CLIP:
        t = HEAD_CLIP
    elif t < -HEAD_CLIP:
        t = -HEAD_CLIP
    cdef double p = exp(t)
    cdef double x = c.y[0] * p + c.y[2]
    cdef double a = _softplus(x)
    if a < A_FLOOR:
        a = A_FLOOR
    c.hd[0] = m_c
    c.hd[1] = lnm
    c.hd[2] = t_raw
    c.hd[3] = p
    c.hd[4] = x
    return a


cdef inline double _head_backward(TrunkCache* c, double upstream, double* dy) noexcept nogil:
    """Fill dy (3,) and return gm (head path only)."""
    cdef double m_c = c.hd[0]
    cdef double lnm = c.hd[1]
    cdef double t_raw = c.hd[2]
    cdef double p = c.hd[3]
    cdef double x = c.hd[4]
    cdef double sig = _sigmoid(x)
    cdef double mask = 1.0 if fabs(t_raw) < HEAD_CLIP else 0.0
    dy[0] = upstream * sig * p
    dy[1] = upstream * sig * c.y[0] * p * lnm * mask
    dy[2] = upstream * sig
    if m_c > M_FLOOR:
        return upstream * sig * c.y[0] * c.y[1] * p / m_c * mask
    return 0.0


cdef inline void _trunk_backward_input(const double* w, Layout L, TrunkCache* c,
                                       const double* dy, double* gz) noexcept nogil:
    cdef double d4[8]
    cdef double d3[16]
    cdef double d2[64]
    cdef double d1[16]
    cdef int i, j
    cdef double acc
    for j in range(8):
        acc = 0.0
        for i in range(3):
            acc += dy[i] * w[L.W5 + (i << 3) + j]
        d4[j] = acc * _swish_grad(c.u4[j], c.s4[j])
    for j in range(16):
        acc = 0.0
        for i in range(8):
            acc += d4[i] * w[L.W4 + (i << 4) + j]
        d3[j] = acc * _swish_grad(c.u3[j], c.s3[j])
    for j in range(64):
        acc = 0.0
        for i in range(16):
            acc += d3[i] * w[L.W3 + (i << 6) + j]
        d2[j] = acc * _swish_grad(c.u2[j], c.s2[j])
    for j in range(16):
        acc = 0.0
        for i in range(64):
            acc += d2[i] * w[L.W2 + (i << 4) + j]
        d1[j] = acc * _swish_grad(c.u1[j], c.s1[j])
    for j in range(L.d):
        acc = 0.0
        for i in range(16):
            acc += d1[i] * w[L.W1 + i * L.d + j]
        gz[j] = acc


cdef inline void _trunk_backward_weights(const double* w, Layout L, const double* z,
                                         TrunkCache* c, const double* dy,
                                         double* grad) noexcept nogil:
    """Accumulate weight gradients for one sample into grad (flat)."""
    cdef double d4[8]
    cdef double d3[16]
    cdef double d2[64]
    cdef double d1[16]
    cdef int i, j
    cdef double acc, di
    for i in range(3):
        di = dy[i]
        for j in range(8):
            grad[L.W5 + (i << 3) + j] += di * c.h4[j]
        grad[L.b5 + i] += di
    for j in range(8):
        acc = 0.0
        for i in range(3):
            acc += dy[i] * w[L.W5 + (i << 3) + j]
        d4[j] = acc * _swish_grad(c.u4[j], c.s4[j])
    for i in range(8):
        di = d4[i]
        for j in range(16):
            grad[L.W4 + (i << 4) + j] += di * c.h3[j]
        grad[L.b4 + i] += di
    for j in range(16):
        acc = 0.0
        for i in range(8):
            acc += d4[i] * w[L.W4 + (i << 4) + j]
        d3[j] = acc * _swish_grad(c.u3[j], c.s3[j])
    for i in range(16):
        di = d3[i]
        for j in range(64):
            grad[L.W3 + (i << 6) + j] += di * c.h2[j]
        grad[L.b3 + i] += di
    for j in range(64):
        acc = 0.0
        for i in range(16):
            acc += d3[i] * w[L.W3 + (i << 6) + j]
        d2[j] = acc * _swish_grad(c.u2[j], c.s2[j])
    for i in range(64):
        di = d2[i]
        for j in range(16):
            grad[L.W2 + (i << 4) + j] += di * c.h1[j]
        grad[L.b2 + i] += di
    for j in range(16):
        acc = 0.0
        for i in range(64):
            acc += d2[i] * w[L.W2 + (i << 4) + j]
        d1[j] = acc * _swish_grad(c.u1[j], c.s1[j])
    for i in range(16):
        di = d1[i]
        for j in range(L.d):
            grad[L.W1 + i * L.d + j] += di * z[j]
        grad[L.b1 + i] += di


def net_forward(w, Z, m):
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, ::1] Zv = np.ascontiguousarray(Z, dtype=np.float64)
    cdef double[::1] mv = np.ascontiguousarray(m, dtype=np.float64)
    cdef int B = Zv.shape[0]
    cdef Layout L = _layout(Zv.shape[1])
    out = np.empty(B)
    cdef double[::1] av = out
    cdef TrunkCache c
    cdef int b
    with nogil:
        for b in range(B):
            _trunk_forward(&wv[0], L, &Zv[b, 0], &c)
            av[b] = _head_forward(&c, mv[b])
    return out


def net_forward_input_grad(w, Z, m):
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, ::1] Zv = np.ascontiguousarray(Z, dtype=np.float64)
    cdef double[::1] mv = np.ascontiguousarray(m, dtype=np.float64)
    cdef int B = Zv.shape[0]
    cdef Layout L = _layout(Zv.shape[1])
    a_out = np.empty(B)
    gZ_out = np.empty((B, L.d))
    gm_out = np.empty(B)
    cdef double[::1] av = a_out
    cdef double[:, ::1] gZv = gZ_out
    cdef double[::1] gmv = gm_out
    cdef TrunkCache c
    cdef double dy[3]
    cdef int b
    with nogil:
        for b in range(B):
            _trunk_forward(&wv[0], L, &Zv[b, 0], &c)
            av[b] = _head_forward(&c, mv[b])
            gmv[b] = _head_backward(&c, 1.0, dy)
            _trunk_backward_input(&wv[0], L, &c, dy, &gZv[b, 0])
    return a_out, gZ_out, gm_out


cdef inline int _count_leq(const double* s, int K, double r) noexcept nogil:
    """Number of sorted entries <= r (searchsorted side='right')."""
    cdef int lo = 0
    cdef int hi = K
    cdef int mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if s[mid] <= r:
            lo = mid + 1
        else:
            hi = mid
    return lo


def net_loss_weight_grad(w, Z, m, ln_mu_post, sigma_post, zeta, eps, sigma_r,
                         cost_id, cost_param):
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, ::1] Zv = np.ascontiguousarray(Z, dtype=np.float64)
    cdef double[::1] mv = np.ascontiguousarray(m, dtype=np.float64)
    cdef double[::1] cpv = np.ascontiguousarray(cost_param, dtype=np.float64)
    cdef int cid = cost_id
    cdef int B = Zv.shape[0]
    cdef Layout L = _layout(Zv.shape[1])

    # big exponentials vectorized up front; the sort matches the
    # reference's np.sort so summands are bitwise-identical
    lmp = np.asarray(ln_mu_post, dtype=np.float64)
    sp = np.asarray(sigma_post, dtype=np.float64)
    sr = np.asarray(sigma_r, dtype=np.float64)
    S_np = np.exp(lmp[:, None] + sp[:, None] * np.asarray(zeta, dtype=np.float64)[None, :])
    if cid == 2:
        S_np.sort(axis=1)
    E_np = np.exp(sr[:, None] * np.asarray(eps, dtype=np.float64)[None, :])
    cdef double[:, ::1] S = np.ascontiguousarray(S_np)
    cdef double[:, ::1] E = np.ascontiguousarray(E_np)
    cdef int K = S.shape[1]
    cdef int N = E.shape[1]

    grad_out = np.zeros(L.total)
    per_out = np.empty(B)
    cdef double[::1] gv = grad_out
    cdef double[::1] perv = per_out

    cdef double* c1 = <double*> malloc(K * sizeof(double))
    cdef double* c2 = <double*> malloc(K * sizeof(double))
    if c1 == NULL or c2 == NULL:
        free(c1)
        free(c2)
        raise MemoryError()

    cdef TrunkCache c
    cdef double dy[3]
    cdef int b, k, n, j
    cdef double a, beta, alpha, wo, wu
    cdef double S1, S2, E1, E2, t, r, loss_b, dloss_b
    cdef double tot1, tot2, p1, p2, over, under, dover, dunder
    cdef double loss_sum = 0.0
    cdef double inv_kn = 1.0 / (<double> K * <double> N)
    try:
        with nogil:
            for b in range(B):
                _trunk_forward(&wv[0], L, &Zv[b, 0], &c)
                a = _head_forward(&c, mv[b])
                if cid == 0 or cid == 1:
                    beta = cpv[b] if cid == 1 else 1.0
                    S1 = 0.0
                    S2 = 0.0
                    for k in range(K):
                        t = S[b, k]
                        S1 += t
                        S2 += t * t
                    S1 /= K
                    S2 /= K
                    E1 = 0.0
                    E2 = 0.0
                    for n in range(N):
                        t = E[b, n]
                        E1 += t
                        E2 += t * t
                    E1 /= N
                    E2 /= N
                    loss_b = beta * S2 - 2.0 * beta * a * E1 * S1 + a * a * E2
                    dloss_b = 2.0 * a * E2 - 2.0 * beta * E1 * S1
                else:
                    alpha = cpv[b]
                    wo = 2.0 * (1.0 - alpha)
                    wu = 2.0 * alpha
                    tot1 = 0.0
                    tot2 = 0.0
                    for k in range(K):
                        t = S[b, k]
                        tot1 += t
                        c1[k] = tot1
                        tot2 += t * t
                        c2[k] = tot2
                    loss_b = 0.0
                    dloss_b = 0.0
                    for n in range(N):
                        r = a * E[b, n]
                        j = _count_leq(&S[b, 0], K, r)
                        if j > 0:
                            p1 = c1[j - 1]
                            p2 = c2[j - 1]
                        else:
                            p1 = 0.0
                            p2 = 0.0
                        over = j * r * r - 2.0 * r * p1 + p2
                        under = (K - j) * r * r - 2.0 * r * (tot1 - p1) + (tot2 - p2)
                        dover = 2.0 * (j * r - p1)
                        dunder = 2.0 * ((K - j) * r - (tot1 - p1))
                        loss_b += wo * over + wu * under
                        dloss_b += (wo * dover + wu * dunder) * (r / a)
                    loss_b *= inv_kn
                    dloss_b *= inv_kn
                perv[b] = loss_b
                loss_sum += loss_b
                _head_backward(&c, dloss_b / B, dy)
                _trunk_backward_weights(&wv[0], L, &Zv[b, 0], &c, dy, &gv[0])
    finally:
        free(c1)
        free(c2)
    return loss_sum / B, grad_out, per_out


def log_joint_grad(q, ln_s, ln_r, free_idx, fixed_vals, kinds, pa, pb,
                   n_free, collapsed, solver_id, cost_id, w, centers, halfw):
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[::1] lsv = np.ascontiguousarray(ln_s, dtype=np.float64)
    cdef double[::1] lrv = np.ascontiguousarray(ln_r, dtype=np.float64)
    cdef long[::1] fiv = np.ascontiguousarray(free_idx, dtype=np.int64)
    cdef double[::1] fxv = np.ascontiguousarray(fixed_vals, dtype=np.float64)
    cdef long[::1] knv = np.ascontiguousarray(kinds, dtype=np.int64)
    cdef double[::1] pav = np.ascontiguousarray(pa, dtype=np.float64)
    cdef double[::1] pbv = np.ascontiguousarray(pb, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] cv = np.ascontiguousarray(centers, dtype=np.float64)
    cdef double[::1] hv = np.ascontiguousarray(halfw, dtype=np.float64)
    cdef int nf = n_free
    cdef int coll = collapsed
    cdef int sid = solver_id
    cdef int cid = cost_id
    cdef int T = lsv.shape[0]
    cdef int D = qv.shape[0]

    grad_out = np.zeros(D)
    cdef double[::1] gv = grad_out
    cdef double lp = 0.0

    cdef double vals[5]
    cdef double dval_du[5]
    cdef double gval[5]
    cdef int j, i, fi
    cdef double u, val, scale, lo, hi, au, tt
    for j in range(5):
        dval_du[j] = 0.0
        gval[j] = 0.0
        fi = <int> fiv[j]
        if fi >= 0:
            u = qv[fi]
            if knv[j] == 0:
                if u > 700.0:
                    return NEG_INF, grad_out
                val = exp(u)
                scale = pav[j]
                lp += u + LN_2_OVER_PI_HALF - log(scale) - val * val / (2.0 * scale * scale)
                gv[fi] += 1.0 - val * val / (scale * scale)
                dval_du[j] = val
            else:
                lo = pav[j]
                hi = pbv[j]
                au = fabs(u)
                lp += -au - 2.0 * log1p(exp(-au))
                tt = _sigmoid(u)
                val = lo + (hi - lo) * tt
                gv[fi] += 1.0 - 2.0 * tt
                dval_du[j] = (hi - lo) * tt * (1.0 - tt)
            vals[j] = val
        else:
            vals[j] = fxv[j]

    cdef double mu0 = vals[0]
    cdef double sig0 = vals[1]
    cdef double sig = vals[2]
    cdef double sigr = vals[3]
    cdef double costp = vals[4]
    cdef double sig0c = sig0 if sig0 > SIGMA_FLOOR else SIGMA_FLOOR
    cdef double sigc = sig if sig > SIGMA_FLOOR else SIGMA_FLOOR
    cdef double sigrc = sigr if sigr > SIGMA_FLOOR else SIGMA_FLOOR
    cdef double dsc0 = 1.0 if sig0 > SIGMA_FLOOR else 0.0
    cdef double dsc = 1.0 if sig > SIGMA_FLOOR else 0.0
    cdef double dscr = 1.0 if sigr > SIGMA_FLOOR else 0.0

    cdef double* x = <double*> malloc(6 * T * sizeof(double))
    if x == NULL:
        raise MemoryError()
    cdef double* gx = x + T
    cdef double* lna = x + 2 * T
    cdef double* d_sig0_v = x + 3 * T
    cdef double* d_sig_v = x + 4 * T
    cdef double* d_x_v = x + 5 * T
    # per-trial mu0/sigma_r/cost partials are constant for the analytic
    # solver; keep scalars plus a flag instead of three more arrays
    cdef double* d_mu0_v = NULL
    cdef double* d_sigr_v = NULL
    cdef double* d_costp_v = NULL

    cdef double g_sig_meas = 0.0
    cdef double zm, sp2, w0, wm, ln_mu0, lnmup
    cdef double sum_zm2 = 0.0
    cdef bint bad = 0
    cdef int d_net
    cdef TrunkCache c
    cdef double dy[3]
    cdef double zin[8]
    cdef double gz[8]
    cdef double a_i, gm_i, inv_a, m_i, e, up_i
    cdef double g_sigr_resp = 0.0
    cdef double sum_e2 = 0.0
    cdef double d_mu0_c = 0.0
    cdef double d_sigr_c = 0.0
    cdef double d_costp_c = 0.0
    cdef bint partials_const = 0

    if sid == 0:
        d_mu0_v = <double*> malloc(3 * T * sizeof(double))
        if d_mu0_v == NULL:
            free(x)
            raise MemoryError()
        d_sigr_v = d_mu0_v + T
        d_costp_v = d_mu0_v + 2 * T

    try:
        with nogil:
            if coll:
                for i in range(T):
                    x[i] = lsv[i] - sigc * sigc
                    gx[i] = 0.0
            else:
                for i in range(T):
                    x[i] = qv[nf + i]
                    zm = (x[i] - lsv[i]) / sigc
                    sum_zm2 += zm * zm
                    gx[i] = -zm / sigc
                lp += T * (-log(sigc) - 0.5 * LN_2PI) - 0.5 * sum_zm2
                g_sig_meas = -T / sigc + sum_zm2 / sigc
                if not isfinite(lp):
                    bad = 1

            if not bad and sid == 1:
                partials_const = 1
                sp2 = 1.0 / (1.0 / (sig0c * sig0c) + 1.0 / (sigc * sigc))
                w0 = sp2 / (sig0c * sig0c)
                wm = sp2 / (sigc * sigc)
                ln_mu0 = log(mu0)
                d_mu0_c = w0 / mu0
                d_sigr_c = -3.0 * sigr
                d_costp_c = 1.0 / costp if cid == 1 else 0.0
                for i in range(T):
                    lnmup = w0 * ln_mu0 + wm * x[i]
                    lna[i] = lnmup + 0.5 * sp2 - 1.5 * sigr * sigr
                    if cid == 1:
                        lna[i] += log(costp)
                    d_sig0_v[i] = (2.0 * sp2 / (sig0c * sig0c * sig0c)) * (lnmup - ln_mu0) \
                        + sp2 * sp2 / (sig0c * sig0c * sig0c)
                    d_sig_v[i] = (2.0 * sp2 / (sigc * sigc * sigc)) * (lnmup - x[i]) \
                        + sp2 * sp2 / (sigc * sigc * sigc)
                    d_x_v[i] = wm
            elif not bad:
                d_net = cv.shape[0]
                zin[0] = (mu0 - cv[0]) / hv[0]
                zin[1] = (sig0 - cv[1]) / hv[1]
                zin[2] = (sig - cv[2]) / hv[2]
                zin[3] = (sigr - cv[3]) / hv[3]
                if cid != 0:
                    zin[4] = (costp - cv[4]) / hv[4]
                for i in range(T):
                    zin[d_net - 1] = (x[i] - cv[d_net - 1]) / hv[d_net - 1]
                    m_i = exp(x[i])
                    _trunk_forward(&wv[0], _layout(d_net), zin, &c)
                    a_i = _head_forward(&c, m_i)
                    gm_i = _head_backward(&c, 1.0, dy)
                    _trunk_backward_input(&wv[0], _layout(d_net), &c, dy, gz)
                    lna[i] = log(a_i)
                    inv_a = 1.0 / a_i
                    d_mu0_v[i] = gz[0] / hv[0] * inv_a
                    d_sig0_v[i] = gz[1] / hv[1] * inv_a
                    d_sig_v[i] = gz[2] / hv[2] * inv_a
                    d_sigr_v[i] = gz[3] / hv[3] * inv_a
                    d_costp_v[i] = gz[4] / hv[4] * inv_a if cid != 0 else 0.0
                    d_x_v[i] = gz[d_net - 1] / hv[d_net - 1] * inv_a + gm_i * m_i * inv_a

            if not bad:
                for i in range(T):
                    e = (lrv[i] - lna[i]) / sigrc
                    sum_e2 += e * e
                    lp += -lrv[i]
                    up_i = e / sigrc
                    if partials_const:
                        gval[0] += up_i * d_mu0_c
                        gval[3] += up_i * d_sigr_c
                        gval[4] += up_i * d_costp_c
                    else:
                        gval[0] += up_i * d_mu0_v[i]
                        gval[3] += up_i * d_sigr_v[i]
                        gval[4] += up_i * d_costp_v[i]
                    gval[1] += up_i * d_sig0_v[i]
                    gval[2] += up_i * d_sig_v[i]
                    if coll:
                        gval[2] += up_i * d_x_v[i] * (-2.0 * sigc) * dsc
                    else:
                        gx[i] += up_i * d_x_v[i]
                lp += T * (-log(sigrc) - 0.5 * LN_2PI) - 0.5 * sum_e2
                g_sigr_resp = -T / sigrc + sum_e2 / sigrc
                if not isfinite(lp):
                    bad = 1

            if not bad:
                gval[1] *= dsc0
                gval[2] *= dsc
                gval[2] += g_sig_meas * dsc
                gval[3] += g_sigr_resp * dscr
                if not coll:
                    for i in range(T):
                        gv[nf + i] = gx[i]
                for j in range(5):
                    fi = <int> fiv[j]
                    if fi >= 0:
                        gv[fi] += gval[j] * dval_du[j]
    finally:
        free(x)
        free(d_mu0_v)
    if bad:
        return NEG_INF, grad_out
    return lp, grad_out
