"""Compiled Gibbs sweeps for the Bayesian AR(1) nowcasting family.

All random numbers are drawn by the caller and passed in, so a run is a pure
function of (data, hyperparameters, random arrays).
"""

import math

import numpy as np
from numba import njit

# Kim-Shephard-Chib 7-component approximation to log chi2(1)
KSC_PROB = np.array([0.00730, 0.10556, 0.00002, 0.04395, 0.34001, 0.24566, 0.25750])
KSC_MEAN = np.array([-10.12999, -3.97281, -8.56686, 2.77786, 0.61942, 1.79518, -1.08819]) - 1.2704
KSC_VAR = np.array([5.79596, 2.61369, 5.17950, 0.16735, 0.64009, 0.34023, 1.26261])

N_SCALES = 10
OUTLIER_STAY = 0.99


@njit(cache=True)
def _draw_discrete(logp, u):
    k = logp.size
    mx = logp[0]
    for j in range(1, k):
        if logp[j] > mx:
            mx = logp[j]
    total = 0.0
    for j in range(k):
        total += math.exp(logp[j] - mx)
    target = u * total
    acc = 0.0
    for j in range(k):
        acc += math.exp(logp[j] - mx)
        if acc >= target:
            return j
    return k - 1


@njit(cache=True)
def ar1_gibbs(z, prior_var, a0, b0, sv, outliers, n_burn, n_keep, horizon,
              nrm_beta, gam_sig, u_mix, nrm_h, nrm_h0, gam_om, u_out,
              a_om, b_om, h0_mean, h0_var, offset, loc, scale,
              ksc_prob, ksc_mean, ksc_var):
    n = z.size - 1
    y = z[1:]
    x = z[:-1]
    inv_pv = 1.0 / prior_var

    # initial state: ridge-stabilised least squares
    sx = 0.0
    sy = 0.0
    sxx = 0.0
    sxy = 0.0
    for t in range(n):
        sx += x[t]
        sy += y[t]
        sxx += x[t] * x[t]
        sxy += x[t] * y[t]
    k11 = n + 1e-8
    k12 = sx
    k22 = sxx + 1e-8
    det = k11 * k22 - k12 * k12
    c = (k22 * sy - k12 * sxy) / det
    phi = (k11 * sxy - k12 * sy) / det
    rss = 0.0
    for t in range(n):
        e = y[t] - c - phi * x[t]
        rss += e * e
    sig2 = max(rss / n, 1e-8)
    h = np.full(n, math.log(sig2))
    h0 = math.log(sig2)
    om2 = b_om / (a_om + 1.0)
    o = np.ones(n)
    v = np.empty(n)
    e = np.empty(n)
    ystar = np.empty(n)
    comp = np.zeros(n, dtype=np.int64)
    ldiag = np.empty(n)
    loff = np.empty(n)
    w = np.empty(n)
    logp_mix = np.empty(7)
    logp_out = np.empty(N_SCALES)
    log_pi = np.empty(N_SCALES)
    log_pi[0] = math.log(OUTLIER_STAY)
    for k in range(1, N_SCALES):
        log_pi[k] = math.log((1.0 - OUTLIER_STAY) / (N_SCALES - 1))
    log_q = np.log(ksc_prob)
    log_v = np.log(ksc_var)

    fc_sum = np.zeros(horizon)
    fc_sq = np.zeros(horizon)
    beta_sum = np.zeros(2)
    beta_sq = np.zeros(2)
    h_sum = np.zeros(n)
    out_sum = np.zeros(n)
    log_scale2 = 2.0 * math.log(scale)

    total = n_burn + n_keep
    for it in range(total):
        # (a) coefficients given variances
        for t in range(n):
            v[t] = o[t] * o[t] * math.exp(h[t]) if sv else sig2
        k11 = inv_pv
        k12 = 0.0
        k22 = inv_pv
        r1 = 0.0
        r2 = 0.0
        for t in range(n):
            iv = 1.0 / v[t]
            k11 += iv
            k12 += x[t] * iv
            k22 += x[t] * x[t] * iv
            r1 += y[t] * iv
            r2 += x[t] * y[t] * iv
        det = k11 * k22 - k12 * k12
        m1 = (k22 * r1 - k12 * r2) / det
        m2 = (k11 * r2 - k12 * r1) / det
        l11 = math.sqrt(k11)
        l21 = k12 / l11
        l22 = math.sqrt(max(k22 - l21 * l21, 1e-300))
        w2 = nrm_beta[it, 1] / l22
        w1 = (nrm_beta[it, 0] - l21 * w2) / l11
        c = m1 + w1
        phi = m2 + w2
        rss = 0.0
        for t in range(n):
            e[t] = y[t] - c - phi * x[t]
            rss += e[t] * e[t]

        if not sv:
            sig2 = (b0 + 0.5 * rss) / gam_sig[it]
            if not (sig2 > 0.0) or not math.isfinite(sig2):
                raise ValueError("variance draw underflow")
        else:
            # (b0) outlier scales
            if outliers:
                for t in range(n):
                    base = e[t] * e[t] / (2.0 * math.exp(h[t]))
                    for k in range(N_SCALES):
                        s = k + 1.0
                        logp_out[k] = log_pi[k] - math.log(s) - base / (s * s)
                    o[t] = _draw_discrete(logp_out, u_out[it, t]) + 1.0
            # (b1) mixture indicators
            for t in range(n):
                r = e[t] / o[t]
                ystar[t] = math.log(r * r + offset)
                for j in range(7):
                    d = ystar[t] - h[t] - ksc_mean[j]
                    logp_mix[j] = log_q[j] - 0.5 * log_v[j] - 0.5 * d * d / ksc_var[j]
                comp[t] = _draw_discrete(logp_mix, u_mix[it, t])
            # (b2) log-volatility path, tridiagonal precision sampler
            iom = 1.0 / om2
            for t in range(n):
                j = comp[t]
                dg = 1.0 / ksc_var[j] + (2.0 * iom if t < n - 1 else iom)
                rhs = (ystar[t] - ksc_mean[j]) / ksc_var[j]
                if t == 0:
                    rhs += h0 * iom
                    ldiag[0] = math.sqrt(dg)
                    w[0] = rhs / ldiag[0]
                else:
                    loff[t] = -iom / ldiag[t - 1]
                    ldiag[t] = math.sqrt(dg - loff[t] * loff[t])
                    w[t] = (rhs - loff[t] * w[t - 1]) / ldiag[t]
            for t in range(n):
                w[t] += nrm_h[it, t]
            h[n - 1] = w[n - 1] / ldiag[n - 1]
            for t in range(n - 2, -1, -1):
                h[t] = (w[t] - loff[t + 1] * h[t + 1]) / ldiag[t]
            # (c) initial state and innovation variance
            prec = 1.0 / h0_var + iom
            h0 = (h0_mean / h0_var + h[0] * iom) / prec + nrm_h0[it] / math.sqrt(prec)
            ssq = (h[0] - h0) ** 2
            for t in range(1, n):
                ssq += (h[t] - h[t - 1]) ** 2
            om2 = (b_om + 0.5 * ssq) / gam_om[it]
            if not (om2 > 0.0) or not math.isfinite(om2):
                raise ValueError("volatility variance draw underflow")

        if it >= n_burn:
            f = z[n]
            for j in range(horizon):
                f = c + phi * f
                fo = loc + scale * f
                fc_sum[j] += fo
                fc_sq[j] += fo * fo
            c_orig = loc * (1.0 - phi) + scale * c
            beta_sum[0] += c_orig
            beta_sq[0] += c_orig * c_orig
            beta_sum[1] += phi
            beta_sq[1] += phi * phi
            for t in range(n):
                h_sum[t] += (h[t] if sv else math.log(sig2)) + log_scale2
                if o[t] > 1.0:
                    out_sum[t] += 1.0
    return fc_sum, fc_sq, beta_sum, beta_sq, h_sum, out_sum
