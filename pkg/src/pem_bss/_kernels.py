"""Compiled inner loops for the online algorithm.

The fast inference loop runs up to tau_max iterations per streaming sample,
so it is the runtime bottleneck; everything here is numba-compiled and works
on plain float64 arrays.  Domain and schedule variants are selected by small
integer codes to keep one kernel per stage.
"""

import numpy as np
from numba import njit

# domain codes
ANTISPARSE = 0
NN_ANTISPARSE = 1
SPARSE = 2
NN_SPARSE = 3
SIMPLEX = 4

# variant codes
NORMALIZED = 0
UNNORMALIZED = 1

# schedule rule codes
CONSTANT = 0
DIVIDE_BY_INDEX = 1
DIVIDE_BY_LOG_INDEX = 2
DIVIDE_BY_LOOP_INDEX = 3
DIVIDE_BY_SLOW_LOOP_INDEX = 4


@njit(cache=True)
def schedule_eval(rule, base, divider, floor, index):
    if rule == CONSTANT:
        return base
    if rule == DIVIDE_BY_INDEX:
        return max(base / (index / divider + 1.0), floor)
    if rule == DIVIDE_BY_LOG_INDEX:
        return max(base / (1.0 + np.log(index / divider + 2.0)), floor)
    if rule == DIVIDE_BY_LOOP_INDEX:
        return max(base / (index + 1.0), floor)
    return max(base / (index * divider + 1.0), floor)


@njit(cache=True)
def infer_kernel(
    x,
    W,
    mu,
    v,
    c,
    lambda_L0,
    domain,
    variant,
    eps,
    gamma,
    gamma_lateral,
    y_rule,
    y_base,
    y_divider,
    y_floor,
    eta_lambda,
    tau_max,
    tol,
):
    """Fast output inference for one sample against frozen statistics.

    Returns (y, lambda_L, iters, fail_tau); fail_tau is -1 on success and the
    offending inner iteration when the activity went non-finite.
    """
    n, m = W.shape
    y = np.zeros(n)
    wx = np.zeros(n)
    for k in range(n):
        acc = 0.0
        for l in range(m):
            acc += W[k, l] * x[l]
        wx[k] = acc
    lam_L = lambda_L0
    iters = 0
    for tau in range(tau_max):
        eta = schedule_eval(y_rule, y_base, y_divider, y_floor, float(tau))
        y_new = np.empty(n)
        for k in range(n):
            yb_k = y[k] - mu[k]
            lateral = 0.0
            if variant == NORMALIZED:
                for j in range(n):
                    if j != k:
                        lateral += c[k, j] * (y[j] - mu[j]) / ((v[k] + eps) * (v[j] + eps))
            else:
                for j in range(n):
                    if j != k:
                        lateral += c[k, j] * (y[j] - mu[j])
                lateral *= gamma_lateral
            d_k = yb_k / (v[k] + eps) - lateral - gamma * (y[k] - wx[k])
            y_new[k] = y[k] + eta * d_k
        if domain == ANTISPARSE:
            for k in range(n):
                y_new[k] = min(max(y_new[k], -1.0), 1.0)
        elif domain == NN_ANTISPARSE:
            for k in range(n):
                y_new[k] = min(max(y_new[k], 0.0), 1.0)
        elif domain == SPARSE:
            for k in range(n):
                mag = abs(y_new[k]) - lam_L
                y_new[k] = np.sign(y_new[k]) * max(mag, 0.0)
        else:
            for k in range(n):
                y_new[k] = max(y_new[k] - lam_L, 0.0)
        lam_prev = lam_L
        if domain == SPARSE:
            total = 0.0
            for k in range(n):
                total += abs(y_new[k])
            lam_L = max(lam_L + eta_lambda * (total - 1.0), 0.0)
        elif domain == NN_SPARSE:
            total = 0.0
            for k in range(n):
                total += y_new[k]
            lam_L = max(lam_L + eta_lambda * (total - 1.0), 0.0)
        elif domain == SIMPLEX:
            total = 0.0
            for k in range(n):
                total += y_new[k]
            lam_L = lam_L + eta_lambda * (total - 1.0)
        iters = tau + 1
        delta = 0.0
        finite = True
        for k in range(n):
            step = abs(y_new[k] - y[k])
            if step > delta:
                delta = step
            if not np.isfinite(y_new[k]):
                finite = False
        y = y_new
        if not finite or not np.isfinite(lam_L):
            return y, lam_L, iters, tau
        # The threshold unit must have settled too: while it is still
        # discharging it can pin the activity (e.g. at exactly zero), which
        # would otherwise satisfy the activity-change test spuriously.
        if delta < tol and abs(lam_L - lam_prev) < tol:
            break
    return y, lam_L, iters, -1


@njit(cache=True)
def slow_kernel(W, mu, v, c, x, y, alpha_w, weight_old, weight_new):
    """In-place feedforward and statistics updates after inference.

    weight_old/weight_new are (lambda, 1-lambda) in steady-state mode or
    (1-alpha(t), alpha(t)) under exact finite-time normalization.
    """
    n, m = W.shape
    for k in range(n):
        e_k = y[k]
        for l in range(m):
            e_k -= W[k, l] * x[l]
        for l in range(m):
            W[k, l] += alpha_w * e_k * x[l]
    for k in range(n):
        mu[k] = weight_old * mu[k] + weight_new * y[k]
    for k in range(n):
        yb_k = y[k] - mu[k]
        v[k] = weight_old * v[k] + weight_new * (yb_k * yb_k)
        for j in range(n):
            if j != k:
                # grouped as (yb_k * yb_j) so the trace stays exactly symmetric
                c[k, j] = weight_old * c[k, j] + weight_new * (yb_k * (y[j] - mu[j]))
