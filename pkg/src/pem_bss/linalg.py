"""Small dense linear algebra and special functions.

Symmetric matrices and vectors are plain float64 ndarrays; a "symmetric
matrix" here means a square array whose lower triangle mirrors the upper
triangle exactly (use `symmetrize` to canonicalize).  Nothing in this module
allocates beyond the inputs, and all functions are pure, so concurrent use
is safe.

The eigensolver is a cyclic Jacobi iteration rather than a LAPACK call: the
matrices are at most 64x64, symmetry is exact by construction, and keeping
the implementation self-contained means the spectral and Cholesky code paths
used to cross-check the Taylor-remainder diagnostics share no code.
"""

import math

import numpy as np
from numba import njit

from .errors import InvalidInput, NotPositiveDefinite

MAX_DIM = 64
_JACOBI_TOL = 1e-12
_JACOBI_MAX_SWEEPS = 50
CHOLESKY_PIVOT_TOL = 1e-14


def symmetrize(M):
    """Copy of M with the upper triangle mirrored onto the lower, exactly."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {M.shape}")
    upper = np.triu(M)
    return upper + np.triu(M, 1).T


def _check_square(M, name="matrix"):
    M = np.ascontiguousarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {M.shape}")
    if M.shape[0] < 1 or M.shape[0] > MAX_DIM:
        raise InvalidInput(f"{name} dimension must be in [1, {MAX_DIM}]")
    if not np.all(np.isfinite(M)):
        raise InvalidInput(f"{name} has non-finite entries")
    return M


@njit(cache=True)
def _jacobi_eigvals(A, tol_rel, max_sweeps):
    # Cyclic Jacobi on the full symmetric matrix A (destroyed in place).
    # Rotations preserve the Frobenius norm, so the convergence threshold is
    # fixed relative to the input norm.
    n = A.shape[0]
    norm_f = 0.0
    for i in range(n):
        for j in range(n):
            norm_f += A[i, j] * A[i, j]
    norm_f = math.sqrt(norm_f)
    thresh = tol_rel * norm_f
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += 2.0 * A[i, j] * A[i, j]
        if math.sqrt(off) <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                app = A[p, p]
                aqq = A[q, q]
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    if k != p and k != q:
                        akp = A[k, p]
                        akq = A[k, q]
                        A[k, p] = c * akp - s * akq
                        A[p, k] = A[k, p]
                        A[k, q] = s * akp + c * akq
                        A[q, k] = A[k, q]
    return np.diag(A).copy()


def sym_eigvals(M):
    """Eigenvalues of a symmetric matrix, sorted ascending.

    Runs cyclic Jacobi sweeps until the off-diagonal Frobenius norm drops
    below 1e-12 times the matrix norm (at most 50 sweeps).
    """
    M = _check_square(M)
    vals = _jacobi_eigvals(symmetrize(M), _JACOBI_TOL, _JACOBI_MAX_SWEEPS)
    return np.sort(vals)


@njit(cache=True)
def _cholesky_lower(M, pivot_tol):
    # Returns (L, ok). ok=False when a pivot falls at or below pivot_tol.
    n = M.shape[0]
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            acc = M[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            if i == j:
                if acc <= pivot_tol:
                    return L, False
                L[i, i] = math.sqrt(acc)
            else:
                L[i, j] = acc / L[j, j]
    return L, True


def cholesky_factor(M, pivot_tol=CHOLESKY_PIVOT_TOL):
    """Lower Cholesky factor of a symmetric positive definite matrix."""
    M = _check_square(M)
    L, ok = _cholesky_lower(symmetrize(M), pivot_tol)
    if not ok:
        raise NotPositiveDefinite(
            f"pivot at or below {pivot_tol:g}; matrix is not positive definite"
        )
    return L


def cholesky_logdet(M):
    """log det(M) for symmetric positive definite M, via Cholesky pivots."""
    L = cholesky_factor(M)
    return float(2.0 * np.sum(np.log(np.diag(L))))


def cholesky_pivots_above(M, tol):
    """True when every elimination pivot of symmetric M exceeds tol (tol >= 0).

    Cheap full-rank test for Gram matrices without raising.
    """
    if tol < 0:
        raise InvalidInput("tol must be nonnegative")
    M = _check_square(M)
    _, ok = _cholesky_lower(symmetrize(M), float(tol))
    return bool(ok)


@njit(cache=True)
def _betacf(a, b, x):
    # Continued fraction for the regularized incomplete beta (modified
    # Lentz), capped at 200 doubled iterations.
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 201):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


@njit(cache=True)
def _reg_inc_beta(a, b, x):
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def reg_incomplete_beta(a, b, x):
    """Regularized incomplete beta I_x(a, b)."""
    if not (a > 0.0 and b > 0.0) or not (math.isfinite(a) and math.isfinite(b)):
        raise InvalidInput("a and b must be positive finite reals")
    if not (0.0 <= x <= 1.0):
        raise InvalidInput(f"x must lie in [0, 1], got {x!r}")
    return float(_reg_inc_beta(a, b, x))


@njit(cache=True)
def _t_cdf(x, nu):
    if x == 0.0:
        return 0.5
    ib = _reg_inc_beta(0.5 * nu, 0.5, nu / (nu + x * x))
    if x > 0.0:
        return 1.0 - 0.5 * ib
    return 0.5 * ib


@njit(cache=True)
def _t_cdf_array(out, x, nu):
    for i in range(x.size):
        out[i] = _t_cdf(x[i], nu)


def student_t_cdf(x, nu):
    """Student-t CDF with nu degrees of freedom."""
    if not nu > 0 or not math.isfinite(nu):
        raise InvalidInput("nu must be a positive finite real")
    if math.isnan(x):
        raise InvalidInput("x must not be NaN")
    if math.isinf(x):
        return 1.0 if x > 0 else 0.0
    return float(_t_cdf(float(x), float(nu)))


def student_t_cdf_array(x, nu):
    """Elementwise Student-t CDF (vectorized helper for copula sampling)."""
    if not nu > 0 or not math.isfinite(nu):
        raise InvalidInput("nu must be a positive finite real")
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidInput("x has non-finite entries")
    out = np.empty(x.size)
    _t_cdf_array(out, x.ravel(), float(nu))
    return out.reshape(x.shape)


def student_t_quantile(p, nu):
    """Inverse Student-t CDF, bisected to |F(x) - p| < 1e-10."""
    if not nu > 0 or not math.isfinite(nu):
        raise InvalidInput("nu must be a positive finite real")
    if not (0.0 < p < 1.0):
        raise InvalidInput(f"p must lie in (0, 1), got {p!r}")
    if p == 0.5:
        return 0.0
    lo, hi = -1.0, 1.0
    while student_t_cdf(lo, nu) > p:
        lo *= 2.0
    while student_t_cdf(hi, nu) < p:
        hi *= 2.0
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = student_t_cdf(x, nu)
        # the CDF criterion alone is loose in the flat tails, so require the
        # bracket to collapse as well
        if abs(f - p) < 1e-10 and hi - lo < 1e-10:
            break
        if f < p:
            lo = x
        else:
            hi = x
        x = 0.5 * (lo + hi)
    return float(x)
