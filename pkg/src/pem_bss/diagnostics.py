"""Numerical certificates for the log-det Taylor surrogate.

For a positive semidefinite covariance C with regularized diagonal
D_eps = diag(C) + eps I and normalized off-diagonal matrix

    B = D_eps^{-1/2} (C - diag(C)) D_eps^{-1/2},

the regularized log-determinant splits exactly into the diagonal surrogate
plus a remainder R2 with spectral form sum_i [log(1+l_i) - l_i + l_i^2/2]
over the eigenvalues l_i of B.  This module computes the remainder twice
(once from the Cholesky log-determinant and the entrywise quadratic term,
once from the spectrum), together with two-sided and norm-based bounds, and
checks the descent condition for the truncated fast-inference direction.

The two remainder computations deliberately share no code: one goes through
`linalg.cholesky_logdet`, the other through the Jacobi eigensolver, so their
agreement cross-validates both.
"""

import dataclasses
import math

import numpy as np

from . import linalg
from .errors import InvalidInput, SpectrumAtSingularity

# Below this margin of 1 + lambda_min(B) the norm-based bound diverges and
# the spectrum is effectively at the -1 singularity.
_SINGULARITY_MARGIN = 1e-10


def _check_cov(C, eps):
    # eps = 0 is accepted on strictly positive-definite inputs; the
    # singularity guard below rejects the cases it cannot certify.
    C = linalg.symmetrize(C)
    if not np.all(np.isfinite(C)):
        raise InvalidInput("covariance has non-finite entries")
    if np.any(np.diag(C) < -1e-12):
        raise InvalidInput("covariance diagonal must be nonnegative")
    if eps < 0:
        raise InvalidInput("eps must be nonnegative")
    return C


def normalized_offdiag(C, eps):
    """B = (D+eps I)^{-1/2} (C - D) (D+eps I)^{-1/2}; zero diagonal."""
    C = _check_cov(C, eps)
    d = np.diag(C) + eps
    if np.any(d <= 0.0):
        raise InvalidInput("regularized diagonal must be strictly positive")
    scale = 1.0 / np.sqrt(d)
    B = C * np.outer(scale, scale)
    np.fill_diagonal(B, 0.0)
    return B


def surrogate_objective(C, eps):
    """Variance expansion plus normalized covariance penalty.

    -sum_i log(C_ii + eps) + 1/2 sum_{i != j} C_ij^2 / ((C_ii+eps)(C_jj+eps))
    """
    C = _check_cov(C, eps)
    d = np.diag(C) + eps
    if np.any(d <= 0.0):
        raise InvalidInput("regularized diagonal must be strictly positive")
    off = C - np.diag(np.diag(C))
    penalty = np.sum(off**2 / np.outer(d, d))
    return float(-np.sum(np.log(d)) + 0.5 * penalty)


def exact_objective(C, eps):
    """-log det(C + eps I) via Cholesky."""
    C = _check_cov(C, eps)
    return -linalg.cholesky_logdet(C + eps * np.eye(C.shape[0]))


def correlative_entropy(C, eps):
    """Second-order entropy: 1/2 log det(C + eps I) + n/2 log(2 pi e)."""
    C = _check_cov(C, eps)
    n = C.shape[0]
    return 0.5 * linalg.cholesky_logdet(C + eps * np.eye(n)) + 0.5 * n * math.log(
        2.0 * math.pi * math.e
    )


def _remainder_scalar(lam):
    # r(l) = log(1+l) - l + l^2/2; series below |l| = 1e-2 to avoid the
    # catastrophic cancellation of the direct form for tiny eigenvalues.
    if abs(lam) < 1e-2:
        acc = 0.0
        term = lam**3
        for k in range(3, 20):
            acc += term / k if (k % 2 == 1) else -term / k
            term *= lam
        return acc
    return math.log1p(lam) - lam + 0.5 * lam * lam


@dataclasses.dataclass(frozen=True)
class RemainderReport:
    """Exact second-order remainder and its certified bounds."""

    r2_direct: float
    r2_spectral: float
    lower_bound: float
    upper_bound: float
    norm_bound: float
    b_fro: float
    b_spec: float
    b_lambda_min: float


def taylor_remainder(C, eps):
    """Second-order remainder of log det(C + eps I) around its diagonal.

    r2_direct evaluates the defining difference with the Cholesky
    log-determinant and the entrywise quadratic term; r2_spectral sums the
    scalar remainder over the Jacobi eigenvalues of B.  lower/upper are the
    signed two-sided spectral bounds (cubic in the eigenvalues), norm_bound
    the coarser ||B||_F^2 ||B||_2 / (3 (1 + lambda_min(B))) estimate.
    """
    C = _check_cov(C, eps)
    n = C.shape[0]
    B = normalized_offdiag(C, eps)
    evals = linalg.sym_eigvals(B)
    lam_min = float(evals[0])
    if 1.0 + lam_min < _SINGULARITY_MARGIN:
        raise SpectrumAtSingularity(
            f"1 + lambda_min(B) = {1.0 + lam_min:.3e} is below {_SINGULARITY_MARGIN:g}"
        )
    r2_spectral = float(sum(_remainder_scalar(l) for l in evals))
    d = np.diag(C) + eps
    off = C - np.diag(np.diag(C))
    quad = float(np.sum(off**2 / np.outer(d, d)))  # equals sum_i l_i^2
    logdet = linalg.cholesky_logdet(C + eps * np.eye(n))
    r2_direct = float(logdet - (np.sum(np.log(d)) - 0.5 * quad))
    neg = evals[evals < 0.0]
    pos = evals[evals >= 0.0]
    lower = -float(np.sum(np.abs(neg) ** 3 / (1.0 + neg))) / 3.0
    upper = float(np.sum(pos**3)) / 3.0
    b_fro = float(np.sqrt(np.sum(B**2)))
    b_spec = float(max(abs(evals[0]), abs(evals[-1])))
    norm_bound = b_fro**2 * b_spec / (3.0 * (1.0 + lam_min))
    return RemainderReport(
        r2_direct=r2_direct,
        r2_spectral=r2_spectral,
        lower_bound=lower,
        upper_bound=upper,
        norm_bound=norm_bound,
        b_fro=b_fro,
        b_spec=b_spec,
        b_lambda_min=lam_min,
    )


def updated_stats(state, y, cfg):
    """Statistics after absorbing output y with steady-state weights.

    The fast-loop objective treats the time-t statistics as functions of the
    current output through the exponential updates; gradients of that
    dependence are what the truncated direction and its discarded term
    approximate.
    """
    y = np.asarray(y, dtype=np.float64)
    lam = cfg.lam
    mu = lam * state.mu_hat + (1.0 - lam) * y
    yb = y - mu
    v = lam * state.v_hat + (1.0 - lam) * yb**2
    c = lam * state.c_hat + (1.0 - lam) * (np.outer(yb, yb) - np.diag(yb**2))
    return mu, yb, v, c


def inference_cost(state, y, x, cfg):
    """Fast-loop cost J at output y, with statistics updated by y.

    The prediction term carries lam*(1-lam)*gamma_pred: the configured gamma
    is the absorbed constant of the update direction, so the cost must undo
    that rescaling to stay consistent with the gradient identity.
    """
    if cfg.variant != "normalized":
        raise InvalidInput("inference_cost is defined for the normalized variant")
    x = np.asarray(x, dtype=np.float64)
    _, _, v, c = updated_stats(state, y, cfg)
    d = v + cfg.epsilon
    penalty = float(np.sum(c**2 / np.outer(d, d)))
    e = np.asarray(y, dtype=np.float64) - state.W @ x
    gamma_j = cfg.lam * (1.0 - cfg.lam) * cfg.gamma_pred
    return float(-np.sum(np.log(d)) + 0.5 * penalty + gamma_j * float(e @ e))


def _direction_terms(state, y, x, cfg):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mu, yb, v, c = updated_stats(state, y, cfg)
    d = v + cfg.epsilon
    lateral = (c @ (yb / d)) / d
    g = -yb / d + lateral + cfg.gamma_pred * (y - state.W @ x)
    B = c * np.outer(1.0 / np.sqrt(d), 1.0 / np.sqrt(d))
    r = (B**2).sum(axis=1) / d * yb
    return g, r, B, yb, d


def truncated_direction_and_discard(state, y, x, cfg):
    """(g, r): truncated ascent-gradient direction and its discarded term.

    Both are evaluated at the y-updated statistics; the exact cost gradient
    is then 2 lam (1-lam) (g - r), so -g is a strict descent direction for
    the cost whenever ||r|| < ||g||.
    """
    g, r, _, _, _ = _direction_terms(state, y, x, cfg)
    return g, r


@dataclasses.dataclass(frozen=True)
class DescentReport:
    g_norm: float
    r_norm: float
    descent_certified: bool
    coarse_certified: bool


def descent_check(state, y, x, cfg):
    """Certify that the truncated direction decreases the fast-loop cost.

    descent_certified applies the sharp sufficient condition ||r|| < ||g||;
    coarse_certified the simpler ||B||_2^2 / min_k(v_k+eps) * ||yb|| < ||g||,
    which implies it.
    """
    if cfg.variant != "normalized":
        raise InvalidInput("descent_check applies to the normalized variant")
    g, r, B, yb, d = _direction_terms(state, y, x, cfg)
    g_norm = float(np.linalg.norm(g))
    r_norm = float(np.linalg.norm(r))
    evals = linalg.sym_eigvals(B)
    b_spec = float(max(abs(evals[0]), abs(evals[-1])))
    coarse_lhs = b_spec**2 / float(np.min(d)) * float(np.linalg.norm(yb))
    return DescentReport(
        g_norm=g_norm,
        r_norm=r_norm,
        descent_certified=r_norm < g_norm,
        coarse_certified=coarse_lhs < g_norm,
    )


def near_optimality_gap(rho, n):
    """Uniform surrogate-vs-exact gap n rho^3 / (3 (1 - rho)) for ||B||_2 <= rho."""
    if not (0.0 < rho < 1.0):
        raise InvalidInput("rho must lie in (0, 1)")
    if n < 1:
        raise InvalidInput("n must be a positive integer")
    return n * rho**3 / (3.0 * (1.0 - rho))


def certify_uniform_gap(samples, eps):
    """Check |surrogate - exact| <= norm_bound on every sample.

    The per-sample gap is the exact spectral remainder (surrogate minus
    exact objective equals the remainder identically).  When the largest
    spectral norm over the family stays below one, the gaps are additionally
    held to the explicit uniform bound from that norm.
    """
    samples = list(samples)
    if not samples:
        raise InvalidInput("need at least one sample")
    dims = {np.asarray(C).shape[0] for C in samples}
    if len(dims) != 1:
        raise InvalidInput("all samples must share one dimension")
    n = dims.pop()
    reports = [taylor_remainder(C, eps) for C in samples]
    if any(abs(rep.r2_spectral) > rep.norm_bound for rep in reports):
        return False
    max_spec = max(rep.b_spec for rep in reports)
    if 0.0 < max_spec < 1.0:
        gap = near_optimality_gap(max_spec, n)
        if any(abs(rep.r2_spectral) > gap for rep in reports):
            return False
    return True
