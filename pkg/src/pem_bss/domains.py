"""The five structured source domains and their output dynamics.

Each domain pairs a constraint set with the output nonlinearity used by the
fast inference loop.  Box domains (antisparse, nonnegative antisparse) need
only elementwise clipping.  The l1-ball, nonnegative l1-ball, and simplex
domains share a scalar inhibitory threshold `lambda_L` that is driven by the
population activity and enters the nonlinearity as a soft threshold or a
shifted rectifier.

`euclidean_project` provides exact Euclidean projections onto each domain;
the dynamics never call it (constraints are enforced by the nonlinearity
plus threshold dynamics), but it serves as a sampling aid and as an
independent oracle in tests.
"""

import enum

import numpy as np

from .errors import DomainMismatch, InvalidInput

_THRESHOLD_DOMAINS = frozenset({"sparse", "nn_sparse", "simplex"})
_NONNEG_DOMAINS = frozenset({"nn_antisparse", "nn_sparse", "simplex"})


class SourceDomain(str, enum.Enum):
    ANTISPARSE = "antisparse"
    NN_ANTISPARSE = "nn_antisparse"
    SPARSE = "sparse"
    NN_SPARSE = "nn_sparse"
    SIMPLEX = "simplex"

    def requires_threshold_unit(self):
        """True for domains whose dynamics use the shared inhibitory unit."""
        return self.value in _THRESHOLD_DOMAINS

    def is_nonnegative(self):
        """True when the domain lies in the nonnegative orthant."""
        return self.value in _NONNEG_DOMAINS

    @classmethod
    def parse(cls, name):
        try:
            return cls(str(name))
        except ValueError:
            valid = ", ".join(d.value for d in cls)
            raise InvalidInput(f"unknown source domain {name!r} (expected one of: {valid})")


def soft_threshold(u, thresh):
    """Elementwise ST_t(u) = sign(u) * max(|u| - t, 0)."""
    u = np.asarray(u, dtype=np.float64)
    return np.sign(u) * np.maximum(np.abs(u) - thresh, 0.0)


def apply_nonlinearity(domain, y_pre, lambda_L=0.0):
    """Domain output nonlinearity applied to pre-activations.

    Box domains clip and ignore lambda_L; the sparse domain soft-thresholds
    at lambda_L; nonnegative sparse and simplex rectify the lambda_L-shifted
    activity.
    """
    y_pre = np.asarray(y_pre, dtype=np.float64)
    if not np.all(np.isfinite(y_pre)):
        raise InvalidInput("y_pre has non-finite entries")
    if domain == SourceDomain.ANTISPARSE:
        return np.clip(y_pre, -1.0, 1.0)
    if domain == SourceDomain.NN_ANTISPARSE:
        return np.clip(y_pre, 0.0, 1.0)
    if domain == SourceDomain.SPARSE:
        return soft_threshold(y_pre, lambda_L)
    # nn_sparse and simplex: shifted rectifier
    return np.maximum(y_pre - lambda_L, 0.0)


def update_threshold(domain, lambda_L, y_new, eta_lambda):
    """One step of the shared inhibitory threshold dynamics.

    The threshold integrates the population activity excess: l1 norm for the
    sparse domain, plain sum for the nonnegative ones.  Inequality domains
    rectify the threshold; the simplex equality constraint leaves it free to
    go negative.
    """
    if not domain.requires_threshold_unit():
        raise DomainMismatch(f"{domain.value} has no threshold unit")
    if not eta_lambda > 0:
        raise InvalidInput("eta_lambda must be positive")
    y_new = np.asarray(y_new, dtype=np.float64)
    if domain == SourceDomain.SPARSE:
        excess = np.sum(np.abs(y_new)) - 1.0
        return max(lambda_L + eta_lambda * excess, 0.0)
    excess = np.sum(y_new) - 1.0
    if domain == SourceDomain.NN_SPARSE:
        return max(lambda_L + eta_lambda * excess, 0.0)
    return lambda_L + eta_lambda * excess


def project_simplex(v):
    """Exact Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, n + 1) > (css - 1.0))[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def euclidean_project(domain, v):
    """Exact Euclidean projection of v onto the domain.

    Boxes project by clipping.  The simplex uses the sort-based finite
    algorithm.  The l1 ball projects magnitudes onto the simplex when the
    norm exceeds one and restores signs.  The nonnegative l1 ball composes
    the two KKT cases: rectify, and if the rectified sum still exceeds one,
    project onto the simplex (the shift-and-rectify form covers both the
    orthant and the sum constraint).
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise InvalidInput("v has non-finite entries")
    if domain == SourceDomain.ANTISPARSE:
        return np.clip(v, -1.0, 1.0)
    if domain == SourceDomain.NN_ANTISPARSE:
        return np.clip(v, 0.0, 1.0)
    if domain == SourceDomain.SIMPLEX:
        return project_simplex(v)
    if domain == SourceDomain.SPARSE:
        if np.sum(np.abs(v)) <= 1.0:
            return v.copy()
        return np.sign(v) * project_simplex(np.abs(v))
    # nn_sparse
    w = np.maximum(v, 0.0)
    if np.sum(w) <= 1.0:
        return w
    return project_simplex(v)


def contains(domain, s, tol=1e-6):
    """Domain membership with slack tol on every inequality and equality."""
    if tol < 0:
        raise InvalidInput("tol must be nonnegative")
    s = np.asarray(s, dtype=np.float64)
    if domain == SourceDomain.ANTISPARSE:
        return bool(np.all(np.abs(s) <= 1.0 + tol))
    if domain == SourceDomain.NN_ANTISPARSE:
        return bool(np.all(s >= -tol) and np.all(s <= 1.0 + tol))
    if domain == SourceDomain.SPARSE:
        return bool(np.sum(np.abs(s)) <= 1.0 + tol)
    if domain == SourceDomain.NN_SPARSE:
        return bool(np.all(s >= -tol) and np.sum(s) <= 1.0 + tol)
    return bool(np.all(s >= -tol) and abs(np.sum(s) - 1.0) <= tol)
