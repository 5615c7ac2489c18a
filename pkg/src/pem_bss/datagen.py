"""Synthetic data generation: sources, mixing matrices, noisy mixtures.

Every generator draws from a named Philox stream (see `streams`), so a given
seed reproduces sources, mixing matrix, and noise bit for bit, independently
of each other and of run order.
"""

import dataclasses
import enum
import struct

import numpy as np

from . import linalg
from .domains import SourceDomain
from .errors import DegenerateMixing, DomainMismatch, InvalidInput
from .streams import stream

_RANK_PIVOT_TOL = 1e-10
_MAX_MIXING_ATTEMPTS = 10


class MixingDistribution(str, enum.Enum):
    """Unit-variance, zero-mean entry laws for mixing matrices."""

    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    LAPLACE = "laplace"
    RADEMACHER = "rademacher"
    STUDENT_T5 = "student_t5"

    @classmethod
    def parse(cls, name):
        try:
            return cls(str(name))
        except ValueError:
            valid = ", ".join(d.value for d in cls)
            raise InvalidInput(f"unknown mixing distribution {name!r} (expected: {valid})")

    def sample(self, rng, shape):
        if self == MixingDistribution.GAUSSIAN:
            return rng.standard_normal(shape)
        if self == MixingDistribution.UNIFORM:
            return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), shape)
        if self == MixingDistribution.LAPLACE:
            return rng.laplace(0.0, 1.0 / np.sqrt(2.0), shape)
        if self == MixingDistribution.RADEMACHER:
            return rng.integers(0, 2, shape).astype(np.float64) * 2.0 - 1.0
        # student_t5, scaled to unit variance
        return rng.standard_t(5, shape) * np.sqrt(3.0 / 5.0)


@dataclasses.dataclass(frozen=True)
class SourceBatch:
    """Ground-truth sources: one column per sample."""

    S: np.ndarray
    domain: SourceDomain
    rho: float
    seed: int

    @property
    def n(self):
        return self.S.shape[0]

    @property
    def T(self):
        return self.S.shape[1]


def _check_dims(n, T):
    if n < 2:
        raise InvalidInput(f"need at least 2 sources, got n={n}")
    if T < 1:
        raise InvalidInput(f"need at least 1 sample, got T={T}")


def sample_uniform_source(domain, n, T, seed):
    """Columns drawn i.i.d. uniformly from the domain.

    Boxes sample each coordinate uniformly.  The simplex uses normalized
    exponentials (flat Dirichlet).  The l1 ball combines flat Dirichlet
    magnitudes with radius U^(1/n) and independent signs; its nonnegative
    restriction drops the signs.
    """
    _check_dims(n, T)
    domain = SourceDomain(domain)
    rng = stream(seed, "sources")
    if domain == SourceDomain.ANTISPARSE:
        S = rng.uniform(-1.0, 1.0, (n, T))
    elif domain == SourceDomain.NN_ANTISPARSE:
        S = rng.uniform(0.0, 1.0, (n, T))
    else:
        expo = rng.standard_exponential((n, T))
        S = expo / expo.sum(axis=0)
        if domain != SourceDomain.SIMPLEX:
            S = S * rng.random(T) ** (1.0 / n)
            if domain == SourceDomain.SPARSE:
                S = S * np.where(rng.random((n, T)) < 0.5, -1.0, 1.0)
    return SourceBatch(S=S, domain=domain, rho=0.0, seed=int(seed))


def sample_copula_t_source(domain, n, T, rho, nu=4, seed=0):
    """Correlated sources with uniform marginals from a copula-t model.

    Per column: draw z ~ N(0, R) with the equicorrelation matrix
    R = (1-rho) I + rho 11^T, draw g ~ chi-squared with nu degrees of
    freedom (as a sum of nu squared normals), form the multivariate-t vector
    t = z sqrt(nu/g), and push each coordinate through the t CDF.  Box
    domains map the uniforms onto [-1, 1] or keep them on [0, 1].
    """
    _check_dims(n, T)
    domain = SourceDomain(domain)
    if domain not in (SourceDomain.ANTISPARSE, SourceDomain.NN_ANTISPARSE):
        raise DomainMismatch(f"copula-t sources are defined on box domains, not {domain.value}")
    if not (0.0 <= rho < 1.0):
        raise InvalidInput(f"rho must lie in [0, 1), got {rho!r}")
    nu = int(nu)
    if nu < 1:
        raise InvalidInput("nu must be a positive integer")
    rng = stream(seed, "sources")
    R = (1.0 - rho) * np.eye(n) + rho * np.ones((n, n))
    L = linalg.cholesky_factor(R)
    Z = L @ rng.standard_normal((n, T))
    g = np.sum(rng.standard_normal((nu, T)) ** 2, axis=0)
    U = linalg.student_t_cdf_array(Z * np.sqrt(nu / g), nu)
    S = 2.0 * U - 1.0 if domain == SourceDomain.ANTISPARSE else U
    return SourceBatch(S=S, domain=domain, rho=float(rho), seed=int(seed))


def gen_mixing(m, n, dist=MixingDistribution.GAUSSIAN, seed=0):
    """m x n mixing matrix with i.i.d. entries and full column rank.

    Rank is checked through the Cholesky pivots of A^T A (all > 1e-10);
    rank-deficient draws are resampled up to 10 times.
    """
    if not (m >= n >= 2):
        raise InvalidInput(f"need m >= n >= 2, got m={m}, n={n}")
    dist = MixingDistribution(dist)
    rng = stream(seed, "mixing")
    for _ in range(_MAX_MIXING_ATTEMPTS):
        A = dist.sample(rng, (m, n))
        if linalg.cholesky_pivots_above(A.T @ A, _RANK_PIVOT_TOL):
            return A
    raise DegenerateMixing(
        f"no full-column-rank {m}x{n} draw from {dist.value} in {_MAX_MIXING_ATTEMPTS} attempts"
    )


def take_first_rows(A, m_prime):
    """Row prefix of a mixing matrix, used by the mixtures ablation.

    The prefix must still have at least n rows and keeps the full-rank
    requirement of `gen_mixing`.
    """
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    if m_prime < n:
        raise InvalidInput(f"prefix must keep at least n={n} rows, got {m_prime}")
    if m_prime > m:
        raise InvalidInput(f"prefix of {m_prime} rows exceeds the {m} available")
    prefix = A[:m_prime].copy()
    if not linalg.cholesky_pivots_above(prefix.T @ prefix, _RANK_PIVOT_TOL):
        raise DegenerateMixing(f"first {m_prime} rows are column-rank deficient")
    return prefix


def mix_with_noise(A, S, snr_in_db, seed):
    """Noisy mixtures X = A S + noise at a prescribed input SNR.

    The noise variance is set from the Frobenius signal power averaged over
    all channels and samples, sigma^2 = P_sig / 10^(snr/10) with
    P_sig = ||A S||_F^2 / (m T), which makes the prescribed SNR exactly
    recoverable in expectation.  `snr_in_db=None` returns X = A S exactly
    with sigma^2 = 0.
    """
    A = np.asarray(A, dtype=np.float64)
    Smat = S.S if isinstance(S, SourceBatch) else np.asarray(S, dtype=np.float64)
    if A.shape[1] != Smat.shape[0]:
        raise InvalidInput(f"A is {A.shape} but S has {Smat.shape[0]} rows")
    AS = A @ Smat
    if snr_in_db is None:
        return AS, 0.0
    m, T = AS.shape
    p_sig = float(np.sum(AS**2)) / (m * T)
    sigma2 = p_sig / 10.0 ** (snr_in_db / 10.0)
    noise = stream(seed, "noise").standard_normal((m, T)) * np.sqrt(sigma2)
    return AS + noise, sigma2


# --- binary container ("PEMB") -------------------------------------------
#
# Layout, all little-endian:
#   magic "PEMB" | version u32 | n u32 | m u32 | T u64
#   | domain-name length u32 | domain-name utf-8 bytes
#   | S (n*T f64, row-major) | A (m*n f64) | X (m*T f64)

_BATCH_MAGIC = b"PEMB"
_BATCH_VERSION = 1


def write_batch(path, batch, A, X):
    """Dump generated data (sources, mixing, mixtures) to a PEMB file."""
    S = batch.S
    n, T = S.shape
    m = A.shape[0]
    if A.shape != (m, n) or X.shape != (m, T):
        raise InvalidInput("inconsistent S/A/X shapes")
    name = batch.domain.value.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_BATCH_MAGIC)
        fh.write(struct.pack("<IIIQ", _BATCH_VERSION, n, m, T))
        fh.write(struct.pack("<I", len(name)))
        fh.write(name)
        fh.write(np.ascontiguousarray(S, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(A, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(X, dtype="<f8").tobytes())


def read_batch(path):
    """Read a PEMB file back as (S, A, X, domain)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _BATCH_MAGIC:
            raise InvalidInput(f"{path} is not a PEMB file")
        version, n, m, T = struct.unpack("<IIIQ", fh.read(20))
        if version != _BATCH_VERSION:
            raise InvalidInput(f"unsupported PEMB version {version}")
        (name_len,) = struct.unpack("<I", fh.read(4))
        domain = SourceDomain.parse(fh.read(name_len).decode("utf-8"))
        S = np.frombuffer(fh.read(8 * n * T), dtype="<f8").reshape(n, T).copy()
        A = np.frombuffer(fh.read(8 * m * n), dtype="<f8").reshape(m, n).copy()
        X = np.frombuffer(fh.read(8 * m * T), dtype="<f8").reshape(m, T).copy()
    return S, A, X, domain
