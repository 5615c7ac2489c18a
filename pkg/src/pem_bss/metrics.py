"""Recovery metrics: alignment, mean SNR, confidence intervals.

Source recovery is judged up to a permutation and per-source sign flip, so
outputs are first aligned to the ground truth by exhaustive search over
permutations (signs are resolved per pair, and restricted to +1 on
nonnegative domains, where a flip would leave the domain).  The alignment
maximizes the reported metric itself: the total per-source SNR in dB.
"""

import dataclasses
import itertools

import numpy as np

from . import linalg
from .domains import SourceDomain
from .errors import InvalidInput, TooLargeForExactAlignment

MAX_EXACT_N = 8

# Cap for exact recovery: the dB ratio is unbounded as the residual
# vanishes, and a finite sentinel keeps aggregation well defined.
SNR_CAP_DB = 300.0
_CAP_RATIO = 1e-30


@dataclasses.dataclass(frozen=True)
class Alignment:
    perm: tuple
    signs: np.ndarray


def _pair_snr_db(s_row, y_row, allow_flip):
    ps = float(s_row @ s_row)
    res_plus = s_row - y_row
    res = float(res_plus @ res_plus)
    sign = 1.0
    if allow_flip:
        res_minus = s_row + y_row
        rm = float(res_minus @ res_minus)
        if rm < res:
            res, sign = rm, -1.0
    if res < _CAP_RATIO * ps:
        return SNR_CAP_DB, sign
    return 10.0 * np.log10(ps / res), sign


def align(S, Y, domain):
    """Best permutation and signs of Y against S, plus the aligned copy.

    Exhaustive over all permutations (n <= 8); ties resolve to the
    lexicographically smallest permutation, and to +1 signs within a pair.
    """
    S = np.asarray(S, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if S.shape != Y.shape or S.ndim != 2:
        raise InvalidInput(f"S and Y must share an n x T shape, got {S.shape} and {Y.shape}")
    n = S.shape[0]
    if n > MAX_EXACT_N:
        raise TooLargeForExactAlignment(f"exact alignment supports n <= {MAX_EXACT_N}, got {n}")
    if np.any(np.sum(S**2, axis=1) == 0.0):
        raise InvalidInput("S has a zero-norm source row")
    domain = SourceDomain(domain)
    allow_flip = not domain.is_nonnegative()
    table = np.empty((n, n))
    sign_table = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            table[i, j], sign_table[i, j] = _pair_snr_db(S[i], Y[j], allow_flip)
    best_total = -np.inf
    best_perm = None
    for perm in itertools.permutations(range(n)):
        total = sum(table[i, perm[i]] for i in range(n))
        if total > best_total:
            best_total = total
            best_perm = perm
    signs = np.array([sign_table[i, best_perm[i]] for i in range(n)])
    Y_aligned = signs[:, None] * Y[list(best_perm)]
    return Alignment(perm=best_perm, signs=signs), Y_aligned


def msnr_db(S, Y_aligned):
    """Per-source and mean SNR in dB of aligned outputs against sources.

    per_source_i = 10 log10(||s_i||^2 / ||s_i - y_i||^2), capped at 300 dB
    when the residual power falls below 1e-30 of the signal power.
    """
    S = np.asarray(S, dtype=np.float64)
    Y_aligned = np.asarray(Y_aligned, dtype=np.float64)
    if S.shape != Y_aligned.shape or S.ndim != 2:
        raise InvalidInput("S and Y_aligned must share an n x T shape")
    sig = np.sum(S**2, axis=1)
    if np.any(sig == 0.0):
        raise InvalidInput("S has a zero-norm source row")
    res = np.sum((S - Y_aligned) ** 2, axis=1)
    per_source = np.where(
        res < _CAP_RATIO * sig, SNR_CAP_DB, 10.0 * np.log10(sig / np.maximum(res, 1e-300))
    )
    return per_source, float(np.mean(per_source))


def aligned_msnr_db(S, Y, domain):
    """Convenience: align then score; returns (alignment, per_source, mean)."""
    alignment, Y_aligned = align(S, Y, domain)
    per_source, mean = msnr_db(S, Y_aligned)
    return alignment, per_source, mean


def confidence_interval(samples, level=0.95):
    """Mean and Student-t half width over independent run metrics."""
    samples = np.asarray(list(samples), dtype=np.float64)
    if samples.size < 2:
        raise InvalidInput("need at least 2 samples for a confidence interval")
    if not (0.0 < level < 1.0):
        raise InvalidInput("level must lie in (0, 1)")
    N = samples.size
    if np.all(samples == samples[0]):
        return float(samples[0]), 0.0
    mean = float(np.mean(samples))
    sd = float(np.std(samples, ddof=1))
    crit = linalg.student_t_quantile(1.0 - (1.0 - level) / 2.0, N - 1)
    return mean, float(crit * sd / np.sqrt(N))
