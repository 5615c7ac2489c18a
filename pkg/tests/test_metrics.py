import itertools
import math

import numpy as np
import pytest

from pem_bss import metrics
from pem_bss.domains import SourceDomain
from pem_bss.errors import InvalidInput, TooLargeForExactAlignment
from pem_bss.metrics import align, aligned_msnr_db, confidence_interval, msnr_db


def exhaustive_alignment_oracle(S, Y, allow_flip):
    """Independent oracle: enumerate every (perm, signs) pair from scratch."""
    n = S.shape[0]
    best = -np.inf
    sign_choices = [(-1.0, 1.0)] * n if allow_flip else [(1.0,)] * n
    for perm in itertools.permutations(range(n)):
        for signs in itertools.product(*sign_choices):
            Y_try = np.array([signs[i] * Y[perm[i]] for i in range(n)])
            _, mean = msnr_db(S, Y_try)
            if mean > best:
                best = mean
    return best


class TestAlign:
    def test_identity(self, rng):
        S = rng.standard_normal((3, 40))
        alignment, Y_aligned = align(S, S, SourceDomain.ANTISPARSE)
        assert alignment.perm == (0, 1, 2)
        assert np.all(alignment.signs == 1.0)
        assert np.array_equal(Y_aligned, S)

    def test_global_sign_flip(self, rng):
        S = rng.standard_normal((3, 40))
        alignment, Y_aligned = align(S, -S, SourceDomain.ANTISPARSE)
        assert alignment.perm == (0, 1, 2)
        assert np.all(alignment.signs == -1.0)
        assert np.array_equal(Y_aligned, S)
        per, mean = msnr_db(S, Y_aligned)
        assert mean == metrics.SNR_CAP_DB

    def test_row_swap(self, rng):
        S = rng.standard_normal((3, 40))
        Y = S[[1, 0, 2]]
        alignment, Y_aligned = align(S, Y, SourceDomain.SPARSE)
        assert alignment.perm == (1, 0, 2)
        assert np.array_equal(Y_aligned, S)

    def test_nonnegative_domains_fix_signs(self, rng):
        S = np.abs(rng.standard_normal((3, 40)))
        alignment, _ = align(S, -S, SourceDomain.SIMPLEX)
        assert np.all(alignment.signs == 1.0)

    def test_too_large(self, rng):
        S = rng.standard_normal((9, 4))
        with pytest.raises(TooLargeForExactAlignment):
            align(S, S, SourceDomain.ANTISPARSE)

    def test_matches_exhaustive_oracle(self, rng):
        for trial in range(100):
            n = int(rng.integers(2, 5))
            S = rng.standard_normal((n, 30))
            Y = rng.standard_normal((n, 30)) + 0.5 * S[rng.permutation(n)]
            _, _, mean = aligned_msnr_db(S, Y, SourceDomain.ANTISPARSE)
            oracle = exhaustive_alignment_oracle(S, Y, allow_flip=True)
            assert mean == pytest.approx(oracle, abs=1e-12)

    def test_invariant_under_permutation_and_signs(self, rng):
        S = rng.standard_normal((4, 60))
        Y = S + 0.1 * rng.standard_normal((4, 60))
        _, _, base = aligned_msnr_db(S, Y, SourceDomain.ANTISPARSE)
        for _ in range(10):
            perm = rng.permutation(4)
            signs = rng.choice([-1.0, 1.0], 4)
            Y_t = signs[:, None] * Y[perm]
            _, _, mean = aligned_msnr_db(S, Y_t, SourceDomain.ANTISPARSE)
            assert abs(mean - base) < 1e-12


class TestMsnr:
    def test_exact_recovery_capped(self, rng):
        S = rng.standard_normal((3, 20))
        per, mean = msnr_db(S, S)
        assert np.all(per == metrics.SNR_CAP_DB)
        assert mean == metrics.SNR_CAP_DB

    def test_hand_case(self):
        S = np.eye(2)
        Y = np.array([[0.9, 0.1], [0.1, 0.9]])
        per, mean = msnr_db(S, Y)
        expected = 10 * math.log10(1.0 / 0.02)
        assert per[0] == pytest.approx(expected, abs=1e-10)
        assert per[1] == pytest.approx(expected, abs=1e-10)
        assert mean == pytest.approx(16.9897, abs=1e-3)

    def test_joint_scaling_invariance(self, rng):
        S = rng.standard_normal((3, 30))
        Y = S + 0.2 * rng.standard_normal((3, 30))
        _, base = msnr_db(S, Y)
        for c in (0.3, -2.0, 17.5):
            _, scaled = msnr_db(c * S, c * Y)
            assert abs(scaled - base) < 1e-10

    def test_mean_is_arithmetic_average(self, rng):
        S = rng.standard_normal((4, 25))
        Y = S + 0.3 * rng.standard_normal((4, 25))
        per, mean = msnr_db(S, Y)
        assert mean == np.mean(per)

    def test_rejects_zero_source(self):
        S = np.zeros((2, 10))
        with pytest.raises(InvalidInput):
            msnr_db(S, S)


class TestConfidenceInterval:
    def test_identical_samples(self):
        mean, half = confidence_interval([3.7] * 30)
        assert mean == pytest.approx(3.7)
        assert half == 0.0

    def test_uses_t_critical_value_n30(self, rng):
        xs = rng.standard_normal(30)
        mean, half = confidence_interval(xs)
        sd = np.std(xs, ddof=1)
        assert half == pytest.approx(2.045 * sd / np.sqrt(30), rel=1e-3)

    def test_symmetric_data(self):
        mean, half = confidence_interval([-1.5, 1.5] * 10)
        assert mean == 0.0

    def test_rejects_single_sample(self):
        with pytest.raises(InvalidInput):
            confidence_interval([1.0])
