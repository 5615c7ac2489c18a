import numpy as np
import pytest

from pem_bss import datagen
from pem_bss.datagen import (
    MixingDistribution,
    gen_mixing,
    mix_with_noise,
    sample_copula_t_source,
    sample_uniform_source,
    take_first_rows,
)
from pem_bss.domains import SourceDomain, contains
from pem_bss.errors import DomainMismatch, InvalidInput
from pem_bss.streams import stream


def columns_contained(batch, tol=1e-9):
    return all(contains(batch.domain, batch.S[:, t], tol) for t in range(min(batch.T, 2000)))


class TestUniformSources:
    def test_simplex_columns_sum_to_one(self):
        batch = sample_uniform_source(SourceDomain.SIMPLEX, 4, 500, seed=3)
        assert np.max(np.abs(batch.S.sum(axis=0) - 1.0)) < 1e-12

    def test_antisparse_mean_clt_bound(self):
        batch = sample_uniform_source(SourceDomain.ANTISPARSE, 5, 100_000, seed=1)
        means = batch.S.mean(axis=1)
        assert np.all(np.abs(means) < 0.02)

    def test_sparse_radius_moment(self):
        # E ||s||_1 = E U^(1/n) = n/(n+1) = 2/3 for n=2
        batch = sample_uniform_source(SourceDomain.SPARSE, 2, 100_000, seed=2)
        assert abs(np.abs(batch.S).sum(axis=0).mean() - 2 / 3) < 0.01

    def test_every_domain_contained(self):
        for domain in SourceDomain:
            batch = sample_uniform_source(domain, 3, 2000, seed=7)
            assert columns_contained(batch)

    def test_deterministic(self):
        a = sample_uniform_source(SourceDomain.SPARSE, 3, 100, seed=11)
        b = sample_uniform_source(SourceDomain.SPARSE, 3, 100, seed=11)
        assert np.array_equal(a.S, b.S)

    def test_rejects_small_n(self):
        with pytest.raises(InvalidInput):
            sample_uniform_source(SourceDomain.SPARSE, 1, 10, seed=0)


class TestCopulaSources:
    def test_rho_zero_uncorrelated(self):
        batch = sample_copula_t_source(SourceDomain.ANTISPARSE, 3, 100_000, 0.0, seed=5)
        C = np.corrcoef(batch.S)
        off = C[~np.eye(3, dtype=bool)]
        assert np.max(np.abs(off)) < 0.02

    def test_marginals_uniform_ks(self):
        # KS statistic against U[0,1] per coordinate, for every rho
        T = 100_000
        for rho in (0.0, 0.1, 0.2, 0.3, 0.4, 0.5):
            batch = sample_copula_t_source(SourceDomain.NN_ANTISPARSE, 3, T, rho, seed=9)
            for row in batch.S:
                u = np.sort(row)
                grid = np.arange(1, T + 1) / T
                ks = max(np.max(np.abs(grid - u)), np.max(np.abs(u - (grid - 1 / T))))
                assert ks < 0.01

    def test_antisparse_maps_to_symmetric_box(self):
        batch = sample_copula_t_source(SourceDomain.ANTISPARSE, 2, 50_000, 0.2, seed=4)
        assert columns_contained(batch)
        assert batch.S.min() < -0.9 and batch.S.max() > 0.9

    def test_correlation_monotone_in_rho(self):
        def mean_corr(rho):
            batch = sample_copula_t_source(SourceDomain.ANTISPARSE, 3, 50_000, rho, seed=21)
            C = np.corrcoef(batch.S)
            return C[~np.eye(3, dtype=bool)].mean()

        assert mean_corr(0.4) > mean_corr(0.0) + 0.1

    def test_rejects_non_box_domain(self):
        with pytest.raises(DomainMismatch):
            sample_copula_t_source(SourceDomain.SPARSE, 3, 10, 0.2, seed=0)

    def test_rejects_bad_rho(self):
        with pytest.raises(InvalidInput):
            sample_copula_t_source(SourceDomain.ANTISPARSE, 3, 10, 1.0, seed=0)


class TestMixing:
    def test_rademacher_entries(self):
        A = gen_mixing(6, 3, MixingDistribution.RADEMACHER, seed=1)
        assert set(np.unique(A)) <= {-1.0, 1.0}

    def test_gaussian_variance(self):
        A = gen_mixing(10, 5, MixingDistribution.GAUSSIAN, seed=2)
        assert abs(A.var() - 1.0) < 0.15 * 3  # 50 entries, loose concentration

    def test_unit_variance_all_distributions(self):
        rng = stream(0, "dist-check")
        for dist in MixingDistribution:
            draws = dist.sample(rng, (1000, 1000))
            assert abs(draws.var() - 1.0) < 0.05
            assert abs(draws.mean()) < 0.01

    def test_full_column_rank(self):
        for dist in MixingDistribution:
            A = gen_mixing(8, 4, dist, seed=3)
            assert np.linalg.matrix_rank(A) == 4

    def test_deterministic(self):
        a = gen_mixing(10, 5, MixingDistribution.LAPLACE, seed=13)
        b = gen_mixing(10, 5, MixingDistribution.LAPLACE, seed=13)
        assert np.array_equal(a, b)

    def test_rejects_underdetermined(self):
        with pytest.raises(InvalidInput):
            gen_mixing(3, 5, MixingDistribution.GAUSSIAN, seed=0)


class TestTakeFirstRows:
    def test_full_prefix_identity(self):
        A = gen_mixing(13, 5, seed=0)
        assert np.array_equal(take_first_rows(A, 13), A)

    def test_prefix_rows(self):
        A = gen_mixing(13, 5, seed=0)
        assert np.array_equal(take_first_rows(A, 7), A[:7])

    def test_rejects_short_prefix(self):
        A = gen_mixing(13, 5, seed=0)
        with pytest.raises(InvalidInput):
            take_first_rows(A, 4)


class TestMixWithNoise:
    def test_noiseless_exact(self):
        batch = sample_uniform_source(SourceDomain.ANTISPARSE, 3, 50, seed=1)
        A = gen_mixing(6, 3, seed=1)
        X, sigma2 = mix_with_noise(A, batch, None, seed=1)
        assert sigma2 == 0.0
        assert np.array_equal(X, A @ batch.S)

    def test_sigma2_formula(self):
        batch = sample_uniform_source(SourceDomain.ANTISPARSE, 3, 200, seed=2)
        A = gen_mixing(6, 3, seed=2)
        X, sigma2 = mix_with_noise(A, batch, 30.0, seed=2)
        AS = A @ batch.S
        p_sig = np.sum(AS**2) / AS.size
        assert sigma2 == pytest.approx(p_sig / 1000.0, rel=1e-15)

    def test_empirical_snr(self):
        batch = sample_uniform_source(SourceDomain.ANTISPARSE, 5, 100_000, seed=3)
        A = gen_mixing(10, 5, seed=3)
        X, _ = mix_with_noise(A, batch, 30.0, seed=3)
        AS = A @ batch.S
        snr = 10 * np.log10(np.sum(AS**2) / np.sum((X - AS) ** 2))
        assert abs(snr - 30.0) < 0.1

    def test_noise_stream_independent_of_sources(self):
        # same seed: changing the source draw must not change the noise draw
        b1 = sample_uniform_source(SourceDomain.ANTISPARSE, 3, 100, seed=4)
        A = gen_mixing(6, 3, seed=4)
        X1, _ = mix_with_noise(A, b1, 20.0, seed=4)
        X2, _ = mix_with_noise(A, b1, 20.0, seed=4)
        assert np.array_equal(X1, X2)


class TestBatchContainer:
    def test_roundtrip(self, tmp_path):
        batch = sample_uniform_source(SourceDomain.NN_SPARSE, 3, 64, seed=6)
        A = gen_mixing(5, 3, seed=6)
        X, _ = mix_with_noise(A, batch, 25.0, seed=6)
        path = tmp_path / "dump.pemb"
        datagen.write_batch(path, batch, A, X)
        S2, A2, X2, domain = datagen.read_batch(path)
        assert np.array_equal(S2, batch.S)
        assert np.array_equal(A2, A)
        assert np.array_equal(X2, X)
        assert domain == SourceDomain.NN_SPARSE

    def test_magic_guard(self, tmp_path):
        path = tmp_path / "bogus.pemb"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(InvalidInput):
            datagen.read_batch(path)
