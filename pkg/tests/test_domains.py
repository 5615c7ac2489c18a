import numpy as np
import pytest

from pem_bss import domains
from pem_bss.domains import SourceDomain, apply_nonlinearity, contains, euclidean_project, update_threshold
from pem_bss.errors import DomainMismatch, InvalidInput

ALL = list(SourceDomain)
BOXES = [SourceDomain.ANTISPARSE, SourceDomain.NN_ANTISPARSE]


class TestNonlinearity:
    def test_antisparse_clips(self):
        out = apply_nonlinearity(SourceDomain.ANTISPARSE, [1.5, -0.3])
        assert np.array_equal(out, [1.0, -0.3])

    def test_sparse_soft_threshold(self):
        out = apply_nonlinearity(SourceDomain.SPARSE, [0.7, -0.1], lambda_L=0.2)
        assert np.allclose(out, [0.5, 0.0], atol=1e-15)

    def test_simplex_shifted_relu(self):
        out = apply_nonlinearity(SourceDomain.SIMPLEX, [0.4, 0.1], lambda_L=-0.1)
        assert np.allclose(out, [0.5, 0.2], atol=1e-15)

    def test_nn_antisparse_clips(self):
        out = apply_nonlinearity(SourceDomain.NN_ANTISPARSE, [-0.5, 0.4, 2.0])
        assert np.array_equal(out, [0.0, 0.4, 1.0])

    def test_box_idempotent(self, rng):
        for domain in BOXES:
            u = rng.uniform(-3, 3, 50)
            once = apply_nonlinearity(domain, u)
            assert np.array_equal(apply_nonlinearity(domain, once), once)

    def test_rejects_nonfinite(self):
        with pytest.raises(InvalidInput):
            apply_nonlinearity(SourceDomain.ANTISPARSE, [np.inf])


class TestThresholdUpdate:
    def test_active_constraint_keeps_zero(self):
        y = np.array([0.6, -0.4])  # l1 norm exactly 1
        assert update_threshold(SourceDomain.SPARSE, 0.0, y, 0.7) == 0.0

    def test_nn_sparse_rectifies(self):
        y = np.array([0.2, 0.3])  # sum 0.5
        assert update_threshold(SourceDomain.NN_SPARSE, 0.1, y, 0.5) == 0.0

    def test_simplex_goes_negative(self):
        y = np.array([0.2, 0.3])
        assert update_threshold(SourceDomain.SIMPLEX, 0.1, y, 0.5) == pytest.approx(-0.15)

    def test_box_domains_rejected(self):
        for domain in BOXES:
            with pytest.raises(DomainMismatch):
                update_threshold(domain, 0.0, np.zeros(2), 0.5)


def grid_points(domain, step=0.01):
    ax = np.arange(-1.0, 1.0 + step / 2, step)
    if domain == SourceDomain.ANTISPARSE:
        X, Y = np.meshgrid(ax, ax)
        return np.column_stack([X.ravel(), Y.ravel()])
    if domain == SourceDomain.NN_ANTISPARSE:
        ax = np.arange(0.0, 1.0 + step / 2, step)
        X, Y = np.meshgrid(ax, ax)
        return np.column_stack([X.ravel(), Y.ravel()])
    if domain == SourceDomain.SIMPLEX:
        t = np.arange(0.0, 1.0 + step / 2, step)
        return np.column_stack([t, 1.0 - t])
    X, Y = np.meshgrid(ax, ax)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[np.abs(pts).sum(axis=1) <= 1.0 + 1e-12]
    if domain == SourceDomain.NN_SPARSE:
        pts = pts[(pts >= 0).all(axis=1)]
    return pts


class TestProjection:
    def test_simplex_symmetry(self):
        out = euclidean_project(SourceDomain.SIMPLEX, [0.5, 0.5, 0.5])
        assert np.allclose(out, [1 / 3] * 3, atol=1e-15)

    def test_sparse_axis_point(self):
        assert np.allclose(euclidean_project(SourceDomain.SPARSE, [2.0, 0.0]), [1.0, 0.0])

    def test_interior_fixed(self):
        v = np.array([0.2, -0.4])
        assert np.array_equal(euclidean_project(SourceDomain.ANTISPARSE, v), v)

    def test_projection_lands_inside(self, rng):
        for domain in ALL:
            for _ in range(50):
                v = rng.uniform(-2, 2, 4)
                assert contains(domain, euclidean_project(domain, v), 1e-9)

    def test_matches_grid_oracle(self, rng):
        # brute-force minimizer over a 0.01 grid of the 2-d domain
        for domain in ALL:
            pts = grid_points(domain)
            for _ in range(25):
                v = rng.uniform(-1.6, 1.6, 2)
                proj = euclidean_project(domain, v)
                best = pts[np.argmin(np.sum((pts - v) ** 2, axis=1))]
                assert np.max(np.abs(proj - best)) <= 0.02

    def test_idempotent(self, rng):
        for domain in ALL:
            v = rng.uniform(-2, 2, 5)
            once = euclidean_project(domain, v)
            assert np.allclose(euclidean_project(domain, once), once, atol=1e-12)


class TestSoftThresholdProx:
    def test_prox_of_l1_by_grid_search(self, rng):
        # scalar prox: argmin_p (p-u)^2/2 + lam |p|
        grid = np.arange(-3.0, 3.0, 0.001)
        for _ in range(40):
            u = rng.uniform(-2, 2)
            lam = rng.uniform(0.0, 1.0)
            best = grid[np.argmin(0.5 * (grid - u) ** 2 + lam * np.abs(grid))]
            st = domains.soft_threshold(np.array([u]), lam)[0]
            assert abs(st - best) < 0.005


class TestContains:
    def test_simplex_member(self):
        assert contains(SourceDomain.SIMPLEX, [0.3, 0.7], 1e-9)

    def test_sparse_nonmember(self):
        assert not contains(SourceDomain.SPARSE, [0.6, 0.6], 1e-9)

    def test_slack(self):
        assert contains(SourceDomain.NN_ANTISPARSE, [1 + 1e-10, 0.0], 1e-9)

    def test_rejects_negative_tol(self):
        with pytest.raises(InvalidInput):
            contains(SourceDomain.SIMPLEX, [1.0, 0.0], -1.0)

    def test_threshold_unit_flags(self):
        assert not SourceDomain.ANTISPARSE.requires_threshold_unit()
        assert not SourceDomain.NN_ANTISPARSE.requires_threshold_unit()
        for d in (SourceDomain.SPARSE, SourceDomain.NN_SPARSE, SourceDomain.SIMPLEX):
            assert d.requires_threshold_unit()

    def test_serialized_names(self):
        assert [d.value for d in SourceDomain] == [
            "antisparse",
            "nn_antisparse",
            "sparse",
            "nn_sparse",
            "simplex",
        ]
