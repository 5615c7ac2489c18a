import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240911)


def random_psd(rng, n, kind="wishart"):
    """Random PSD test matrices: three distinct constructions."""
    if kind == "gram_noise":
        G = np.sqrt(0.2) * np.eye(n) + rng.normal(0.0, np.sqrt(1.0 / 5.0), (n, n))
        C = G @ G.T
    elif kind == "wishart":
        A = rng.standard_normal((n, n + 2))
        C = A @ A.T / (n + 2)
    else:  # scaled correlation matrix
        A = rng.standard_normal((n, 2 * n + 1))
        W = A @ A.T
        d = np.sqrt(np.diag(W))
        R = W / np.outer(d, d)
        scales = rng.uniform(0.5, 2.0, n)
        C = R * np.outer(scales, scales)
    return 0.5 * (C + C.T)


PSD_KINDS = ("gram_noise", "wishart", "correlation")
