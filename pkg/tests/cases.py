"""Seeded instance factories shared by the test modules."""

import numpy as np

from doptbb.model import BINARY, INTEGER, Instance, gen_binary_gaussian


def binary_case(seed: int) -> Instance:
    """Gaussian 0/1 instance with n <= 10 and m <= 4."""
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(5, 11))
    m = int(rng.integers(2, min(4, n - 1) + 1))
    s = int(rng.integers(m, n))
    return gen_binary_gaussian(n, m, rng, s=s)


def integer_case(seed: int) -> Instance:
    """Gaussian integer instance with n <= 7 and 1 <= u <= 3."""
    rng = np.random.default_rng(2000 + seed)
    while True:
        n = int(rng.integers(4, 8))
        m = int(rng.integers(2, 4))
        A = rng.standard_normal((n, m))
        u = rng.integers(1, 4, size=n)
        if u.sum() <= m:
            continue
        s = int(rng.integers(m, min(int(u.sum()), n + 3) + 1))
        return Instance(A, np.zeros(n, np.int64), u, s, INTEGER)


def random_pd(rng, m: int) -> np.ndarray:
    X = rng.standard_normal((m + 3, m))
    return X.T @ X + 0.1 * np.eye(m)


__all__ = ["BINARY", "binary_case", "integer_case", "random_pd"]
