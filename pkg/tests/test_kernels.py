import math

import numpy as np
import pytest

from heatbv import _kernels_py, kernels


def _brute(f, g, k, periodic, p, mode):
    n = f.size
    tot = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            m = abs(i - j)
            if periodic:
                m = min(m, n - m)
            if m >= k.size:
                continue
            phi = (f[i] - f[j]) * (g[i] - g[j]) if mode == 1 else abs(f[i] - f[j]) ** p
            tot += k[m] * phi
    return tot


@pytest.mark.parametrize("periodic", [True, False])
@pytest.mark.parametrize("p, mode", [(1.0, 0), (2.0, 0), (1.5, 0), (1.0, 1)])
def test_offset_pair_sum_matches_brute_force(periodic, p, mode):
    rng = np.random.default_rng(3)
    n = 24
    f, g = rng.normal(size=n), rng.normal(size=n)
    k = rng.uniform(size=n // 2 + 1)
    ref = _brute(f, g, k, periodic, p, mode)
    for impl in (kernels.offset_pair_sum, _kernels_py.offset_pair_sum):
        assert impl(f, g, k, periodic, p, mode) == pytest.approx(ref, rel=1e-13)


def test_periodic_offset_limit_enforced():
    f = np.zeros(8)
    with pytest.raises(ValueError):
        kernels.offset_pair_sum(f, f, np.ones(6), True, 1.0, 0)


def test_dense_pair_sum_blocks_add_up():
    rng = np.random.default_rng(5)
    n = 40
    A = rng.uniform(size=(n, n))
    K = np.ascontiguousarray(A + A.T)
    f, g, w = rng.normal(size=n), rng.normal(size=n), rng.uniform(0.5, 1.5, size=n)
    whole = kernels.dense_pair_sum(K, 0, f, g, w, 2.0, 0)
    parts = [kernels.dense_pair_sum(np.ascontiguousarray(K[a:a + 7]), a, f, g, w, 2.0, 0)
             for a in range(0, n, 7)]
    ref = np.sum(K * (f[:, None] - f[None, :]) ** 2 * w[:, None] * w[None, :])
    assert whole == pytest.approx(ref, rel=1e-13)
    assert math.fsum(parts) == pytest.approx(ref, rel=1e-13)
    assert _kernels_py.dense_pair_sum(K, 0, f, g, w, 2.0, 0) == pytest.approx(ref, rel=1e-13)


def test_compensated_sum_keeps_small_terms():
    # one 1e8 term followed by 3999 terms of 1e-8, each below half an ulp of 1e8
    n = 4001
    f = np.concatenate([[1e8], 1e-8 * np.arange(n - 1)])
    k = np.array([0.0, 0.5])
    exact = 1e8 + (n - 2) * 1e-8
    for impl in (kernels.offset_pair_sum, _kernels_py.offset_pair_sum):
        assert impl(f, f, k, False, 1.0, 0) == pytest.approx(exact, abs=3e-8)


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
