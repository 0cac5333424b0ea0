import math

import numpy as np
import pytest

from heatbv.errors import SpaceTooLarge
from heatbv.functionals import bv_functional, jump_functional, set_functional, sobolev_functional
from heatbv.heat import HeatKernelEngine, Spectral
from heatbv.oracle import (
    OracleValue,
    halfline_bv_exact,
    oracle_kernel,
    pair_enumeration,
    quadrature_energy,
)
from heatbv.space import CircleGrid, ScalarField, TorusGrid, WeightedGraph, build_space, interval_set, sine_field


@pytest.fixture(scope="module")
def circle128():
    return build_space(CircleGrid(1.0, 128))


def test_oracle_value_bound_positive():
    with pytest.raises(ValueError):
        OracleValue(1.0, "pair-enumeration", 0.0)
    ov = OracleValue(1.0, "cross-engine", 1e-3)
    assert ov.agrees(1.0005) and not ov.agrees(1.01)


def test_halfline_exact_values():
    import mpmath as mp

    for t in (0.01, 1.0, 0.37):
        ov = halfline_bv_exact(t)
        # twice the integral of erfc(x / 2 sqrt t) / 2 over x > 0
        quad = mp.quad(lambda x: mp.erfc(x / (2 * mp.sqrt(t))), [0, mp.inf])
        assert ov.agrees(float(quad))
        assert ov.value / math.sqrt(t) == pytest.approx(2 / math.sqrt(math.pi), rel=1e-15)
    assert halfline_bv_exact(0.01).value == pytest.approx(0.11283792, abs=1e-8)


def test_quadrature_energy_sine(circle128):
    f = sine_field(circle128)
    two = quadrature_energy(f, 2)
    assert abs(two.value - 2 * math.pi**2) < 1e-9
    assert two.bound < 1e-9
    one = quadrature_energy(f, 1)
    assert abs(one.value - 4.0) < 1e-9
    assert one.method == "quadrature-10x"


def test_quadrature_energy_constant(circle128):
    from heatbv.space import sample_field

    f = sample_field(circle128, lambda x: np.full_like(x, 2.0), lambda x: np.zeros_like(x))
    assert quadrature_energy(f, 2).value == 0.0


def test_quadrature_energy_needs_formula(circle128):
    with pytest.raises(ValueError):
        quadrature_energy(ScalarField(circle128, np.zeros(128)), 2)


def test_pair_enumeration_limits():
    sp = build_space(CircleGrid(1.0, 600))
    with pytest.raises(SpaceTooLarge):
        pair_enumeration(sp, "bv", (np.zeros(600),), 0.01)


def test_oracle_kernel_symmetric_positive(circle128):
    K = oracle_kernel(circle128, 0.01)
    assert np.all(K > 0)
    assert np.max(np.abs(K - K.T)) == 0


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_enumeration_matches_sobolev(circle128, p):
    f = sine_field(circle128)
    eng = HeatKernelEngine(circle128)
    ov = pair_enumeration(circle128, "sobolev", (f, p), 1e-2)
    val = sobolev_functional(eng, f, p, 1e-2, paths=("double-sum",)).value
    assert val == pytest.approx(ov.value, rel=1e-12)


def test_enumeration_matches_both_set_paths(circle128):
    E = interval_set(circle128, [(0.25, 0.75)])
    eng = HeatKernelEngine(circle128)
    for q in ("point", "cell"):
        ov = pair_enumeration(circle128, "set", (E,), 2e-3, quadrature=q)
        s = set_functional(eng, E, 2e-3, quadrature=q)
        assert s.by_path("heat-apply") == pytest.approx(ov.value, rel=1e-12)
        assert s.by_path("double-sum") == pytest.approx(ov.value, rel=1e-12)


def test_enumeration_zero_field(circle128):
    assert pair_enumeration(circle128, "bv", (np.zeros(128),), 0.1).value == 0.0


def test_enumeration_jump_kind(circle128):
    E = interval_set(circle128, [(0.25, 0.75)])
    F = interval_set(circle128, [(0.5, 0.75)])
    eng = HeatKernelEngine(circle128)
    ov = pair_enumeration(circle128, "jump", (E, F), 1e-3, quadrature="cell")
    s = jump_functional(eng, E, F, 1e-3)
    assert s.value == pytest.approx(ov.value, rel=1e-12)
    assert s.by_path("double-sum") == pytest.approx(ov.value, rel=1e-12)


def test_enumeration_on_torus():
    sp = build_space(TorusGrid(1.0, 16))
    rng = np.random.default_rng(0)
    f = ScalarField(sp, rng.standard_normal(256))
    eng = HeatKernelEngine(sp)
    ov = pair_enumeration(sp, "bv", (f,), 5e-3)
    assert bv_functional(eng, f, 5e-3).value == pytest.approx(ov.value, rel=1e-12)


def test_enumeration_on_graph_matches_spectral_engine():
    # a cycle with conductance 1/h is the circle Laplacian's finite-difference model
    n = 40
    h = 1.0 / n
    sp = build_space(WeightedGraph(n, tuple((i, (i + 1) % n, 1.0 / h) for i in range(n)),
                                   tuple([h] * n)))
    f = np.sin(2 * math.pi * np.arange(n) / n)
    eng = HeatKernelEngine(sp, Spectral())
    ov = pair_enumeration(sp, "sobolev", (f, 2.0), 0.02)
    assert sobolev_functional(eng, f, 2, 0.02, paths=("double-sum",)).value == pytest.approx(ov.value, rel=1e-10)
