import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatbv.calculus import (
    EnergyReport,
    cheeger_energy,
    discrete_slope,
    jump_data,
    perimeter,
    shared_jump_pairing,
    total_variation,
)
from heatbv.errors import NoBoundaryOracle, NoDerivativeSource, UnsortedBreakpoints, UnsupportedGeometry
from heatbv.space import (
    CircleGrid,
    LineGrid,
    ScalarField,
    TorusGrid,
    WeightedGraph,
    build_space,
    cell_set,
    interval_set,
    piecewise_field,
    sample_field,
    sine_field,
)


@pytest.fixture(scope="module")
def circle8():
    return build_space(CircleGrid(8.0, 1024))


# --------------------------------------------------------------------------
# jump data


def test_interval_jump_data(circle8):
    E = interval_set(circle8, [(1.0, 3.0)])
    jd = jump_data(E)
    assert list(jd.jump_points) == [1.0, 3.0]
    assert list(jd.sizes) == [1.0, 1.0]
    assert list(jd.orientation) == [1, -1]


def test_scaled_interval_sizes():
    jd = jump_data(([0.5, 2.0], [0.0, 2.0, 0.0]))
    assert list(jd.sizes) == [2.0, 2.0]
    assert jd.total_variation == 4.0


def test_overlapping_indicator_sum(circle8):
    f = piecewise_field(circle8, [0, 1, 2, 3], [0, 1, 2, 1, 0])
    jd = jump_data(f)
    assert list(jd.jump_points) == [0, 1, 2, 3]
    assert list(jd.sizes) == [1, 1, 1, 1]
    assert list(jd.orientation) == [1, 1, -1, -1]
    assert np.all(jd.lower < jd.upper)


def test_unsorted_breakpoints():
    with pytest.raises(UnsortedBreakpoints):
        jump_data(([1.0, 0.5], [0, 1, 0]))


def test_jump_data_needs_breakpoints(circle8):
    with pytest.raises(UnsupportedGeometry):
        jump_data(sine_field(circle8))


def test_shared_jump_pairing(circle8):
    f = piecewise_field(circle8, [0, 1, 2, 3], [0, 1, 2, 1, 0])
    g = interval_set(circle8, [(1, 3)])
    assert shared_jump_pairing(jump_data(f), jump_data(g)) == 2.0
    opposite = jump_data(([1.0, 3.0], [1.0, 0.0, 1.0]))
    assert shared_jump_pairing(jump_data(f), opposite) == -2.0
    far = jump_data(([5.0, 6.0], [0.0, 1.0, 0.0]))
    assert shared_jump_pairing(jump_data(f), far) == 0.0


# --------------------------------------------------------------------------
# energies


def test_sine_energy_oracle_vs_discrete():
    sp = build_space(CircleGrid(1.0, 2048))
    f = sine_field(sp)
    exact = 2 * math.pi**2
    assert cheeger_energy(f, 2).value == pytest.approx(exact, rel=1e-12)
    # second-order symmetric quotient: relative error (2 pi h)^2 / 3
    h = sp.spacing
    assert cheeger_energy(f, 2, "discrete-slope").value == pytest.approx(exact, rel=2 * (2 * math.pi * h) ** 2)


def test_discrete_slope_open_line_linear():
    sp = build_space(LineGrid(0, 1, 50))
    f = sample_field(sp, lambda x: 3 * x)
    assert np.allclose(discrete_slope(f), 3.0, atol=1e-12)


def test_discrete_slope_torus_norm():
    sp = build_space(TorusGrid(1.0, 64))
    x, y = sp.points[:, 0], sp.points[:, 1]
    f = ScalarField(sp, np.sin(2 * math.pi * x) + np.sin(2 * math.pi * y))
    s = discrete_slope(f)
    w = 2 * math.pi
    exact = np.hypot(w * np.cos(w * x), w * np.cos(w * y))
    # symmetric quotient of sin(w x): relative error (w h)^2 / 6 per axis
    h = sp.spacing
    assert np.max(np.abs(s - exact)) <= 1.01 * (w * h) ** 2 / 6 * np.max(exact)


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0])
@pytest.mark.parametrize("c", [-2.5, 0.3, 4.0])
def test_energy_homogeneity(p, c):
    sp = build_space(CircleGrid(1.0, 512))
    f = sine_field(sp)
    cf = sine_field(sp, amplitude=c)
    for method in ("oracle", "discrete-slope"):
        a = cheeger_energy(cf, p, method).value
        b = abs(c) ** p * cheeger_energy(f, p, method).value
        assert a == pytest.approx(b, rel=1e-13)


def test_energy_of_constant_is_zero(circle8):
    f = ScalarField(circle8, np.full(circle8.n_points, 2.0))
    assert cheeger_energy(f, 2).value == 0.0


def test_energy_requires_a_source():
    sp = build_space(WeightedGraph(3, ((0, 1, 1.0), (1, 2, 1.0))))
    with pytest.raises(NoDerivativeSource):
        cheeger_energy(ScalarField(sp, [0.0, 1.0, 2.0]), 2)


def test_energy_report_validation():
    with pytest.raises(ValueError):
        EnergyReport(2.0, -1.0, "oracle")
    with pytest.raises(ValueError):
        EnergyReport(2.0, 1.0, "guess")


# --------------------------------------------------------------------------
# total variation, coarea, perimeter


def test_step_total_variation_and_coarea(circle8):
    f = piecewise_field(circle8, [0.5, 1.0, 2.0, 3.5, 5.0], [0, 1.5, -0.25, 3.0, 1.0, 0])
    tv = total_variation(f).value
    assert tv == pytest.approx(1.5 + 1.75 + 3.25 + 2.0 + 1.0, abs=1e-15)
    assert total_variation(f, method="coarea").value == pytest.approx(tv, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-6, 6), min_size=2, max_size=7))
def test_coarea_property_for_steps(levels):
    sp = build_space(LineGrid(0, 8, 256))
    lv = [float(v) for v in levels]
    bps = [0.5 + i for i in range(len(lv) - 1)]
    f = piecewise_field(sp, bps, lv)
    tv = total_variation(f).value
    assert tv == pytest.approx(math.fsum(abs(a - b) for a, b in zip(lv[:-1], lv[1:])))
    assert total_variation(f, method="coarea").value == pytest.approx(tv, abs=1e-9)


def test_sampled_sine_coarea_sweep(circle4096):
    f = ScalarField(circle4096, np.sin(2 * math.pi * circle4096.coords))
    assert total_variation(f).value == pytest.approx(4.0, abs=1e-5)
    assert total_variation(f, method="coarea").value == pytest.approx(4.0, abs=1e-4)


def test_generic_sampled_field_coarea_matches_neighbour_sum():
    sp = build_space(CircleGrid(1.0, 1024))
    x = sp.coords
    f = ScalarField(sp, np.sin(2 * math.pi * x) + 0.3 * np.cos(6 * math.pi * x) ** 3)
    direct = total_variation(f).value
    assert total_variation(f, method="coarea").value == pytest.approx(direct, rel=1e-4)


def test_total_variation_is_1d_only():
    sp = build_space(TorusGrid(1.0, 8))
    with pytest.raises(UnsupportedGeometry):
        total_variation(ScalarField(sp, np.zeros(64)))


def test_perimeter_counts_jumps(circle8):
    E = interval_set(circle8, [(1, 2), (4, 6)])
    assert perimeter(E) == 4.0
    assert perimeter(E.complement()) == 4.0


def test_perimeter_of_wrapping_arc(circle8):
    E = interval_set(circle8, [(7.0, 9.0)])
    assert perimeter(E) == 2.0
    assert E.measure == pytest.approx(2.0)


def test_perimeter_of_square_on_torus():
    sp = build_space(TorusGrid(1.0, 32))
    mask = np.zeros((32, 32), dtype=bool)
    mask[8:24, 4:12] = True  # a 0.5 x 0.25 box
    E = cell_set(sp, mask)
    assert perimeter(E) == pytest.approx(2 * (0.5 + 0.25))
    assert perimeter(E.complement()) == pytest.approx(perimeter(E))


def test_graph_perimeter_unavailable():
    sp = build_space(WeightedGraph(3, ((0, 1, 1.0), (1, 2, 1.0))))
    from heatbv.space import IndicatorSet

    with pytest.raises(NoBoundaryOracle):
        perimeter(IndicatorSet(sp, [True, False, False]))
