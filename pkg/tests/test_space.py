import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatbv.errors import NonPositiveLength, ResolutionTooSmall, UnsortedBreakpoints
from heatbv.space import (
    CircleGrid,
    EuclideanGrid,
    LineGrid,
    Pieces,
    TorusGrid,
    WeightedGraph,
    build_space,
    check_metric,
    halfline_set,
    interval_set,
    parse_edge_list,
    piecewise_field,
    sine_field,
)


def test_circle_four_points():
    sp = build_space(CircleGrid(1.0, 4))
    assert sp.n_points == 4
    assert np.allclose(sp.weights, 0.25)
    assert sp.dist(0, 2) == pytest.approx(0.5)


def test_line_weights_sum_to_length():
    sp = build_space(LineGrid(0.0, 1.0, 4))
    assert math.fsum(sp.weights) == pytest.approx(1.0, rel=1e-12)


def test_torus_distance_to_antipode():
    sp = build_space(TorusGrid(1.0, 16))
    assert sp.n_points == 256
    # cell-centred points: (0,0) and (8,8) are half a period apart on both axes
    assert sp.dist(0, 8 * 16 + 8) == pytest.approx(math.sqrt(2) / 2)


@pytest.mark.parametrize("geom, volume", [
    (LineGrid(-8.0, 8.0, 1000), 16.0),
    (CircleGrid(2.5, 333), 2.5),
    (TorusGrid(1.5, 20, 2), 2.25),
    (EuclideanGrid((0.0, 0.0), (1.0, 2.0), (10, 20)), 2.0),
])
def test_total_mass_equals_volume(geom, volume):
    assert build_space(geom).total_mass == pytest.approx(volume, rel=1e-12)


def test_resolution_and_length_errors():
    with pytest.raises(ResolutionTooSmall):
        build_space(CircleGrid(1.0, 3))
    with pytest.raises(NonPositiveLength):
        build_space(CircleGrid(0.0, 10))
    with pytest.raises(NonPositiveLength):
        build_space(LineGrid(1.0, 1.0, 10))


def test_ball_mass_on_circle_arc():
    sp = build_space(CircleGrid(1.0, 100))
    m = sp.ball_mass(0, 0.25)
    assert 0.49 - 1e-12 <= m <= 0.50 + 1e-12
    assert sp.ball_mass(0, sp.diameter + 1) == pytest.approx(sp.total_mass)


def test_ball_mass_disc_area():
    sp = build_space(EuclideanGrid((0.0, 0.0), (1.0, 1.0), (50, 50)))
    centre = 25 * 50 + 25  # node at (0.51, 0.51)
    # quadrature oracle at 10x resolution around the same centre
    c = sp.points[centre]
    xs = (np.arange(500) + 0.5) / 500
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    ref = np.count_nonzero((X - c[0]) ** 2 + (Y - c[1]) ** 2 < 0.09) / 500**2
    assert ref == pytest.approx(math.pi * 0.09, abs=2e-3)
    assert abs(sp.ball_mass(centre, 0.3) - ref) <= 2 * 2 * math.pi * 0.3 * 0.02


def test_ball_mass_uses_strict_inequality():
    sp = build_space(CircleGrid(1.0, 8))
    # neighbours sit at exactly 0.125
    assert sp.ball_mass(0, 0.125) == pytest.approx(0.125)
    assert sp.ball_mass(0, 0.125 + 1e-9) == pytest.approx(0.375)


@pytest.mark.parametrize("geom", [CircleGrid(1.0, 64), TorusGrid(1.0, 24), LineGrid(0, 1, 64)])
def test_doubling_at_moderate_radii(geom):
    # the stated slack 8/N covers radii spanning at least N/8 cells
    sp = build_space(geom)
    n_axis = sp.axes[0].n
    for c in range(0, sp.n_points, max(1, sp.n_points // 7)):
        for r in np.linspace(n_axis / 8 * sp.spacing, sp.diameter / 4, 6, endpoint=False):
            ratio = sp.ball_mass(c, 2 * r) / sp.ball_mass(c, r)
            assert ratio <= 2**sp.dim * (1 + 8 / n_axis)


@pytest.mark.parametrize("geom", [CircleGrid(1.0, 64), TorusGrid(1.0, 24), LineGrid(0, 1, 64)])
def test_doubling_with_cell_slack(geom):
    sp = build_space(geom)
    h = sp.spacing
    for c in range(0, sp.n_points, max(1, sp.n_points // 7)):
        for r in np.linspace(2 * h, sp.diameter / 4, 9):
            ratio = sp.ball_mass(c, 2 * r) / sp.ball_mass(c, r)
            assert ratio <= 2**sp.dim * (1 + 2 * h / r) ** sp.dim


def test_metric_axioms_spot_checked():
    for geom in (TorusGrid(1.0, 8, 3), EuclideanGrid((0, 0), (1, 1), (7, 9))):
        check_metric(build_space(geom), n_triples=1000, seed=1)


def test_graph_from_edge_list():
    text = "0 1 2.0\n1 2 1.0\n# comment\n2 0 4.0\n"
    assert parse_edge_list(text) == [(0, 1, 2.0), (1, 2, 1.0), (2, 0, 4.0)]
    sp = build_space(WeightedGraph.from_edge_list(text, vertex_weights=[1.0, 2.0, 3.0]))
    assert sp.total_mass == pytest.approx(6.0)
    # edge length is 1/w; 0 -> 2 directly costs 0.25, via 1 costs 1.5
    assert sp.dist(0, 2) == pytest.approx(0.25)
    assert sp.dist(0, 1) == pytest.approx(0.5)


def test_edge_list_rejects_bad_weights():
    with pytest.raises(ValueError):
        parse_edge_list("0 1 -1")


def test_interval_set_jumps_alternate():
    sp = build_space(CircleGrid(1.0, 64))
    E = interval_set(sp, [(0.125, 0.375), (0.5, 0.75)])
    orient = [o for _, o in E.jumps]
    assert orient == [1, -1, 1, -1]
    assert E.boundary_oracle["perimeter"] == 4.0
    assert E.measure == pytest.approx(0.5)


def test_wrapping_arc():
    sp = build_space(CircleGrid(1.0, 64))
    E = interval_set(sp, [(0.75, 1.25)])
    assert E.measure == pytest.approx(0.5)
    assert [x for x, _ in E.jumps] == [0.25, 0.75]
    assert E.membership[0] and not E.membership[32]


def test_complement_and_set_algebra():
    sp = build_space(CircleGrid(1.0, 64))
    A = interval_set(sp, [(0.0, 0.5)])
    B = interval_set(sp, [(0.25, 0.75)])
    assert (A | B).measure == pytest.approx(0.75)
    assert (A & B).measure == pytest.approx(0.25)
    assert (A - B).measure == pytest.approx(0.25)
    assert A.complement().measure == pytest.approx(0.5)
    assert len((A | B).jumps) == 2


def test_halfline_on_line():
    sp = build_space(LineGrid(-1.0, 1.0, 8))
    E = halfline_set(sp, 0.0)
    assert E.jumps == [(0.0, 1)]
    assert halfline_set(sp, 0.0, side=-1).jumps == [(0.0, -1)]


def test_pieces_validation():
    with pytest.raises(UnsortedBreakpoints):
        Pieces(np.array([0.5, 0.2]), np.array([0.0, 1.0, 0.0]))
    with pytest.raises(ValueError):
        Pieces(np.array([0.2]), np.array([0.0, 1.0]), period=1.0)


def test_piecewise_field_sum_keeps_pieces():
    sp = build_space(CircleGrid(8.0, 64))
    f = interval_set(sp, [(0, 2)]).field() + interval_set(sp, [(1, 3)]).field()
    assert list(f.pieces.breakpoints) == [0, 1, 2, 3]
    assert list(f.pieces.levels) == [0, 1, 2, 1, 0]
    assert np.array_equal(f.values, f.pieces(sp.coords))


@given(st.lists(st.floats(0.01, 0.99), min_size=2, max_size=8, unique=True))
@settings(max_examples=60, deadline=None)
def test_union_of_intervals_matches_sampling(points):
    pts = sorted(points)
    ivs = [(pts[i], pts[i + 1]) for i in range(0, len(pts) - 1, 2)]
    sp = build_space(CircleGrid(1.0, 128))
    E = interval_set(sp, ivs)
    x = sp.coords
    direct = np.zeros(x.size, bool)
    for a, b in ivs:
        direct |= (x >= a) & (x < b)
    assert np.array_equal(E.membership, direct)
    assert len(E.jumps) % 2 == 0


def test_sine_field_derivative_oracle():
    sp = build_space(CircleGrid(1.0, 16))
    f = sine_field(sp, 2.0)
    assert np.allclose(f.derivative_oracle, np.abs(4 * math.pi * np.cos(2 * math.pi * sp.coords)))


def test_scaled_field():
    sp = build_space(CircleGrid(1.0, 16))
    f = piecewise_field(sp, [0.25, 0.5], [0.0, 1.0, 0.0])
    g = 2.0 * f
    assert list(g.pieces.levels) == [0, 2, 0]
