"""Discrete metric measure spaces and the fields that live on them.

Grid geometries are cell-centred: point ``i`` sits at the midpoint of cell
``i`` and carries the cell volume as its weight, so cell faces fall on
``a + i*h``.  Breakpoints of piecewise-constant fields that lie on faces are
represented exactly; others are snapped to the nearest face by sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import (
    NonPositiveLength,
    ResolutionTooSmall,
    UnsortedBreakpoints,
    UnsupportedGeometry,
)

MIN_RESOLUTION = 4


# --------------------------------------------------------------------------
# geometry descriptors


@dataclass(frozen=True)
class LineGrid:
    a: float
    b: float
    n: int

    def describe(self) -> str:
        return f"line[{self.a:g},{self.b:g}]"


@dataclass(frozen=True)
class CircleGrid:
    length: float
    n: int

    def describe(self) -> str:
        return f"circle(L={self.length:g})"


@dataclass(frozen=True)
class TorusGrid:
    length: float
    n: int
    dim: int = 2

    def describe(self) -> str:
        return f"torus{self.dim}(L={self.length:g})"


@dataclass(frozen=True)
class EuclideanGrid:
    lower: tuple
    upper: tuple
    n: tuple

    def describe(self) -> str:
        box = "x".join(f"[{lo:g},{hi:g}]" for lo, hi in zip(self.lower, self.upper))
        return f"box{box}"


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph; ``edges`` holds ``(u, v, w)`` with conductance w > 0.

    Edge lengths for the path metric are ``1/w``: a cycle with spacing h and
    conductances 1/h reproduces both the circle metric and its Laplacian.
    """

    n_vertices: int
    edges: tuple
    vertex_weights: tuple | None = None

    def describe(self) -> str:
        return f"graph(V={self.n_vertices},E={len(self.edges)})"

    @classmethod
    def from_edge_list(cls, text: str, vertex_weights=None, n_vertices=None):
        edges = parse_edge_list(text)
        if n_vertices is None:
            n_vertices = 1 + max(max(u, v) for u, v, _ in edges) if edges else 0
        vw = None if vertex_weights is None else tuple(float(x) for x in vertex_weights)
        return cls(int(n_vertices), tuple(edges), vw)


def parse_edge_list(text: str) -> list[tuple[int, int, float]]:
    """Parse ``u v w`` lines (0-based vertices, w > 0); ``#`` starts a comment."""
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"edge list line {lineno}: expected 'u v w', got {raw!r}")
        u, v, w = int(parts[0]), int(parts[1]), float(parts[2])
        if u < 0 or v < 0:
            raise ValueError(f"edge list line {lineno}: negative vertex index")
        if not w > 0:
            raise ValueError(f"edge list line {lineno}: weight must be positive")
        edges.append((u, v, w))
    return edges


# --------------------------------------------------------------------------
# the space


@dataclass(frozen=True)
class Axis:
    """One axis of a uniform grid."""

    origin: float  # position of the first cell face
    spacing: float
    n: int
    period: float | None  # None for open axes

    @property
    def centers(self) -> np.ndarray:
        return self.origin + (np.arange(self.n) + 0.5) * self.spacing

    @property
    def end(self) -> float:
        return self.origin + self.n * self.spacing


class MetricMeasureSpace:
    """Finite point cloud with distances and positive weights.

    Instances are immutable after construction.
    """

    def __init__(self, geometry, points, weights, axes=None, dist_matrix=None):
        self.geometry = geometry
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.weights = np.asarray(weights, dtype=float)
        self.axes: tuple[Axis, ...] | None = tuple(axes) if axes is not None else None
        self._dist = dist_matrix
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    # basic shape ---------------------------------------------------------
    @property
    def n_points(self) -> int:
        return self.weights.shape[0]

    def __len__(self) -> int:
        return self.n_points

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_grid(self) -> bool:
        return self.axes is not None

    @property
    def shape(self) -> tuple[int, ...]:
        if self.axes is None:
            return (self.n_points,)
        return tuple(ax.n for ax in self.axes)

    @property
    def periodic(self) -> bool:
        return self.axes is not None and all(ax.period is not None for ax in self.axes)

    @property
    def spacing(self) -> float:
        """Largest grid spacing (the resolution that limits kernel widths)."""
        if self.axes is None:
            raise UnsupportedGeometry("graph spaces have no grid spacing")
        return max(ax.spacing for ax in self.axes)

    @property
    def coords(self) -> np.ndarray:
        """Coordinates of a 1-D space as a flat array."""
        return self.points[:, 0]

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)

    @property
    def diameter(self) -> float:
        if self.axes is None:
            return float(np.max(self._dist))
        spans = [(ax.period / 2 if ax.period is not None else ax.n * ax.spacing) for ax in self.axes]
        return float(np.sqrt(np.sum(np.square(spans))))

    def describe(self) -> str:
        return self.geometry.describe()

    # metric ----------------------------------------------------------------
    def dist(self, i, j) -> np.ndarray:
        """Distance between points ``i`` and ``j`` (broadcasting index arrays)."""
        i = np.asarray(i)
        j = np.asarray(j)
        if self.axes is None:
            return self._dist[i, j]
        diff = np.abs(self.points[i] - self.points[j])
        for k, ax in enumerate(self.axes):
            if ax.period is not None:
                diff[..., k] = np.minimum(diff[..., k], ax.period - diff[..., k])
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def distances_from(self, i: int) -> np.ndarray:
        return self.dist(i, np.arange(self.n_points))

    def ball_mass(self, center: int, r: float) -> float:
        """Measure of the open ball ``{y : d(center, y) < r}``."""
        if not r > 0:
            raise NonPositiveLength(f"radius must be positive, got {r}")
        d = self.distances_from(center)
        return math.fsum(self.weights[d < r])

    # alias used by the heat-kernel bound checks
    ball_volume = ball_mass


# --------------------------------------------------------------------------
# construction


def _check_length(x: float, what: str) -> float:
    x = float(x)
    if not x > 0:
        raise NonPositiveLength(f"{what} must be positive, got {x}")
    return x


def _check_n(n) -> int:
    n = int(n)
    if n < MIN_RESOLUTION:
        raise ResolutionTooSmall(f"resolution must be at least {MIN_RESOLUTION}, got {n}")
    return n


def _grid_space(geometry, axes) -> MetricMeasureSpace:
    centers = [ax.centers for ax in axes]
    mesh = np.meshgrid(*centers, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    cell = float(np.prod([ax.spacing for ax in axes]))
    weights = np.full(points.shape[0], cell)
    return MetricMeasureSpace(geometry, points, weights, axes=axes)


def build_space(geometry, check_triangle: bool = True, seed: int = 0) -> MetricMeasureSpace:
    """Build a discrete space from a geometry descriptor."""
    if isinstance(geometry, LineGrid):
        n = _check_n(geometry.n)
        length = _check_length(geometry.b - geometry.a, "interval length")
        space = _grid_space(geometry, [Axis(float(geometry.a), length / n, n, None)])
    elif isinstance(geometry, CircleGrid):
        n = _check_n(geometry.n)
        L = _check_length(geometry.length, "circle length")
        space = _grid_space(geometry, [Axis(0.0, L / n, n, L)])
    elif isinstance(geometry, TorusGrid):
        n = _check_n(geometry.n)
        L = _check_length(geometry.length, "torus side")
        if geometry.dim < 1:
            raise ValueError("torus dimension must be >= 1")
        space = _grid_space(geometry, [Axis(0.0, L / n, n, L)] * geometry.dim)
    elif isinstance(geometry, EuclideanGrid):
        if not (len(geometry.lower) == len(geometry.upper) == len(geometry.n)):
            raise ValueError("box bounds and resolutions must have equal length")
        axes = []
        for lo, hi, n in zip(geometry.lower, geometry.upper, geometry.n):
            n = _check_n(n)
            length = _check_length(hi - lo, "box side")
            axes.append(Axis(float(lo), length / n, n, None))
        space = _grid_space(geometry, axes)
    elif isinstance(geometry, WeightedGraph):
        space = _graph_space(geometry)
    else:
        raise UnsupportedGeometry(f"unknown geometry {geometry!r}")
    if check_triangle:
        check_metric(space, seed=seed)
    return space


def _graph_space(g: WeightedGraph) -> MetricMeasureSpace:
    n = int(g.n_vertices)
    if n < 2:
        raise ResolutionTooSmall("graph needs at least two vertices")
    if g.vertex_weights is None:
        weights = np.ones(n)
    else:
        weights = np.asarray(g.vertex_weights, dtype=float)
        if weights.shape != (n,):
            raise ValueError("one vertex weight per vertex is required")
    if np.any(weights <= 0):
        raise NonPositiveLength("vertex weights must be positive")
    e = np.asarray(g.edges, dtype=float).reshape(-1, 3)
    u, v, w = e[:, 0].astype(int), e[:, 1].astype(int), e[:, 2]
    if np.any(w <= 0):
        raise NonPositiveLength("edge weights must be positive")
    if e.size and (u.max() >= n or v.max() >= n):
        raise ValueError("edge references a vertex outside the graph")
    lengths = coo_matrix((1.0 / w, (u, v)), shape=(n, n)).tocsr()
    dist = shortest_path(lengths, directed=False)
    if not np.all(np.isfinite(dist)):
        raise UnsupportedGeometry("graph must be connected")
    # vertices have no coordinates; use the index as a 1-D label
    return MetricMeasureSpace(g, np.arange(n, dtype=float), weights, dist_matrix=dist)


def check_metric(space: MetricMeasureSpace, n_triples: int = 1000, seed: int = 0) -> None:
    """Spot-check weights, symmetry, zero diagonal and the triangle inequality."""
    if np.any(space.weights <= 0) or not np.isfinite(space.total_mass):
        raise ValueError("weights must be positive with finite total")
    rng = np.random.default_rng(seed)
    i, j, k = rng.integers(0, space.n_points, size=(3, n_triples))
    dij, djk, dik = space.dist(i, j), space.dist(j, k), space.dist(i, k)
    if np.any(np.abs(dij - space.dist(j, i)) > 1e-12 * (1 + dij)):
        raise ValueError("distance is not symmetric")
    if np.any(space.dist(i, i) != 0):
        raise ValueError("distance has nonzero diagonal")
    if np.any(dik > dij + djk + 1e-12 * (1 + dik)):
        raise ValueError("triangle inequality violated")


# --------------------------------------------------------------------------
# fields


@dataclass(frozen=True)
class Pieces:
    """Exact description of a 1-D piecewise-constant function.

    ``levels[k]`` is the value on ``(breakpoints[k-1], breakpoints[k])``;
    ``levels[0]`` and ``levels[-1]`` extend to the left and right.  On a
    circle of length ``period`` the breakpoints lie in ``[0, period)`` and
    the first and last levels must agree (they are the same arc).
    """

    breakpoints: np.ndarray
    levels: np.ndarray
    period: float | None = None

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        lv = np.asarray(self.levels, dtype=float)
        if lv.shape != (b.size + 1,):
            raise ValueError("need exactly one more level than breakpoints")
        if b.size and np.any(np.diff(b) <= 0):
            raise UnsortedBreakpoints("breakpoints must be strictly increasing")
        if self.period is not None:
            if b.size and (b[0] < 0 or b[-1] >= self.period):
                raise ValueError("circle breakpoints must lie in [0, period)")
            if lv[0] != lv[-1]:
                raise ValueError("first and last level must agree on a circle")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "levels", lv)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.period is not None:
            x = np.mod(x, self.period)
        return self.levels[np.searchsorted(self.breakpoints, x, side="right")]

    @property
    def left(self) -> float:
        return float(self.levels[0])

    @property
    def right(self) -> float:
        return float(self.levels[-1])

    def combine(self, other: "Pieces", op: Callable) -> "Pieces":
        if self.period != other.period:
            raise ValueError("cannot combine fields on different geometries")
        b = np.union1d(self.breakpoints, other.breakpoints)
        if b.size == 0:
            mids = np.zeros(1)
        elif self.period is None:
            mids = np.concatenate([[b[0] - 1.0], 0.5 * (b[1:] + b[:-1]), [b[-1] + 1.0]])
        else:
            wrap = np.mod(0.5 * (b[-1] + b[0] + self.period), self.period)
            mids = np.concatenate([[wrap], 0.5 * (b[1:] + b[:-1]), [wrap]])
        lv = op(self(mids), other(mids))
        return Pieces(b, lv, self.period).simplify()

    def simplify(self) -> "Pieces":
        keep = self.levels[1:] != self.levels[:-1]
        b = self.breakpoints[keep]
        lv = np.concatenate([self.levels[:1], self.levels[1:][keep]])
        return Pieces(b, lv, self.period)

    def scaled(self, c: float) -> "Pieces":
        return Pieces(self.breakpoints, c * self.levels, self.period)

    def shifted(self, c: float) -> "Pieces":
        return Pieces(self.breakpoints, self.levels + c, self.period)

    def superlevel(self, s: float) -> "Pieces":
        return Pieces(self.breakpoints, (self.levels > s).astype(float), self.period).simplify()


@dataclass(frozen=True)
class FieldFormula:
    """Closed form of a smooth field: its values and its slope ``|f'|``."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    slope: Callable[[np.ndarray], np.ndarray]
    domain: tuple[float, float]
    periodic: bool = False


class ScalarField:
    """Real values sampled at the points of a space.

    Optional companions: ``derivative_oracle`` (exact slope per point),
    ``pieces`` (exact 1-D piecewise-constant description) and ``formula``
    (closed form, used by quadrature oracles).
    """

    def __init__(self, space: MetricMeasureSpace, values, derivative_oracle=None,
                 pieces: Pieces | None = None, formula: FieldFormula | None = None):
        values = np.asarray(values, dtype=float).ravel()
        if values.shape != (space.n_points,):
            raise ValueError(f"expected {space.n_points} values, got {values.shape[0]}")
        if derivative_oracle is not None:
            derivative_oracle = np.asarray(derivative_oracle, dtype=float).ravel()
            if derivative_oracle.shape != values.shape:
                raise ValueError("derivative oracle must match the number of points")
            if np.any(derivative_oracle < 0):
                raise ValueError("derivative oracle holds slopes and must be non-negative")
        self.space = space
        self.values = values
        self.derivative_oracle = derivative_oracle
        self.pieces = pieces
        self.formula = formula

    @property
    def piecewise_constant(self) -> bool:
        return self.pieces is not None

    def __len__(self):
        return self.values.shape[0]

    def __add__(self, other):
        if isinstance(other, IndicatorSet):
            other = other.field()
        if isinstance(other, ScalarField):
            pieces = None
            if self.pieces is not None and other.pieces is not None:
                pieces = self.pieces.combine(other.pieces, np.add)
            return ScalarField(self.space, self.values + other.values, pieces=pieces)
        c = float(other)
        pieces = self.pieces.shifted(c) if self.pieces is not None else None
        return ScalarField(self.space, self.values + c, self.derivative_oracle, pieces)

    __radd__ = __add__

    def __mul__(self, c):
        c = float(c)
        pieces = self.pieces.scaled(c) if self.pieces is not None else None
        deriv = abs(c) * self.derivative_oracle if self.derivative_oracle is not None else None
        formula = None
        if self.formula is not None:
            f = self.formula
            formula = FieldFormula(f"{c:g}*{f.name}", lambda x, f=f: c * f.value(x),
                                   lambda x, f=f: abs(c) * f.slope(x), f.domain, f.periodic)
        return ScalarField(self.space, c * self.values, deriv, pieces, formula)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, (ScalarField, IndicatorSet)) else -float(other))

    def superlevel_set(self, s: float) -> "IndicatorSet":
        """``{f > s}`` as an indicator set (exact jumps when pieces are known)."""
        pieces = self.pieces.superlevel(s) if self.pieces is not None else None
        return IndicatorSet(self.space, self.values > s, pieces=pieces)


class IndicatorSet:
    """Membership per point, optionally with the exact 1-D boundary."""

    def __init__(self, space: MetricMeasureSpace, membership, pieces: Pieces | None = None):
        membership = np.asarray(membership, dtype=bool).ravel()
        if membership.shape != (space.n_points,):
            raise ValueError(f"expected {space.n_points} membership flags")
        self.space = space
        self.membership = membership
        self.pieces = pieces

    @property
    def values(self) -> np.ndarray:
        return self.membership.astype(float)

    @property
    def piecewise_constant(self) -> bool:
        return True

    @property
    def jumps(self) -> list[tuple[float, int]] | None:
        """``(location, orientation)`` per boundary point, orientation = +1 entering."""
        if self.pieces is None:
            return None
        lv = self.pieces.levels
        return [(float(x), int(np.sign(lv[k + 1] - lv[k])))
                for k, x in enumerate(self.pieces.breakpoints)]

    @property
    def boundary_oracle(self):
        """Exact perimeter and jump list, or None when unknown."""
        jumps = self.jumps
        if jumps is None:
            return None
        return {"perimeter": float(len(jumps)), "jumps": jumps}

    @property
    def measure(self) -> float:
        return math.fsum(self.space.weights[self.membership])

    def field(self) -> ScalarField:
        return ScalarField(self.space, self.values, pieces=self.pieces)

    def _combine(self, other: "IndicatorSet", op_bool, op_levels) -> "IndicatorSet":
        pieces = None
        if self.pieces is not None and other.pieces is not None:
            pieces = self.pieces.combine(other.pieces, op_levels)
        return IndicatorSet(self.space, op_bool(self.membership, other.membership), pieces)

    def __or__(self, other):
        return self._combine(other, np.logical_or, np.maximum)

    def __and__(self, other):
        return self._combine(other, np.logical_and, np.minimum)

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a & ~b, lambda a, b: a - np.minimum(a, b))

    def complement(self) -> "IndicatorSet":
        pieces = None
        if self.pieces is not None:
            pieces = Pieces(self.pieces.breakpoints, 1.0 - self.pieces.levels, self.pieces.period)
        return IndicatorSet(self.space, ~self.membership, pieces)


# --------------------------------------------------------------------------
# field constructors


def _require_1d(space: MetricMeasureSpace) -> Axis:
    if space.axes is None or len(space.axes) != 1:
        raise UnsupportedGeometry("this constructor needs a 1-D grid")
    return space.axes[0]


def sample_field(space: MetricMeasureSpace, fn, slope=None, name: str = "f") -> ScalarField:
    """Sample a closed-form function; ``slope`` (|f'|) becomes the derivative oracle."""
    x = space.coords if space.dim == 1 else space.points
    values = fn(x)
    deriv = None if slope is None else slope(x)
    formula = None
    if slope is not None and space.axes is not None and len(space.axes) == 1:
        ax = space.axes[0]
        formula = FieldFormula(name, fn, slope, (ax.origin, ax.end), ax.period is not None)
    return ScalarField(space, values, deriv, formula=formula)


def sine_field(space: MetricMeasureSpace, amplitude: float = 1.0, frequency: int = 1) -> ScalarField:
    """``A sin(2 pi k x / L)`` on a 1-D grid of length L."""
    ax = _require_1d(space)
    L = ax.period if ax.period is not None else ax.n * ax.spacing
    w = 2.0 * math.pi * frequency / L
    return sample_field(space, lambda x: amplitude * np.sin(w * x),
                        lambda x: np.abs(amplitude * w * np.cos(w * x)), name="sine")


def piecewise_field(space: MetricMeasureSpace, breakpoints: Sequence[float],
                    levels: Sequence[float]) -> ScalarField:
    ax = _require_1d(space)
    b = np.asarray(breakpoints, dtype=float)
    if b.size and np.any(np.diff(b) <= 0):
        raise UnsortedBreakpoints("breakpoints must be strictly increasing")
    pieces = Pieces(b, np.asarray(levels, dtype=float), ax.period)
    return ScalarField(space, pieces(space.coords), pieces=pieces)


def _interval_pieces(a: float, b: float, period: float | None) -> Pieces:
    if not b > a:
        raise UnsortedBreakpoints(f"interval end {b} must exceed start {a}")
    if period is None:
        return Pieces(np.array([a, b]), np.array([0.0, 1.0, 0.0]))
    if b - a >= period:
        return Pieces(np.array([]), np.array([1.0]), period)
    a0, b0 = a % period, b % period
    if a0 < b0:
        return Pieces(np.array([a0, b0]), np.array([0.0, 1.0, 0.0]), period)
    # the arc runs from a0 through the origin to b0
    return Pieces(np.array([b0, a0]), np.array([1.0, 0.0, 1.0]), period)


def interval_set(space: MetricMeasureSpace, intervals) -> IndicatorSet:
    """Union of intervals ``[a, b]``; on a circle ``b`` may exceed ``L`` to wrap."""
    ax = _require_1d(space)
    pieces = None
    for a, b in intervals:
        p = _interval_pieces(float(a), float(b), ax.period)
        pieces = p if pieces is None else pieces.combine(p, np.maximum)
    if pieces is None:
        pieces = Pieces(np.array([]), np.array([0.0]), ax.period)
    return IndicatorSet(space, pieces(space.coords) > 0.5, pieces)


def halfline_set(space: MetricMeasureSpace, x0: float = 0.0, side: int = 1) -> IndicatorSet:
    """``[x0, inf)`` (side=+1) or ``(-inf, x0]`` (side=-1) on a line grid."""
    ax = _require_1d(space)
    if ax.period is not None:
        raise UnsupportedGeometry("half-lines need an open line grid")
    lv = np.array([0.0, 1.0]) if side > 0 else np.array([1.0, 0.0])
    pieces = Pieces(np.array([float(x0)]), lv)
    return IndicatorSet(space, pieces(space.coords) > 0.5, pieces)


def cell_set(space: MetricMeasureSpace, mask) -> IndicatorSet:
    """Indicator of a union of grid cells given as a boolean array of grid shape."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != space.shape:
        raise ValueError(f"mask shape {mask.shape} != grid shape {space.shape}")
    return IndicatorSet(space, mask.ravel())
