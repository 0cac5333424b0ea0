"""Heat-kernel nonlocal functionals, each with independent evaluation paths.

All functionals take the heat time ``t`` except ``polarization_g`` and
``blowup_profile``, whose parameter ``t`` enters the heat flow as ``t**2``.

Quadrature is chosen automatically: ``cell`` (exact for fields constant on
grid cells) when every input is a step field and the engine supports it,
``point`` otherwise.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calculus import cheeger_energy, perimeter
from .errors import RadiusBelowResolution, UnsupportedGeometry, WindowViolation
from .heat import HeatKernelEngine
from .space import IndicatorSet, MetricMeasureSpace, ScalarField

PATHS = ("double-sum", "heat-apply", "gradient-pairing", "laplacian-pairing")
CSV_FIELDS = ("functional", "geometry", "N", "p", "t", "path", "value", "seconds", "pairs")
WINDOW_WIDTHS = 6.0
SQRT8 = math.sqrt(8.0)


@dataclass(frozen=True)
class PathValue:
    path: str
    value: float
    seconds: float
    pairs: int


@dataclass
class FunctionalSample:
    """Value of one functional at one t, by one or more paths.

    The first entry of ``results`` is the primary path.
    """

    functional: str
    t: float
    results: list = field(default_factory=list)
    p: float | None = None

    @property
    def value(self) -> float:
        return self.results[0].value

    @property
    def path(self) -> str:
        return self.results[0].path

    @property
    def seconds(self) -> float:
        return self.results[0].seconds

    @property
    def pairs(self) -> int:
        return self.results[0].pairs

    def by_path(self, path: str) -> float:
        for r in self.results:
            if r.path == path:
                return r.value
        raise KeyError(path)

    @property
    def paths(self) -> list[str]:
        return [r.path for r in self.results]

    def disagreement(self) -> float:
        """Largest relative gap between paths (absolute when values are ~0)."""
        vals = [r.value for r in self.results]
        if len(vals) < 2:
            return 0.0
        scale = max(abs(v) for v in vals)
        gap = max(vals) - min(vals)
        return gap / scale if scale > 1e-300 else gap


def _timed(path, fn) -> PathValue:
    t0 = time.perf_counter()
    value, pairs = fn()
    return PathValue(path, float(value), time.perf_counter() - t0, int(pairs))


def _values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=float).ravel()


def _is_step(x) -> bool:
    return isinstance(x, IndicatorSet) or getattr(x, "pieces", None) is not None


def choose_quadrature(engine: HeatKernelEngine, *inputs, quadrature: str | None = None) -> str:
    if quadrature is not None:
        if quadrature not in ("point", "cell"):
            raise ValueError(f"unknown quadrature {quadrature!r}")
        return quadrature
    if engine.supports_cell and all(_is_step(x) for x in inputs):
        return "cell"
    return "point"


def check_window(engine: HeatKernelEngine, t: float, *inputs) -> None:
    """Open axes emulate R only if fields are constant within 6 sqrt t of each end."""
    space = engine.space
    if space.axes is None or space.dim != 1 or space.axes[0].period is not None:
        return
    ax = space.axes[0]
    margin = WINDOW_WIDTHS * math.sqrt(t)
    x = ax.centers
    left = x < ax.origin + margin
    right = x > ax.end - margin
    for f in inputs:
        v = _values(f)
        if np.any(v[left] != v[0]) or np.any(v[right] != v[-1]):
            raise WindowViolation(
                f"field varies within {margin:.3g} of the window edge at t={t:g}; widen the grid")


# --------------------------------------------------------------------------
# the functionals


def sobolev_functional(engine: HeatKernelEngine, f, p: float, t: float, *,
                       quadrature: str | None = None, paths=None) -> FunctionalSample:
    """``t^{-p/2} sum p_t(x,y) |f(x)-f(y)|^p w_x w_y``.

    For p=2 the heat-apply path ``2 t^{-1} sum (f - h_t f) f w`` is added.
    """
    p = float(p)
    if p < 1:
        raise ValueError("p must be at least 1")
    q = choose_quadrature(engine, f, quadrature=quadrature)
    check_window(engine, t, f)
    v = _values(f)
    scale = float(t) ** (p / 2)
    wanted = paths or ("double-sum", "heat-apply")
    out = FunctionalSample("sobolev", float(t), p=p)

    def double():
        r = engine.pair_sum(t, v, p=p, quadrature=q)
        return r.value / scale, r.pairs

    def heat():
        hv = engine.apply(t, v, q)
        return 2.0 * math.fsum((v - hv) * v * engine.space.weights) / scale, v.size

    if "double-sum" in wanted:
        out.results.append(_timed("double-sum", double))
    if p == 2.0 and "heat-apply" in wanted:
        out.results.append(_timed("heat-apply", heat))
    return out


def set_functional(engine: HeatKernelEngine, E: IndicatorSet, t: float, *,
                   quadrature: str | None = None, paths=None) -> FunctionalSample:
    """``t^{-1/2} sum p_t |chi_E(x) - chi_E(y)| w w``.

    Primary path: ``2 t^{-1/2} sum (chi_E - h_t chi_E) chi_E w``; the double
    sum is recorded alongside.
    """
    q = choose_quadrature(engine, E, quadrature=quadrature)
    check_window(engine, t, E)
    chi = _values(E)
    rt = math.sqrt(t)
    wanted = paths or ("heat-apply", "double-sum")
    out = FunctionalSample("set", float(t), p=1.0)

    def heat():
        h = engine.apply(t, chi, q)
        return 2.0 * math.fsum((chi - h) * chi * engine.space.weights) / rt, chi.size

    def double():
        r = engine.pair_sum(t, chi, p=1.0, quadrature=q)
        return r.value / rt, r.pairs

    for path in wanted:
        out.results.append(_timed(path, heat if path == "heat-apply" else double))
    return out


def bv_functional(engine: HeatKernelEngine, f, t: float, *, quadrature: str | None = None,
                  paths=None) -> FunctionalSample:
    """``t^{-1/2} sum p_t |f(x)-f(y)| w w``.

    Step fields also get the layer-cake path: the sum over level bands of
    band height times the heat-apply set functional of the superlevel set.
    """
    if isinstance(f, IndicatorSet):
        f = f.field()
    q = choose_quadrature(engine, f, quadrature=quadrature)
    check_window(engine, t, f)
    v = _values(f)
    rt = math.sqrt(t)
    wanted = paths or ("double-sum", "heat-apply")
    out = FunctionalSample("bv", float(t), p=1.0)

    def double():
        r = engine.pair_sum(t, v, p=1.0, quadrature=q)
        return r.value / rt, r.pairs

    def layers():
        levels = np.unique(v)
        terms = []
        w = engine.space.weights
        for lo, hi in zip(levels[:-1], levels[1:]):
            chi = (v > lo).astype(float)
            h = engine.apply(t, chi, q)
            terms.append((hi - lo) * 2.0 * math.fsum((chi - h) * chi * w))
        return math.fsum(terms) / rt, v.size * max(1, levels.size - 1)

    if "double-sum" in wanted:
        out.results.append(_timed("double-sum", double))
    if "heat-apply" in wanted and _is_step(f):
        out.results.append(_timed("heat-apply", layers))
    return out


def jump_functional(engine: HeatKernelEngine, f, g, t: float, *, quadrature: str | None = None,
                    paths=None) -> FunctionalSample:
    """``t^{-1/2} sum (f - h_t f) g w``, plus the symmetric double sum

    ``(2 sqrt t)^{-1} sum p_t (f(x)-f(y))(g(x)-g(y)) w w``.
    """
    q = choose_quadrature(engine, f, g, quadrature=quadrature)
    check_window(engine, t, f, g)
    fv, gv = _values(f), _values(g)
    rt = math.sqrt(t)
    wanted = paths or ("heat-apply", "double-sum")
    out = FunctionalSample("jump", float(t))

    def heat():
        h = engine.apply(t, fv, q)
        return math.fsum((fv - h) * gv * engine.space.weights) / rt, fv.size

    def double():
        r = engine.pair_sum(t, fv, gv, product=True, quadrature=q)
        return 0.5 * r.value / rt, r.pairs

    for path in wanted:
        out.results.append(_timed(path, heat if path == "heat-apply" else double))
    return out


def polarization_g(engine: HeatKernelEngine, E: IndicatorSet, F: IndicatorSet, t: float, *,
                   quadrature: str | None = None, paths=None) -> FunctionalSample:
    """``g_t(E, F) = sqrt8 t sum grad h_{t^2} chi_E . grad h_{t^2} chi_F w``.

    The Laplacian path uses the exact rewriting
    ``-sqrt8 t sum chi_F Delta h_{2 t^2} chi_E w`` (semigroup plus
    integration by parts) and is primary; the gradient path needs a 1-D grid
    engine and evaluates the gradients analytically.
    """
    t = float(t)
    tau = t * t
    q = choose_quadrature(engine, E, F, quadrature=quadrature)
    check_window(engine, 2 * tau, E, F)
    a, b = _values(E), _values(F)
    w = engine.space.weights
    can_grad = engine.space.dim == 1 and not engine.dense
    wanted = paths or ("laplacian-pairing", "gradient-pairing")
    out = FunctionalSample("polarization", t)

    def lap():
        la = engine.apply(2 * tau, a, "lap_cell" if q == "cell" else "lap_point")
        return -SQRT8 * t * math.fsum(b * la * w), a.size

    def grad():
        kind = "grad_cell" if q == "cell" else "grad_point"
        ga = engine.apply(tau, a, kind)
        gb = ga if b is a else engine.apply(tau, b, kind)
        return SQRT8 * t * math.fsum(ga * gb * w), a.size

    for path in wanted:
        if path == "laplacian-pairing":
            out.results.append(_timed(path, lap))
        elif path == "gradient-pairing" and can_grad:
            out.results.append(_timed(path, grad))
    if not out.results:
        raise UnsupportedGeometry("no polarization path is available on this engine")
    return out


def blowup_profile(engine: HeatKernelEngine, E: IndicatorSet, x: float, t: float, *,
                   quadrature: str | None = None) -> float:
    """``t h_{t^2} |grad h_{t^2} chi_E| (x)`` at a coordinate x of a 1-D grid."""
    if engine.space.dim != 1 or engine.dense:
        raise UnsupportedGeometry("the blow-up profile is computed on 1-D grids")
    t = float(t)
    tau = t * t
    q = choose_quadrature(engine, E, quadrature=quadrature)
    check_window(engine, 2 * tau, E)
    grad = np.abs(engine.apply(tau, _values(E), "grad_cell" if q == "cell" else "grad_point"))
    # grad holds exact point values of a smooth function; integrate it against
    # the kernel centred at x
    row = engine.kernel_at(tau, [x])[0]
    return t * math.fsum(row * grad * engine.space.weights)


def ks_functional(space: MetricMeasureSpace, f, p: float, r: float, *, mode: str | None = None) -> float:
    """``sum_x w_x (1/m(B_r(x))) sum_{d(x,y)<r} |f(x)-f(y)|^p / r^p w_y``.

    ``mode='cell'`` (default for 1-D step fields) treats f as constant on
    cells and integrates the pair indicator ``|x-y| < r`` exactly, with
    ball measure 2r.  ``mode='point'`` sums over grid points.
    """
    p = float(p)
    r = float(r)
    h = space.spacing if space.axes is not None else 0.0
    if space.axes is not None and not r > h:
        raise RadiusBelowResolution(f"radius {r:g} must exceed the grid spacing {h:g}")
    v = _values(f)
    one_d = space.axes is not None and space.dim == 1
    if mode is None:
        mode = "cell" if (one_d and _is_step(f)) else "point"
    if mode == "cell":
        if not one_d:
            raise UnsupportedGeometry("cell mode needs a 1-D grid")
        return _ks_cell(space, v, p, r)
    if mode != "point":
        raise ValueError(f"unknown mode {mode!r}")
    if one_d:
        return _ks_point_1d(space, v, p, r)
    w = space.weights
    total = []
    for i in range(space.n_points):
        d = space.distances_from(i)
        inside = d < r
        ball = math.fsum(w[inside])
        total.append(w[i] * math.fsum(np.abs(v[i] - v[inside]) ** p * w[inside]) / ball)
    return math.fsum(total) / r**p


def _ks_point_1d(space, v, p, r):
    from . import kernels

    ax = space.axes[0]
    h = ax.spacing
    M = int(math.ceil(r / h)) - 1  # largest offset with m h < r
    periodic = ax.period is not None
    if periodic:
        M = min(M, ax.n // 2)
    k = np.ones(M + 1)
    pair = kernels.offset_pair_sum(np.ascontiguousarray(v), np.ascontiguousarray(v), k, periodic, p, 0)
    if periodic:
        ball = space.ball_mass(0, r)
        return pair * h * h / ball / r**p
    # open axis: per-row ball masses differ near the ends
    total = []
    n = ax.n
    for m in range(1, M + 1):
        a, b = v[: n - m], v[m:]
        i = np.arange(n - m)
        ball_i = (np.minimum(i, M) + np.minimum(n - 1 - i, M) + 1) * h
        j = i + m
        ball_j = (np.minimum(j, M) + np.minimum(n - 1 - j, M) + 1) * h
        d = np.abs(a - b) ** p
        total.append(math.fsum(d * h * h / ball_i) + math.fsum(d * h * h / ball_j))
    return math.fsum(total) / r**p


def _pair_measure(m, r, h):
    """Measure of ``{(x, y) in cell_0 x cell_m : |x - y| < r}``."""

    def cum(a):
        a = np.clip(a, -h, h)
        return np.where(a <= 0, 0.5 * (h + a) ** 2, h * h - 0.5 * (h - a) ** 2)

    d = m * h
    return cum(r - d) - cum(-r - d)


def _ks_cell(space, v, p, r):
    from . import kernels

    ax = space.axes[0]
    h = ax.spacing
    periodic = ax.period is not None
    M = int(math.ceil(r / h)) + 1
    if periodic:
        M = min(M, ax.n // 2)
        if 2 * r > ax.period:
            raise ValueError("radius exceeds half the circle")
    m = np.arange(M + 1)
    k = _pair_measure(m.astype(float), r, h) / (h * h)
    pair = kernels.offset_pair_sum(np.ascontiguousarray(v), np.ascontiguousarray(v),
                                   np.ascontiguousarray(k), periodic, p, 0)
    return pair * h * h / (2.0 * r) / r**p


# --------------------------------------------------------------------------
# bound checks


def domination_constant(engine: HeatKernelEngine, p: float, ts, n_rows: int | None = None) -> float:
    """Smallest C with ``p_{t^2}(x,y) (d/t)^p <= C p_{4 t^2}(x,y)`` over sampled pairs."""
    space = engine.space
    n = space.n_points
    rows = np.arange(n) if n_rows is None or n_rows >= n else np.linspace(0, n - 1, n_rows).astype(int)
    best = 0.0
    cols = np.arange(n)
    for t in ts:
        for i in rows:
            a = engine.kernel(t * t, np.full(n, i), cols)
            b = engine.kernel(4 * t * t, np.full(n, i), cols)
            d = space.distances_from(int(i))
            ok = b > 1e-280
            ratio = a[ok] * (d[ok] / t) ** p / b[ok]
            best = max(best, float(ratio.max()))
    return best


def lebesgue_check(engine: HeatKernelEngine, E: IndicatorSet, F: IndicatorSet, t: float):
    """``(|sum (h_t chi_E - chi_E) chi_F w|, 2 Per(E) sqrt t)``."""
    a, b = _values(E), _values(F)
    q = choose_quadrature(engine, E, F)
    lhs = abs(math.fsum((engine.apply(t, a, q) - a) * b * engine.space.weights))
    return lhs, 2.0 * perimeter(E) * math.sqrt(t)


def uniform_budget(engine: HeatKernelEngine, f: ScalarField, p: float, ts, factor: float = 50.0):
    """``(max_t sobolev_functional, factor (Ch_p(f) + ||f||_p^p))``."""
    worst = max(sobolev_functional(engine, f, p, t, paths=("double-sum",)).value for t in ts)
    norm = math.fsum(np.abs(f.values) ** p * engine.space.weights)
    return worst, factor * (cheeger_energy(f, p).value + norm)


# --------------------------------------------------------------------------
# logging


class CsvLog:
    """Appends one row per evaluated path."""

    def __init__(self, path, geometry: str, n: int):
        self.path = Path(path)
        self.geometry = geometry
        self.n = n
        new = not self.path.exists() or self.path.stat().st_size == 0
        self._fh = open(self.path, "a", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        if new:
            self._w.writerow(CSV_FIELDS)

    def write(self, sample: FunctionalSample) -> None:
        p = "" if sample.p is None else repr(float(sample.p))
        for r in sample.results:
            self._w.writerow([sample.functional, self.geometry, self.n, p, repr(sample.t), r.path,
                              repr(r.value), f"{r.seconds:.6f}", r.pairs])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
