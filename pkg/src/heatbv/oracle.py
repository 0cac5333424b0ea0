"""Independent ground truths: closed forms, fine quadrature, brute force.

Nothing here reuses the evaluation code of ``heat`` or ``functionals``:
the brute-force kernels are rebuilt from scratch in extended precision
without distance cutoffs, and the cell-averaged kernel is integrated by
Gauss-Legendre quadrature instead of the erfc antiderivatives used by the
main path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SpaceTooLarge, UnsupportedGeometry
from .space import CircleGrid, FieldFormula, MetricMeasureSpace, TorusGrid, WeightedGraph

MAX_POINTS = 512
_LD = np.longdouble
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


@dataclass(frozen=True)
class OracleValue:
    value: float
    method: str
    bound: float

    def __post_init__(self):
        if not self.bound > 0:
            raise ValueError("oracle bounds are strictly positive")

    def agrees(self, x: float, slack: float = 0.0) -> bool:
        return abs(float(x) - self.value) <= self.bound + slack


def halfline_bv_exact(t: float) -> OracleValue:
    """Two-sided pair mass across a single jump on R: ``2 sqrt(t/pi)``.

    Equals twice the integral of erfc(x / 2 sqrt t)/2 over x > 0.
    """
    t = float(t)
    if not t > 0:
        raise ValueError("t must be positive")
    v = 2.0 * math.sqrt(t / math.pi)
    return OracleValue(v, "erfc-closed-form", 1e-15 * v)


# --------------------------------------------------------------------------
# quadrature of closed-form energies


def _trapezoid(fn, lo, hi, n):
    x = np.linspace(lo, hi, n + 1)
    y = fn(x)
    return (hi - lo) / n * (math.fsum(y) - 0.5 * (y[0] + y[-1]))


def quadrature_energy(f, p: float, n_grid: int | None = None, *, rtol: float = 1e-13,
                      max_doublings: int = 10) -> OracleValue:
    """``integral |f'|^p`` by Richardson-corrected trapezoid sums.

    Starts at ten times the experiment grid and keeps halving the step until
    successive corrected values agree; the last difference is the bound.

    Args:
        f: ScalarField carrying a ``formula``, or a FieldFormula.
        p: exponent.
        n_grid: experiment grid size (defaults to the field's grid).
    """
    formula = f if isinstance(f, FieldFormula) else getattr(f, "formula", None)
    if formula is None:
        raise ValueError("quadrature_energy needs a closed-form field")
    if n_grid is None:
        n_grid = f.space.n_points if hasattr(f, "space") else 1000
    lo, hi = formula.domain
    p = float(p)

    def integrand(x):
        return np.abs(formula.slope(x)) ** p

    n = 10 * int(n_grid)
    coarse = _trapezoid(integrand, lo, hi, n)
    prev = None
    diff = math.inf
    for _ in range(max_doublings):
        fine = _trapezoid(integrand, lo, hi, 2 * n)
        rich = (4.0 * fine - coarse) / 3.0
        if prev is not None:
            diff = abs(rich - prev)
            if diff <= rtol * max(1.0, abs(rich)):
                break
        prev, coarse, n = rich, fine, 2 * n
    value = rich
    bound = max(diff if math.isfinite(diff) else abs(rich - coarse), 4 * np.finfo(float).eps * abs(value), 1e-300)
    return OracleValue(float(value), "quadrature-10x", float(bound))


# --------------------------------------------------------------------------
# brute-force pair enumeration


def _axis_params(space: MetricMeasureSpace):
    g = space.geometry
    if isinstance(g, CircleGrid):
        return [(g.length, g.n)], 1
    if isinstance(g, TorusGrid):
        return [(g.length, g.n)] * g.dim, g.dim
    raise UnsupportedGeometry("pair enumeration covers circles, tori and graphs")


def _gauss_ld(d, t):
    t = _LD(t)
    return np.exp(-d * d / (4 * t)) / np.sqrt(4 * _LD(math.pi) * t)


def _images(t, L):
    return int(math.ceil(math.sqrt(4.0 * 60.0 * t) / L)) + 1


def _point_kernel_1d(d, t, L):
    K = _images(t, L)
    out = np.zeros_like(d, dtype=_LD)
    for k in range(-K, K + 1):
        out += _gauss_ld(d + _LD(k) * _LD(L), t)
    return out


def _cell_kernel_1d(d, t, L, h):
    """``(1/h^2) double integral over two cells`` = ``(1/h^2) int (h-|s|) p(d+s) ds``."""
    sigma = math.sqrt(2.0 * t)
    panels = max(1, int(math.ceil(h / (0.25 * sigma))))
    edges = np.linspace(0.0, h, panels + 1)
    out = np.zeros_like(d, dtype=_LD)
    nodes = _GL_NODES.astype(_LD)
    wts = _GL_WEIGHTS.astype(_LD)
    for a, b in zip(edges[:-1], edges[1:]):
        half, mid = _LD(b - a) / 2, _LD(b + a) / 2
        s = mid + half * nodes  # s in [0, h]; the kink at s=0 is a panel edge
        for sv, wv in zip(s, wts):
            tri = (_LD(h) - sv) * wv * half
            out += tri * (_point_kernel_1d(d + sv, t, L) + _point_kernel_1d(d - sv, t, L))
    return out / (_LD(h) * _LD(h))


def _grid_kernel(space, t, quadrature):
    params, dim = _axis_params(space)
    pts = np.asarray(space.points, dtype=float).reshape(space.n_points, dim)
    K = np.ones((space.n_points, space.n_points), dtype=_LD)
    for a, (L, n) in enumerate(params):
        x = pts[:, a].astype(_LD)
        d = x[:, None] - x[None, :]
        if quadrature == "cell":
            K *= _cell_kernel_1d(d, t, L, L / n)
        else:
            K *= _point_kernel_1d(d, t, L)
    return K


def _graph_kernel(space, t):
    n = space.n_points
    A = np.zeros((n, n))
    for u, v, w in space.geometry.edges:
        if u != v:
            A[u, v] += w
            A[v, u] += w
    lap = np.diag(A.sum(axis=1)) - A
    s = 1.0 / np.sqrt(space.weights)
    lam, vec = np.linalg.eigh(s[:, None] * lap * s[None, :])
    phi = (vec * s[:, None]).astype(_LD)
    decay = np.exp(-np.maximum(lam, 0.0).astype(_LD) * _LD(t))
    return (phi * decay) @ phi.T


def oracle_kernel(space: MetricMeasureSpace, t: float, quadrature: str = "point") -> np.ndarray:
    """Full kernel matrix in extended precision (no cutoff)."""
    if space.n_points > MAX_POINTS:
        raise SpaceTooLarge(f"{space.n_points} points exceed the enumeration limit {MAX_POINTS}")
    if isinstance(space.geometry, WeightedGraph):
        if quadrature == "cell":
            raise UnsupportedGeometry("cell quadrature needs a grid")
        return _graph_kernel(space, t)
    return _grid_kernel(space, t, quadrature)


def pair_enumeration(space: MetricMeasureSpace, kind: str, inputs, t: float,
                     quadrature: str = "point") -> OracleValue:
    """Exhaustive O(N^2) evaluation of a functional on a small closed space.

    Kinds and inputs (values as arrays, fields or sets):

    - ``sobolev``: (f, p), value ``t^{-p/2} sum p_t |f(x)-f(y)|^p w w``
    - ``bv``: (f,), the p=1 case
    - ``set``: (E,), the bv value of the indicator
    - ``jump``: (f, g), ``t^{-1/2} sum (f - h_t f) g w``
    """
    if space.n_points > MAX_POINTS:
        raise SpaceTooLarge(f"{space.n_points} points exceed the enumeration limit {MAX_POINTS}")
    t = float(t)
    if not t > 0:
        raise ValueError("t must be positive")
    K = oracle_kernel(space, t, quadrature)
    w = np.asarray(space.weights, dtype=_LD)
    W = w[:, None] * w[None, :]

    def vals(x):
        x = getattr(x, "values", x)
        return np.asarray(x, dtype=float).astype(_LD).ravel()

    if kind in ("sobolev", "bv", "set"):
        f = vals(inputs[0])
        p = float(inputs[1]) if kind == "sobolev" else 1.0
        diff = np.abs(f[:, None] - f[None, :])
        phi = diff**p if p != 1.0 else diff
        terms = K * phi * W
        value = np.sum(terms) / _LD(t) ** _LD(p / 2)
    elif kind == "jump":
        f, g = vals(inputs[0]), vals(inputs[1])
        hf = (K * w[None, :]) @ f
        terms = (f - hf) * g * w
        value = np.sum(terms) / np.sqrt(_LD(t))
    else:
        raise ValueError(f"unknown functional kind {kind!r}")
    n_terms = terms.size
    scale = float(np.sum(np.abs(terms)))
    eps = float(np.finfo(_LD).eps)
    scale /= math.sqrt(t) if kind != "sobolev" else t ** (float(inputs[1]) / 2)
    bound = max(4.0 * n_terms * eps * scale, 1e-300)
    return OracleValue(float(value), "pair-enumeration", bound)
