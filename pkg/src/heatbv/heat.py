"""Heat kernels and heat flow on discrete spaces.

Kernel normalisation is ``(4 pi t)^(-n/2) exp(-d^2 / 4t)`` on R^n, i.e. the
generator is the Laplacian itself (not one half of it).

Two quadratures are offered on grids:

``point``
    the kernel sampled at cell centres; ``(h_t f)_i = sum_j p_t(x_i, x_j) f_j w_j``.
``cell``
    the Galerkin form for fields that are constant on cells: entry ``(i, j)``
    is the cell-pair integral of the kernel divided by both cell volumes, so
    ``h_t f`` returns exact cell averages of the heat flow of the
    piecewise-constant field.  Available in closed form (erfc) for the
    Gaussian and image-sum backends and through aliased Fourier multipliers
    for the spectral backend.

Derived operators use the same ``kind`` strings: ``grad_point``/``grad_cell``
give point values of ``d/dx h_t f`` at the nodes (1-D only), and
``lap_point``/``lap_cell`` give ``Delta h_t f`` (point values or cell
averages).

On an open line the field is extended by its edge values beyond the grid,
which turns the finite grid into an exact stand-in for R as long as the
field is constant near both ends.  Under ``point`` the grid is read as a
window of the infinite lattice; under ``cell`` as a window of R.
"""

from __future__ import annotations

import itertools
import math
import struct
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import eigh
from scipy.signal import fftconvolve

from . import kernels
from .errors import (
    NonPositiveTime,
    PairBudgetExceeded,
    SpectralTruncationInsufficient,
    UnsupportedGeometry,
)
from .space import (
    Axis,
    CircleGrid,
    EuclideanGrid,
    LineGrid,
    MetricMeasureSpace,
    ScalarField,
    TorusGrid,
    WeightedGraph,
)
from .special import erfc

CUTOFF_EXPONENT = 46.0  # pairs with d^2/4t beyond this are skipped
TRUNCATION_RATIO = 1e-14
NEGATIVE_CLAMP = 1e-12
DEFAULT_CACHE_BYTES = 2 * 2**30

POINT_KINDS = ("point", "grad_point", "lap_point")
CELL_KINDS = ("cell", "grad_cell", "lap_cell")
KINDS = POINT_KINDS + CELL_KINDS


# --------------------------------------------------------------------------
# backends


@dataclass(frozen=True)
class ClosedFormGaussian:
    """Euclidean kernel on open grids (line, box)."""

    dim: int = 1


@dataclass(frozen=True)
class ImageSum:
    """Periodised Gaussian on circles and flat tori.

    ``n_images=None`` picks the truncation per t so the dropped tail is
    below 1e-14 of the kept sum.
    """

    n_images: int | None = None


@dataclass(frozen=True)
class Spectral:
    """Eigen-expansion of the kernel; ``n_modes=None`` keeps every mode."""

    n_modes: int | None = None


# --------------------------------------------------------------------------
# 1-D profiles


def gaussian(d, t):
    d = np.asarray(d, dtype=float)
    return np.exp(-d * d / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)


def _tail_antiderivative(u, t):
    """``T(u) = sqrt(t/pi) e^{-u^2/4t} - |u|/2 erfc(|u|/2sqrt t)``.

    T is the second antiderivative of the Gaussian with its linear part
    removed; T(u) equals the integral of erfc(s/2sqrt t)/2 over (|u|, inf).
    """
    a = np.abs(np.asarray(u, dtype=float))
    return math.sqrt(t / math.pi) * np.exp(-a * a / (4.0 * t)) - 0.5 * a * erfc(a / (2.0 * math.sqrt(t)))


def profile(kind: str, d, t: float, h: float, origin=None):
    """Kernel profile as a function of the signed offset ``d = x_i - x_j``.

    ``origin`` flags entries with ``d == 0`` exactly (needed by ``cell``,
    whose linear part is supported there only).
    """
    d = np.asarray(d, dtype=float)
    if kind == "point":
        return gaussian(d, t)
    if kind == "cell":
        T = _tail_antiderivative
        out = (T(d + h, t) - 2.0 * T(d, t) + T(d - h, t)) / (h * h)
        if origin is None:
            origin = d == 0.0
        return out + np.where(origin, 1.0 / h, 0.0)
    if kind == "grad_point":
        return -d / (2.0 * t) * gaussian(d, t)
    if kind == "grad_cell":
        return (gaussian(d + 0.5 * h, t) - gaussian(d - 0.5 * h, t)) / h
    if kind == "lap_point":
        return gaussian(d, t) * (d * d / (4.0 * t * t) - 1.0 / (2.0 * t))
    if kind == "lap_cell":
        return (gaussian(d + h, t) - 2.0 * gaussian(d, t) + gaussian(d - h, t)) / (h * h)
    raise ValueError(f"unknown kernel kind {kind!r}")


def cutoff_offsets(t: float, h: float) -> int:
    """Largest index offset whose kernel can exceed the cutoff."""
    return int(math.ceil(math.sqrt(4.0 * CUTOFF_EXPONENT * t) / h)) + 2


def image_count(t: float, period: float) -> int:
    return int(math.ceil(6.0 * math.sqrt(t) * math.log(10.0) / period)) + 2


def _check_t(t) -> float:
    t = float(t)
    if not t > 0 or not math.isfinite(t):
        raise NonPositiveTime(f"time must be positive, got {t}")
    return t


# --------------------------------------------------------------------------
# the engine


@dataclass
class PairSum:
    value: float
    pairs: int


class HeatKernelEngine:
    """Heat kernel p_t and heat flow h_t on a space.

    Immutable after construction apart from the kernel-matrix cache, which
    is filled by a single writer and only read afterwards.
    """

    def __init__(self, space: MetricMeasureSpace, backend=None, *, eigenpairs=None,
                 cache_bytes: int = DEFAULT_CACHE_BYTES, pair_budget: int = 2**28,
                 streaming: bool = True):
        self.space = space
        geom = space.geometry
        if backend is None:
            if isinstance(geom, (LineGrid, EuclideanGrid)):
                backend = ClosedFormGaussian(space.dim)
            elif isinstance(geom, (CircleGrid, TorusGrid)):
                backend = ImageSum()
            else:
                backend = Spectral()
        self.backend = backend
        self.cache_bytes = int(cache_bytes)
        self.pair_budget = int(pair_budget)
        self.streaming = bool(streaming)
        self._cache: OrderedDict = OrderedDict()
        self._cache_used = 0
        self._lock = threading.Lock()
        self._eig = None  # (lam, phi) for dense spectral engines

        if isinstance(backend, ClosedFormGaussian):
            if space.axes is None or space.periodic or any(ax.period is not None for ax in space.axes):
                raise UnsupportedGeometry("the closed-form Gaussian needs an open grid")
            if backend.dim != space.dim:
                raise ValueError(f"backend dimension {backend.dim} != space dimension {space.dim}")
        elif isinstance(backend, ImageSum):
            if not space.periodic:
                raise UnsupportedGeometry("image sums need a circle or torus")
        elif isinstance(backend, Spectral):
            if eigenpairs is not None:
                lam, phi = eigenpairs
                self._set_eigenpairs(np.asarray(lam, float), np.asarray(phi, float))
            elif isinstance(geom, WeightedGraph):
                self._set_eigenpairs(*graph_eigenpairs(space))
            elif not space.periodic:
                raise UnsupportedGeometry("spectral engines need a closed geometry")
            elif backend.n_modes is not None and space.dim > 1:
                raise UnsupportedGeometry("mode truncation is only supported in 1-D")
        else:
            raise ValueError(f"unknown backend {backend!r}")

    # -- description ----------------------------------------------------
    @property
    def name(self) -> str:
        return {ClosedFormGaussian: "closed-form", ImageSum: "image-sum",
                Spectral: "spectral"}[type(self.backend)]

    @property
    def dense(self) -> bool:
        return self._eig is not None

    @property
    def supports_cell(self) -> bool:
        return not self.dense

    def _set_eigenpairs(self, lam, phi):
        order = np.argsort(lam, kind="stable")
        lam, phi = lam[order], phi[:, order]
        m = self.backend.n_modes
        self._n_total_modes = lam.size
        self._dropped_dense = math.inf
        if m is not None and m < lam.size:
            self._dropped_dense = float(lam[m])
            lam, phi = lam[:m], phi[:, :m]
        if phi.shape[0] != self.space.n_points:
            raise ValueError("eigenvector length does not match the space")
        self._eig = (np.maximum(lam, 0.0), phi)

    # -- truncation -----------------------------------------------------
    def _first_dropped_eigenvalue(self) -> float:
        if self._eig is not None:
            lam = self._eig[0]
            if lam.size >= self._n_total_modes:
                return math.inf
            return self._dropped_dense
        return min(self._fourier_cut(ax) for ax in self.space.axes)

    def _fourier_cut(self, ax: Axis) -> float:
        m = self.backend.n_modes
        if m is None or m >= ax.n:
            return (math.pi * ax.n / ax.period) ** 2
        lam = np.sort(self._fourier_eigs(ax))
        return float(lam[m])

    def check_truncation(self, t: float) -> None:
        if not isinstance(self.backend, Spectral):
            return
        cut = self._first_dropped_eigenvalue()
        if math.isfinite(cut) and math.exp(-cut * t) > TRUNCATION_RATIO:
            raise SpectralTruncationInsufficient(
                f"t={t:g} is too small for the retained modes (first dropped eigenvalue {cut:g})")

    # -- Fourier data (spectral backend on periodic grids) -----------------
    @staticmethod
    def _fourier_eigs(ax: Axis) -> np.ndarray:
        k = np.fft.fftfreq(ax.n, d=1.0 / ax.n)
        return (2.0 * math.pi * k / ax.period) ** 2

    def _fourier_multiplier(self, ax: Axis, t: float, kind: str) -> np.ndarray:
        n, L = ax.n, ax.period
        b = np.fft.fftfreq(n, d=1.0 / n)
        if kind in POINT_KINDS:
            self.check_truncation(t)
            lam = (2.0 * math.pi * b / L) ** 2
            keep = np.ones(n, dtype=bool)
            m = self.backend.n_modes
            if m is not None and m < n:
                keep[np.argsort(lam, kind="stable")[m:]] = False
            decay = np.where(keep, np.exp(-lam * t), 0.0)
            if kind == "point":
                return decay
            if kind == "grad_point":
                mult = 1j * (2.0 * math.pi * b / L) * decay
                if n % 2 == 0:
                    mult[n // 2] = 0.0
                return mult
            return -lam * decay
        # cell kinds: sum the aliases k = b + mN of the continuum expansion
        reach = math.sqrt(2.0 * CUTOFF_EXPONENT / t) * L / (2.0 * math.pi * n)
        n_alias = min(int(math.ceil(reach)) + 1, 100000)
        m = np.arange(-n_alias, n_alias + 1)
        k = b[:, None] + n * m[None, :]
        lam = (2.0 * math.pi * k / L) ** 2
        decay = np.exp(-lam * t)
        s = np.sinc(k / n)  # numpy sinc is sin(pi x)/(pi x)
        if kind == "cell":
            return np.sum(decay * s * s, axis=1)
        if kind == "lap_cell":
            return -np.sum(lam * decay * s * s, axis=1)
        if kind == "grad_cell":
            return 1j * np.sum((2.0 * math.pi * k / L) * decay * s, axis=1)
        raise ValueError(kind)

    # -- per-axis kernel data ---------------------------------------------
    def _periodic_column(self, ax: Axis, t: float, kind: str) -> np.ndarray:
        """Circulant column c with ``(Kf)_i = sum_j c[(i-j) mod n] f_j h``."""
        key = ("col", ax, t, kind)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if isinstance(self.backend, Spectral):
            col = np.fft.ifft(self._fourier_multiplier(ax, t, kind)).real / ax.spacing
        else:
            n, h, L = ax.n, ax.spacing, ax.period
            j = np.arange(n)
            K = self.backend.n_images if self.backend.n_images is not None else image_count(t, L)
            col = np.zeros(n)
            for k in range(-K, K + 1):
                d = j * h + k * L
                col += profile(kind, d, t, h, origin=(j == 0) & (k == 0))
        self._store(key, col)
        return col

    def _open_stencil(self, ax: Axis, t: float, kind: str):
        """Stencil ``s[m + M]`` for offsets ``m in [-M, M]``."""
        M = min(ax.n - 1, cutoff_offsets(t, ax.spacing))
        m = np.arange(-M, M + 1)
        return profile(kind, m * ax.spacing, t, ax.spacing, origin=(m == 0)), M

    def _axis_multiplier(self, ax: Axis, t: float, kind: str) -> np.ndarray:
        if isinstance(self.backend, Spectral):
            return self._fourier_multiplier(ax, t, kind)
        return np.fft.fft(self._periodic_column(ax, t, kind)) * ax.spacing

    # -- applying operators ---------------------------------------------
    def _check_kind(self, kind: str) -> None:
        if kind not in KINDS:
            raise ValueError(f"unknown kernel kind {kind!r}")
        if kind != "point" and kind != "cell" and self.space.dim != 1:
            raise UnsupportedGeometry("gradient and Laplacian operators are 1-D only")
        if kind in CELL_KINDS and self.dense:
            raise UnsupportedGeometry("cell quadrature needs a grid engine")

    def apply(self, t: float, values, kind: str = "point") -> np.ndarray:
        """Apply the operator ``kind`` at time t to raw values."""
        t = _check_t(t)
        self._check_kind(kind)
        values = np.asarray(values, dtype=float).ravel()
        if values.shape != (self.space.n_points,):
            raise ValueError("field length does not match the space")
        if self.dense:
            return self._dense_apply(t, values, kind)
        arr = values.reshape(self.space.shape)
        for axis, ax in enumerate(self.space.axes):
            if ax.period is not None:
                mult = self._axis_multiplier(ax, t, kind)
                shape = [1] * arr.ndim
                shape[axis] = ax.n
                arr = np.fft.ifft(np.fft.fft(arr, axis=axis) * mult.reshape(shape), axis=axis).real
            else:
                arr = self._open_axis_apply(arr, axis, ax, t, kind)
        return arr.ravel()

    def _open_axis_apply(self, arr, axis, ax: Axis, t, kind):
        s, M = self._open_stencil(ax, t, kind)
        moved = np.moveaxis(arr, axis, -1)
        full = fftconvolve(moved, s[(None,) * (moved.ndim - 1)], axes=-1) if moved.ndim > 1 \
            else fftconvolve(moved, s)
        out = full[..., M:M + ax.n] * ax.spacing
        fl, fr = moved[..., :1], moved[..., -1:]
        out = out + fr * _tail_profile(kind, ax, t, "right") + fl * _tail_profile(kind, ax, t, "left")
        return np.moveaxis(out, -1, axis)

    def heat_apply(self, t: float, f, quadrature: str = "point") -> ScalarField:
        """``h_t f`` as a new field (cell averages under ``quadrature='cell'``)."""
        vals = f.values if hasattr(f, "values") else f
        out = self.apply(t, vals, "cell" if quadrature == "cell" else "point")
        return ScalarField(self.space, out)

    def heat_gradient(self, t: float, f, quadrature: str = "point") -> np.ndarray:
        vals = f.values if hasattr(f, "values") else f
        return self.apply(t, vals, "grad_cell" if quadrature == "cell" else "grad_point")

    def heat_laplacian(self, t: float, f, quadrature: str = "point") -> np.ndarray:
        vals = f.values if hasattr(f, "values") else f
        return self.apply(t, vals, "lap_cell" if quadrature == "cell" else "lap_point")

    # -- kernel values -----------------------------------------------------
    def kernel(self, t: float, x, y) -> np.ndarray:
        """Point values ``p_t(x, y)`` for node indices (broadcasting)."""
        t = _check_t(t)
        x = np.asarray(x)
        y = np.asarray(y)
        if self.dense:
            self.check_truncation(t)
            lam, phi = self._eig
            vals = np.einsum("...k,k,...k->...", phi[x], np.exp(-lam * t), phi[y])
            return self._clamp(vals)
        out = np.ones(np.broadcast(x, y).shape)
        idx_x = np.unravel_index(x, self.space.shape)
        idx_y = np.unravel_index(y, self.space.shape)
        for axis, ax in enumerate(self.space.axes):
            if ax.period is not None:
                col = self._periodic_column(ax, t, "point")
                out = out * col[np.mod(idx_x[axis] - idx_y[axis], ax.n)]
            else:
                d = (idx_x[axis] - idx_y[axis]) * ax.spacing
                out = out * gaussian(d, t)
        if isinstance(self.backend, Spectral):
            out = self._clamp(out)
        return out

    def kernel_at(self, t: float, xs) -> np.ndarray:
        """Kernel between arbitrary 1-D coordinates ``xs`` and every node."""
        t = _check_t(t)
        if self.space.dim != 1 or self.dense:
            raise UnsupportedGeometry("off-grid kernel evaluation needs a 1-D grid")
        ax = self.space.axes[0]
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        d = xs[:, None] - self.space.coords[None, :]
        if isinstance(self.backend, ClosedFormGaussian):
            return gaussian(d, t)
        if isinstance(self.backend, ImageSum):
            K = self.backend.n_images if self.backend.n_images is not None else image_count(t, ax.period)
            d = np.mod(d + 0.5 * ax.period, ax.period) - 0.5 * ax.period
            return sum(gaussian(d + k * ax.period, t) for k in range(-K, K + 1))
        mult = self._fourier_multiplier(ax, t, "point")
        freq = 2.0 * math.pi * np.fft.fftfreq(ax.n, d=1.0 / ax.n) / ax.period
        phase = np.exp(1j * d[..., None] * freq)
        return self._clamp((phase @ mult).real / ax.period)

    def _clamp(self, vals):
        vals = np.asarray(vals, dtype=float)
        if np.any(vals < -NEGATIVE_CLAMP):
            raise SpectralTruncationInsufficient(
                f"spectral kernel has negative values down to {vals.min():.3g}")
        return np.where(vals < 0, 0.0, vals)

    # -- dense matrices ------------------------------------------------------
    def matrix(self, t: float, kind: str = "point") -> np.ndarray:
        """Dense matrix M with ``(K f)_i = sum_j M_ij f_j w_j``."""
        t = _check_t(t)
        self._check_kind(kind)
        key = ("mat", t, kind)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        mat = self._matrix_rows(t, kind, 0, self.space.n_points)
        self._store(key, mat)
        return mat

    def _matrix_rows(self, t, kind, start, stop) -> np.ndarray:
        n = self.space.n_points
        if self.dense:
            self.check_truncation(t)
            lam, phi = self._eig
            scale = np.exp(-lam * t) if kind == "point" else -lam * np.exp(-lam * t)
            block = (phi[start:stop] * scale) @ phi.T
            return self._clamp(block) if kind == "point" else block
        if kind == "point":
            rows = np.arange(start, stop)
            return self.kernel(t, rows[:, None], np.arange(n)[None, :])
        # other kinds: apply to unit vectors scaled by 1/w
        out = np.empty((stop - start, n))
        w = self.space.weights
        for col in range(n):
            e = np.zeros(n)
            e[col] = 1.0 / w[col]
            out[:, col] = self.apply(t, e, kind)[start:stop]
        return out

    def _store(self, key, arr) -> None:
        size = arr.nbytes
        if size > self.cache_bytes:
            return
        arr.setflags(write=False)
        with self._lock:
            if key in self._cache:
                return
            while self._cache and self._cache_used + size > self.cache_bytes:
                _, old = self._cache.popitem(last=False)
                self._cache_used -= old.nbytes
            self._cache[key] = arr
            self._cache_used += size

    def _dense_apply(self, t, values, kind):
        if kind not in ("point", "lap_point"):
            raise UnsupportedGeometry(f"{kind} is not available on dense spectral engines")
        lam, phi = self._eig
        self.check_truncation(t)
        coef = phi.T @ (values * self.space.weights)
        scale = np.exp(-lam * t) if kind == "point" else -lam * np.exp(-lam * t)
        return phi @ (scale * coef)

    # -- pair sums ---------------------------------------------------------
    def pair_sum(self, t: float, f, g=None, p: float = 1.0, *, product: bool = False,
                 quadrature: str = "point") -> PairSum:
        """Double sum of ``p_t(x, y) phi(x, y) w_x w_y`` over ordered pairs.

        ``phi`` is ``|f(x) - f(y)|^p`` or, with ``product=True``,
        ``(f(x) - f(y)) (g(x) - g(y))``.  Pairs beyond the distance cutoff
        are skipped; accumulation is compensated.
        """
        t = _check_t(t)
        kind = "cell" if quadrature == "cell" else "point"
        self._check_kind(kind)
        f = np.ascontiguousarray(np.asarray(f, dtype=float).ravel())
        g = f if g is None else np.ascontiguousarray(np.asarray(g, dtype=float).ravel())
        mode = 1 if product else 0
        p = float(p)
        if self.dense:
            return self._dense_pair_sum(t, f, g, p, mode)
        axes = self.space.axes
        if len(axes) == 1:
            return self._pair_sum_1d(axes[0], t, f, g, p, mode, kind)
        return self._pair_sum_nd(t, f, g, p, mode, kind)

    def _pair_sum_1d(self, ax, t, f, g, p, mode, kind) -> PairSum:
        h = ax.spacing
        n = ax.n
        if ax.period is not None:
            col = self._periodic_column(ax, t, kind)
            M = min(n // 2, cutoff_offsets(t, h))
            k = np.ascontiguousarray(col[: M + 1])
            val = kernels.offset_pair_sum(f, g, k, True, p, mode) * h * h
            return PairSum(val, n * 2 * M)
        s, M = self._open_stencil(ax, t, kind)
        k = np.ascontiguousarray(s[M:])
        val = kernels.offset_pair_sum(f, g, k, False, p, mode) * h * h
        # exact contribution of the constant extension beyond both ends
        fl, fr, gl, gr = f[0], f[-1], g[0], g[-1]
        tail_r = _pair_tail(kind, ax, t, "right")
        tail_l = _pair_tail(kind, ax, t, "left")
        phi_r = _phi(f, fr, g, gr, p, mode)
        phi_l = _phi(f, fl, g, gl, p, mode)
        ext = 2.0 * h * (math.fsum(phi_r * tail_r) + math.fsum(phi_l * tail_l))
        ext += 2.0 * float(_phi(fl, fr, gl, gr, p, mode)) * _outer_pair_mass(kind, ax, t)
        return PairSum(val + ext, n * 2 * M + 2 * n)

    def _pair_sum_nd(self, t, f, g, p, mode, kind) -> PairSum:
        axes = self.space.axes
        shape = self.space.shape
        F = f.reshape(shape)
        G = g.reshape(shape)
        tables = []
        for ax in axes:
            if ax.period is not None:
                col = self._periodic_column(ax, t, kind)
                M = min(ax.n // 2, cutoff_offsets(t, ax.spacing))
                offs = np.arange(-M, M + 1) if 2 * M < ax.n else np.arange(-(ax.n // 2) + 1, ax.n // 2 + 1)
                vals = col[np.mod(offs, ax.n)]
            else:
                s, M = self._open_stencil(ax, t, kind)
                offs = np.arange(-M, M + 1)
                vals = s
            tables.append((offs, vals))
        cell = float(np.prod([ax.spacing for ax in axes]))
        w2 = cell * cell
        terms = []
        pairs = 0
        floor = 1e-300

        for combo in itertools.product(*[range(len(o)) for o, _ in tables]):
            kval = 1.0
            for (offs, vals), c in zip(tables, combo):
                kval *= vals[c]
            if kval == 0.0 or abs(kval) < floor:
                continue
            if all(tables[a][0][c] == 0 for a, c in enumerate(combo)):
                continue
            a_sl, b_sl = [], []
            rolled_f, rolled_g = F, G
            for a, (ax, (offs, _), c) in enumerate(zip(axes, tables, combo)):
                m = int(offs[c])
                if ax.period is not None:
                    rolled_f = np.roll(rolled_f, -m, axis=a)
                    rolled_g = np.roll(rolled_g, -m, axis=a)
                    a_sl.append(slice(None))
                    b_sl.append(slice(None))
                else:
                    if m >= 0:
                        a_sl.append(slice(0, ax.n - m))
                        b_sl.append(slice(m, ax.n))
                    else:
                        a_sl.append(slice(-m, ax.n))
                        b_sl.append(slice(0, ax.n + m))
            fa, ga = F[tuple(a_sl)], G[tuple(a_sl)]
            fb, gb = rolled_f[tuple(b_sl)], rolled_g[tuple(b_sl)]
            phi = _phi(fa, fb, ga, gb, p, mode)
            terms.append(kval * float(np.sum(phi)))
            pairs += phi.size
        return PairSum(math.fsum(terms) * w2, pairs)

    def _dense_pair_sum(self, t, f, g, p, mode) -> PairSum:
        n = self.space.n_points
        w = np.ascontiguousarray(self.space.weights)
        if n * n > self.pair_budget and not self.streaming:
            raise PairBudgetExceeded(f"{n * n} pairs exceed the budget of {self.pair_budget}")
        if n * n * 8 <= self.cache_bytes:
            K = np.ascontiguousarray(self.matrix(t, "point"))
            return PairSum(kernels.dense_pair_sum(K, 0, f, g, w, p, mode), n * n)
        rows = max(1, self.cache_bytes // (8 * n))
        parts = []
        for start in range(0, n, rows):
            stop = min(n, start + rows)
            K = np.ascontiguousarray(self._matrix_rows(t, "point", start, stop))
            parts.append(kernels.dense_pair_sum(K, start, f, g, w, p, mode))
        return PairSum(math.fsum(parts), n * n)

    # -- persistence -------------------------------------------------------
    def eigenpairs(self):
        """``(lam, phi)`` with phi orthonormal in the weighted inner product."""
        if self._eig is not None:
            return self._eig
        if not isinstance(self.backend, Spectral) or self.space.dim != 1:
            raise UnsupportedGeometry("explicit eigenpairs exist for 1-D spectral and graph engines")
        lam, phi = circle_eigenpairs(self.space)
        m = self.backend.n_modes
        return (lam, phi) if m is None else (lam[:m], phi[:, :m])

    def save_eigenpairs(self, path) -> None:
        lam, phi = self.eigenpairs()
        write_hbk1(path, lam, phi)

    @classmethod
    def from_sidecar(cls, space: MetricMeasureSpace, path, **kw) -> "HeatKernelEngine":
        lam, phi = read_hbk1(path)
        if phi.shape[0] != space.n_points:
            raise ValueError("sidecar was written for a different space")
        eng = cls.__new__(cls)
        cls.__init__(eng, space, Spectral(), eigenpairs=(lam, phi), **kw)
        if lam.size < space.n_points:
            # the first dropped eigenvalue is unknown; the largest kept one bounds it
            eng._n_total_modes = space.n_points
            eng._dropped_dense = float(np.max(lam))
        return eng


def _phi(fa, fb, ga, gb, p, mode):
    d = np.asarray(fa, dtype=float) - fb
    if mode == 1:
        return d * (np.asarray(ga, dtype=float) - gb)
    d = np.abs(d)
    if p == 1.0:
        return d
    if p == 2.0:
        return d * d
    return d**p


def _tail_profile(kind: str, ax: Axis, t: float, side: str) -> np.ndarray:
    """Effect of a unit constant beyond one end of an open axis, per node.

    Point kinds continue the sampled lattice past the edge (suffix sums of
    the stencil), cell kinds integrate the exact continuum tail.
    """
    if kind in POINT_KINDS:
        return _lattice_tail(kind, ax, t, side)
    x = ax.centers
    h = ax.spacing
    a, b = ax.origin, ax.end
    T = _tail_antiderivative
    if side == "right":
        u, sign, edge = b - x, 1.0, b
    else:
        u, sign, edge = x - a, -1.0, a
    if kind == "cell":
        return (T(u - 0.5 * h, t) - T(u + 0.5 * h, t)) / h
    if kind == "grad_cell":
        return sign * gaussian(x - edge, t)
    if kind == "lap_cell":
        return sign * (gaussian(x + 0.5 * h - edge, t) - gaussian(x - 0.5 * h - edge, t)) / h
    raise ValueError(kind)


def _lattice_tail(kind: str, ax: Axis, t: float, side: str) -> np.ndarray:
    n, h = ax.n, ax.spacing
    mc = cutoff_offsets(t, h)
    m = np.arange(1, mc + 1)
    sign = -1.0 if side == "right" else 1.0  # sign of d = x_i - x_j
    s = profile(kind, sign * m * h, t, h)
    suffix = np.concatenate([np.cumsum(s[::-1])[::-1], [0.0]]) * h  # suffix[q-1] = sum_{m>=q}
    q = (n - np.arange(n)) if side == "right" else (np.arange(n) + 1)
    return suffix[np.minimum(q, mc + 1) - 1]


def _outer_pair_mass(kind: str, ax: Axis, t: float) -> float:
    """Kernel mass of pairs lying beyond opposite ends of an open axis."""
    if kind == "cell":
        return float(_tail_antiderivative(ax.end - ax.origin, t))
    n, h = ax.n, ax.spacing
    mc = cutoff_offsets(t, h)
    if mc <= n:
        return 0.0
    m = np.arange(n + 1, mc + 1)
    return math.fsum((m - n) * gaussian(m * h, t) * h * h)


def _pair_tail(kind: str, ax: Axis, t: float, side: str) -> np.ndarray:
    return _tail_profile("cell" if kind == "cell" else "point", ax, t, side)


# --------------------------------------------------------------------------
# eigenpairs


def graph_laplacian(space: MetricMeasureSpace) -> np.ndarray:
    """Matrix ``L`` with ``-Delta = W^{-1} L`` (so L = D - A)."""
    n = space.n_points
    A = np.zeros((n, n))
    for u, v, w in space.geometry.edges:
        if u == v:
            continue
        A[u, v] += w
        A[v, u] += w
    return np.diag(A.sum(axis=1)) - A


def graph_eigenpairs(space: MetricMeasureSpace):
    """Generalised eigenpairs ``L phi = lam W phi`` with ``phi^T W phi = I``."""
    lam, phi = eigh(graph_laplacian(space), np.diag(space.weights))
    return lam, phi


def circle_eigenpairs(space: MetricMeasureSpace):
    """Real Fourier basis on a cell-centred circle grid, sorted by eigenvalue."""
    ax = space.axes[0]
    n, L = ax.n, ax.period
    x = space.coords
    lam = [0.0]
    cols = [np.full(n, 1.0 / math.sqrt(L))]
    for k in range(1, (n - 1) // 2 + 1):
        w = 2.0 * math.pi * k / L
        lam += [w * w, w * w]
        cols += [math.sqrt(2.0 / L) * np.cos(w * x), math.sqrt(2.0 / L) * np.sin(w * x)]
    if n % 2 == 0:
        w = math.pi * n / L
        lam.append(w * w)
        # on cell centres the Nyquist cosine vanishes; the sine is the mode
        cols.append(np.sin(w * x) / math.sqrt(L))
    return np.asarray(lam), np.stack(cols, axis=1)


# --------------------------------------------------------------------------
# HBK1 sidecar

_MAGIC = b"HBK1"


def write_hbk1(path, lam, phi) -> None:
    """Write ``magic, N, M, lam[M], phi`` (column-major), little-endian doubles."""
    lam = np.asarray(lam, dtype="<f8")
    phi = np.asarray(phi, dtype="<f8")
    n, m = phi.shape
    if lam.shape != (m,):
        raise ValueError("one eigenvalue per eigenvector is required")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<2d", float(n), float(m)))
        fh.write(lam.tobytes())
        fh.write(np.asfortranarray(phi).tobytes(order="F"))


def read_hbk1(path):
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not an HBK1 sidecar")
    n_f, m_f = struct.unpack("<2d", data[4:20])
    n, m = int(n_f), int(m_f)
    if n != n_f or m != m_f or n <= 0 or m <= 0:
        raise ValueError(f"{path}: corrupt header")
    expected = 20 + 8 * (m + n * m)
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    lam = np.frombuffer(data, dtype="<f8", count=m, offset=20).astype(float)
    phi = np.frombuffer(data, dtype="<f8", count=n * m, offset=20 + 8 * m)
    return lam, phi.reshape((n, m), order="F").astype(float)


# --------------------------------------------------------------------------
# validation reports


@dataclass
class AxiomRow:
    t: float
    mass: float
    self_adjoint: float
    max_principle: float
    symmetry: float
    semigroup: float
    tol: float

    @property
    def passed(self) -> bool:
        vals = (self.mass, self.self_adjoint, self.max_principle, self.symmetry, self.semigroup)
        return all(v <= self.tol for v in vals if not math.isnan(v))


@dataclass
class AxiomReport:
    engine: str
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(r.passed for r in self.rows)

    def lines(self) -> list[str]:
        out = []
        for r in self.rows:
            out.append(f"t={r.t:<9.3g} mass={r.mass:.2e} self-adjoint={r.self_adjoint:.2e} "
                       f"max-principle={r.max_principle:.2e} symmetry={r.symmetry:.2e} "
                       f"semigroup={'n/a' if math.isnan(r.semigroup) else format(r.semigroup, '.2e')} "
                       f"{'PASS' if r.passed else 'FAIL'}")
        return out


def _random_fields(space, rng, count):
    n = space.n_points
    fields = rng.uniform(-1.0, 1.0, size=(count, n))
    if space.axes is not None and not space.periodic:
        # keep open-grid test fields compactly supported inside the window
        mask = np.ones(space.shape, dtype=bool)
        for axis, ax in enumerate(space.axes):
            if ax.period is None:
                x = ax.centers
                inside = (x > ax.origin + 0.25 * (ax.end - ax.origin)) & (x < ax.end - 0.25 * (ax.end - ax.origin))
                shape = [1] * len(space.axes)
                shape[axis] = ax.n
                mask &= inside.reshape(shape)
        fields = fields * mask.ravel()[None, :]
    return fields


def validate_axioms(engine: HeatKernelEngine, ts, *, n_random: int = 4, seed: int = 0,
                    tol: float = 1e-8, quadrature: str = "point") -> AxiomReport:
    """Mass, self-adjointness, weak maximum principle, symmetry, semigroup.

    Defects below a few ulps are reported as 0.  The semigroup column always
    uses the point kernel: ``h_t h_t f`` against ``h_{2t} f``.
    """
    ts = list(ts)
    if not ts:
        raise ValueError("need at least one time")
    space = engine.space
    w = space.weights
    rng = np.random.default_rng(seed)
    kind = "cell" if quadrature == "cell" else "point"
    report = AxiomReport(engine.name)
    rand = _random_fields(space, rng, 2 * n_random)
    ones = np.ones(space.n_points)
    idx = rng.integers(0, space.n_points, size=(2, 256))
    eps_floor = 8.0 * np.finfo(float).eps
    margin = None
    if space.axes is not None and not space.periodic:
        margin = min(0.25 * (ax.end - ax.origin) for ax in space.axes if ax.period is None)
    for t in ts:
        t = _check_t(t)
        # on open grids the constant extension makes h_t 1 = 1 exact as well
        mass = float(np.max(np.abs(engine.apply(t, ones, kind) - 1.0)))
        sa = 0.0
        mp = 0.0
        for k in range(n_random):
            f, g = rand[2 * k], rand[2 * k + 1]
            hf, hg = engine.apply(t, f, kind), engine.apply(t, g, kind)
            sa = max(sa, abs(math.fsum(g * hf * w) - math.fsum(f * hg * w)))
            sup = float(np.max(np.abs(f)))
            mp = max(mp, float(np.max(np.abs(hf))) - sup)
        h1 = engine.apply(t, ones, kind)
        mp = max(mp, float(np.max(h1)) - 1.0)
        mp = 0.0 if mp <= eps_floor else mp
        kxy = engine.kernel(t, idx[0], idx[1])
        kyx = engine.kernel(t, idx[1], idx[0])
        sym = float(np.max(np.abs(kxy - kyx)) / max(float(np.max(np.abs(kxy))), 1e-300))
        f = rand[0]
        # cell quadrature is a projection of the flow, so compose point kernels
        if margin is not None and margin < 6.0 * math.sqrt(2.0 * t):
            semi = math.nan  # the flow reaches the window edges; not applicable
        else:
            half = engine.apply(t, engine.apply(t, f))
            full = engine.apply(2 * t, f)
            semi = float(np.max(np.abs(half - full)) / max(float(np.max(np.abs(full))), 1e-300))
        report.rows.append(AxiomRow(t, mass, sa, mp, sym, semi, tol))
    return report


@dataclass
class GaussianBoundReport:
    c1_minus: float
    c1_plus: float
    c3: float
    tail_rows: list
    budget: float

    @property
    def passed(self) -> bool:
        return max(self.c1_minus, self.c1_plus, self.c3) <= self.budget


def validate_gaussian_bounds(engine: HeatKernelEngine, ts, alphas, *, n_centers: int = 8,
                             budget: float = 100.0) -> GaussianBoundReport:
    """Empirical constants of the two-sided Gaussian bounds and the tail bound."""
    space = engine.space
    if space.axes is None:
        raise UnsupportedGeometry("Gaussian bounds are only checked on flat grids")
    w = space.weights
    # centres away from open boundaries
    if space.periodic:
        centers = np.linspace(0, space.n_points - 1, n_centers).astype(int)
    else:
        pts = space.points
        lo = np.array([ax.origin for ax in space.axes])
        hi = np.array([ax.end for ax in space.axes])
        mid = (lo + hi) / 2
        inner = np.where(np.all(np.abs(pts - mid) <= (hi - lo) / 8, axis=1))[0]
        centers = inner[np.linspace(0, inner.size - 1, n_centers).astype(int)]
    c_minus = c_plus = c3 = 0.0
    tail_rows = []
    allidx = np.arange(space.n_points)
    for t in ts:
        t = _check_t(t)
        r = math.sqrt(t)
        for x in centers:
            p = engine.kernel(t, np.full(space.n_points, x), allidx)
            d = space.distances_from(int(x))
            mball = space.ball_mass(int(x), r)
            # spectral kernels carry an absolute noise floor near 1e-16 of the
            # peak; the bounds are only meaningful above it
            floor = 1e-12 * float(p.max()) if isinstance(engine.backend, Spectral) else 1e-250
            ok = p > floor
            lp = np.log(p[ok])
            dd = d[ok] ** 2
            lm = math.log(mball)
            c_minus = max(c_minus, math.exp(float(np.max(-dd / (3 * t) - lm - lp))))
            c_plus = max(c_plus, math.exp(float(np.max(lp + lm + dd / (5 * t)))))
            for alpha in alphas:
                outside = math.fsum(p[d >= alpha * r] * w[d >= alpha * r])
                ratio = outside / math.exp(-alpha * alpha / 24.0)
                graded = alpha > 1
                tail_rows.append({"t": t, "center": int(x), "alpha": alpha, "ratio": ratio,
                                  "graded": graded})
                if graded:
                    c3 = max(c3, ratio)
    return GaussianBoundReport(c_minus, c_plus, c3, tail_rows, budget)


def cross_engine_defect(space: MetricMeasureSpace, t: float, n_samples: int = 64, seed: int = 0) -> float:
    """Max relative gap between image-sum and spectral kernels on a closed grid."""
    a = HeatKernelEngine(space, ImageSum())
    b = HeatKernelEngine(space, Spectral())
    rng = np.random.default_rng(seed)
    i, j = rng.integers(0, space.n_points, size=(2, n_samples))
    i = np.concatenate([i, np.arange(min(space.n_points, 8))])
    j = np.concatenate([j, np.arange(min(space.n_points, 8))])
    ka, kb = a.kernel(t, i, j), b.kernel(t, i, j)
    scale = np.max(np.abs(ka))
    return float(np.max(np.abs(ka - kb)) / scale)
