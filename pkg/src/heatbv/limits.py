"""t-sweeps, small-t extrapolation and verdicts against theoretical targets."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calculus import cheeger_energy, jump_data, shared_jump_pairing, total_variation
from .errors import DegenerateFit, ResolutionGuardViolated
from .functionals import FunctionalSample, PathValue
from .space import MetricMeasureSpace
from .special import gamma

MODELS = ("constant", "affine-in-t", "affine-in-sqrt-t")
CONSTANT_RANGE = 1e-10
GUARD_FACTOR = 10.0


@dataclass
class ConvergenceCurve:
    samples: list = field(default_factory=list)
    scenario: str = ""
    model: str | None = None
    limit_estimate: float | None = None
    limit_stderr: float | None = None
    target: float | None = None
    tolerance: float | None = None
    rel_err: float | None = None
    verdict: bool | None = None

    @property
    def ts(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.samples])

    def record(self) -> dict:
        return {"scenario": self.scenario, "limit_estimate": self.limit_estimate,
                "target": self.target, "rel_err": self.rel_err,
                "tolerance": self.tolerance, "pass": self.verdict}


def thread_count(default: int | None = None) -> int:
    env = os.environ.get("HEATBV_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"HEATBV_THREADS must be an integer, got {env!r}") from None
        return max(1, n)
    return default if default is not None else max(1, min(8, os.cpu_count() or 1))


def minimal_resolution(space: MetricMeasureSpace, t_min: float) -> int:
    """Smallest per-axis N satisfying the guard at ``t_min``."""
    lengths = [ax.n * ax.spacing for ax in space.axes]
    return int(math.ceil(GUARD_FACTOR * max(lengths) / math.sqrt(t_min)))


def resolution_guard(space: MetricMeasureSpace | None, t_min: float) -> None:
    """Require ``sqrt(t_min) >= 10 h`` on grids."""
    if space is None or space.axes is None:
        return
    h = max(ax.spacing for ax in space.axes)
    if math.sqrt(t_min) < GUARD_FACTOR * h:
        raise ResolutionGuardViolated(
            f"sqrt(t_min)={math.sqrt(t_min):.3g} < {GUARD_FACTOR:g} x spacing {h:.3g}; "
            f"need N >= {minimal_resolution(space, t_min)} per axis")


def ladder(t0: float, rho: float, k: int) -> list[float]:
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    if not 4 <= k <= 64:
        raise ValueError("k must lie in [4, 64]")
    return [t0 * rho**j for j in range(k)]


def _as_sample(t, out) -> FunctionalSample:
    if isinstance(out, FunctionalSample):
        return out
    return FunctionalSample("custom", float(t), [PathValue("direct", float(out), 0.0, 0)])


def sweep(closure, t0: float, rho: float, k: int, *, space: MetricMeasureSpace | None = None,
          threads: int | None = None, scenario: str = "") -> ConvergenceCurve:
    """Evaluate ``closure(t)`` on the ladder ``t0 rho^j`` (heat time).

    The closure may return a FunctionalSample or a bare number.  Sweeps run
    on a thread pool (``HEATBV_THREADS``); results are ordered by t, so the
    outcome does not depend on the pool size.
    """
    ts = ladder(t0, rho, k)
    resolution_guard(space, ts[-1])
    n = thread_count(threads)
    if n == 1:
        outs = [closure(t) for t in ts]
    else:
        with ThreadPoolExecutor(max_workers=min(n, k)) as pool:
            outs = list(pool.map(closure, ts))
    samples = [_as_sample(t, o) for t, o in zip(ts, outs)]
    samples.sort(key=lambda s: -s.t)
    return ConvergenceCurve(samples=samples, scenario=scenario)


def _fit(x, y):
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    rss = float(resid @ resid)
    dof = len(y) - 2
    cov00 = float(np.linalg.inv(A.T @ A)[0, 0])
    stderr = math.sqrt(rss / dof * cov00) if dof > 0 else 0.0
    return float(coef[0]), stderr, math.sqrt(rss)


def extrapolate(curve: ConvergenceCurve) -> ConvergenceCurve:
    """Fit ``a + b t`` and ``a + b sqrt t`` on the smallest half; keep the better.

    A constant model is used when the fitted samples vary by less than
    1e-10 relative.
    """
    if len(curve.samples) < 4:
        raise ValueError("extrapolation needs at least 4 samples")
    order = sorted(curve.samples, key=lambda s: s.t)
    ts = np.array([s.t for s in order])
    if np.all(ts == ts[0]):
        raise DegenerateFit("all samples share the same t")
    m = math.ceil(len(order) / 2)
    t, y = ts[:m], np.array([s.value for s in order[:m]])
    if np.all(t == t[0]):
        raise DegenerateFit("the fitted samples share the same t")
    spread = float(y.max() - y.min())
    scale = max(float(np.max(np.abs(y))), 1e-300)
    if spread <= CONSTANT_RANGE * scale or spread == 0.0:
        curve.model = "constant"
        curve.limit_estimate = float(np.mean(y))
        curve.limit_stderr = float(np.std(y) / math.sqrt(len(y)))
        return curve
    a1, s1, r1 = _fit(t, y)
    a2, s2, r2 = _fit(np.sqrt(t), y)
    if r1 <= r2:
        curve.model, curve.limit_estimate, curve.limit_stderr = "affine-in-t", a1, s1
    else:
        curve.model, curve.limit_estimate, curve.limit_stderr = "affine-in-sqrt-t", a2, s2
    return curve


def judge(curve: ConvergenceCurve, target: float, tolerance: float, *,
          absolute: bool | None = None) -> ConvergenceCurve:
    """Attach a verdict; the error is relative unless the target is 0."""
    if curve.limit_estimate is None:
        extrapolate(curve)
    if absolute is None:
        absolute = target == 0
    err = abs(curve.limit_estimate - target)
    curve.target = float(target)
    curve.tolerance = float(tolerance)
    curve.rel_err = err if absolute else err / abs(target)
    curve.verdict = bool(curve.rel_err <= tolerance)
    return curve


# --------------------------------------------------------------------------
# targets


def sobolev_constant(p: float) -> float:
    """``K_p = 2^p Gamma((p+1)/2) / sqrt(pi)``."""
    p = float(p)
    if p < 1:
        raise ValueError("p must be at least 1")
    return 2.0**p * gamma((p + 1.0) / 2.0) / math.sqrt(math.pi)


BV_CONSTANT = 2.0 / math.sqrt(math.pi)
PAIRING_CONSTANT = 1.0 / math.sqrt(math.pi)
BLOWUP_CONSTANT = 1.0 / math.sqrt(8.0 * math.pi)


def target_constant(kind: str, *, p: float | None = None, f=None, g=None,
                    energy: float | None = None) -> float:
    """Theoretical small-t limit.

    Kinds:
        ``sobolev``: ``K_p Ch_p(f)`` (pass ``energy`` to skip computing Ch_p).
        ``bv``: ``(2/sqrt pi) |Df|(X)``.
        ``jump-pairing``: ``(1/sqrt pi)`` times the shared-jump pairing of f, g.
        ``blowup``: ``1/sqrt(8 pi)``.
    """
    if kind == "sobolev":
        if p is None:
            raise ValueError("the sobolev target needs p")
        if energy is None:
            energy = cheeger_energy(f, p).value
        return sobolev_constant(p) * energy
    if kind == "bv":
        if energy is None:
            energy = total_variation(f).value
        return BV_CONSTANT * energy
    if kind == "jump-pairing":
        return PAIRING_CONSTANT * shared_jump_pairing(jump_data(f), jump_data(g))
    if kind == "blowup":
        return BLOWUP_CONSTANT
    raise ValueError(f"unknown target kind {kind!r}")


def write_verdicts(path, curves) -> None:
    records = [c.record() for c in curves]
    Path(path).write_text(json.dumps(records, indent=2) + "\n")
