import math

import numpy as np
import pytest

from heatbv.errors import DegenerateFit, ResolutionGuardViolated
from heatbv.functionals import (
    FunctionalSample,
    PathValue,
    bv_functional,
    jump_functional,
    polarization_g,
    set_functional,
    sobolev_functional,
)
from heatbv.heat import HeatKernelEngine, Spectral
from heatbv.limits import (
    ConvergenceCurve,
    extrapolate,
    judge,
    ladder,
    minimal_resolution,
    resolution_guard,
    sobolev_constant,
    sweep,
    target_constant,
    thread_count,
    write_verdicts,
)
from heatbv.space import CircleGrid, build_space, halfline_set, interval_set, piecewise_field, sine_field

SQRT_PI = math.sqrt(math.pi)


def _curve(ts, ys):
    return ConvergenceCurve([FunctionalSample("x", t, [PathValue("direct", y, 0.0, 0)]) for t, y in zip(ts, ys)])


def test_ladder_example():
    ts = ladder(1e-2, 0.5, 6)
    assert ts[0] == 1e-2 and ts[-1] == pytest.approx(3.125e-4, rel=1e-15)
    assert np.allclose(np.diff(np.log(ts)), math.log(0.5))


@pytest.mark.parametrize("args", [(0.0, 0.5, 6), (1e-2, 1.0, 6), (1e-2, 0.5, 3), (1e-2, 0.5, 65)])
def test_ladder_preconditions(args):
    with pytest.raises(ValueError):
        ladder(*args)


def test_resolution_guard_example():
    sp = build_space(CircleGrid(1.0, 256))
    with pytest.raises(ResolutionGuardViolated, match=f"N >= {minimal_resolution(sp, 1e-6)}"):
        resolution_guard(sp, 1e-6)
    assert minimal_resolution(sp, 1e-6) == 10000
    resolution_guard(sp, (10 / 256) ** 2)


def test_sweep_rejects_guard_violation():
    sp = build_space(CircleGrid(1.0, 256))
    with pytest.raises(ResolutionGuardViolated):
        sweep(lambda t: 1.0, 1e-2, 0.5, 20, space=sp)


def test_sweep_constant_halfline(line4096):
    eng = HeatKernelEngine(line4096)
    E = halfline_set(line4096)
    c = sweep(lambda t: bv_functional(eng, E, t), 1e-1, 0.5, 6, space=line4096)
    assert [s.t for s in c.samples] == sorted((s.t for s in c.samples), reverse=True)
    assert np.max(np.abs(c.values - 2 / SQRT_PI)) < 1e-12
    extrapolate(c)
    assert c.model == "constant"
    assert c.limit_estimate == pytest.approx(2 / SQRT_PI, abs=1e-12)


def test_sweep_independent_of_thread_count(circle2048):
    eng = HeatKernelEngine(circle2048)
    f = sine_field(circle2048)
    a = sweep(lambda t: sobolev_functional(eng, f, 2, t), 1e-2, 0.5, 6, threads=1)
    b = sweep(lambda t: sobolev_functional(eng, f, 2, t), 1e-2, 0.5, 6, threads=4)
    assert np.array_equal(a.values, b.values)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("HEATBV_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("HEATBV_THREADS", "lots")
    with pytest.raises(ValueError):
        thread_count()
    monkeypatch.delenv("HEATBV_THREADS")
    assert thread_count(2) == 2


def test_extrapolate_constant():
    c = extrapolate(_curve(ladder(1e-2, 0.5, 6), [3.25] * 6))
    assert c.model == "constant"
    assert c.limit_estimate == 3.25
    assert c.limit_stderr == pytest.approx(0.0, abs=1e-15)


def test_extrapolate_affine_in_t():
    ts = ladder(1e-2, 0.5, 8)
    c = extrapolate(_curve(ts, [2 + 5 * t for t in ts]))
    assert c.model == "affine-in-t"
    assert c.limit_estimate == pytest.approx(2.0, abs=1e-12)
    assert c.limit_stderr >= 0


@pytest.mark.parametrize("model", ["affine-in-t", "affine-in-sqrt-t"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_model_selection_with_noise(model, seed):
    rng = np.random.default_rng(seed)
    ts = np.array(ladder(1e-2, 0.5, 10))
    x = ts if model == "affine-in-t" else np.sqrt(ts)
    ys = 1.5 - 3.0 * x + 1e-10 * rng.standard_normal(ts.size)
    c = extrapolate(_curve(ts, ys))
    assert c.model == model
    assert c.limit_estimate == pytest.approx(1.5, abs=1e-8)


def test_degenerate_fit():
    with pytest.raises(DegenerateFit):
        extrapolate(_curve([0.1] * 5, [1, 2, 3, 4, 5]))


def test_too_few_samples():
    with pytest.raises(ValueError):
        extrapolate(_curve([0.1, 0.05, 0.025], [1, 1, 1]))


def test_verdict_requires_target():
    c = extrapolate(_curve(ladder(1e-2, 0.5, 6), [1.0] * 6))
    assert c.verdict is None and c.target is None
    judge(c, 1.005, 0.01)
    assert c.verdict is True and c.rel_err == pytest.approx(0.005 / 1.005)
    judge(c, 0.0, 0.01)
    assert c.rel_err == 1.0 and c.verdict is False


def test_verdict_records(tmp_path):
    import json

    c = judge(extrapolate(_curve(ladder(1e-2, 0.5, 6), [2.0] * 6)), 2.0, 0.01)
    c.scenario = "demo"
    write_verdicts(tmp_path / "v.json", [c])
    rec = json.loads((tmp_path / "v.json").read_text())
    assert rec == [{"scenario": "demo", "limit_estimate": 2.0, "target": 2.0, "rel_err": 0.0,
                    "tolerance": 0.01, "pass": True}]


# --------------------------------------------------------------------------
# targets


def test_sobolev_constants():
    assert sobolev_constant(2) == pytest.approx(2.0, rel=1e-14)
    assert sobolev_constant(1) == pytest.approx(2 / SQRT_PI, rel=1e-14)
    assert sobolev_constant(4) == pytest.approx(12.0, rel=1e-14)
    assert sobolev_constant(3) == pytest.approx(8 / SQRT_PI, rel=1e-14)


def test_sobolev_constant_against_mpmath():
    import mpmath as mp

    for p in np.linspace(1.0, 11.0, 41):
        exact = mp.mpf(2) ** p * mp.gamma((p + 1) / 2) / mp.sqrt(mp.pi)
        assert sobolev_constant(p) == pytest.approx(float(exact), rel=1e-13)


def test_target_kinds(circle2048):
    f = sine_field(circle2048)
    assert target_constant("sobolev", p=2, f=f) == pytest.approx(4 * math.pi**2, rel=1e-12)
    assert target_constant("bv", f=f) == pytest.approx(8 / SQRT_PI, rel=1e-5)
    assert target_constant("blowup") == pytest.approx(1 / math.sqrt(8 * math.pi), rel=1e-15)
    sp = build_space(CircleGrid(8.0, 1024))
    F = piecewise_field(sp, [0, 1, 2, 3], [0, 1, 2, 1, 0])
    G = interval_set(sp, [(1, 3)])
    assert target_constant("jump-pairing", f=F, g=G) == pytest.approx(2 / SQRT_PI, rel=1e-15)
    with pytest.raises(ValueError):
        target_constant("sobolev", f=f)
    with pytest.raises(ValueError):
        target_constant("area")


def test_sine_p2_limit_within_half_percent(circle2048):
    eng = HeatKernelEngine(circle2048)
    f = sine_field(circle2048)
    c = sweep(lambda t: sobolev_functional(eng, f, 2, t), 1e-2, 0.5, 6, space=circle2048)
    judge(c, 4 * math.pi**2, 0.005)
    assert c.verdict, c.rel_err


# --------------------------------------------------------------------------
# refinement


def _refinement_cases():
    def sob(p):
        def make(n):
            sp = build_space(CircleGrid(1.0, n))
            eng, f = HeatKernelEngine(sp), sine_field(sp)
            return sp, lambda t: sobolev_functional(eng, f, p, t)
        return make

    def bv(n):
        sp = build_space(CircleGrid(1.0, n))
        eng, f = HeatKernelEngine(sp), sine_field(sp)
        return sp, lambda t: bv_functional(eng, f, t)

    def arc(n):
        sp = build_space(CircleGrid(1.0, n))
        eng, E = HeatKernelEngine(sp), interval_set(sp, [(0.0, 0.5)])
        return sp, lambda t: set_functional(eng, E, t)

    def pairing(n):
        sp = build_space(CircleGrid(8.0, n))
        eng = HeatKernelEngine(sp)
        f = piecewise_field(sp, [0, 1, 2, 3], [0, 1, 2, 1, 0])
        g = interval_set(sp, [(1, 3)])
        return sp, lambda t: jump_functional(eng, f, g, t)

    def polar(n):
        sp = build_space(CircleGrid(1.0, n))
        eng = HeatKernelEngine(sp, Spectral())
        E, F = interval_set(sp, [(0.25, 0.75)]), interval_set(sp, [(0.5, 0.875)])
        return sp, lambda t: polarization_g(eng, E, F, math.sqrt(t))

    return [
        pytest.param(sob(2.0), 2048, 1e-2, id="sobolev-p2"),
        pytest.param(sob(1.5), 2048, 1e-2, id="sobolev-p1.5"),
        pytest.param(sob(3.0), 2048, 1e-2, id="sobolev-p3"),
        pytest.param(bv, 2048, 1e-2, id="bv-sine"),
        pytest.param(arc, 2048, 1e-2, id="set-arc"),
        pytest.param(pairing, 8192, 1e-1, id="jump-pairing"),
        pytest.param(polar, 2048, 1e-3, id="polarization"),
    ]


@pytest.mark.parametrize("make,n,t0", _refinement_cases())
def test_refinement_moves_limit_less_than_stderr(make, n, t0):
    coarse_sp, coarse = make(n)
    fine_sp, fine = make(2 * n)
    a = extrapolate(sweep(coarse, t0, 0.5, 6, space=coarse_sp))
    b = extrapolate(sweep(fine, t0, 0.5, 6, space=fine_sp))
    # differences below 1e-12 relative are summation noise
    noise = 1e-12 * max(abs(a.limit_estimate), 1.0)
    assert abs(a.limit_estimate - b.limit_estimate) <= max(a.limit_stderr, noise)
