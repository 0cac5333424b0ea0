"""Config-driven experiment runner.

    heatbv run <config.toml>
    heatbv report <dir>
    heatbv validate-kernel <config.toml>

Exit codes: 0 when every verdict passes, 1 for configuration or I/O
errors, 2 when a verdict fails.  ``HEATBV_THREADS`` sets the sweep pool.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import calculus, functionals, limits
from .errors import ConfigError, HeatBVError
from .heat import (
    ClosedFormGaussian,
    HeatKernelEngine,
    ImageSum,
    Spectral,
    cross_engine_defect,
    validate_axioms,
    validate_gaussian_bounds,
)
from .oracle import quadrature_energy
from .space import (
    CircleGrid,
    EuclideanGrid,
    LineGrid,
    TorusGrid,
    WeightedGraph,
    build_space,
    halfline_set,
    interval_set,
    piecewise_field,
    sine_field,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCENARIOS = ("validate-kernel", "sobolev", "bv", "perimeter", "jump", "polarization", "blowup",
             "membership")
EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2


# --------------------------------------------------------------------------
# config


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        cfg = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg["_dir"] = path.parent
    validate_config(cfg)
    return cfg


def _need(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key '{key}' in {where}")
    return section[key]


def _num(section: dict, key: str, where: str, default=None) -> float:
    val = section.get(key, default)
    if val is None:
        raise ConfigError(f"missing required key '{key}' in {where}")
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"'{key}' in {where} must be a number, got {val!r}")
    return float(val)


def validate_config(cfg: dict) -> None:
    scenario = _need(cfg, "scenario", "the top level")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {', '.join(SCENARIOS)}")
    _need(cfg, "geometry", "the top level")
    tol = _num(cfg, "tolerance", "the top level", 0.01)
    if not 0 < tol <= 0.1 and scenario not in ("validate-kernel",):
        raise ConfigError(f"tolerance must lie in (0, 0.1], got {tol}")
    needs = {
        "sobolev": ("field", "sweep", "p"),
        "bv": ("field", "sweep"),
        "perimeter": ("set", "sweep"),
        "jump": ("field", "sweep"),
        "polarization": ("set", "sweep"),
        "blowup": ("set", "sweep", "point"),
        "membership": ("field", "radii", "expect"),
        "validate-kernel": (),
    }[scenario]
    for key in needs:
        _need(cfg, key, f"a {scenario} config")
    if scenario == "jump":
        for key in ("f", "g"):
            _need(cfg["field"], key, "[field]")
    if scenario == "polarization":
        for key in ("E", "F"):
            _need(cfg["set"], key, "[set]")
    if scenario == "membership" and cfg["expect"] not in ("bounded", "divergent"):
        raise ConfigError("expect must be 'bounded' or 'divergent'")


def make_space(cfg: dict):
    g = cfg["geometry"]
    kind = _need(g, "kind", "[geometry]")
    if kind == "line":
        geom = LineGrid(_num(g, "a", "[geometry]"), _num(g, "b", "[geometry]"), int(_num(g, "n", "[geometry]")))
    elif kind == "circle":
        geom = CircleGrid(_num(g, "length", "[geometry]", 1.0), int(_num(g, "n", "[geometry]")))
    elif kind == "torus":
        geom = TorusGrid(_num(g, "length", "[geometry]", 1.0), int(_num(g, "n", "[geometry]")),
                         int(_num(g, "dim", "[geometry]", 2)))
    elif kind == "box":
        geom = EuclideanGrid(tuple(_need(g, "lower", "[geometry]")), tuple(_need(g, "upper", "[geometry]")),
                             tuple(int(v) for v in _need(g, "n", "[geometry]")))
    elif kind == "graph":
        if "edge_file" in g:
            try:
                text = (cfg["_dir"] / g["edge_file"]).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read edge file: {exc.strerror}") from None
        else:
            text = _need(g, "edges", "[geometry]")
        geom = WeightedGraph.from_edge_list(text, g.get("vertex_weights"))
    else:
        raise ConfigError(f"unknown geometry kind {kind!r}")
    return build_space(geom)


def make_engine(cfg: dict, space):
    e = cfg.get("engine", {})
    name = e.get("backend")
    modes = e.get("modes")
    if "sidecar" in e:
        return HeatKernelEngine.from_sidecar(space, cfg["_dir"] / e["sidecar"])
    backend = {None: None, "closed-form": ClosedFormGaussian(space.dim), "image-sum": ImageSum(),
               "spectral": Spectral(None if modes is None else int(modes))}.get(name, "bad")
    if backend == "bad":
        raise ConfigError(f"unknown engine backend {name!r}")
    return HeatKernelEngine(space, backend)


def make_field(space, spec: dict, where: str):
    kind = _need(spec, "kind", where)
    if kind == "sine":
        return sine_field(space, _num(spec, "amplitude", where, 1.0), int(_num(spec, "frequency", where, 1)))
    if kind == "steps":
        return piecewise_field(space, _need(spec, "breakpoints", where), _need(spec, "levels", where))
    if kind in ("intervals", "halfline"):
        return make_set(space, spec, where).field()
    if kind == "sum":
        parts = _need(spec, "terms", where)
        out = make_field(space, parts[0], where)
        for part in parts[1:]:
            out = out + make_field(space, part, where)
        return out
    raise ConfigError(f"unknown field kind {kind!r} in {where}")


def make_set(space, spec: dict, where: str):
    kind = spec.get("kind", "intervals")
    if kind == "intervals":
        return interval_set(space, [tuple(iv) for iv in _need(spec, "intervals", where)])
    if kind == "halfline":
        return halfline_set(space, _num(spec, "at", where, 0.0), int(_num(spec, "side", where, 1)))
    raise ConfigError(f"unknown set kind {kind!r} in {where}")


# --------------------------------------------------------------------------
# scenarios


def _sweep_args(cfg):
    s = cfg["sweep"]
    return _num(s, "t0", "[sweep]"), _num(s, "rho", "[sweep]", 0.5), int(_num(s, "k", "[sweep]", 6))


def _target_override(cfg, default):
    return float(cfg["target"]) if "target" in cfg else default


def run_scenario(cfg: dict, out: Path, timing: bool = True):
    """Run one configured scenario; returns the list of verdict records."""
    scenario = cfg["scenario"]
    if scenario == "validate-kernel":
        return run_validate(cfg, out)
    space = make_space(cfg)
    engine = make_engine(cfg, space)
    tol = float(cfg.get("tolerance", 0.01))
    name = cfg.get("name", scenario)
    geometry = space.describe()
    if scenario == "membership":
        return run_membership(cfg, space, out, name, geometry, timing)

    t0, rho, k = _sweep_args(cfg)
    if scenario == "sobolev":
        p = _num(cfg, "p", "the top level")
        f = make_field(space, cfg["field"], "[field]")
        closure = lambda t: functionals.sobolev_functional(engine, f, p, t)  # noqa: E731
        energy = quadrature_energy(f, p).value if f.formula is not None else calculus.cheeger_energy(f, p).value
        target = limits.target_constant("sobolev", p=p, energy=energy)
    elif scenario == "bv":
        f = make_field(space, cfg["field"], "[field]")
        closure = lambda t: functionals.bv_functional(engine, f, t)  # noqa: E731
        target = limits.target_constant("bv", f=f)
    elif scenario == "perimeter":
        E = make_set(space, cfg["set"], "[set]")
        closure = lambda t: functionals.set_functional(engine, E, t)  # noqa: E731
        target = limits.BV_CONSTANT * calculus.perimeter(E)
    elif scenario == "jump":
        f = make_field(space, cfg["field"]["f"], "[field.f]")
        g = make_field(space, cfg["field"]["g"], "[field.g]")
        closure = lambda t: functionals.jump_functional(engine, f, g, t)  # noqa: E731
        target = limits.target_constant("jump-pairing", f=f, g=g)
    elif scenario == "polarization":
        E = make_set(space, cfg["set"]["E"], "[set.E]")
        F = make_set(space, cfg["set"]["F"], "[set.F]")
        closure = lambda tau: functionals.polarization_g(engine, E, F, math.sqrt(tau))  # noqa: E731
        target = limits.target_constant("jump-pairing", f=E, g=F)
    elif scenario == "blowup":
        E = make_set(space, cfg["set"], "[set]")
        x = _num(cfg, "point", "the top level")

        def closure(tau):
            v = functionals.blowup_profile(engine, E, x, math.sqrt(tau))
            return functionals.FunctionalSample(
                "blowup", tau, [functionals.PathValue("gradient-pairing", v, 0.0, 0)])

        target = limits.BLOWUP_CONSTANT
    else:  # pragma: no cover - validated earlier
        raise ConfigError(scenario)
    target = _target_override(cfg, target)
    curve = limits.sweep(closure, t0, rho, k, space=space, scenario=name)
    limits.judge(curve, target, tol)
    with functionals.CsvLog(out / "samples.csv", geometry, space.n_points) as log:
        for s in curve.samples:
            log.write(s if timing else _untimed(s))
    write_svg(out / "curve.svg", curve.ts, curve.values, target, title=name)
    return [curve.record()]


def _untimed(sample):
    res = [functionals.PathValue(r.path, r.value, 0.0, r.pairs) for r in sample.results]
    return functionals.FunctionalSample(sample.functional, sample.t, res, sample.p)


def run_membership(cfg, space, out, name, geometry, timing):
    f = make_field(space, cfg["field"], "[field]")
    p = _num(cfg, "p", "the top level", 2.0)
    radii = sorted((float(r) for r in cfg["radii"]), reverse=True)
    vals = [functionals.ks_functional(space, f, p, r) for r in radii]
    ratios = [b / a if a > 0 else math.inf for a, b in zip(vals[:-1], vals[1:])]
    expect = cfg["expect"]
    if expect == "bounded":
        threshold = float(cfg.get("threshold", math.sqrt(2.0)))
        worst = max(ratios)
        ok = worst <= threshold
    else:
        threshold = float(cfg.get("threshold", 2.0))
        worst = min(ratios)
        ok = worst >= threshold * (1.0 - 1e-12)
    with functionals.CsvLog(out / "samples.csv", geometry, space.n_points) as log:
        for r, v in zip(radii, vals):
            log.write(functionals.FunctionalSample("ks", r, [functionals.PathValue("double-sum", v, 0.0, 0)], p))
    write_svg(out / "curve.svg", radii, vals, None, title=name, xlabel="r")
    return [{"scenario": name, "limit_estimate": worst, "target": threshold,
             "rel_err": abs(worst - threshold) / threshold, "tolerance": None, "pass": bool(ok)}]


def run_validate(cfg, out):
    space = make_space(cfg)
    engine = make_engine(cfg, space)
    v = cfg.get("validate", {})
    ts = [float(t) for t in v.get("times", [1e-4, 1e-3, 1e-2, 1e-1, 1.0])]
    tol = float(v.get("tolerance", 1e-8))
    name = cfg.get("name", "validate-kernel")
    lines = [f"engine: {engine.name} on {space.describe()}"]
    report = validate_axioms(engine, ts, tol=tol)
    lines += report.lines()
    records = [{"scenario": f"{name}/axioms", "limit_estimate": max(
        max(x for x in (r.mass, r.self_adjoint, r.max_principle, r.symmetry, r.semigroup) if not math.isnan(x))
        for r in report.rows), "target": 0.0, "rel_err": None, "tolerance": tol, "pass": report.passed}]
    records[0]["rel_err"] = records[0]["limit_estimate"]
    if space.periodic and space.dim == 1:
        gap = max(cross_engine_defect(space, t) for t in ts)
        lines.append(f"image-sum vs spectral: max relative gap {gap:.2e}")
        records.append({"scenario": f"{name}/cross-engine", "limit_estimate": gap, "target": 0.0,
                        "rel_err": gap, "tolerance": 1e-10, "pass": gap <= 1e-10})
    if space.axes is not None:
        alphas = [float(a) for a in v.get("alphas", [0.5, 1.0, 2.0, 4.0, 10.0])]
        gb = validate_gaussian_bounds(engine, ts, alphas)
        lines.append(f"Gaussian bounds: C1- = {gb.c1_minus:.4g}, C1+ = {gb.c1_plus:.4g}, "
                     f"C3 = {gb.c3:.4g} (budget {gb.budget:g})")
        worst = max(gb.c1_minus, gb.c1_plus, gb.c3)
        records.append({"scenario": f"{name}/gaussian-bounds", "limit_estimate": worst,
                        "target": gb.budget, "rel_err": None, "tolerance": None, "pass": gb.passed})
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return records


# --------------------------------------------------------------------------
# SVG


def write_svg(path, xs, ys, target, title="", xlabel="t", width=500, height=300) -> None:
    """Log-x line plot with an optional horizontal target rule."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    pad_l, pad_r, pad_t, pad_b = 60, 20, 30, 40
    lx = np.log10(xs)
    x0, x1 = float(lx.min()), float(lx.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    vals = list(ys) + ([target] if target is not None else [])
    y0, y1 = float(min(vals)), float(max(vals))
    if y1 == y0:
        y0, y1 = y0 - 0.5 * max(abs(y0), 1.0), y1 + 0.5 * max(abs(y1), 1.0)
    span = y1 - y0
    y0, y1 = y0 - 0.05 * span, y1 + 0.05 * span

    def px(v):
        return pad_l + (v - x0) / (x1 - x0) * (width - pad_l - pad_r)

    def py(v):
        return height - pad_b - (v - y0) / (y1 - y0) * (height - pad_t - pad_b)

    pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(lx, ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="13" '
        f'font-family="sans-serif">{_esc(title)}</text>',
        f'<line x1="{pad_l}" y1="{height - pad_b}" x2="{width - pad_r}" y2="{height - pad_b}" stroke="black"/>',
        f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{height - pad_b}" stroke="black"/>',
    ]
    for dec in range(math.ceil(x0), math.floor(x1) + 1):
        parts.append(f'<line x1="{px(dec):.2f}" y1="{height - pad_b}" x2="{px(dec):.2f}" '
                     f'y2="{height - pad_b + 4}" stroke="black"/>')
        parts.append(f'<text x="{px(dec):.2f}" y="{height - pad_b + 16}" text-anchor="middle" '
                     f'font-size="10" font-family="sans-serif">1e{dec}</text>')
    for v in (y0 + 0.05 * (y1 - y0) / 1.1, 0.5 * (y0 + y1), y1 - 0.05 * (y1 - y0) / 1.1):
        parts.append(f'<text x="{pad_l - 4}" y="{py(v) + 3:.2f}" text-anchor="end" font-size="10" '
                     f'font-family="sans-serif">{v:.4g}</text>')
    if target is not None:
        parts.append(f'<line x1="{pad_l}" y1="{py(target):.2f}" x2="{width - pad_r}" y2="{py(target):.2f}" '
                     f'stroke="red" stroke-dasharray="4 3"/>')
    parts.append(f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
    for a, b in zip(lx, ys):
        parts.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2.5" fill="steelblue"/>')
    parts.append(f'<text x="{width / 2:.0f}" y="{height - 6}" text-anchor="middle" font-size="11" '
                 f'font-family="sans-serif">{_esc(xlabel)} (log scale)</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# --------------------------------------------------------------------------
# commands


def _output_dir(cfg, config_path: Path) -> Path:
    out = Path(cfg.get("output", config_path.stem + "-out"))
    if not out.is_absolute():
        out = config_path.parent / out
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "samples.csv"
    if csv_path.exists():
        csv_path.unlink()
    return out


def cmd_run(config: str, force_scenario: str | None = None) -> int:
    path = Path(config)
    try:
        cfg = load_config(path)
        if force_scenario:
            cfg["scenario"] = force_scenario
        out = _output_dir(cfg, path)
        timing = bool(cfg.get("options", {}).get("timing", True))
        records = run_scenario(cfg, out, timing=timing)
        (out / "verdict.json").write_text(json.dumps(records, indent=2) + "\n")
    except HeatBVError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for r in records:
        print(_record_line(r))
    return EXIT_OK if all(r["pass"] for r in records) else EXIT_FAILED


def _fmt(v, spec=".6g"):
    return "-" if v is None else format(v, spec)


def _record_line(r) -> str:
    return (f"{r['scenario']:<32} {_fmt(r['limit_estimate']):>14} {_fmt(r['target']):>14} "
            f"{_fmt(r['rel_err'], '.3e'):>11} {'PASS' if r['pass'] else 'FAIL'}")


def cmd_report(directory: str) -> int:
    root = Path(directory)
    if not root.is_dir():
        print(f"error: {root} is not a directory", file=sys.stderr)
        return EXIT_CONFIG
    rows = []
    for vf in sorted(root.rglob("verdict.json")):
        try:
            rows.extend(json.loads(vf.read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read {vf}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    rows.sort(key=lambda r: r["scenario"])
    print(f"{'scenario':<32} {'estimate':>14} {'target':>14} {'rel_err':>11} verdict")
    for r in rows:
        print(_record_line(r))
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_FAILED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="heatbv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the scenario described by a config file")
    p_run.add_argument("config")
    p_rep = sub.add_parser("report", help="summarise verdict.json files under a directory")
    p_rep.add_argument("directory")
    p_val = sub.add_parser("validate-kernel", help="check heat-flow axioms for a config's engine")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "report":
        return cmd_report(args.directory)
    return cmd_run(args.config, force_scenario="validate-kernel")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
