"""Command-line entry point.

Every run resolves its parameters from built-in defaults, preset defaults,
an optional ``--config`` JSON file and command-line flags (later wins). The
resolved configuration is written next to the results as
``<command>.config.json``; feeding it back through ``--config`` repeats the
run. Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .bakerclass import DomainOracle, OracleError, Region, classify_baker
from .construction import (
    ConstructionError,
    PeriodicItinerary,
    SectorSystem,
    check_budget,
    check_model_containment,
    d_prime_for,
    delta,
    delta_p,
    epsilon_budget,
    pi_order,
    pq_counts,
    scan_k,
    successor,
)
from .dynamics import (
    NotEscapingError,
    OrbitBudget,
    Verdict,
    essential_itinerary,
    iterate,
    to_ascii,
    write_orbit_csv,
)
from .exprcore import ExprError, Sentinel, eval_expr, parse_expr
from .mapmodel import MapError, MapSpec, SentinelError, build_lift, compute_index, eval_map, verify_lift
from .presets import DEFAULT_SEEDS, PRESETS, get_preset
from .render import Palette, RenderError, RenderJob, Viewport, render
from .wanderingcert import AnnulusSystem, GeometryError, check_hypotheses, scan_start_generation

WORKERS_ENV = "CSTARDYN_WORKERS"


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    pass


# -- value helpers ---------------------------------------------------------------

def parse_complex(value) -> complex:
    """Accept numbers, [re, im] pairs, or constant expressions such as "4+2i"."""
    if isinstance(value, bool):
        raise UsageError(f"not a complex number: {value!r}")
    if isinstance(value, (int, float, complex)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        node = parse_expr(value)
        if node.has_var():
            raise UsageError(f"expected a constant, got {value!r}")
        result = eval_expr(node, 1.0)
        if isinstance(result, Sentinel):
            raise UsageError(f"constant {value!r} overflows")
        return complex(result)
    raise UsageError(f"not a complex number: {value!r}")


def pair(z: complex) -> list:
    return [z.real, z.imag]


def _json_default(obj):
    if isinstance(obj, complex):
        return pair(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


# -- defaults ---------------------------------------------------------------------

def block_defaults(block: str, preset=None) -> dict:
    """Default parameter block, specialised to a preset when given."""
    budget = preset.budget if preset is not None else OrbitBudget()
    if block == "eval":
        return {"z": None}
    if block == "index":
        return {"radii": [0.5, 1.0, 2.0], "samples": 4096}
    if block == "orbit":
        return {"z0": None, "period_cap": 32, **budget.to_dict()}
    if block == "baker":
        return {
            "seeds": [pair(s) for s in (preset.seeds if preset is not None else DEFAULT_SEEDS)],
            "n_max": preset.baker_n_max if preset is not None else 100,
            "region": {"kind": "halfplane", "R": (preset.baker_R if preset and preset.baker_R else 10.0),
                       "half_angle": math.pi / 4, "center": 0.0},
            "period": 1,
            "max_steps": 200,
            "directions": 64,
            "bisections": 12,
            "hyperbolic_threshold": 0.1,
            "vanish_threshold": 0.05,
        }
    if block == "wandering":
        system = preset.wandering if preset is not None and preset.wandering is not None else None
        return {
            "system": system.to_dict() if system is not None else None,
            "samples": 512,
            "scan": True,
            "scan_n_max": preset.scan_n_max if preset is not None else 60,
            "generations": 20,
        }
    if block == "lift":
        return {"samples": 1000, "tol": 1e-9, "seed": 0, "box": [-2.0, 2.0, -2.0, 2.0]}
    if block == "construction":
        return {
            "e": None, "r": None, "lam": 2.0, "p": 1, "N": None, "samples": 1000, "radius": None,
            "seed": 0, "d_prime": None, "k": None, "r_range": None, "k_scan": False,
        }
    if block == "render":
        viewport = list(preset.viewport) if preset is not None else [-5.0, 15.0, -10.0, 10.0]
        return {
            "width": 512, "height": 512, "viewport": viewport, "kind": "cartesian", "tile_size": 64,
            "prefix_len": 8, "budget": budget.to_dict(),
        }
    raise KeyError(block)


BLOCKS = ("eval", "index", "orbit", "baker", "wandering", "lift", "construction", "render")


# -- configuration resolution ------------------------------------------------------

def load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(data) - {"map", *BLOCKS}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return data


def resolve_map(arg, config: dict):
    """Return (MapSpec or None, preset or None) from --map or the config's "map" entry."""
    source = arg if arg is not None else config.get("map")
    if source is None:
        return None, None
    if isinstance(source, dict):
        return MapSpec.from_dict(source), None
    if isinstance(source, str):
        path = Path(source)
        if source in PRESETS or (not path.exists() and path.stem in PRESETS):
            preset = get_preset(source if source in PRESETS else path.stem)
            return preset.map, preset
        try:
            return MapSpec.from_json(path.read_text(encoding="utf-8")), None
        except OSError as exc:
            raise UsageError(f"cannot read map {source}: {exc}") from None
    raise UsageError("map must be a preset name, a file path or an object")


def merge_block(defaults: dict, given: dict, name: str) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise UsageError(f"unknown keys in '{name}': {sorted(unknown)}")
    merged = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(merged.get(key), dict) and isinstance(value, dict):
            sub_unknown = set(value) - set(merged[key])
            if sub_unknown and key != "system":
                raise UsageError(f"unknown keys in '{name}.{key}': {sorted(sub_unknown)}")
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    return merged


def resolve(args, block: str):
    config = load_config(args.config) if args.config else {}
    m, preset = resolve_map(args.map, config)
    params = merge_block(block_defaults(block, preset), config.get(block, {}), block)
    overrides = {k: v for k, v in getattr(args, "overrides", {}).items() if v is not None}
    params = merge_block(params, overrides, block)
    return m, params


def require_map(m):
    if m is None:
        raise UsageError("this command needs --map FILE|preset (or 'map' in --config)")
    return m


def out_dir(args) -> Path:
    path = Path(args.out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc}") from None
    return path


def write_outputs(args, stem: str, m, block: str, params: dict, result: dict) -> Path:
    out = out_dir(args)
    echo = {block: params}
    if m is not None:
        echo["map"] = m.to_dict()
    _dump(out / f"{stem}.config.json", echo)
    _dump(out / f"{stem}.json", result)
    return out


def workers_from(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{WORKERS_ENV} must be an integer") from None
    return os.cpu_count() or 1


def budget_from(params: dict) -> OrbitBudget:
    keys = OrbitBudget().to_dict()
    return OrbitBudget.from_dict({k: params[k] for k in keys if k in params})


# -- commands ---------------------------------------------------------------------

def cmd_eval(args) -> int:
    m, params = resolve(args, "eval")
    m = require_map(m)
    if params["z"] is None:
        raise UsageError("eval needs --z")
    z = parse_complex(params["z"])
    params["z"] = pair(z)
    value = eval_map(m, z)
    shown = value.value if isinstance(value, Sentinel) else pair(value)
    print(value.value if isinstance(value, Sentinel) else f"{value.real!r} {value.imag!r}")
    write_outputs(args, "eval", m, "eval", params, {"z": pair(z), "value": shown})
    return 0


def cmd_index(args) -> int:
    m, params = resolve(args, "index")
    m = require_map(m)
    indices = {str(float(r)): compute_index(m, float(r), int(params["samples"])) for r in params["radii"]}
    print(" ".join(f"r={r}:{n}" for r, n in indices.items()))
    consistent = len(set(indices.values())) == 1
    write_outputs(args, "index", m, "index", params, {"index": indices, "consistent": consistent})
    return 0 if consistent else 1


def _orbit(args, block_name="orbit"):
    m, params = resolve(args, block_name)
    m = require_map(m)
    if params["z0"] is None:
        raise UsageError("needs --z0")
    z0 = parse_complex(params["z0"])
    params["z0"] = pair(z0)
    record = iterate(m, z0, budget_from(params))
    return m, params, record


def _record_json(record) -> dict:
    return {
        "verdict": record.verdict.value,
        "first_passage": record.first_passage,
        "sentinel": record.sentinel.value if record.sentinel else None,
        "symbols": to_ascii(record.symbols),
    }


def cmd_orbit(args) -> int:
    m, params, record = _orbit(args)
    out = write_outputs(args, "orbit", m, "orbit", params, _record_json(record))
    with open(out / "orbit.csv", "w", encoding="utf-8", newline="") as fh:
        write_orbit_csv(record, fh)
    print(f"{record.verdict.value} after {record.first_passage} steps")
    if args.strict and record.verdict is Verdict.UNDECIDED:
        return 1
    return 0


def cmd_itinerary(args) -> int:
    m, params, record = _orbit(args)
    result = _record_json(record)
    try:
        itin = essential_itinerary(record, int(params["period_cap"]))
    except NotEscapingError as exc:
        result["error"] = str(exc)
        write_outputs(args, "itinerary", m, "orbit", params, result)
        raise CheckFailed(str(exc)) from None
    result["itinerary"] = itin.to_dict()
    write_outputs(args, "itinerary", m, "orbit", params, result)
    d = itin.to_dict()
    print(f"preperiod={d['preperiod']!r} period={d['period']!r}")
    if args.strict and not itin.period:
        return 1
    return 0


def cmd_classify_baker(args) -> int:
    m, params = resolve(args, "baker")
    m = require_map(m)
    seeds = params["seeds"]
    if seeds == "default" or seeds == ["default"]:
        seeds = block_defaults("baker", None)["seeds"]
    elif isinstance(seeds, str):
        seeds = [s for s in seeds.split(",") if s.strip()]
    seeds = [parse_complex(s) for s in seeds]
    params["seeds"] = [pair(s) for s in seeds]
    oracle = DomainOracle(
        m,
        period=int(params["period"]),
        region=Region(**params["region"]),
        max_steps=int(params["max_steps"]),
    )
    verdict = classify_baker(
        oracle, seeds, int(params["n_max"]), int(params["directions"]), int(params["bisections"]),
        float(params["hyperbolic_threshold"]), float(params["vanish_threshold"]),
    )
    write_outputs(args, "classify-baker", m, "baker", params, verdict.to_dict())
    print(f"{verdict.label.value} liminf={verdict.liminf_estimate:.6g} tail_max={verdict.tail_max:.6g} "
          f"slope={verdict.tail_slope:.4g}")
    for flag in verdict.flags:
        print(f"flag: {flag}", file=sys.stderr)
    if args.strict and verdict.label.value == "UNDECIDED":
        return 1
    return 0


def cmd_certify_wandering(args) -> int:
    m, params = resolve(args, "wandering")
    m = require_map(m)
    if params["system"] is None:
        raise UsageError("no annulus system: use a preset with one or give 'wandering.system' in --config")
    system = AnnulusSystem.from_dict(params["system"])
    result = {}
    if params["scan"]:
        start = scan_start_generation(m, system, int(params["scan_n_max"]), boundary_samples=int(params["samples"]))
        result["start_generation"] = start
        if start is None:
            write_outputs(args, "certify-wandering", m, "wandering", params, {**result, "pass": False})
            print("FAIL: no start generation found", file=sys.stderr)
            return 1
        system = system.with_range(start, start + int(params["generations"]) - 1)
    report = check_hypotheses(m, system, int(params["samples"]))
    result.update(report.to_dict())
    write_outputs(args, "certify-wandering", m, "wandering", params, result)
    print(f"{'n':>5} {'inner':>12} {'fill':>12} {'outer':>12} {'disjoint':>12}")
    for g in report.generations:
        row = " ".join(f"{g.margins[c].raw:12.6f}" for c in ("inner", "fill", "outer", "disjoint"))
        print(f"{g.n:>5} {row}")
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def cmd_verify_lift(args) -> int:
    m, params = resolve(args, "lift")
    m = require_map(m)
    report = verify_lift(build_lift(m), tuple(params["box"]), int(params["samples"]), float(params["tol"]),
                         int(params["seed"]))
    write_outputs(args, "verify-lift", m, "lift", params, report.to_dict())
    print(f"{'PASS' if report.passed else 'FAIL'} max_residual={report.max_residual:.3e}")
    return 0 if report.passed else 1


def _need(sub: str, params: dict, *keys) -> None:
    for key in keys:
        if params.get(key) is None:
            raise UsageError(f"construct {sub} needs --{key.replace('_', '-')}")


def cmd_construct(args) -> int:
    m, params = resolve(args, "construction")
    sub = args.sub
    result: dict = {"op": sub}
    status = 0
    if sub in ("pq", "pi", "succ"):
        _need(sub, params, "e")
        e = PeriodicItinerary.parse(str(params["e"]))
        p, q = pq_counts(e)
        if sub == "pq":
            result.update(p=p, q=q)
            print(f"{p} {q}")
        elif sub == "pi":
            order = [pi_order(e, k) for k in range(e.N)]
            result["pi"] = order
            print(" ".join(map(str, order)))
        else:
            domain = list(range(1, p + 1)) + list(range(-1, -q - 1, -1))
            succ = {str(mm): successor(e, mm) for mm in domain}
            result["successor"] = succ
            print(" ".join(f"{k}->{v}" for k, v in succ.items()))
    elif sub == "delta":
        _need(sub, params, "r")
        r, lam, p = float(params["r"]), float(params["lam"]), int(params["p"])
        value = delta(r, lam) if p == 1 else delta_p(r, lam, p)
        result.update(value=value, asymptotic=2 * (lam - 1) * math.exp(-p * r) / p)
        print(repr(value))
    elif sub == "model-check":
        _need(sub, params, "N")
        system = SectorSystem(int(params["N"]), float(params["lam"]))
        radius = None if params["radius"] is None else float(params["radius"])
        report = check_model_containment(system, int(params["samples"]), radius, int(params["seed"]))
        result.update(min_margin=report.min_margin, d=report.d, radius=report.radius, passed=report.passed)
        print(f"{'PASS' if report.passed else 'FAIL'} margin={report.min_margin:.6g} d={report.d:.6g}")
        status = 0 if report.passed else 1
    elif sub == "budget-check":
        _need(sub, params, "N")
        N, lam = int(params["N"]), float(params["lam"])
        d_prime = params["d_prime"]
        if d_prime is None:
            d_prime = d_prime_for(SectorSystem(N, lam).d)
        d_prime = float(d_prime)
        k = params["k"]
        if params["k_scan"] or k is None:
            k = scan_k(lam, N, d_prime)
            if k is None:
                raise CheckFailed("no k found by scan")
        k = float(k)
        r_range = tuple(params["r_range"]) if params["r_range"] is not None else None
        ok = check_budget(lam, N, d_prime, k, r_range)
        result.update(k=k, d_prime=d_prime, passed=ok, epsilon_at_k=epsilon_budget(k, N, d_prime, k))
        print(f"{'PASS' if ok else 'FAIL'} k={k:.6g} d'={d_prime:.6g}")
        status = 0 if ok else 1
    write_outputs(args, f"construct-{sub}", m, "construction", params, result)
    return status


def cmd_render(args) -> int:
    m, params = resolve(args, "render")
    m = require_map(m)
    vp = params["viewport"]
    if isinstance(vp, str):
        vp = [float(v) for v in vp.split(",")]
    if len(vp) != 4:
        raise UsageError("viewport needs x0,x1,y0,y1")
    params["viewport"] = [float(v) for v in vp]
    budget = OrbitBudget.from_dict(params["budget"])
    job = RenderJob(
        m,
        Viewport(*params["viewport"], kind=params["kind"]),
        int(params["width"]),
        int(params["height"]),
        budget,
        Palette(prefix_len=int(params["prefix_len"])),
        int(params["tile_size"]),
    )
    result = render(job, workers=workers_from(args))
    out = write_outputs(args, "render", m, "render", params, result.summary)
    try:
        result.write_png(out / "render.png")
    except OSError as exc:
        raise UsageError(f"cannot write image: {exc}") from None
    print(json.dumps(result.summary["histogram"], sort_keys=True))
    print(f"render time {result.elapsed:.2f} s", file=sys.stderr)
    return 0


# -- argument parsing ---------------------------------------------------------------

class _Override(argparse.Action):
    """Store a flag value into ``namespace.overrides[key]``."""

    def __init__(self, option_strings, dest, key=None, **kwargs):
        self.key = key or dest
        super().__init__(option_strings, dest, **kwargs)

    def __call__(self, parser, namespace, values, option_string=None):
        overrides = dict(getattr(namespace, "overrides", {}) or {})
        overrides[self.key] = values
        namespace.overrides = overrides


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--map", help="map JSON file or preset name (" + ", ".join(sorted(PRESETS)) + ")")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--workers", type=int, help=f"worker processes (env {WORKERS_ENV}; default: cores)")
    p.add_argument("--strict", action="store_true", help="treat UNDECIDED outcomes as failures")


def _opt(p, flag, key, type_=str, **kw):
    p.add_argument(flag, action=_Override, key=key, type=type_, dest=f"opt_{key}", **kw)


def _flag(p, flag, key):
    p.add_argument(flag, action=_Override, key=key, nargs=0, dest=f"opt_{key}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cstardyn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate the map at a point")
    _common(p)
    _opt(p, "--z", "z")

    p = sub.add_parser("index", help="winding number around 0")
    _common(p)
    _opt(p, "--samples", "samples", int)
    p.add_argument("--radius", action=_Override, key="radii", type=float, nargs="+", dest="opt_radii")

    for name in ("orbit", "itinerary"):
        p = sub.add_parser(name, help="iterate a point" if name == "orbit" else "essential itinerary of an orbit")
        _common(p)
        _opt(p, "--z0", "z0")
        _opt(p, "--max-iter", "max_iter", int)
        _opt(p, "--r-inf", "r_inf", float)
        _opt(p, "--r-zero", "r_zero", float)
        _opt(p, "--confirm-steps", "confirm_steps", int)
        _opt(p, "--period-cap", "period_cap", int)

    p = sub.add_parser("classify-baker", help="hyperbolic / doubly parabolic test for a Baker domain")
    _common(p)
    _opt(p, "--seeds", "seeds", help="'default' or comma-separated points, e.g. 3,5,4+2i")
    _opt(p, "--n-max", "n_max", int)
    _opt(p, "--directions", "directions", int)
    _opt(p, "--period", "period", int)

    p = sub.add_parser("certify-wandering", help="check the wandering-annuli hypotheses")
    _common(p)
    _opt(p, "--samples", "samples", int)
    _opt(p, "--scan-n-max", "scan_n_max", int)
    _opt(p, "--generations", "generations", int)

    p = sub.add_parser("verify-lift", help="check exp(lift(z)) = f(exp(z)) on random points")
    _common(p)
    _opt(p, "--samples", "samples", int)
    _opt(p, "--tol", "tol", float)
    _opt(p, "--seed", "seed", int)

    p = sub.add_parser("construct", help="construction combinatorics and geometry")
    p.add_argument("sub", choices=["pq", "pi", "succ", "delta", "model-check", "budget-check"])
    _common(p)
    _opt(p, "--e", "e", help="itinerary period over {0, i}, i meaning infinity")
    _opt(p, "--r", "r", float)
    _opt(p, "--lam", "lam", float)
    _opt(p, "--p", "p", int)
    _opt(p, "--N", "N", int)
    _opt(p, "--samples", "samples", int)
    _opt(p, "--radius", "radius", float)
    _opt(p, "--d-prime", "d_prime", float)
    _opt(p, "--k", "k", float)
    _flag(p, "--k-scan", "k_scan")

    p = sub.add_parser("render", help="phase portrait PNG")
    _common(p)
    _opt(p, "--width", "width", int)
    _opt(p, "--height", "height", int)
    _opt(p, "--viewport", "viewport", help="x0,x1,y0,y1")
    _opt(p, "--kind", "kind", choices=["cartesian", "logpolar"])
    _opt(p, "--tile-size", "tile_size", int)
    return parser


HANDLERS = {
    "eval": cmd_eval,
    "index": cmd_index,
    "orbit": cmd_orbit,
    "itinerary": cmd_itinerary,
    "classify-baker": cmd_classify_baker,
    "certify-wandering": cmd_certify_wandering,
    "verify-lift": cmd_verify_lift,
    "construct": cmd_construct,
    "render": cmd_render,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    if not hasattr(args, "overrides"):
        args.overrides = {}
    if "k_scan" in args.overrides:
        args.overrides["k_scan"] = True
    try:
        return HANDLERS[args.command](args)
    except CheckFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OracleError, NotEscapingError, SentinelError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ExprError, MapError, GeometryError, ConstructionError, RenderError, KeyError,
            ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
