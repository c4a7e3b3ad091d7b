"""Command line front end.

Every subcommand resolves a RunConfig (flags override a --config JSON file),
validates it, runs one computation and prints a short text report.  With
``--json PATH`` the structured report (schemaVersion "1", echoing the resolved
config) is written to PATH, or to stdout for ``--json -``.  Exit codes: 0 on
success, 2 on validation errors, 1 on computation errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import RatDynError, ValidationError

SCHEMA_VERSION = "1"
VERIFY_KINDS = ("ce", "ce2", "ba", "fa", "fa-prime")


@dataclass
class RunConfig:
    command: str
    familySpec: str | None = None
    map: str | None = None
    window: tuple | None = None
    resolution: tuple | None = None
    horizonN: int | None = None
    depth: int | None = None
    count: int | None = None
    seed: int = 0
    constants: dict = field(default_factory=dict)
    kappaBox: float = 0.0
    outputPaths: dict = field(default_factory=dict)
    threads: int = 0
    options: dict = field(default_factory=dict)

    def validate(self):
        for name in ("horizonN", "depth", "count"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or v < 1):
                raise ValidationError(f"{name} must be a positive integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError("seed must be a nonnegative integer")
        if self.threads < 0:
            raise ValidationError("threads must be >= 0")
        if self.kappaBox < 0:
            raise ValidationError("kappa box radius must be >= 0")
        if self.resolution is not None and (len(self.resolution) != 2 or min(self.resolution) < 1):
            raise ValidationError("resolution must be a positive integer (or nx,ny)")
        if self.window is not None:
            if len(self.window) != 4:
                raise ValidationError("window needs x0,x1,y0,y1")
            x0, x1, y0, y1 = self.window
            if not (x1 > x0 and y1 > y0):
                raise ValidationError("window must have x1 > x0 and y1 > y0")
        for k, v in self.constants.items():
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"constant {k} must be a finite nonnegative real")
        return self

    def to_dict(self):
        return _jsonable(asdict(self))


# --------------------------------------------------------------------------
# parsing helpers

def parse_complex(text) -> complex:
    if isinstance(text, (int, float, complex)):
        return complex(text)
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return complex(float(text[0]), float(text[1]))
    s = str(text).strip().replace(" ", "").replace("I", "i").replace("i", "j")
    try:
        return complex(s)
    except ValueError:
        raise ValidationError(f"cannot parse complex number {text!r}") from None


def parse_param(text):
    """A parameter vector: one complex number or several separated by ';'."""
    if isinstance(text, (list, tuple)) and not (len(text) == 2 and all(isinstance(t, (int, float)) for t in text)):
        return [parse_complex(t) for t in text]
    if isinstance(text, str) and ";" in text:
        return [parse_complex(t) for t in text.split(";") if t.strip()]
    return [parse_complex(text)]


def parse_floats(text, n=None, name="value"):
    if isinstance(text, (list, tuple)):
        vals = [float(t) for t in text]
    else:
        try:
            vals = [float(t) for t in str(text).split(",")]
        except ValueError:
            raise ValidationError(f"cannot parse {name} {text!r}") from None
    if n is not None and len(vals) != n:
        raise ValidationError(f"{name} needs {n} comma separated numbers")
    return tuple(vals)


def parse_resolution(text):
    if isinstance(text, int):
        return (text, text)
    if isinstance(text, (list, tuple)):
        vals = [int(t) for t in text]
    else:
        try:
            vals = [int(t) for t in str(text).split(",")]
        except ValueError:
            raise ValidationError(f"cannot parse resolution {text!r}") from None
    if len(vals) == 1:
        vals = vals * 2
    return tuple(vals)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [_jsonable(float(x.real)), _jsonable(float(x.imag))]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _map(cfg):
    from .expr import map_from_literal
    if not cfg.map:
        raise ValidationError("--map is required")
    return map_from_literal(cfg.map)


def _family(cfg):
    from .parameter import make_family
    if not cfg.familySpec:
        raise ValidationError("--family is required")
    return make_family(cfg.familySpec)


def _need(cfg, name):
    v = cfg.options.get(name)
    if v is None:
        raise ValidationError(f"--{name} is required")
    return v


# --------------------------------------------------------------------------
# commands; each returns (result dict, text lines)

def cmd_lyapunov(cfg):
    from .ergodic import lyapunov
    est = lyapunov(_map(cfg), cfg.depth or 50, cfg.count or 20000, cfg.seed)
    return est.to_dict(), [f"lyapunov = {est.value:.10g} +- {est.stderr:.3g} ({est.sampleCount} samples)"]


def _slice(cfg):
    from .parameter import lyapunov_slice
    if cfg.window is None or cfg.resolution is None:
        raise ValidationError("--window and --res are required")
    return lyapunov_slice(_family(cfg), cfg.window, cfg.resolution, cfg.depth or 40, cfg.count or 5000,
                          cfg.seed, threads=cfg.threads or None)


def _emit_field(cfg, fld, lines):
    from .parameter import render, write_csv
    out = {}
    if cfg.outputPaths.get("pgm"):
        out["pgmSpecHash"] = render(fld, cfg.outputPaths["pgm"], cfg.options.get("scaling") or "linear")
        lines.append(f"wrote {cfg.outputPaths['pgm']}")
    if cfg.outputPaths.get("csv"):
        write_csv(fld, cfg.outputPaths["csv"])
        lines.append(f"wrote {cfg.outputPaths['csv']}")
    return out


def cmd_slice(cfg):
    sl = _slice(cfg)
    v = sl.values[np.isfinite(sl.values)]
    res = {"min": float(v.min()), "max": float(v.max()), "mean": float(v.mean()),
           "holes": int(sl.holes.sum()), "meta": sl.meta}
    lines = [f"slice {sl.resolution[0]}x{sl.resolution[1]}: L in [{res['min']:.6g}, {res['max']:.6g}], "
             f"mean {res['mean']:.6g}, holes {res['holes']}"]
    res.update(_emit_field(cfg, sl, lines))
    return res, lines


def cmd_density(cfg):
    from .parameter import bifurcation_density
    fld = bifurcation_density(_slice(cfg))
    res = {"totalMass": fld.totalMass, "noiseFloor": fld.noiseFloor, "maxDensity": float(fld.density.max()),
           "meta": fld.meta}
    lines = [f"density: total mass {fld.totalMass:.6g}, noise floor {fld.noiseFloor:.6g}, "
             f"max {res['maxDensity']:.6g}"]
    res.update(_emit_field(cfg, fld, lines))
    return res, lines


def cmd_activity(cfg):
    from .parameter import activity_indicator
    if cfg.window is None or cfg.resolution is None:
        raise ValidationError("--window and --res are required")
    fld = activity_indicator(_family(cfg), int(cfg.options.get("index") or 0), cfg.window, cfg.resolution,
                             cfg.horizonN or 20)
    res = {"totalMass": fld.totalMass, "maxDensity": float(fld.density.max()), "meta": fld.meta}
    lines = [f"activity: total mass {fld.totalMass:.6g}, max {res['maxDensity']:.6g}"]
    res.update(_emit_field(cfg, fld, lines))
    return res, lines


def cmd_verify(cfg):
    from . import conditions as C
    f = _map(cfg)
    N = cfg.horizonN or 30
    k = cfg.constants
    g = lambda name: float(k.get(name, 0.0))
    kind = cfg.options["kind"]
    if kind == "ce":
        rep = C.check_ce(f, g("gamma"), g("gamma0"), N)
    elif kind == "ce2":
        rep = C.check_ce2(f, g("mu"), g("mu0"), N, seed=cfg.seed)
    elif kind == "ba":
        rep = C.check_ba(f, g("alpha"), N)
    elif kind == "fa":
        rep = C.check_fa(f, g("eta"), g("iota"), N)
    else:
        rep = C.check_fa_prime(f, g("delta"), g("beta"), g("tau"), N)
    lines = [f"{rep.condition}: {'pass' if rep.passed else 'fail'} (margin {rep.margin:.6g}, N = {N})"]
    for v in rep.perCriticalValue:
        lines.append(f"  critical value {v.criticalIndex}: {v.verdict}"
                     + (f" at n = {v.failStep}" if v.failStep is not None else ""))
    return rep.to_dict(), lines


def cmd_misiurewicz(cfg):
    from .transversality import detect_misiurewicz
    cert = detect_misiurewicz(_map(cfg), int(cfg.options.get("Nmax") or 200), float(cfg.options.get("tol") or 1e-6))
    lines = []
    for e in cert.entries:
        m = e["cycleMultiplier"]
        lines.append(f"critical point {e['criticalIndex']}: preperiod {e['preperiod']}, period {e['period']}, "
                     f"multiplier {m.real:.12g}{m.imag:+.12g}i")
    return cert.to_dict(), lines


def cmd_tau(cfg):
    from .transversality import tau_form
    lam = parse_param(_need(cfg, "lambda0"))
    N = cfg.horizonN
    form = tau_form(_family(cfg), int(cfg.options.get("index") or 0), lam, N)
    comps = ", ".join(f"{c.real:.12g}{c.imag:+.12g}i" for c in form.components)
    return form.to_dict(), [f"tau_{form.i} = ({comps}), N = {form.truncationN}, tail <= {form.tailBound:.3g}"]


def cmd_track(cfg):
    from .transversality import track_periodic
    a, b = (parse_param(t) for t in _need(cfg, "path"))
    tr = track_periodic(_family(cfg), parse_complex(_need(cfg, "z0")), int(cfg.options.get("period") or 1),
                        (a, b), int(cfg.options.get("samples") or 101))
    z = tr.points[-1]
    return tr.to_dict(), [f"tracked {len(tr.points)} samples; end point {z.real:.12g}{z.imag:+.12g}i, "
                          f"max residual {tr.residuals.max():.3g}, min |multiplier| {np.abs(tr.multipliers).min():.6g}"]


def cmd_kappa(cfg):
    from .distortion import estimate_kappa
    if cfg.familySpec:
        lam = parse_param(_need(cfg, "lambda0"))
        kc = estimate_kappa(_family(cfg), lam, cfg.kappaBox)
    else:
        kc = estimate_kappa(_map(cfg))
    return kc.to_dict(), [f"kappa = {kc.kappa:.6g}"]


def cmd_probe(cfg):
    from .transversality import large_scale_probe
    lam = parse_param(_need(cfg, "lambda0"))
    n0, n1 = (int(x) for x in parse_floats(cfg.options.get("nRange") or "5,15", 2, "n range"))
    if not 0 <= n0 < n1:
        raise ValidationError("n range must satisfy 0 <= n0 < n1")
    probe = large_scale_probe(_family(cfg), lam, (n0, n1), int(cfg.options.get("gridRes") or 9),
                              kappa_radius=cfg.kappaBox)
    lines = [f"C = {probe.C:.6g}, l1 = {probe.l1:.6g}, M = {probe.M:.6g}, kappa = {probe.kappa:.6g}"]
    for e in probe.entries:
        lines.append(f"  n = {e['n']}: covering radius {e['coveringRadius']:.6g}, "
                     f"verticality {e['verticalityMargin']:.6g}, within C: {e['productWithinC']}")
    return probe.to_dict(), lines


COMMANDS = {"lyapunov": cmd_lyapunov, "slice": cmd_slice, "density": cmd_density, "activity": cmd_activity,
            "verify": cmd_verify, "misiurewicz": cmd_misiurewicz, "tau": cmd_tau, "track": cmd_track,
            "kappa": cmd_kappa, "probe": cmd_probe}

CONSTANT_FLAGS = ("gamma", "gamma0", "mu", "mu0", "alpha", "eta", "iota", "delta", "beta", "tau")


# --------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields (flags override it)")
    common.add_argument("--threads", type=int, help="worker threads, 0 = all cores")
    common.add_argument("--json", dest="json_out", help="write the JSON report to this path ('-' for stdout)")
    common.add_argument("--seed", type=int)

    p = argparse.ArgumentParser(prog="ratdyn", description="Dynamics of rational maps and their families.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    s = add("lyapunov", "Lyapunov exponent of a map")
    s.add_argument("--map")
    s.add_argument("--depth", type=int)
    s.add_argument("--count", type=int)

    for name, help_ in (("slice", "Lyapunov function on a parameter slice"),
                        ("density", "bifurcation density of a slice")):
        s = add(name, help_)
        s.add_argument("--family")
        s.add_argument("--window", help="x0,x1,y0,y1")
        s.add_argument("--res", help="n or nx,ny")
        s.add_argument("--depth", type=int)
        s.add_argument("--count", type=int)
        s.add_argument("--pgm")
        s.add_argument("--csv")
        s.add_argument("--scaling", choices=("linear", "log", "equalized"))

    s = add("activity", "activity indicator of a critical point on a slice")
    s.add_argument("--family")
    s.add_argument("--window")
    s.add_argument("--res")
    s.add_argument("--N", type=int)
    s.add_argument("--index", type=int)
    s.add_argument("--pgm")
    s.add_argument("--csv")
    s.add_argument("--scaling", choices=("linear", "log", "equalized"))

    s = add("verify", "check an orbit condition")
    s.add_argument("kind", choices=VERIFY_KINDS)
    s.add_argument("--map")
    s.add_argument("--N", type=int)
    for c in CONSTANT_FLAGS:
        s.add_argument(f"--{c}", type=float)

    s = add("misiurewicz", "certify critical orbits landing on repelling cycles")
    s.add_argument("--map")
    s.add_argument("--Nmax", type=int)
    s.add_argument("--tol", type=float)

    s = add("tau", "transversality form of a critical point")
    s.add_argument("--family")
    s.add_argument("--lambda0")
    s.add_argument("--index", type=int)
    s.add_argument("--N", type=int)

    s = add("track", "continue a repelling periodic point along a path")
    s.add_argument("--family")
    s.add_argument("--z0")
    s.add_argument("--period", type=int)
    s.add_argument("--path", help="start,end (parameters with ';' between components)")
    s.add_argument("--samples", type=int)

    s = add("kappa", "estimate the constant kappa")
    s.add_argument("--map")
    s.add_argument("--family")
    s.add_argument("--lambda0")
    s.add_argument("--radius", type=float)

    s = add("probe", "large scale probe")
    s.add_argument("--family")
    s.add_argument("--lambda0")
    s.add_argument("--nrange", help="n0,n1 (times in (n0, n1])")
    s.add_argument("--grid-res", type=int)
    s.add_argument("--radius", type=float, help="kappa box radius")
    return p


def _glue_negative_values(argv):
    """Turn '--flag -2.5,1' into '--flag=-2.5,1' so argparse accepts negative lists."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and len(argv[i + 1]) > 1 and argv[i + 1][0] == "-" and (argv[i + 1][1].isdigit() or argv[i + 1][1] == ".")):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def resolve_config(args) -> RunConfig:
    base = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(base, dict):
            raise ValidationError("config file must hold a JSON object")
    a = vars(args)

    def pick(flag, key=None):
        v = a.get(flag)
        return v if v is not None else base.get(key or flag)

    opts = dict(base.get("options", {}))
    for flag, key in (("index", "index"), ("lambda0", "lambda0"), ("z0", "z0"), ("period", "period"),
                      ("samples", "samples"), ("nrange", "nRange"), ("grid_res", "gridRes"), ("scaling", "scaling"),
                      ("Nmax", "Nmax"), ("tol", "tol"), ("kind", "kind")):
        if a.get(flag) is not None:
            opts[key] = a[flag]
    if "path" in a and a.get("path") is not None:
        parts = a["path"].split(",")
        if len(parts) != 2:
            raise ValidationError("--path needs start,end")
        opts["path"] = parts
    consts = dict(base.get("constants", {}))
    for c in CONSTANT_FLAGS:
        if a.get(c) is not None:
            consts[c] = float(a[c])
    outputs = dict(base.get("outputPaths", {}))
    for k in ("pgm", "csv"):
        if a.get(k):
            outputs[k] = a[k]
    if a.get("json_out"):
        outputs["json"] = a["json_out"]
    window = pick("window")
    res = pick("res", "resolution")
    cfg = RunConfig(
        command=args.command if args.command != "verify" else f"verify {args.kind}",
        familySpec=pick("family", "familySpec"),
        map=pick("map"),
        window=parse_floats(window, 4, "window") if window is not None else None,
        resolution=parse_resolution(res) if res is not None else None,
        horizonN=pick("N", "horizonN"),
        depth=pick("depth"),
        count=pick("count"),
        seed=pick("seed") if pick("seed") is not None else 0,
        constants=consts,
        kappaBox=float(pick("radius", "kappaBox") or 0.0),
        outputPaths=outputs,
        threads=pick("threads") if pick("threads") is not None else 0,
        options=opts,
    )
    return cfg.validate()


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_glue_negative_values(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        result, lines = COMMANDS[args.command](cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RatDynError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    report = {"schemaVersion": SCHEMA_VERSION, "command": cfg.command, "config": cfg.to_dict(),
              "result": _jsonable(result)}
    text = json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    dest = cfg.outputPaths.get("json")
    if dest == "-":
        sys.stdout.write(text)
    else:
        for line in lines:
            print(line)
        if dest:
            with open(dest, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
    return 0


def main():
    sys.exit(run())
