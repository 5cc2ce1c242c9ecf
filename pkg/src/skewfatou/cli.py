"""Command-line entry point: ``skewfatou <subcommand> [options]``.

Every run writes its JSON/image outputs plus ``manifest.json`` into
``--out-dir``.  JSON outputs contain no timestamps, so identical inputs give
byte-identical files; wall-clock time is recorded only in the manifest.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from . import __version__
from .disks import (accumulate, find_nesting_threshold, find_w0, fiber_preimages, julia_evidence,
                    julia_report, make_disk, omega_limit, omega_report, verify_nesting)
from .dynamics import (Polynomial, SkewProduct, critical_data, example_family, map_from_options)
from .errors import ComputationError, SkewFatouError, UsageError
from .koenigs import convergence_slope, koenigs_limit, lambda_abs, slope_report
from .numerics import (BigComplex, format_complex, format_decimal, format_real, is_exact,
                       parse_scalar, precision_for_depth, to_big)
from .parallel import ENV_THREADS, resolve_threads
from .render import (InteriorCertificate, RenderJob, bounded_fraction, render_fiber, write_png,
                     write_ppm, write_sidecar)
from .resonance import coefficient_report, fit_X, solve_b

TUNED_B = Fraction(-641, 4165)
# max_iter values recorded for the figure fibers; the low ones show where the
# offset fiber empties out, the doublings from 2000 are the ones compared
LADDER = (16, 32, 64, 128, 2000, 4000, 8000)

SUBCOMMANDS = ("koenigs", "slope", "resonance", "solve-b", "find-w0", "verify-disk", "accumulate",
               "omega", "julia-evidence", "render", "reproduce-paper")

# hard defaults, applied after config-file values
DEFAULTS = {
    "precision_bits": None,
    "n": None,
    "levels": None,
    "tol": None,
    "out_dir": "skewfatou-out",
    "threads": None,
    "w": None,
    "v": None,
    "t": None,
    "x0": None,
    "n_min": 16,
    "n_max": 40,
    "scan_max": 32,
    "samples": 64,
    "center": None,
    "half_width": 0.04,
    "width": 400,
    "height": 400,
    "max_iter": 2000,
    "certificate": True,
}


@dataclass
class RunManifest:
    subcommand: str
    config_path: str | None
    parameters: dict
    outputs: list = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    precision_bits: int | None = None
    argv: list = field(default_factory=list)
    version: str = __version__


def _scalar(text):
    try:
        return parse_scalar(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad scalar {text!r}: {exc}") from exc


def build_parser():
    parser = argparse.ArgumentParser(prog="skewfatou", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--replay", metavar="MANIFEST", help="re-run the command recorded in a manifest")
    sub = parser.add_subparsers(dest="subcommand")
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--config", help="INI file with [map] and per-subcommand sections")
    g.add_argument("--precision-bits", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--levels", type=int)
    g.add_argument("--tol", type=float)
    g.add_argument("--out-dir")
    g.add_argument("--threads", type=int, help=f"worker threads (fallback: ${ENV_THREADS})")
    g.add_argument("--exact", action="store_true", help="exact rational arithmetic where possible")
    m = common.add_argument_group("map")
    m.add_argument("--linear", action="store_true", help="g = lambda z + a t")
    m.add_argument("--lambda", dest="lam", type=_scalar)
    m.add_argument("--mu", type=_scalar)
    m.add_argument("--a", type=_scalar)
    m.add_argument("--b", type=_scalar)
    m.add_argument("--tau", type=_scalar)
    m.add_argument("--p", help="polynomial in z, e.g. '2*(z+1)^4-2'")
    m.add_argument("--q", help="polynomial in t")
    m.add_argument("--g", help="polynomial in t and z (overrides --p/--q)")

    def add(name, help_text, *extra):
        sp = sub.add_parser(name, parents=[common], help=help_text)
        for args, kw in extra:
            sp.add_argument(*args, **kw)
        return sp

    point = (("--w",), {"type": _scalar})
    x0 = (("--x0",), {"type": _scalar, "help": "base point (default: landing critical point)"})
    add("koenigs", "evaluate the Koenigs map Phi(w)", point, x0)
    add("slope", "convergence slope of phi_n(w)", point, x0,
        (("--n-min",), {"type": int}), (("--n-max",), {"type": int}))
    add("resonance", "fit the closed-form jet constants")
    add("solve-b", "solve X1 = 0 for b")
    add("find-w0", "solve Phi(w0) = x0")
    add("verify-disk", "nesting check F^n(D_n) in D_2n",
        (("--scan-max",), {"type": int}), (("--samples",), {"type": int}))
    add("accumulate", "distances of the disk orbit to (0, x0)")
    add("omega", "omega-limit chain x_{-l} = Phi(w / lambda^l)", point)
    add("julia-evidence", "vertical-derivative growth near the disks", (("--v",), {"type": _scalar}))
    rend = (("--t",), {"type": _scalar, "help": "fiber (default w0)"})
    add("render", "escape-time picture of one fiber", rend,
        (("--center",), {"type": _scalar}), (("--half-width",), {"type": float}),
        (("--width",), {"type": int}), (("--height",), {"type": int}),
        (("--max-iter",), {"type": int}),
        (("--no-certificate",), {"dest": "certificate", "action": "store_false", "default": None}))
    add("reproduce-paper", "run the full example pipeline",
        (("--width",), {"type": int}), (("--height",), {"type": int}))
    return parser


# ---------------------------------------------------------------------------
# option resolution


def _load_config(path):
    if not path:
        return None
    if not os.path.exists(path):
        raise UsageError(f"config file {path} not found")
    cp = configparser.ConfigParser(interpolation=None)
    cp.read(path)
    return cp


def _resolve(args, cp):
    """Flags override config-file values, which override the hard defaults."""
    section = cp[args.subcommand] if cp is not None and args.subcommand in cp else {}
    opts = {}
    for key, default in DEFAULTS.items():
        val = getattr(args, key, None)
        if val is None and key.replace("_", "-") in section:
            val = section[key.replace("_", "-")]
        elif val is None and key in section:
            val = section[key]
        if isinstance(val, str):
            val = _coerce_config(key, val)
        opts[key] = default if val is None else val
    opts["exact"] = bool(args.exact or (section.get("exact", "false").lower() in ("1", "true", "yes")))
    return opts


def _coerce_config(key, text):
    if key in ("precision_bits", "n", "levels", "threads", "n_min", "n_max", "scan_max", "samples",
               "width", "height", "max_iter"):
        return int(text)
    if key in ("tol", "half_width"):
        return float(text)
    if key == "certificate":
        return text.lower() in ("1", "true", "yes")
    if key == "out_dir":
        return text
    return _scalar(text)


def resolve_map(args, cp):
    if args.linear:
        lam = args.lam if args.lam is not None else 2
        mu = args.mu if args.mu is not None else Fraction(1, 2)
        a = args.a if args.a is not None else 1
        return SkewProduct.linear(lam, a, mu)
    if args.g:
        if args.mu is None:
            raise UsageError("--g needs --mu")
        return SkewProduct.parse(args.g, args.mu)
    if args.p:
        p = Polynomial.parse(args.p)
        a = args.a if args.a is not None else 1
        b = args.b if args.b is not None else 0
        q = Polynomial.parse(args.q, var="t") if args.q else Polynomial([0, a, b])
        lam = p.derivative()(0)
        mu = args.mu if args.mu is not None else (Fraction(1) / lam if is_exact(lam) else 1 / complex(lam))
        return SkewProduct.split(p, q, mu)
    if cp is not None and "map" in cp:
        return map_from_options(dict(cp["map"]))
    a = args.a if args.a is not None else 1
    b = args.b if args.b is not None else TUNED_B * a * a
    return example_family(4, a, b)


def _precision(opts, F, depth):
    if opts["precision_bits"]:
        return opts["precision_bits"]
    return precision_for_depth(max(depth, 1), lambda_abs(F))


# ---------------------------------------------------------------------------
# output helpers


class Outputs:
    def __init__(self, out_dir):
        self.dir = out_dir
        self.paths = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        p = os.path.join(self.dir, name)
        self.paths.append(p)
        return p

    def json(self, name, data):
        path = self.path(name)
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _s(x, digits=30):
    return format_complex(x, digits) if not is_exact(x) else format_complex(x)


def _map_info(F):
    return {"g": F.canonical_text(), "mu": format_complex(F.mu), "hash": F.map_hash().hex()}


# ---------------------------------------------------------------------------
# stages


def _crit(F):
    return critical_data(F.p)


def _base(F, opts):
    if opts["x0"] is not None:
        return opts["x0"]
    try:
        return _crit(F).x0
    except SkewFatouError:
        return 0


def cmd_koenigs(F, opts, out):
    x0 = _base(F, opts)
    w = opts["w"] if opts["w"] is not None else 1
    tol = opts["tol"] or 1e-50
    prec = opts["precision_bits"] or 256
    val = koenigs_limit(F, x0, w, tol, precision=prec)
    out.json("koenigs.json", {"map": _map_info(F), "x0": _s(x0), "w": _s(w), "value": _s(val.value, 40),
                              "error_bound": format_real(val.error_bound, 6), "n": val.n, "precision": prec})
    v = val.value
    text = format_decimal(v.real, 40) if not v.imag else format_complex(v, 40)
    print(text)
    return prec


def cmd_slope(F, opts, out):
    x0 = _base(F, opts)
    w = opts["w"] if opts["w"] is not None else Fraction(1, 32)
    n0, n1 = opts["n_min"], opts["n_max"]
    prec = _precision(opts, F, n1 + 1)
    fit = convergence_slope(F, x0, w, (n0, n1), prec, opts["threads"])
    out.json("slope.json", {"map": _map_info(F), **slope_report(F, x0, w, fit), "precision": prec})
    print(f"rho = {fit.rho:.6f}")
    return prec


def _exact_or_prec(opts):
    return None if opts["exact"] or not opts["precision_bits"] else opts["precision_bits"]


def cmd_resonance(F, opts, out):
    crit = _crit(F)
    sol = fit_X(F, crit, precision=_exact_or_prec(opts))
    out.json("resonance.json", {"map": _map_info(F), "k": crit.k, **coefficient_report(sol)})
    print(f"X1 = {_s(sol.X1)}")
    return opts["precision_bits"]


def cmd_solve_b(F, opts, out, args=None):
    p = F.p
    a = args.a if args is not None and args.a is not None else F.a
    tau = args.tau if args is not None and args.tau is not None else 0
    crit = _crit(F)
    b = solve_b(p, a, tau, crit, precision=_exact_or_prec(opts))
    dec = format_decimal(to_big(b, 128).real, 30)
    out.json("solve_b.json", {"p": p.to_text(), "a": _s(a), "tau": _s(tau), "b": _s(b), "decimal": dec})
    print(_s(b))
    return opts["precision_bits"]


def _w0(F, crit, opts, depth=40):
    prec = max(_precision(opts, F, depth), precision_for_depth(depth, lambda_abs(F)))
    return find_w0(F, crit, n=depth, precision=prec)


def cmd_find_w0(F, opts, out):
    crit = _crit(F)
    tol = opts["tol"] or 1e-20
    n = opts["n"] or 40
    res = find_w0(F, crit, n=n, tol=tol, precision=_precision(opts, F, n))
    out.json("w0.json", {"map": _map_info(F), "w0": _s(res.w0, 40), "residual": format_real(res.residual, 6),
                         "n": res.n, "candidates": [_s(c, 30) for c in res.candidates]})
    print(_s(res.w0, 30))
    return res.precision


def _nesting_json(rep):
    return {"n": rep.n, "max_image_distance": format_real(rep.max_image_distance, 12),
            "margin": format_real(rep.margin, 12), "relative_margin": round(rep.relative_margin, 12),
            "target_radius": format_real(rep.target_radius, 12), "fiber_ok": rep.fiber_ok,
            "center_distance": format_real(rep.center_distance, 12) if rep.center_distance is not None else None,
            "escaped": rep.escaped, "precision": rep.precision}


def cmd_verify_disk(F, opts, out):
    crit = _crit(F)
    w0 = _w0(F, crit, opts).w0
    if opts["n"]:
        rep = verify_nesting(F, make_disk(opts["n"], w0, crit, F.lam, opts["samples"]), threads=opts["threads"])
        out.json("nesting.json", {"map": _map_info(F), "reports": [_nesting_json(rep)]})
        print(f"n = {rep.n}: margin {format_real(rep.margin, 6)} ({'ok' if rep.ok else 'FAIL'})")
        return rep.precision
    scan = find_nesting_threshold(F, crit, w0, 4, opts["scan_max"], opts["samples"], opts["threads"])
    out.json("nesting.json", {"map": _map_info(F), "N": scan.N,
                              "reports": [_nesting_json(r) for r in scan.reports.values()]})
    print(f"N = {scan.N}")
    return max(r.precision for r in scan.reports.values())


def _threshold(F, crit, w0, opts):
    if opts["n"]:
        return opts["n"]
    return find_nesting_threshold(F, crit, w0, 4, opts["scan_max"], opts["samples"], opts["threads"]).N


def cmd_accumulate(F, opts, out):
    crit = _crit(F)
    w0 = _w0(F, crit, opts).w0
    N = _threshold(F, crit, w0, opts)
    levels = opts["levels"] or 3
    rep = accumulate(F, make_disk(N, w0, crit, F.lam), levels, precision=opts["precision_bits"])
    out.json("accumulate.json", _accumulate_json(rep))
    for l, d in enumerate(rep.distances, start=1):
        print(f"level {l}: {format_real(d, 12)}")
    return rep.precision


def _accumulate_json(rep):
    return {"n": rep.n, "levels": rep.levels, "steps": rep.steps,
            "distances": [format_real(d, 12) for d in rep.distances],
            "t": [_s(t, 20) for t in rep.t_values], "t_exact": rep.t_exact, "precision": rep.precision}


def cmd_omega(F, opts, out):
    crit = _crit(F)
    w = opts["w"] if opts["w"] is not None else Fraction(1, 3)
    L = opts["levels"] or 12
    prec = opts["precision_bits"] or 128
    om = omega_limit(F, crit, w, L, precision=prec, threads=opts["threads"])
    out.json("omega.json", {"map": _map_info(F), "w": _s(w), **omega_report(om)})
    print(f"chain residual {format_real(om.chain_residual, 6)}, tail {format_real(om.convergence_tail, 6)}")
    return prec


def cmd_julia(F, opts, out):
    crit = _crit(F)
    levels = opts["levels"] or 5
    N = opts["n"]
    w0 = _w0(F, crit, opts, depth=max(40, 2 ** levels * (N or 4))).w0
    N = N or _threshold(F, crit, w0, opts)
    v = opts["v"] if opts["v"] is not None else w0 + Fraction(1, 1000)
    ev = julia_evidence(F, crit, make_disk(N, w0, crit, F.lam), v, levels,
                        precision=opts["precision_bits"], threads=opts["threads"])
    out.json("julia_evidence.json", julia_report(ev))
    print(f"positive levels {ev.positive_levels}: {'positive' if ev.positive else 'not positive'}")
    return ev.precision


def _figure_window(F, crit, w0, N):
    z = complex(fiber_preimages(F, crit, w0, N)[0][0])
    return complex(z.real, 0.0) if abs(z.imag) < 1e-30 else z


def _render_one(F, crit, w0, N, t, center, opts, out, stem, max_iters=None):
    cert = InteriorCertificate(w0=w0, N=N, x0=crit.x0) if opts["certificate"] else None
    window = (center, opts["half_width"])
    res = (opts["width"], opts["height"])
    job = RenderJob(F, t, window, res, opts["max_iter"], certificate=cert)
    grid = render_fiber(job, threads=opts["threads"])
    ladder = {}
    for mi in max_iters or ():
        g = render_fiber(RenderJob(F, t, window, res, mi, certificate=cert), threads=opts["threads"])
        ladder[str(mi)] = bounded_fraction(g)
    write_ppm(grid, out.path(stem + ".ppm"))
    png = write_png(grid, os.path.join(out.dir, stem + ".png"))
    if png:
        out.paths.append(png)
    write_sidecar(grid, out.path(stem + ".json"), extra={"bounded_fraction_by_max_iter": ladder} if ladder else None)
    return grid, ladder


def cmd_render(F, opts, out):
    crit = _crit(F)
    w0 = _w0(F, crit, opts).w0
    N = opts["n"] or 4
    t = opts["t"] if opts["t"] is not None else w0
    center = opts["center"] if opts["center"] is not None else _figure_window(F, crit, w0, N)
    grid, _ = _render_one(F, crit, w0, N, t, complex(center), opts, out, "fiber")
    print(f"bounded fraction {bounded_fraction(grid):.6f}")
    return grid.job.precision


def cmd_reproduce(F, opts, out, args=None):
    """Full example pipeline; returns the largest precision used."""
    report = {"map": _map_info(F)}
    t0 = time.perf_counter()
    p = F.p
    crit = _crit(F)
    a = F.a
    b_exact = solve_b(p, a, 0, crit)
    report["solve_b"] = {"b": _s(b_exact), "decimal": format_decimal(to_big(b_exact, 128).real, 30)}
    if F.g_coeffs.get((2, 0), 0) != b_exact:
        F = F.with_b(b_exact)
    sol = fit_X(F, crit)
    report["resonance"] = coefficient_report(sol)
    prec_slope = precision_for_depth(41, lambda_abs(F))
    tuned = convergence_slope(F, crit.x0, Fraction(1, 32), (16, 40), prec_slope, opts["threads"])
    plain = convergence_slope(F.with_b(0), crit.x0, Fraction(1, 32), (16, 40), prec_slope, opts["threads"])
    report["slopes"] = {"tuned": round(tuned.rho, 9), "b0": round(plain.rho, 9)}
    levels = opts["levels"] or 5
    w0res = find_w0(F, crit, n=40, precision=precision_for_depth(40, lambda_abs(F)))
    scan = find_nesting_threshold(F, crit, w0res.w0, 4, opts["scan_max"], opts["samples"], opts["threads"])
    N = scan.N
    deep = 2 ** levels * N
    w0_deep = find_w0(F, crit, n=max(40, deep), precision=precision_for_depth(max(40, deep), lambda_abs(F))).w0
    report["w0"] = {"value": _s(w0res.w0, 40), "candidates": [_s(c, 30) for c in w0res.candidates],
                    "residual_n40": format_real(w0res.residual, 6)}
    report["nesting"] = {"N": N, "reports": [_nesting_json(r) for r in scan.reports.values()]}
    disk = make_disk(N, w0_deep, crit, F.lam)
    report["accumulate"] = _accumulate_json(accumulate(F, disk, 3))
    report["omega"] = omega_report(omega_limit(F, crit, Fraction(1, 3), 12, precision=128, threads=opts["threads"]))
    ev_off = julia_evidence(F, crit, disk, w0_deep + Fraction(1, 1000), levels, threads=opts["threads"])
    ev_on = julia_evidence(F, crit, disk, w0_deep, levels, threads=opts["threads"])
    report["julia_evidence"] = {"offset": julia_report(ev_off), "critical": julia_report(ev_on)}
    center = _figure_window(F, crit, w0res.w0, N)
    fig = {}
    for stem, t in (("figure1_left", w0res.w0), ("figure1_right", w0res.w0 + Fraction(1, 1000))):
        grid, ladder = _render_one(F, crit, w0res.w0, N, t, center, opts, out, stem, LADDER)
        fig[stem] = {"fiber_t": _s(t, 20), "bounded_fraction": bounded_fraction(grid),
                     "bounded_fraction_by_max_iter": ladder}
    fig["window"] = {"center_z": format_complex(center), "half_width": opts["half_width"]}
    report["figure1"] = fig
    out.json("report.json", report)
    print(f"b = {_s(b_exact)}; slopes {tuned.rho:.4f} / {plain.rho:.4f}; N = {N}; "
          f"figure bounded fractions {fig['figure1_left']['bounded_fraction']:.4f} / "
          f"{fig['figure1_right']['bounded_fraction']:.4f} ({time.perf_counter() - t0:.1f} s)")
    return max(ev_off.precision, prec_slope)


COMMANDS = {
    "koenigs": cmd_koenigs,
    "slope": cmd_slope,
    "resonance": cmd_resonance,
    "solve-b": cmd_solve_b,
    "find-w0": cmd_find_w0,
    "verify-disk": cmd_verify_disk,
    "accumulate": cmd_accumulate,
    "omega": cmd_omega,
    "julia-evidence": cmd_julia,
    "render": cmd_render,
    "reproduce-paper": cmd_reproduce,
}


def _json_safe(x):
    if isinstance(x, (str, int, float, bool)) or x is None:
        return x
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    return format_complex(x) if is_exact(x) or isinstance(x, (BigComplex, complex)) else str(x)


def dispatch(argv=None):
    """Run one subcommand; returns the exit code (0 ok, 1 computation failure, 2 usage error)."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    if args.replay:
        try:
            with open(args.replay) as fh:
                argv = json.load(fh)["argv"]
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: cannot read manifest {args.replay}: {exc}", file=sys.stderr)
            return 2
        return dispatch(argv)
    if not args.subcommand:
        parser.print_help(sys.stderr)
        return 2
    start = time.perf_counter()
    try:
        cp = _load_config(args.config)
        opts = _resolve(args, cp)
        opts["threads"] = resolve_threads(opts["threads"])
        F = resolve_map(args, cp)
        out = Outputs(opts["out_dir"])
        fn = COMMANDS[args.subcommand]
        if args.subcommand in ("solve-b", "reproduce-paper"):
            prec = fn(F, opts, out, args)
        else:
            prec = fn(F, opts, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ComputationError as exc:
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    params = {k: _json_safe(v) for k, v in opts.items() if k != "threads"}
    params["map"] = _map_info(F)
    manifest = RunManifest(subcommand=args.subcommand, config_path=args.config, parameters=params,
                           outputs=list(out.paths), wall_clock_seconds=round(time.perf_counter() - start, 3),
                           precision_bits=prec, argv=argv)
    with open(os.path.join(out.dir, "manifest.json"), "w") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
