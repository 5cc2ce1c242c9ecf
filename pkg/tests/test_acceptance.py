"""Acceptance criteria 1-12, one PASS/FAIL line each.

Every criterion is computed by a ``crit_N(threads)`` function returning
``(ok, detail, payload)``; the JSON payloads feed the determinism check, which
recomputes all of them in fresh processes with 1 and 8 threads.

Run directly (``python3 tests/test_acceptance.py --payload --threads 8``) to
print the payload JSON.
"""

import argparse
import json
import subprocess
import sys
import time
from fractions import Fraction
from functools import lru_cache

import pytest

from skewfatou.cli import dispatch
from skewfatou.disks import (accumulate, fiber_preimages, find_nesting_threshold, find_w0, julia_evidence,
                             make_disk, omega_limit)
from skewfatou.dynamics import SkewProduct, critical_data, example_family
from skewfatou.koenigs import (circle_samples, convergence_slope, koenigs_limit, residual_profile)
from skewfatou.numerics import BigComplex, GaussianRational, format_complex, format_real, precision_for_depth
from skewfatou.render import InteriorCertificate, RenderJob, bounded_fraction, render_fiber
from skewfatou.resonance import closed_form_residual, fit_X

B = Fraction(-641, 4165)
TUNED = example_family(4, 1, B)
PLAIN = example_family(4, 1, 0)
CRIT = critical_data(TUNED.p)
LAM = 8
FIG_RES = (120, 120)


def fr(x, digits=12):
    return format_real(x, digits)


@lru_cache(maxsize=None)
def w0_for(depth):
    return find_w0(TUNED, CRIT, n=depth, precision=precision_for_depth(depth, LAM)).w0


@lru_cache(maxsize=None)
def nesting(threads):
    return find_nesting_threshold(TUNED, CRIT, w0_for(40), threads=threads)


def crit_1(threads):
    import contextlib
    import io
    import tempfile
    start = time.perf_counter()
    buf = io.StringIO()
    with tempfile.TemporaryDirectory() as d, contextlib.redirect_stdout(buf):
        code = dispatch(["solve-b", "--p", "2*(z+1)^4-2", "--a", "1", "--tau", "0", "--exact", "--out-dir", d,
                         "--threads", str(threads)])
    elapsed = time.perf_counter() - start
    out = buf.getvalue().strip()
    ok = code == 0 and out == "-641/4165" and elapsed < 10
    return ok, f"b = {out} ({elapsed:.2f} s)", {"b": out}


def crit_2(threads):
    prec = precision_for_depth(40, 8, 64)
    w = Fraction(1, 32)
    tuned = convergence_slope(TUNED, CRIT.x0, w, (16, 40), prec, threads)
    plain = convergence_slope(PLAIN, CRIT.x0, w, (16, 40), prec, threads)
    ok = tuned.rho <= -1.8 and -1.2 <= plain.rho <= -0.8
    return ok, f"rho tuned {tuned.rho:.4f}, rho b=0 {plain.rho:.4f}", {
        "tuned": round(tuned.rho, 9), "plain": round(plain.rho, 9),
        "diffs": [fr(d) for d in tuned.differences]}


def crit_3(threads):
    F = SkewProduct.linear(2, 1, Fraction(1, 2))
    pts = [GaussianRational(Fraction(i - 10, 3), Fraction((7 * i) % 11 - 5, 4)) for i in range(20)]
    worst = 0
    vals = []
    for w in pts:
        v = koenigs_limit(F, 0, w, 1e-45, precision=256).value
        expect = BigComplex(w / Fraction(3, 2), 256)
        rel = abs(v - expect) / abs(expect) if w != 0 else abs(v)
        worst = max(worst, rel)
        vals.append(format_complex(v, 40))
    return worst < 1e-30, f"max relative error {fr(worst, 4)} over 20 points", {"values": vals}


def crit_4(threads):
    ws = circle_samples(Fraction(1, 64), 6) + circle_samples(Fraction(1, 40), 4, Fraction(1, 3))
    ns = [16, 20, 24, 28, 32]
    rows = residual_profile(TUNED, CRIT.x0, ws, ns, threads=threads)
    factors = [float(r[i] / r[i + 1]) for r in rows for i in range(len(ns) - 1)]
    ok = min(factors) >= LAM ** 3
    return ok, f"min residual ratio per +4 depth {min(factors):.1f} (need >= {LAM ** 3})", {
        "residuals": [[fr(x, 8) for x in r] for r in rows]}


def crit_5(threads):
    other = example_family(4, 1, B + Fraction(1, 7))
    pts = [GaussianRational(Fraction(i - 10, 320), Fraction((3 * i) % 7 - 3, 160)) for i in range(20)]
    worst_slack = None
    out = []
    for w in pts:
        a = koenigs_limit(TUNED, CRIT.x0, w, 1e-30, precision=320)
        b = koenigs_limit(other, CRIT.x0, w, 1e-30, precision=320)
        gap = abs(a.value - b.value)
        slack = float(gap / (a.error_bound + b.error_bound)) if a.error_bound + b.error_bound else float(gap > 0) * 1e9
        worst_slack = slack if worst_slack is None else max(worst_slack, slack)
        out.append(fr(gap, 6))
    return worst_slack <= 1, f"max |Phi_b - Phi_b'| / (sum of bounds) = {worst_slack:.3g}", {"gaps": out}


def crit_6(threads):
    sol = fit_X(TUNED, CRIT)
    pairs = [(10 + i, 2 + (3 * i) % 9) for i in range(10)]
    res = closed_form_residual(TUNED, CRIT, sol, pairs)
    return res == 0, f"residual {res} at 10 held-out pairs", {
        "X": [str(x) for x in sol.X], "Y": [str(sol.Y1), str(sol.Ym1)], "residual": str(res)}


def crit_7(threads):
    start = time.perf_counter()
    scan = nesting(threads)
    N = scan.N
    reps = [scan.reports[n] for n in range(N, 2 * N + 1)]
    rel = [r.relative_margin for r in reps]
    increasing = all(a < b for a, b in zip(rel, rel[1:]))
    ok = N <= 32 and all(r.ok for r in reps) and increasing and time.perf_counter() - start < 300
    return ok, f"N = {N}; relative margins {', '.join(f'{m:.3f}' for m in rel)}", {
        "N": N, "margins": [fr(r.margin) for r in reps], "relative": [round(m, 12) for m in rel]}


def crit_8(threads):
    N = nesting(threads).N
    rep = accumulate(TUNED, make_disk(N, w0_for(40), CRIT, LAM), 3)
    d = rep.distances
    ok = d[0] > d[1] > d[2] and d[2] < 1e-6 and all(rep.t_exact)
    return ok, "distances " + ", ".join(fr(x, 4) for x in d), {
        "distances": [fr(x) for x in d], "t": [format_complex(t, 20) for t in rep.t_values]}


def crit_9(threads):
    P = 128
    om = omega_limit(TUNED, CRIT, Fraction(1, 3), 12, precision=P, threads=threads)
    i = om.indices.index(om.branch_threshold)
    tail = [abs(x) for x in om.points[i:]]
    mono = all(a > b for a, b in zip(tail, tail[1:]))
    ok = om.chain_residual < 2.0 ** (24 - P) and mono
    return ok, f"chain residual {fr(om.chain_residual, 3)}, |x_-{om.indices[-1]}| = {fr(tail[-1], 3)}", {
        "points": [format_complex(x, 30) for x in om.points], "threshold": om.branch_threshold}


def crit_10(threads):
    N = nesting(threads).N
    levels = 5
    w0 = w0_for(2 * 2 ** levels * N)
    disk = make_disk(N, w0, CRIT, LAM)
    off = julia_evidence(TUNED, CRIT, disk, w0 + Fraction(1, 1000), levels, threads=threads)
    on = julia_evidence(TUNED, CRIT, disk, w0, levels, threads=threads, gap=False)
    rates = [r for row in on.decay_rates for r in row]
    ok = off.positive and off.positive_levels >= 3 and max(rates) <= -1.8
    blocks = off.block_logs[0]
    return ok, (f"offset fiber: {off.positive_levels} positive levels, blocks "
                f"{', '.join(f'{b:.1f}' for b in blocks)}; critical fiber decay rates <= {max(rates):.3f}"), {
        "off_blocks": [[round(b, 6) if b != float("inf") else "inf" for b in row] for row in off.block_logs],
        "on_rates": [[round(r, 6) for r in row] for row in on.decay_rates], "escapes": off.escapes}


def crit_11(threads):
    N = nesting(threads).N
    w0 = w0_for(40)
    center = complex(fiber_preimages(TUNED, CRIT, w0, N)[0][0]).real
    cert = InteriorCertificate(w0=w0, N=N, x0=CRIT.x0)
    fr_ = {}
    for name, t in (("critical", w0), ("offset", w0 + Fraction(1, 1000))):
        fr_[name] = [bounded_fraction(render_fiber(RenderJob(TUNED, t, (center, 0.04), FIG_RES, mi,
                                                             certificate=cert), threads=threads))
                     for mi in (2000, 4000, 8000)]
    off = fr_["offset"]
    ok = off[0] < fr_["critical"][0] and all(a >= b for a, b in zip(off, off[1:]))
    return ok, (f"bounded fraction critical {fr_['critical']}, offset {off} at max_iter 2000/4000/8000 "
                f"(offset decrease is non-strict)"), fr_


CRITERIA = [crit_1, crit_2, crit_3, crit_4, crit_5, crit_6, crit_7, crit_8, crit_9, crit_10, crit_11]


def payload(threads):
    return {f"criterion_{i}": fn(threads)[2] for i, fn in enumerate(CRITERIA, start=1)}


@lru_cache(maxsize=None)
def evaluate(i, threads=1):
    return CRITERIA[i - 1](threads)


def _report(capsys, i, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {i}: {'PASS' if ok else 'FAIL'} ({detail})")


@pytest.mark.parametrize("i", range(1, 12))
def test_criterion(i, capsys):
    ok, detail, _ = evaluate(i)
    _report(capsys, i, ok, detail)
    assert ok, detail


def test_criterion_12_determinism(capsys):
    here = json.dumps({f"criterion_{i}": evaluate(i)[2] for i in range(1, 12)}, sort_keys=True)
    runs = []
    for threads in (1, 8):
        proc = subprocess.run([sys.executable, __file__, "--payload", "--threads", str(threads)],
                              capture_output=True, text=True, check=True)
        runs.append(proc.stdout.strip())
    same = runs[0] == here and runs[1] == here
    detail = "criteria 1-11 outputs byte-identical across 2 runs and threads 1 vs 8" if same else \
        "outputs differ between runs or thread counts"
    _report(capsys, 12, same, detail)
    assert same


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--payload", action="store_true")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    if args.payload:
        print(json.dumps(payload(args.threads), sort_keys=True))
    else:
        for i, fn in enumerate(CRITERIA, start=1):
            ok, detail, _ = fn(args.threads)
            print(f"criterion {i}: {'PASS' if ok else 'FAIL'} ({detail})")
