"""Critical-fiber parameter w0, vertical disks D_n and what happens to them.

``D_n`` is the disk ``|z - x0| < |lambda|^(-3n/4)`` in the fiber ``t = w0 / lambda^n``
where ``Phi(w0) = x0``.  The checks here are numerical: containment of
``F^n(D_n)`` in ``D_2n`` is tested on boundary samples (the maximum principle
does the rest), accumulation on ``(0, x0)`` is measured along the center orbit,
and Julia membership of nearby fibers is supported by vertical-derivative
growth.
"""

from __future__ import annotations

import hashlib
import math
import os
import struct
from dataclasses import dataclass, field
from fractions import Fraction

import gmpy2
import numpy as np

from .dynamics import (Polynomial, VectorOrbitEngine, _numeric_roots, critical_points,
                       default_bailout, landing_chain, scalar_lift, t_at)
from .errors import (EscapedOrbit, InconsistentOrbit, NotFound, PrecisionExhausted,
                     PreconditionError, UsageError)
from .koenigs import engine_for, koenigs_limit, lambda_abs, phi_n
from .numerics import (BigComplex, Jet, format_complex, format_real, is_exact,
                       precision_for_depth, simplify_exact, to_big)
from .parallel import pmap


def _base_point(crit, x0):
    if crit is not None:
        return crit.x0
    return 0 if x0 is None else x0


def _inv_lam_pow(F, n, lift):
    lam = F.lam
    if is_exact(lam):
        return lift(simplify_exact(Fraction(1) / lam ** n))
    return lift(1) / lift(lam) ** n


# ---------------------------------------------------------------------------
# w0


@dataclass
class W0Result:
    w0: object
    residual: object
    n: int
    precision: int
    candidates: list = field(default_factory=list)
    residuals: list = field(default_factory=list)


def _phi_grid(F, x0, n, W):
    """phi_n on a numpy grid in double precision (rebased on the critical chain)."""
    chain = landing_chain(F.p, x0) if is_exact(x0) else None
    eng = VectorOrbitEngine(F, chain)
    lam = complex(F.lam)
    mu = complex(F.mu)
    t = W / lam ** n
    state = eng.start_offset(np.zeros_like(W)) if chain else eng.start(np.full_like(W, complex(x0)))
    for _ in range(n):
        state = eng.step(t, state)
        t = t * mu
    return eng.value(state)


def _local_minima(err):
    padded = np.pad(err, 1, constant_values=np.inf)
    core = padded[1:-1, 1:-1]
    mask = np.ones_like(core, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                mask &= core <= padded[1 + di:padded.shape[0] - 1 + di, 1 + dj:padded.shape[1] - 1 + dj]
    return mask


def _newton(F, x0, target, w, n, precision, max_iter=60):
    engine = engine_for(F, x0, precision)
    one = BigComplex(1, precision)
    w = to_big(w, precision)
    tgt = to_big(target, precision)
    eps = 2.0 ** -(precision - 20)
    for _ in range(max_iter):
        jet = phi_n(F, x0, n, Jet.variable(1, w, one), precision, engine)
        if not jet[1]:
            return None
        step = (jet[0] - tgt) / jet[1]
        w = w - step
        if not step or float(abs(step)) <= eps * max(1.0, float(abs(w))):
            return w
    return w


def find_w0(F, crit=None, target=None, center=0, half_width=24.0, grid=481, n_scan=30,
            n=40, tol=1e-20, precision=None, max_candidates=8, x0=None):
    """Solve ``Phi(w0) = target`` (default: the critical point) near ``center``.

    A double-precision grid scan of phi_{n_scan} supplies starting points; each is
    refined by Newton's method on phi_n with a jet-computed derivative and kept
    if the forward-orbit check ``|phi_n(w0) - target| < tol`` passes.  The root
    of smallest modulus is returned; all certified roots are in ``candidates``.
    """
    base = _base_point(crit, x0)
    if target is None:
        target = base
    if precision is None:
        precision = precision_for_depth(n, lambda_abs(F))
    xs = np.linspace(-half_width, half_width, grid)
    W = complex(center) + xs[None, :] + 1j * xs[:, None]
    with np.errstate(all="ignore"):
        err = np.abs(_phi_grid(F, base, n_scan, W) - complex(target))
    err = np.where(np.isfinite(err), err, np.inf)
    minima = np.argwhere(_local_minima(err) & np.isfinite(err))
    order = sorted(minima.tolist(), key=lambda ij: (err[ij[0], ij[1]], ij[0], ij[1]))[:max_candidates]
    if not order:
        raise NotFound("grid scan found no candidate; enlarge the search region")
    roots = []
    spacing = 2.0 * half_width / max(grid - 1, 1)
    for i, j in order:
        w = _newton(F, base, target, complex(W[i, j]), n, precision)
        if w is None or not gmpy2.is_finite(abs(w)):
            continue
        if abs(complex(w) - complex(W[i, j])) > 4 * spacing:
            continue
        try:
            res = abs(phi_n(F, base, n, w, precision) - to_big(target, precision))
        except EscapedOrbit:
            continue
        if float(res) < tol and all(abs(complex(w) - complex(r)) > 1e-12 for r, _ in roots):
            roots.append((w, res))
    if not roots:
        raise NotFound(f"no root of Phi(w) = {format_complex(target)} certified to {tol:g}")
    roots.sort(key=lambda r: (float(abs(r[0])), float(r[0].real), float(r[0].imag)))
    return W0Result(w0=roots[0][0], residual=roots[0][1], n=n, precision=precision,
                    candidates=[r for r, _ in roots], residuals=[e for _, e in roots])


# ---------------------------------------------------------------------------
# Disks and nesting


@dataclass(frozen=True)
class DiskSpec:
    n: int
    w0: object
    fiber_t: object
    center_z: object
    radius: object
    boundary_samples: int = 64
    lam: object = None


def disk_radius(n, lam, precision=128):
    """``|lambda|^(-3n/4)`` as an mpfr."""
    ctx = gmpy2.context(precision=precision)
    lam_abs = abs(to_big(lam, precision))
    return ctx.pow(lam_abs, ctx.div(gmpy2.mpfr(-3 * n, precision), 4))


def make_disk(n, w0, crit, lam, samples=64, precision=None):
    if n < 1:
        raise UsageError("disk index n must be >= 1")
    if precision is None:
        precision = w0.precision_bits if isinstance(w0, BigComplex) else 128
    x0 = crit.x0 if hasattr(crit, "x0") else crit
    lift = scalar_lift(precision)
    inv = lift(simplify_exact(Fraction(1) / lam ** n)) if is_exact(lam) else lift(1) / lift(lam) ** n
    return DiskSpec(n=n, w0=w0, fiber_t=lift(w0) * inv, center_z=x0,
                    radius=disk_radius(n, lam, precision), boundary_samples=samples, lam=lam)


@dataclass
class NestingReport:
    n: int
    max_image_distance: object
    margin: object
    fiber_ok: bool
    center_distance: object = None
    target_radius: object = None
    relative_margin: float = float("nan")
    escaped: list = field(default_factory=list)
    precision: int = 0

    @property
    def ok(self):
        return not self.escaped and self.margin > 0


def _same_scalar(a, b, precision):
    if a == b:
        return True
    scale = max(float(abs(a)), float(abs(b)), 1e-300)
    return float(abs(a - b)) <= 2.0 ** (8 - precision) * scale


def _iterate_offset(F, engine, t0, offset, steps, bailout):
    lift = engine.lift
    state = engine.start_offset(offset)
    for s in range(steps):
        state = engine.step(t_at(t0, F.mu, s, lift), state)
        if not abs(complex(engine.value(state))) < bailout:
            return None, s + 1
    return state, None


def verify_nesting(F, disk, precision=None, threads=None):
    """Check ``F^n(D_n) in D_2n`` on the center and ``disk.boundary_samples`` boundary points."""
    F.require_split()
    n = disk.n
    lam_abs = lambda_abs(F)
    needed = precision_for_depth(2 * n, lam_abs)
    if precision is None:
        precision = needed
    elif precision < needed:
        raise PrecisionExhausted(f"nesting at n = {n} needs {needed} bits, got {precision}")
    engine = engine_for(F, disk.center_z, precision)
    lift = engine.lift
    t0 = lift(disk.fiber_t)
    r = BigComplex(disk.radius, precision)
    offsets = [lift(0)] + [r * BigComplex.exp_i(k, disk.boundary_samples, precision)
                           for k in range(disk.boundary_samples)]
    bailout = default_bailout(F.p)
    results = pmap(lambda d: _iterate_offset(F, engine, t0, d, n, bailout), offsets, threads)
    target = disk_radius(2 * n, F.lam, precision)
    escaped = [(k, idx) for k, (st, idx) in enumerate(results) if st is None]
    t_n = t_at(t0, F.mu, n, lift)
    fiber_ok = _same_scalar(t_n, lift(disk.w0) * _inv_lam_pow(F, 2 * n, lift), precision)
    if escaped:
        return NestingReport(n=n, max_image_distance=gmpy2.inf(), margin=-gmpy2.inf(),
                             fiber_ok=fiber_ok, target_radius=target, escaped=escaped,
                             precision=precision)
    dists = [abs(engine.offset_from_x0(st)) for st, _ in results]
    worst = max(dists)
    return NestingReport(n=n, max_image_distance=worst, margin=target - worst, fiber_ok=fiber_ok,
                         center_distance=dists[0], target_radius=target,
                         relative_margin=float(1 - worst / target), precision=precision)


@dataclass
class NestingScan:
    N: int
    reports: dict


def find_nesting_threshold(F, crit, w0, n_min=4, n_max=32, samples=64, threads=None):
    """Smallest N in [n_min, n_max] with positive margin for every n in [N, 2N]."""
    reports = {}

    def report(n):
        if n not in reports:
            disk = make_disk(n, w0, crit, F.lam, samples)
            reports[n] = verify_nesting(F, disk, threads=threads)
        return reports[n]

    for N in range(n_min, n_max + 1):
        if all(report(n).ok for n in range(N, 2 * N + 1)):
            return NestingScan(N=N, reports={n: reports[n] for n in sorted(reports)})
    raise NotFound(f"no nesting threshold N <= {n_max}")


# ---------------------------------------------------------------------------
# Checkpoints

CHECKPOINT_MAGIC = b"SKFC"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct(">4sH32sIQi")


@dataclass(frozen=True)
class Checkpoint:
    map_hash: str
    precision: int
    step: int
    base: int
    t: BigComplex
    value: BigComplex


def encode_checkpoint(cp):
    """Header ``magic, version, sha256(map), precision, step, base`` then two hex scalars."""
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, bytes.fromhex(cp.map_hash),
                          cp.precision, cp.step, cp.base)
    payload = (cp.t.to_hex() + "\n" + cp.value.to_hex() + "\n").encode("ascii")
    return header + payload


def decode_checkpoint(blob):
    magic, version, digest, precision, step, base = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION:
        raise UsageError("not a checkpoint file (bad magic or version)")
    lines = blob[_HEADER.size:].decode("ascii").split("\n")
    return Checkpoint(map_hash=digest.hex(), precision=precision, step=step, base=base,
                      t=BigComplex.from_hex(lines[0], precision),
                      value=BigComplex.from_hex(lines[1], precision))


class CheckpointStore:
    """Directory of orbit checkpoints, one file per (map, start, precision, step).

    Files are written to a temporary name and renamed, so readers never see a
    partial file and existing checkpoints are never modified.
    """

    def __init__(self, root):
        self.root = root
        os.makedirs(root, exist_ok=True)

    def _name(self, map_hash, key, precision, step):
        return os.path.join(self.root, f"{map_hash[:16]}-{key}-p{precision}-s{step:08d}.ckpt")

    def save(self, cp, key):
        path = self._name(cp.map_hash, key, cp.precision, cp.step)
        if os.path.exists(path):
            return path
        tmp = f"{path}.{os.getpid()}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(encode_checkpoint(cp))
        os.replace(tmp, path)
        return path

    def load_latest(self, map_hash, key, precision, max_step):
        """Deepest checkpoint with ``step <= max_step`` and at least ``precision`` bits.

        Ties on step go to the most precise file.
        """
        best = None
        prefix = f"{map_hash[:16]}-{key}-p"
        for name in sorted(os.listdir(self.root)):
            if not (name.startswith(prefix) and name.endswith(".ckpt")):
                continue
            with open(os.path.join(self.root, name), "rb") as fh:
                cp = decode_checkpoint(fh.read())
            if cp.map_hash != map_hash or cp.precision < precision or cp.step > max_step:
                continue
            if best is None or (cp.step, cp.precision) > (best.step, best.precision):
                best = cp
        return best


def _start_key(disk):
    return hashlib.sha256(f"{format_complex(disk.w0)}|{disk.n}|{format_complex(disk.center_z)}".encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Accumulation


@dataclass
class AccumulationReport:
    n: int
    levels: int
    steps: list
    distances: list
    z_distances: list
    t_values: list
    t_exact: list
    precision: int
    resumed_from: int = 0


def accumulate(F, disk, levels, precision=None, store=None):
    """Distances ``||F^((2^l - 1) n)(center) - (0, x0)||`` for ``l = 1 .. levels``."""
    F.require_split()
    if levels < 1:
        raise UsageError("levels must be >= 1")
    n = disk.n
    needed = precision_for_depth(2 ** levels * n, lambda_abs(F))
    if precision is None:
        precision = needed
    elif precision < needed:
        raise PrecisionExhausted(f"{levels} levels at n = {n} need {needed} bits, got {precision}")
    engine = engine_for(F, disk.center_z, precision)
    lift = engine.lift
    t0 = lift(disk.fiber_t)
    marks = [(2 ** l - 1) * n for l in range(1, levels + 1)]
    map_hash = F.map_hash().hex()
    key = _start_key(disk)
    # a level-l checkpoint is reusable if it was computed at the policy precision for
    # depth 2^l n, which is what a run stopping at level l would have used
    stored = {}
    if store is not None:
        for l, mark in enumerate(marks, start=1):
            need = precision_for_depth(2 ** l * n, lambda_abs(F))
            cp = store.load_latest(map_hash, key, need, mark)
            if cp is None or cp.step != mark:
                break
            stored[mark] = (cp.base, cp.value.with_precision(precision))
    bailout = default_bailout(F.p)
    out = AccumulationReport(n=n, levels=levels, steps=marks, distances=[], z_distances=[],
                             t_values=[], t_exact=[], precision=precision,
                             resumed_from=max(stored, default=0))
    state, step = engine.start_offset(lift(0)), 0
    for l, mark in enumerate(marks, start=1):
        if mark in stored:
            state, step = stored[mark], mark
        while step < mark:
            state = engine.step(t_at(t0, F.mu, step, lift), state)
            step += 1
            if not abs(complex(engine.value(state))) < bailout:
                raise EscapedOrbit(f"center orbit escaped at step {step}", index=step)
        t = t_at(t0, F.mu, step, lift)
        dz = abs(engine.offset_from_x0(state))
        out.z_distances.append(dz)
        out.distances.append(gmpy2.sqrt(abs(t) ** 2 + dz ** 2))
        out.t_values.append(t)
        out.t_exact.append(_same_scalar(t, lift(disk.w0) * _inv_lam_pow(F, 2 ** l * n, lift), precision))
        if store is not None and mark not in stored:
            base, v = state
            store.save(Checkpoint(map_hash, precision, step, base, t, lift(v)), key)
    return out


# ---------------------------------------------------------------------------
# omega-limit chains


@dataclass
class OmegaLimit:
    points: list
    convergence_tail: object
    indices: list = field(default_factory=list)
    branch_threshold: int = 0
    injectivity_radius: float = 0.0
    chain_residual: object = 0
    error_bounds: list = field(default_factory=list)
    precision: int = 0

    def contraction_ratios(self):
        out = []
        for a, b in zip(self.points, self.points[1:]):
            if a:
                out.append(float(abs(b) / abs(a)))
        return out


def injectivity_radius(p, fixed_point=0):
    """Radius r with ``sum_k k |c_k| r^(k-1) < |p'(fixed)|`` over the nonlinear part.

    On ``|z - fixed| < r`` the derivative stays within ``|lambda|`` of ``lambda``,
    so p is injective there (it has positive real part after rotation).
    """
    shifted = p.taylor_shift(fixed_point)
    lam = abs(complex(shifted.coeffs[1])) if shifted.degree >= 1 else 0.0
    if lam == 0:
        raise PreconditionError("p'(fixed point) vanishes")
    cs = [abs(complex(c)) for c in shifted.coeffs]

    def excess(r):
        return sum(k * c * r ** (k - 1) for k, c in enumerate(cs) if k >= 2)

    if excess(1e6) < lam:
        return 1e6
    lo, hi = 0.0, 1e6
    for _ in range(200):
        mid = (lo + hi) / 2
        if excess(mid) < lam:
            lo = mid
        else:
            hi = mid
    return lo


def omega_limit(F, crit, w, L, precision=128, threads=None):
    """The chain ``x_{-l} = Phi(w / lambda^l)`` for ``l = -k .. L``.

    Every point is an independent Koenigs evaluation, so ``p(x_{-l}) = x_{-l+1}``
    is a genuine check; it must hold to ``2^(24 - precision)``.
    """
    F.require_split()
    lam_abs = lambda_abs(F)
    if not lam_abs > 1:
        raise PreconditionError("the fixed point must be repelling for a local inverse branch")
    if L < 0:
        raise UsageError("L must be >= 0")
    k = crit.k
    x0 = crit.x0
    n_max = int(math.ceil((precision + 16) / math.log2(lam_abs))) + 16
    work = precision_for_depth(n_max, lam_abs)
    engine = engine_for(F, x0, work)
    tol = 2.0 ** -(precision + 4)
    lam = F.lam
    indices = list(range(-k, L + 1))

    def point(l):
        if is_exact(w) and is_exact(lam):
            arg = simplify_exact(w * lam ** (-l)) if l <= 0 else simplify_exact(w / lam ** l)
        else:
            arg = to_big(w, work) * to_big(lam, work) ** (-l)
        mag = abs(complex(arg))
        n_min = 2 + max(0, int(math.ceil(math.log(mag) / math.log(lam_abs)))) if mag > 0 else 2
        return koenigs_limit(F, x0, arg, tol, precision=work, n_min=n_min, n_max=n_max + n_min,
                             engine=engine)

    vals = pmap(point, indices, threads)
    points = [v.value for v in vals]
    p = F.p
    residual = max((abs(p(points[i + 1]) - points[i]) for i in range(len(points) - 1)), default=0)
    limit = 2.0 ** (24 - precision)
    if float(residual) >= limit:
        raise InconsistentOrbit(f"max |p(x_-l) - x_-l+1| = {format_real(residual, 6)} exceeds 2^(24-{precision})")
    r_u = injectivity_radius(p, crit.fixed_point)
    threshold = next((l for l, x in zip(indices, points)
                      if all(float(abs(y)) < r_u for y in points[indices.index(l):])), indices[-1])
    return OmegaLimit(points=points, convergence_tail=abs(points[-1]), indices=indices,
                      branch_threshold=threshold, injectivity_radius=r_u, chain_residual=residual,
                      error_bounds=[v.error_bound for v in vals], precision=precision)


def omega_report(om):
    return {
        "indices": om.indices,
        "points": [format_complex(x, 30) for x in om.points],
        "abs": [format_real(abs(x), 12) for x in om.points],
        "convergence_tail": format_real(om.convergence_tail, 12),
        "branch_threshold": om.branch_threshold,
        "injectivity_radius": round(om.injectivity_radius, 12),
        "chain_residual": format_real(om.chain_residual, 6),
        "precision": om.precision,
    }


# ---------------------------------------------------------------------------
# Preimages of x0 inside a fiber


def fiber_preimages(F, crit, t0, n, precision=128):
    """Points z in the fiber ``t = t0`` with ``pi_2 F^n(t0, z) = x0``.

    Returned as ``(z, |d/dz pi_2 F^n|)`` sorted by derivative (largest disk first).
    """
    F.require_split()
    lift = scalar_lift(precision)
    t0 = lift(t0)
    p = F.p.map_coeffs(lift)
    ts = [t_at(t0, F.mu, s, lift) for s in range(n)]
    q = F.q.map_coeffs(lift)
    pts = [lift(crit.x0)]
    for s in range(n - 1, -1, -1):
        shift = q(ts[s])
        new = []
        for y in pts:
            poly = Polynomial([p.coeffs[0] - y + shift] + list(p.coeffs[1:]))
            new.extend(_numeric_roots(poly, precision))
        pts = new
    dp = p.derivative()
    out = []
    for z in pts:
        d, zz = lift(1), z
        for s in range(n):
            d = d * dp(zz)
            zz = p(zz) + q(ts[s])
        out.append((z, abs(d)))
    out.sort(key=lambda e: (float(e[1]), -float(e[0].real), -float(e[0].imag)))
    return out


# ---------------------------------------------------------------------------
# Julia-membership evidence


@dataclass
class JuliaEvidence:
    v: object
    N: int
    levels: int
    precision: int
    block_starts: list
    block_logs: list
    cumulative: list
    distances: list
    decay_rates: list
    lower_bound_profile: list
    samples: list
    phi_gap: object = None
    escapes: list = field(default_factory=list)
    positive_levels: int = 0
    positive: bool = False


def _visit_indices(N, levels):
    return [2 ** l * N for l in range(levels + 1)]


def _orbit_blocks(F, engine, t0, offset, N, levels, absolute=False):
    """Block sums of log|p'(z_j)| over [2^l N, 2^(l+1) N) and visit distances to x0.

    An orbit that passes the bailout closes its current block with +inf (past
    the escape radius |p'| grows without bound) and stops; the escape index is
    returned as the third item, None if the orbit stayed bounded.
    """
    lift = engine.lift
    visits = _visit_indices(N, levels)
    state = engine.start(offset) if absolute else engine.start_offset(offset)
    bailout = default_bailout(F.p)
    blocks, dists = [], [abs(engine.offset_from_x0(state))]
    acc = gmpy2.mpfr(0)
    for idx in range(N, visits[-1]):
        t = t_at(t0, F.mu, idx - N, lift)
        d = abs(engine.dz(t, state))
        acc += gmpy2.log(d) if d else -gmpy2.inf()
        state = engine.step(t, state)
        if not abs(complex(engine.value(state))) < bailout:
            blocks.append(gmpy2.inf())
            return blocks, dists, idx + 1
        if idx + 1 in visits:
            blocks.append(acc)
            acc = gmpy2.mpfr(0)
            dists.append(abs(engine.offset_from_x0(state)))
    return blocks, dists, None


def julia_evidence(F, crit, disk, v, levels, z_samples=None, sample_count=8, precision=None,
                   threads=None, gap=True):
    """Vertical-derivative growth along orbits of ``(v / lambda^N, z)`` for z near x0.

    For each sampled z the orbit is iterated to index ``2^levels N`` (indices
    count from N, so ``t_j = v / lambda^j``).  Reported per doubling block
    ``[2^l N, 2^(l+1) N)``: the sum of ``log|p'(z_j)|`` and the visit distance
    ``|z_{2^l N} - x0|``.  Evidence is positive when, for every sample, the block
    sums of the last three levels are positive and increasing, so the cumulative
    log-derivative grows by a larger amount at each doubling.  An escaping orbit
    ends with a +inf block (see ``escapes``).
    """
    F.require_split()
    if levels < 1:
        raise UsageError("levels must be >= 1")
    others = [c for c, _ in critical_points(F.p) if abs(complex(c) - complex(crit.x0)) > 1e-9]
    if others:
        raise PreconditionError("p has critical points besides x0")
    N = disk.n
    lam_abs = lambda_abs(F)
    visits = _visit_indices(N, levels)
    needed = precision_for_depth(visits[-1], lam_abs)
    if precision is None:
        precision = needed
    elif precision < needed:
        raise PrecisionExhausted(f"{levels} levels at N = {N} need {needed} bits, got {precision}")
    engine = engine_for(F, crit.x0, precision)
    lift = engine.lift
    t0 = lift(v) * _inv_lam_pow(F, N, lift)
    absolute = z_samples is not None
    if z_samples is None:
        r = BigComplex(disk.radius, precision) / 2
        z_samples = [r * BigComplex.exp_i(2 * k + 1, 2 * sample_count, precision) for k in range(sample_count)]
    else:
        z_samples = [lift(z) for z in z_samples]
    runs = pmap(lambda z: _orbit_blocks(F, engine, t0, z, N, levels, absolute), z_samples, threads)
    log_lam = math.log(lam_abs)
    s = crit.local_degree
    out = JuliaEvidence(v=v, N=N, levels=levels, precision=precision, block_starts=visits[:-1],
                        block_logs=[], cumulative=[], distances=[], decay_rates=[],
                        lower_bound_profile=[lam_abs ** (-m / s) for m in visits], samples=z_samples)
    trailing = []
    for blocks, dists, escaped in runs:
        out.escapes.append(escaped)
        out.block_logs.append([float(b) for b in blocks])
        cum, c = [], 0.0
        for b in blocks:
            c += float(b)
            cum.append(c)
        out.cumulative.append(cum)
        out.distances.append(dists)
        rates = []
        for l in range(1, len(dists) - 1):
            a, b = dists[l], dists[l + 1]
            if a and b:
                rates.append(float(gmpy2.log(b / a)) / ((visits[l] - visits[l - 1]) * log_lam))
            else:
                rates.append(float("-inf"))
        out.decay_rates.append(rates)
        k = 0
        for i in range(len(blocks) - 1, -1, -1):
            if blocks[i] > 0 and (i == 0 or blocks[i] > blocks[i - 1]):
                k += 1
            else:
                break
        trailing.append(k)
    out.positive_levels = min(trailing)
    out.positive = out.positive_levels >= min(3, levels)
    if gap:
        tol = 2.0 ** -(precision // 2)
        try:
            a = koenigs_limit(F, crit.x0, v, tol, precision=precision, engine=engine)
            b = koenigs_limit(F, crit.x0, disk.w0, tol, precision=precision, engine=engine)
            out.phi_gap = abs(a.value - b.value)
        except Exception:
            out.phi_gap = None
    return out


def _json_float(x):
    return round(x, 9) if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def julia_report(ev):
    return {
        "v": format_complex(ev.v, 30),
        "N": ev.N,
        "levels": ev.levels,
        "precision": ev.precision,
        "block_starts": ev.block_starts,
        "block_log_derivative": [[_json_float(b) for b in row] for row in ev.block_logs],
        "cumulative_log_derivative": [[_json_float(b) for b in row] for row in ev.cumulative],
        "escape_index": ev.escapes,
        "visit_distances": [[format_real(d, 12) for d in row] for row in ev.distances],
        "decay_rates": [[round(r, 9) for r in row] for row in ev.decay_rates],
        "lower_bound_profile": [format_real(x, 12) for x in ev.lower_bound_profile],
        "phi_gap": format_real(ev.phi_gap, 12) if ev.phi_gap is not None else None,
        "positive_levels": ev.positive_levels,
        "positive": ev.positive,
    }
