"""Escape-time pictures of vertical fibers ``{t = t0}`` and bounded-pixel statistics.

Pixels are iterated in double precision with the orbits carried relative to
the critical chain (see :class:`~skewfatou.dynamics.VectorOrbitEngine`).
Fibers whose ``t`` underflows double range, or jobs that ask for more than 53
bits, fall back to BigComplex per pixel.

Double precision cannot follow the orbit of a Fatou-disk point for long: each
excursion away from the repelling fixed point leaves an absolute rounding
error of about 1e-16 near x0, and once ``|t|`` drops below that error to the
fourth power the shadowing is lost.  For exact critical fibers
``t0 = w0 / lambda^m`` an optional :class:`InteriorCertificate` therefore
marks a pixel Bounded as soon as its orbit sits well inside a nesting disk
``D_n`` (n >= N), where ``F^n(D_n) in D_2n`` keeps it bounded forever.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .disks import disk_radius
from .dynamics import OrbitEngine, VectorOrbitEngine, landing_chain, scalar_lift
from .errors import UsageError
from .numerics import format_complex
from .parallel import pmap

BOUNDED = -1
DEFAULT_MAX_ITER = 2000
# certificates are only trusted while D_n is far wider than double rounding
CERT_MIN_RADIUS = 2.0 ** -36


def escape_radius(p, extra=0.0):
    """R with ``|z| >= R  =>  |p(z) + c| >= 2|z|`` whenever ``|c| <= extra``."""
    cs = [abs(complex(c)) for c in p.coeffs]
    lead = cs[-1]
    return max(1.0, (2.0 + sum(cs[:-1]) + extra) / lead)


def render_bailout(p):
    return 2.0 * max(2.0, sum(abs(complex(c)) for c in p.coeffs))


@dataclass(frozen=True)
class InteriorCertificate:
    """Nesting data for the critical fiber family ``t = w0 / lambda^n``."""

    w0: object
    N: int
    x0: object

    def depth_of(self, F, fiber_t):
        """m with ``fiber_t = w0 / lambda^m`` (to double rounding), or None."""
        w0 = complex(self.w0)
        t = complex(fiber_t)
        if t == 0 or w0 == 0:
            return None
        lam = complex(F.lam)
        m = round(math.log(abs(w0 / t)) / math.log(abs(lam)))
        if m < 0:
            return None
        if abs(t * lam ** m - w0) <= 1e-12 * abs(w0):
            return m
        return None


@dataclass
class RenderJob:
    F: object
    fiber_t: object
    window: tuple
    resolution: tuple
    max_iter: int = DEFAULT_MAX_ITER
    bailout: float | None = None
    precision: int = 53
    certificate: InteriorCertificate | None = None

    def __post_init__(self):
        w, h = self.resolution
        if w <= 0 or h <= 0:
            raise UsageError("resolution must be positive")
        if self.max_iter < 0:
            raise UsageError("max_iter must be >= 0")
        q = self.F.q
        extra = abs(complex(q(complex(self.fiber_t))))
        if self.bailout is None:
            self.bailout = max(render_bailout(self.F.p), escape_radius(self.F.p, extra))
        elif self.bailout < escape_radius(self.F.p, extra):
            raise UsageError(f"bailout {self.bailout} is below the escape radius "
                             f"{escape_radius(self.F.p, extra):.6g}")

    def pixel_grid(self):
        center, half = self.window
        w, h = self.resolution
        center = complex(center)
        half = float(half)
        aspect = h / w
        xs = np.linspace(-half, half, w)
        ys = np.linspace(half * aspect, -half * aspect, h)
        return center + xs[None, :] + 1j * ys[:, None]

    def describe(self):
        center, half = self.window
        return {
            "fiber_t": format_complex(self.fiber_t, 20),
            "window": {"center_z": format_complex(center, 20), "half_width": float(half)},
            "resolution": list(self.resolution),
            "max_iter": self.max_iter,
            "bailout": self.bailout,
            "precision": self.precision,
            "map": self.F.canonical_text(),
            "certificate": None if self.certificate is None else {
                "w0": format_complex(self.certificate.w0, 20), "N": self.certificate.N},
        }


@dataclass
class EscapeGrid:
    escape: np.ndarray
    job: RenderJob
    certified: np.ndarray = field(default=None, repr=False)

    @property
    def bounded(self):
        return self.escape == BOUNDED


def _certificate_plan(job):
    """Per-step radii (or None) at which the interior certificate may fire."""
    cert = job.certificate
    if cert is None:
        return {}
    F = job.F
    m = cert.depth_of(F, job.fiber_t)
    if m is None:
        return {}
    plan = {}
    for j in range(job.max_iter + 1):
        n = m + j
        if n < cert.N:
            continue
        r = float(disk_radius(n, F.lam, 64))
        if r < CERT_MIN_RADIUS:
            break
        plan[j] = r / 2
    return plan


def _render_rows_double(job, Z, plan):
    F = job.F
    x0 = job.certificate.x0 if job.certificate else _crit_x0(F)
    chain = landing_chain(F.p, x0) if x0 is not None else None
    eng = VectorOrbitEngine(F, chain)
    mu = complex(F.mu)
    shape = Z.shape
    flat = Z.ravel()
    esc = np.full(flat.size, BOUNDED, dtype=np.int32)
    cert = np.zeros(flat.size, dtype=bool)
    alive = np.arange(flat.size)
    state = eng.start(flat)
    t = complex(job.fiber_t)
    bail = job.bailout
    for j in range(job.max_iter + 1):
        with np.errstate(all="ignore"):
            z = eng.value(state)
            out = ~(np.abs(z) <= bail)
        esc[alive[out]] = j
        keep = ~out
        if j in plan:
            base, v = state
            inside = keep & (base == 0) & (np.abs(v) < plan[j])
            cert[alive[inside]] = True
            keep &= ~inside
        alive = alive[keep]
        state = (state[0][keep], state[1][keep])
        if not alive.size or j == job.max_iter:
            break
        state = eng.step(t, state)
        t = t * mu
    return esc.reshape(shape), cert.reshape(shape)


def _render_pixel_big(job, z, plan, engine):
    F = job.F
    lift = engine.lift
    t = lift(job.fiber_t)
    mu = lift(F.mu)
    state = engine.start(lift(z))
    for j in range(job.max_iter + 1):
        if not abs(complex(engine.value(state))) <= job.bailout:
            return j, False
        if j in plan and state[0] == 0 and abs(complex(state[1])) < plan[j]:
            return BOUNDED, True
        if j == job.max_iter:
            break
        state = engine.step(t, state)
        t = t * mu
    return BOUNDED, False


def _crit_x0(F):
    from .dynamics import critical_data
    try:
        return critical_data(F.p).x0
    except Exception:
        return None


def _needs_big(job):
    if job.precision > 53:
        return True
    t = job.fiber_t
    mag = abs(complex(t)) if not hasattr(t, "precision_bits") else float(abs(t))
    return mag != 0 and mag < 1e-290


def render_fiber(job, threads=None, chunk_rows=16):
    """Escape steps for every pixel (``BOUNDED`` = -1 if none by ``max_iter``)."""
    Z = job.pixel_grid()
    plan = _certificate_plan(job)
    h = Z.shape[0]
    if not _needs_big(job):
        chunks = [(i, min(i + chunk_rows, h)) for i in range(0, h, chunk_rows)]
        parts = pmap(lambda c: _render_rows_double(job, Z[c[0]:c[1]], plan), chunks, threads)
        esc = np.vstack([p[0] for p in parts])
        cert = np.vstack([p[1] for p in parts])
        return EscapeGrid(escape=esc, job=job, certified=cert)
    bits = max(job.precision, 128)
    x0 = job.certificate.x0 if job.certificate else _crit_x0(job.F)
    engine = OrbitEngine(job.F, landing_chain(job.F.p, x0) if x0 is not None else None,
                         lift=scalar_lift(bits))
    res = pmap(lambda z: _render_pixel_big(job, complex(z), plan, engine), list(Z.ravel()), threads)
    esc = np.array([r[0] for r in res], dtype=np.int32).reshape(Z.shape)
    cert = np.array([r[1] for r in res], dtype=bool).reshape(Z.shape)
    return EscapeGrid(escape=esc, job=job, certified=cert)


def subwindow_mask(grid, subwindow=None):
    if subwindow is None:
        return np.ones(grid.escape.shape, dtype=bool)
    center, half = subwindow
    Z = grid.job.pixel_grid()
    c = complex(center)
    half = float(half)
    gc, gh = grid.job.window
    if abs(c.real - complex(gc).real) + half > float(gh) + 1e-12 or \
            abs(c.imag - complex(gc).imag) + half > float(gh) * grid.job.resolution[1] / grid.job.resolution[0] + 1e-12:
        raise UsageError("subwindow extends beyond the rendered window")
    return (np.abs(Z.real - c.real) <= half) & (np.abs(Z.imag - c.imag) <= half)


def bounded_fraction(grid, subwindow=None):
    """Fraction of Bounded pixels inside ``subwindow = (center_z, half_width)``."""
    mask = subwindow_mask(grid, subwindow)
    total = int(mask.sum())
    if total == 0:
        raise UsageError("subwindow contains no pixels")
    return int((grid.bounded & mask).sum()) / total


def to_gray(grid):
    """Bounded pixels black; escaped pixels brighter the sooner they escape (log scale)."""
    esc = grid.escape
    top = math.log1p(max(int(esc.max()), 1))
    val = np.where(esc == BOUNDED, 0.0, 255.0 * (1.0 - np.log1p(np.maximum(esc, 0)) / (top + 1.0)))
    return np.clip(np.rint(val), 0, 255).astype(np.uint8)


def write_ppm(grid, path):
    g = to_gray(grid)
    h, w = g.shape
    rgb = np.repeat(g[:, :, None], 3, axis=2)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
    return path


def write_png(grid, path):
    """PNG via Pillow; returns None when Pillow is not installed."""
    try:
        from PIL import Image
    except ImportError:
        return None
    Image.fromarray(to_gray(grid), mode="L").save(path, format="PNG")
    return path


def sidecar(grid, subwindows=None, extra=None):
    out = {
        "job": grid.job.describe(),
        "bounded_fraction": bounded_fraction(grid),
        "bounded_pixels": int(grid.bounded.sum()),
        "certified_pixels": int(grid.certified.sum()) if grid.certified is not None else 0,
    }
    if subwindows:
        out["subwindows"] = [{"center_z": format_complex(c, 20), "half_width": float(h),
                              "bounded_fraction": bounded_fraction(grid, (c, h))}
                             for c, h in subwindows]
    if extra:
        out.update(extra)
    return out


def write_sidecar(grid, path, subwindows=None, extra=None):
    with open(path, "w") as fh:
        json.dump(sidecar(grid, subwindows, extra), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
