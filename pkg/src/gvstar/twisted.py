"""Double-twisted products u(s)^2 g_B + v(x)^2 ds^2 with T = (1/v) d_s: assembly,
recovery of u and v from solutions of the critical ODE, and criticality checks."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import BPoly

from . import ode
from .acm import AcmStructure, build_acm, classify
from .chart import ChartBox, Grid
from .exprlang import Expr, Jet2, parse
from .geometry import MetricField, VectorField, frenet
from .variation import el_residuals

__all__ = [
    "TwistedError",
    "Profile1D",
    "TwistedSpec",
    "build_twisted",
    "recover_profiles",
    "verify_critical",
]

COORDS = ("x", "y", "s")


class TwistedError(ValueError):
    pass


class Profile1D:
    """Positive function of one coordinate given by its logarithm as a piecewise polynomial.

    ``log_f`` is a scipy ``BPoly`` (or any object with ``__call__(x, nu)``).
    Calling the profile on points returns the exact Jet2 of ``exp(log_f)``.
    """

    def __init__(self, axis: int, log_f, label: str = "", nodes: np.ndarray | None = None):
        self.axis = axis
        self.log_f = log_f
        self.label = label
        self.nodes = nodes

    def log_jet(self, points) -> Jet2:
        x = np.asarray(points, dtype=float)[self.axis]
        lo, hi = self.log_f.x[0], self.log_f.x[-1]
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise TwistedError(f"profile {self.label or ''} evaluated outside [{lo}, {hi}]")
        return Jet2.variable(x, self.axis).compose(self.log_f(x), self.log_f(x, 1), self.log_f(x, 2))

    def __call__(self, points) -> Jet2:
        return self.log_jet(points).exp()

    def values(self, x) -> np.ndarray:
        return np.exp(self.log_f(np.asarray(x, dtype=float)))


def _as_field(f, coords=COORDS) -> Callable:
    if isinstance(f, str):
        return parse(f, coords)
    if isinstance(f, (int, float)):
        return parse(repr(float(f)), coords)
    return f


@dataclass
class TwistedSpec:
    box: ChartBox
    u: Callable
    v: Callable
    g_B: tuple = ("1", "0", "1")
    info: dict = field(default_factory=dict)
    sources: dict = field(default_factory=dict)

    def __post_init__(self):
        if tuple(self.box.coord_names) != COORDS:
            raise TwistedError(f"twisted products use coordinates {COORDS}, got {self.box.coord_names}")
        for key, f in (("u", self.u), ("v", self.v)):
            if isinstance(f, str):
                self.sources.setdefault(key, f)
        for i, f in enumerate(self.g_B):
            if isinstance(f, str):
                self.sources.setdefault(f"gB{('11', '12', '22')[i]}", f)
        self.u = _as_field(self.u)
        self.v = _as_field(self.v)
        self.g_B = tuple(_as_field(f) for f in self.g_B)
        for name, f, axes in (("u", self.u, {"x", "y"}), ("v", self.v, {"y", "s"})):
            if isinstance(f, Expr) and f.variables() & axes:
                raise TwistedError(f"profile {name} may not depend on {sorted(f.variables() & axes)}")

    def metric(self) -> MetricField:
        u, v = self.u, self.v
        gB11, gB12, gB22 = self.g_B

        def scaled(c):
            return lambda p: u(p) ** 2 * c(p)

        def zero(p):
            return Jet2.constant(0.0, np.shape(p)[1:])

        return MetricField([scaled(gB11), scaled(gB12), zero, scaled(gB22), zero, lambda p: v(p) ** 2])

    def reeb(self) -> VectorField:
        v = self.v

        def zero(p):
            return Jet2.constant(0.0, np.shape(p)[1:])

        return VectorField([zero, zero, lambda p: v(p).reciprocal()])


def build_twisted(spec: TwistedSpec, n: int = 48, box: ChartBox | None = None):
    """(metric, T, a.c.m. structure on an n-interval grid over ``box`` or the spec box)."""
    grid = Grid.make(box or spec.box, n)
    pts = grid.points()
    for name, f in (("u", spec.u), ("v", spec.v)):
        vals = f(pts).val
        if not np.all(vals > 0):
            raise TwistedError(f"profile {name} is not positive on the box")
    g, T = spec.metric(), spec.reeb()
    return g, T, build_acm(g, T, grid)


def _hermite(nodes, d1, d2, anchor: float, value: float = 0.0):
    """BPoly through first/second derivative data, integrated once and pinned to ``value`` at ``anchor``."""
    slope = BPoly.from_derivatives(nodes, np.stack([d1, d2], axis=1))
    f = slope.antiderivative()
    # Bernstein bases sum to one, so a constant shift moves every coefficient
    return BPoly(f.c + (value - float(f(anchor))), f.x)


def _affinity_defect(log_v: BPoly, x) -> float:
    v = np.exp(log_v(x))
    dv = v * log_v(x, 1)
    d2v = v * (log_v(x, 2) + log_v(x, 1) ** 2)
    return float(np.max(np.abs(d2v)) / max(np.max(np.abs(dv)), 1e-300))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GVSTAR_THREADS", "1")))
    except ValueError:
        return 1


def recover_profiles(k0, H0: float, box: ChartBox, step: float = 1e-3, n_base: int = 64,
                     y_line: float | None = None, x_line: float | None = None, calibrate: bool = True,
                     calibration_n: int = 16) -> TwistedSpec:
    """Profiles u(s), v(x) whose product metric carries the ODE solution with initial data (k0, H0).

    ``k0`` is an expression (or callable) over (x, y, s) evaluated on the s = 0
    leaf, and must not vanish; ``H0`` is a constant.  v comes from
    (log v)' = +- k0 u(0) along y = ``y_line``; the sign giving the more nearly
    affine v is kept (ties keep the minus sign).  u comes from
    (log u)' = -lambda v(x_c) H and (log u)'' = lambda v(x_c)^2 (H^2 + k^2/4)
    along x = ``x_line``, with the factor lambda calibrated against the H that
    the geometry module computes on the assembled metric.
    """
    k0f = _as_field(k0)
    H0 = float(H0)
    xc = box.center[0] if x_line is None else float(x_line)
    yc = box.center[1] if y_line is None else float(y_line)
    xs = np.linspace(box.lo[0], box.hi[0], n_base + 1)
    pts = np.stack([xs, np.full_like(xs, yc), np.zeros_like(xs)])
    kj = k0f(pts)
    if not (np.all(kj.val > 0) or np.all(kj.val < 0)):
        raise TwistedError("k0 must not vanish or change sign on the base box")
    u0 = 1.0
    candidates = {}
    for sign in (-1.0, 1.0):
        lv = _hermite(xs, sign * np.abs(kj.val) * u0, sign * np.sign(kj.val) * kj.grad[0] * u0, xc)
        candidates[sign] = (lv, _affinity_defect(lv, xs))
    sign = -1.0 if candidates[-1.0][1] <= candidates[1.0][1] * (1 + 1e-9) else 1.0
    log_v, defect = candidates[sign]
    v = Profile1D(0, log_v, "v", xs)
    vc = float(v.values(xc))
    kc = float(np.abs(k0f(np.array([[xc], [yc], [0.0]])).val[0]))

    # ODE along the calibration line, in arclength sigma = v(x_c) s
    s_lo, s_hi = box.lo[2], box.hi[2]
    reach = max(abs(s_lo), abs(s_hi)) * vc
    prof = ode.integrate_critical(kc, H0, reach + 2 * step, step)
    if prof.s[0] > -reach or prof.s[-1] < reach:
        raise TwistedError(f"the critical ODE blows up inside the requested s-range (at sigma = {prof.blowup_s})")
    sig = prof.s
    keep = (sig >= s_lo * vc - step) & (sig <= s_hi * vc + step)
    sig, kk, HH = sig[keep], prof.k[keep], prof.H[keep]
    s_nodes = sig / vc

    def make_u(lam):
        lu = _hermite(s_nodes, -lam * vc * HH, lam * vc**2 * (HH**2 + 0.25 * kk**2), 0.0, math.log(u0))
        return Profile1D(2, lu, "u", s_nodes)

    # per-base-point ODE solves, for the reported consistency of k(x, s)
    def solve(x):
        p = np.array([[x], [yc], [0.0]])
        kx = float(np.abs(k0f(p).val[0]))
        vx = float(v.values(x))
        r = max(abs(s_lo), abs(s_hi)) * vx
        return ode.integrate_critical(kx, H0, r + 2 * step, step, drift_limit=1e-6), vx

    base_x = np.linspace(box.lo[0], box.hi[0], 9)
    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        base = list(ex.map(solve, base_x))
    blown = [x for x, (p, _) in zip(base_x, base) if p.blowup_s is not None and p.blowup_s <= max(abs(s_lo), abs(s_hi)) * v.values(x)]
    if blown:
        raise TwistedError(f"the critical ODE blows up inside the s-range at base points x = {blown}")

    lam = 1.0
    u = make_u(lam)
    factor = None
    if calibrate:
        sub = ChartBox(COORDS, (xc - 1e-3, yc - 1e-3, box.lo[2]), (xc + 1e-3, yc + 1e-3, box.hi[2]))
        spec = TwistedSpec(box, u, v)
        F = frenet(spec.metric(), spec.reeb(), Grid.make(sub, (4, 4, calibration_n)))
        s_line = F.grid.axes[2]
        H_geom = F.H[2, 2, :]
        H_ode = np.interp(s_line * vc, sig, HH)
        factor = float(np.dot(H_geom, H_ode) / max(np.dot(H_ode, H_ode), 1e-300)) if np.any(H_ode) else 1.0
        if abs(factor - 1.0) > 1e-8 and factor != 0.0:
            lam = 1.0 / factor
            u = make_u(lam)

    # k from the ODE against k = |v'| / (u v) on the profiles
    k_defect = 0.0
    for x, (p, vx) in zip(base_x, base):
        sgrid = np.clip(p.s / vx, s_nodes[0], s_nodes[-1])
        inside = (p.s / vx >= s_lo) & (p.s / vx <= s_hi)
        k_geom = np.abs(v.log_f(x, 1)) / u.values(sgrid[inside])
        k_defect = max(k_defect, float(np.max(np.abs(k_geom - p.k[inside]))))

    info = {
        "k0": getattr(k0f, "source", None) or (k0 if isinstance(k0, str) else None),
        "H0": H0,
        "v_sign": int(sign),
        "v_affinity_defect": defect,
        "v_affinity_defect_other_sign": candidates[-sign][1],
        "calibration_factor": factor,
        "lambda": lam,
        "x_line": xc,
        "y_line": yc,
        "ode_blowup_s": prof.blowup_s,
        "k_vs_ode_defect": k_defect,
        "step": step,
    }
    return TwistedSpec(box, u, v, info=info, sources={"k0": k0 if isinstance(k0, str) else "", "h0": repr(H0)})


def verify_critical(spec: TwistedSpec, n: int = 48, region: ChartBox | None = None, tol: float = 1e-3,
                    class_tol: float = 1e-5) -> dict:
    """Sup norms of tau, umbilicity, the umbilic residuals, the integrability scalars and the
    first-variation residuals over ``region`` (default: the box shrunk by 15% per side)."""
    g, T, A = build_twisted(spec, n)
    F = A.frame
    region = region or spec.box.shrink(0.15)
    sel = F.grid.box_mask(region) & F.mask
    res = el_residuals(F, "umbilic", region=F.grid.box_mask(region))
    h = F.h
    umb = np.max(np.abs(np.stack([h[0, 0] - F.H, h[1, 1] - F.H, 0.5 * (h[0, 1] + h[1, 0])])), axis=0)
    lie_TN_B = F.inner(F.lie_TN, F.B)
    lie_BT_N = F.inner(F.lie_BT, F.N)

    def sup(a):
        return float(np.max(np.abs(a[sel]))) if np.any(sel) else 0.0

    cls = classify(A, class_tol=class_tol, region=F.grid.box_mask(region))
    norms = {
        "tau": sup(F.tau),
        "umbilicity": sup(umb),
        "u1": res.sup["u1"],
        "u2": res.sup["u2"],
        "integrability_TN": sup(lie_TN_B),
        "integrability_BT": sup(lie_BT_N),
    }
    derived = {"r1": res.sup["r1"], "r2": res.sup["r2"], "cN": res.sup["cN"], "cB": res.sup["cB"]}
    passed = all(v <= tol for v in norms.values())
    return {
        "grid": n,
        "region": {"lo": list(region.lo), "hi": list(region.hi)},
        "tol": tol,
        "coverage": F.coverage,
        "norms": norms,
        "derived_el": derived,
        "class": cls.as_dict(),
        "C5plus12_compatible": cls.residual_C5plus12 <= class_tol,
        "pass": bool(passed),
        "info": {k: v for k, v in spec.info.items()},
    }
