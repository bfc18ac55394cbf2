"""Metric variations that keep T unit: realisation, finite-difference first variation of
gv*, closed-form first-variation integrands and Euler-Lagrange residual suites."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import chart
from .exprlang import Jet2
from .geometry import FrenetData, GeometryError, MetricSample, VectorSample, frenet, lower

__all__ = [
    "VariationTensor",
    "random_variation",
    "PolyBump",
    "perturb",
    "gv_star_at",
    "FDResult",
    "first_variation_fd",
    "analytic_first_variation",
    "ElResiduals",
    "el_residuals",
    "residual_fields",
    "kdot_fd",
    "kdot_predicted",
    "k2_scale",
    "first_variation_integrand",
    "SUITES",
]

KINDS = {"gtop": ("NN", "NB", "BB"), "gpitchfork": ("TN", "TB")}
SUITES = {
    "full": ("r1", "r2", "r3", "r4"),
    "gtop": ("r1", "r2"),
    "gpitchfork": ("e1", "e2"),
    "umbilic": ("u1", "u2"),
    "derived": ("r1", "r2", "cN", "cB"),
}
FORMS = ("derived", "printed", "direct")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GVSTAR_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class PolyBump:
    """Quadratic polynomial in the scaled offset from ``bump.center`` times the bump."""

    bump: chart.Bump
    coeffs: tuple[float, ...]  # c0, c_x, c_y, c_z, c_xx, c_xy, c_xz, c_yy, c_yz, c_zz

    def __call__(self, points) -> Jet2:
        pts = np.asarray(points, dtype=float)
        xi = [
            Jet2.variable(pts[a], a) * (1.0 / self.bump.radius[a]) - self.bump.center[a] / self.bump.radius[a]
            for a in range(3)
        ]
        c = self.coeffs
        poly = Jet2.constant(c[0], pts.shape[1:])
        for a in range(3):
            poly = poly + xi[a] * c[1 + a]
        q = 4
        for a in range(3):
            for b in range(a, 3):
                poly = poly + xi[a] * xi[b] * c[q]
                q += 1
        return poly * self.bump(pts)


@dataclass
class VariationTensor:
    """Frame components of a symmetric variation with vanishing (T,T) component.

    ``components`` maps frame pairs ("NN", "NB", "BB" for gtop, "TN", "TB" for
    gpitchfork) to scalar fields ``points -> Jet2``.
    """

    kind: str
    components: Mapping[str, Callable]
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown variation kind {self.kind!r}")
        extra = set(self.components) - set(KINDS[self.kind])
        if extra:
            raise ValueError(f"{self.kind} variation cannot have components {sorted(extra)}")

    def jets(self, grid: chart.Grid) -> dict[str, Jet2]:
        pts = grid.points()
        zero = Jet2.constant(0.0, grid.shape)
        return {name: (self.components[name](pts) if name in self.components else zero) for name in KINDS[self.kind]}

    def sup(self, grid: chart.Grid) -> float:
        return max((float(np.max(np.abs(j.val))) for j in self.jets(grid).values()), default=0.0)

    def coordinate_tensor(self, F: FrenetData):
        """Coordinate components of gdot and their first partials, built from the t = 0 frame."""
        jets = self.jets(F.grid)
        g, dg = F.g, F.dg
        vecs = {"T": (F.T, F.dT), "N": (F.N, F.dN), "B": (F.B, F.dB)}
        flat = {}
        for name, (V, dV) in vecs.items():
            Vl = lower(g, V)
            dVl = np.einsum("aim...,m...->ai...", dg, V) + np.einsum("im...,am...->ai...", g, dV)
            flat[name] = (Vl, dVl)
        gd = np.zeros_like(g)
        dgd = np.zeros_like(dg)
        for pair, c in jets.items():
            (X, dX), (Y, dY) = flat[pair[0]], flat[pair[1]]
            # X-flat Y-flat, symmetrised without the 1/2 so that gdot(X, Y) = c for X != Y
            sym = np.einsum("i...,j...->ij...", X, Y)
            dsym = np.einsum("ai...,j...->aij...", dX, Y) + np.einsum("i...,aj...->aij...", X, dY)
            if pair[0] != pair[1]:
                sym = sym + np.swapaxes(sym, 0, 1)
                dsym = dsym + np.swapaxes(dsym, 1, 2)
            gd += c.val * sym
            dgd += c.grad[:, None, None] * sym[None] + c.val * dsym
        return gd, dgd


def random_variation(kind: str, grid: chart.Grid, rng: np.random.Generator, margin_cells: int = 3) -> VariationTensor:
    """Random quadratic-times-bump components with support clear of the boundary collar."""
    lo, hi = np.array(grid.box.lo), np.array(grid.box.hi)
    width = hi - lo
    margin = margin_cells * grid.h
    comps = {}
    for name in KINDS[kind]:
        R = np.minimum(width * rng.uniform(0.32, 0.42, size=3), 0.5 * width - margin)
        c_lo = lo + margin + R
        c_hi = hi - margin - R
        center = rng.uniform(c_lo, np.maximum(c_hi, c_lo))
        b = chart.bump(center, R, grid, margin_cells=2)
        coeffs = np.concatenate([[rng.uniform(0.5, 1.0) * rng.choice([-1, 1])], rng.uniform(-0.5, 0.5, size=9)])
        comps[name] = PolyBump(b, tuple(float(v) for v in coeffs))
    return VariationTensor(kind, comps, label=f"{kind}-random")


def _base_samples(F: FrenetData):
    return MetricSample(F.g, F.dg, F.grid), VectorSample(F.T, F.dT, F.grid)


def perturb(F: FrenetData, v: VariationTensor, t: float, tensor=None) -> MetricSample:
    """g_t = g + t gdot as a sampled metric (values and first partials)."""
    gd, dgd = tensor if tensor is not None else v.coordinate_tensor(F)
    s = MetricSample(F.g + t * gd, F.dg + t * dgd, F.grid)
    try:
        s.check_spd()
    except GeometryError as exc:
        raise GeometryError(f"g_t loses positive-definiteness at t = {t:g}") from exc
    return s


def gv_star_at(F: FrenetData, v: VariationTensor, t: float, tensor=None) -> float:
    """gv*(g_t) recomputed from scratch: frame, k, tau, h of (g_t, T)."""
    if t == 0.0:
        Ft = F
    else:
        _, Ts = _base_samples(F)
        Ft = frenet(perturb(F, v, t, tensor), Ts, F.grid, k_cut=F.k_cut, unit_tol=1e-8, orientation=F.orientation)
    integrand = np.where(Ft.mask, -Ft.k**2 * (Ft.tau + Ft.h[0, 1]), 0.0)
    return Ft.integrate(integrand)


@dataclass
class FDResult:
    value: float
    deltas: list[float]
    estimates: list[float]
    consistent: bool
    spread: float
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "deltas": list(self.deltas),
            "estimates": list(self.estimates),
            "consistent": self.consistent,
            "spread": self.spread,
            "notes": list(self.notes),
        }


def _central4(f, d):
    return (-f[2 * d] + 8 * f[d] - 8 * f[-d] + f[-2 * d]) / (12 * d)


def k2_scale(F: FrenetData) -> float:
    return F.integrate(np.where(F.mask, F.k**2, 0.0))


def first_variation_fd(F: FrenetData, v: VariationTensor, delta: float | None = None, sweep: int = 3,
                       rtol: float = 0.05) -> FDResult:
    """4th-order central difference of t -> gv*(g_t) at 0, with a delta, delta/2, delta/4 sweep.

    The sweep is consistent when the estimates agree to ``rtol`` relative, or
    to a floor of 1e-9 * sup|v| * integral(k^2) for values that vanish.
    """
    sup = v.sup(F.grid)
    if sup == 0.0:
        return FDResult(0.0, [], [], True, 0.0, ["zero variation"])
    base = 1e-3 / sup if delta is None else delta
    deltas = [base / 2**j for j in range(sweep)]
    tensor = v.coordinate_tensor(F)
    ts = sorted({s * m * d for d in deltas for m in (1, 2) for s in (1, -1)})
    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        vals = dict(zip(ts, ex.map(lambda t: gv_star_at(F, v, t, tensor), ts)))
    est = [_central4(vals, d) for d in deltas]
    floor = 1e-9 * sup * max(k2_scale(F), 1e-300)
    spread = max(est) - min(est)
    ok = spread <= rtol * abs(est[-1]) + floor
    notes = [] if ok else [f"delta sweep disagrees: estimates {est}"]
    return FDResult(est[-1], deltas, est, bool(ok), float(spread), notes)


# ---------------------------------------------------------------------------
# closed-form first variations


def _frame_scalars(F: FrenetData):
    k, tau, h = F.k, F.tau, F.h
    return k, tau, h[0, 0], h[0, 1], h[1, 0], h[1, 1]


def _pitchfork_coefficients(F: FrenetData, Tk=None):
    """Coefficients of gdot_TN and gdot_TB in -(gv*)' after integrating by parts."""
    k, tau, hNN, hNB, hBN, hBB = _frame_scalars(F)
    X = tau + hNB
    r2 = (F.T_of(k) if Tk is None else Tk) - k * hBB
    cN = 2 * k * X * hBB - 2 * F.T_of(k * X) - 2 * r2 * (tau - hBN)
    cB = -2 * k * X**2 - 2 * r2 * hNN + 2 * F.T_of(r2)
    return cN, cB


def _Tjet(F: FrenetData, c: Jet2) -> np.ndarray:
    """T(c) exactly from the jet of c."""
    return np.einsum("a...,a...->...", F.T, c.grad)


def first_variation_integrand(F: FrenetData, v: VariationTensor, form: str = "derived") -> np.ndarray:
    """Pointwise integrand f with (gv*)' = integral of f dvol (zero off U).

    ``form``:
      * ``derived``: the integrated-by-parts coefficients computed here;
      * ``printed``: the commonly quoted coefficient formulas, kept for comparison;
      * ``direct``: no integration by parts; uses k' and (tau + h_NB)' directly.
    """
    if form not in FORMS:
        raise ValueError(f"unknown form {form!r}")
    jets = v.jets(F.grid)
    k, tau, hNN, hNB, hBN, hBB = _frame_scalars(F)
    X = tau + hNB
    Tk = F.T_of(k)
    m = F.mask
    safe_k = np.where(m, k, 1.0)
    if v.kind == "gtop":
        nn, nb, bb = jets["NN"].val, jets["NB"].val, jets["BB"].val
        if form == "derived":
            f = -(k**2 * X * (bb - nn) + 2 * (k * Tk - k**2 * hBB) * nb)
        elif form == "printed":
            f = -(0.5 * k**2 * X * (bb - nn) + 2 * (k * Tk - k**2 * hBB) * nb)
        else:
            T_nb = _Tjet(F, jets["NB"])
            f = -(k**2 * X * (bb - nn) + k**2 * (hNN - hBB) * nb - k**2 * T_nb)
        return np.where(m, f, 0.0)
    tn, tb = jets["TN"].val, jets["TB"].val
    if form == "derived":
        cN, cB = _pitchfork_coefficients(F, Tk)
        f = -(cN * tn + cB * tb)
    elif form == "printed":
        S = hNN + hBB
        pN = k * (2 * tau + hNB - hBN) * S - k * X * hNN - F.T_of(k * X)
        pB = k * S**2 - F.T_of(k * S) - k * hBB * S - Tk * S + F.T_of(Tk) - k * X**2 - 0.25 * k**3
        f = -4 * (pN * tn + pB * tb)
    else:
        T_tn, T_tb = _Tjet(F, jets["TN"]), _Tjet(F, jets["TB"])
        kdot = T_tn - X * tb - hNN * tn
        Q = (tau - hBN) * tn - hBB * tb + T_tb
        Qk = np.where(m, Q / safe_k, 0.0)
        Xdot = F.T_of(Qk) + Qk * (hBB - hNN)
        f = -(2 * k * kdot * X + k**2 * Xdot)
    return np.where(m, f, 0.0)


def analytic_first_variation(F: FrenetData, v: VariationTensor, form: str = "derived") -> float:
    return F.integrate(first_variation_integrand(F, v, form))


# ---------------------------------------------------------------------------
# spot checks of the curvature variation formulas


def kdot_fd(F: FrenetData, v: VariationTensor, delta: float | None = None) -> np.ndarray:
    """Central-difference derivative of the curvature field k(g_t) at t = 0."""
    d = 1e-4 / max(v.sup(F.grid), 1e-300) if delta is None else delta
    tensor = v.coordinate_tensor(F)
    _, Ts = _base_samples(F)
    ks = []
    for t in (2 * d, d, -d, -2 * d):
        Ft = frenet(perturb(F, v, t, tensor), Ts, F.grid, k_cut=F.k_cut, unit_tol=1e-8, orientation=F.orientation)
        ks.append(Ft.k)
    return (-ks[0] + 8 * ks[1] - 8 * ks[2] + ks[3]) / (12 * d)


def kdot_predicted(F: FrenetData, v: VariationTensor) -> np.ndarray:
    jets = v.jets(F.grid)
    k, tau, hNN, hNB, _, _ = _frame_scalars(F)
    if v.kind == "gtop":
        return np.where(F.mask, -0.5 * k * jets["NN"].val, 0.0)
    tn, tb = jets["TN"], jets["TB"]
    return np.where(F.mask, _Tjet(F, tn) - (tau + hNB) * tb.val - hNN * tn.val, 0.0)


# ---------------------------------------------------------------------------
# Euler-Lagrange residuals


def residual_fields(F: FrenetData) -> dict[str, np.ndarray]:
    """All residual fields on the grid (meaningful on U only)."""
    k, tau, hNN, hNB, hBN, hBB = _frame_scalars(F)
    X = tau + hNB
    S = hNN + hBB
    H = F.H
    Tk = F.T_of(k)
    W = 2 * tau + hNB - hBN
    cN, cB = _pitchfork_coefficients(F, Tk)
    return {
        "r1": X,
        "r2": Tk - k * hBB,
        "r3": (hNB + hBN) * S,
        "r4": hNN**2 - hBB**2 - hNN * hBB - F.T_of(hNN) - 0.25 * k**2,
        "e1": k * W * S - k * X * hNN - Tk * W - k * F.T_of(X),
        "e2": k * S**2 - F.T_of(k * S) - k * S * hBB + F.T_of(Tk) - Tk * hNN - k * X**2 - 0.25 * k**3,
        "u1": Tk - k * H,
        "u2": F.T_of(H) + H**2 + 0.25 * k**2,
        "cN": cN,
        "cB": cB,
    }


@dataclass
class ElResiduals:
    suite: str
    sup: dict[str, float]
    l2: dict[str, float]
    fields: dict[str, np.ndarray]
    coverage: float
    el_tol: float
    critical: bool
    verdict: str

    def as_dict(self) -> dict:
        return {
            "suite": self.suite,
            "verdict": self.verdict,
            "critical": self.critical,
            "el_tol": self.el_tol,
            "coverage": self.coverage,
            "sup": dict(self.sup),
            "l2": dict(self.l2),
        }


def el_residuals(F: FrenetData, suite: str = "full", region: np.ndarray | None = None, el_tol: float = 1e-4) -> ElResiduals:
    """Residual fields and their sup / L2 norms over U (intersected with ``region``).

    Every suite reports all eight fields; the verdict uses the suite's own.
    """
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    fields = residual_fields(F)
    sel = F.mask if region is None else (F.mask & region)
    if not np.any(sel):
        zero = {n: 0.0 for n in fields}
        return ElResiduals(suite, zero, dict(zero), fields, F.coverage, el_tol, True, "critical (geodesic)")
    sup = {n: float(np.max(np.abs(f[sel]))) for n, f in fields.items()}
    l2 = {n: float(np.sqrt(F.integrate(np.where(sel, f**2, 0.0)))) for n, f in fields.items()}
    ok = all(sup[n] <= el_tol for n in SUITES[suite])
    return ElResiduals(suite, sup, l2, fields, F.coverage, el_tol, ok, "critical" if ok else "not critical")
