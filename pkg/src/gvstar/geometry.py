"""Pointwise Riemannian machinery: Christoffel symbols, covariant derivatives and the
Frenet apparatus of a unit vector field together with the second fundamental form of
its orthogonal plane field.

Index conventions (all arrays carry sample axes after the component axes):

* ``g[i, j]`` metric components, ``dg[a, i, j] = d_a g_ij``;
* ``gamma[c, a, b] = Gamma^c_ab``;
* ``dV[a, c] = d_a V^c`` and ``DV[a, c] = (nabla_a V)^c``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import chart
from .chart import Grid
from .exprlang import Expr, Jet2, parse

__all__ = [
    "GeometryError",
    "NonUnitFieldError",
    "MetricField",
    "MetricSample",
    "VectorField",
    "VectorSample",
    "METRIC_KEYS",
    "det3",
    "inv3",
    "inner",
    "cross",
    "christoffel",
    "christoffel_at",
    "covariant_jacobian",
    "covariant_derivative",
    "lie_bracket",
    "FrenetData",
    "frenet",
    "frenet_at",
]

METRIC_KEYS = ("g11", "g12", "g13", "g22", "g23", "g33")
_SYM = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))

ScalarField = Callable[[np.ndarray], Jet2]


class GeometryError(ArithmeticError):
    """Numerical validity failure (singular or indefinite metric, NaN)."""


class NonUnitFieldError(GeometryError):
    pass


# ---------------------------------------------------------------------------
# Fields


@dataclass
class MetricSample:
    g: np.ndarray
    dg: np.ndarray
    grid: Grid | None = None

    def __post_init__(self):
        if not (np.all(np.isfinite(self.g)) and np.all(np.isfinite(self.dg))):
            raise GeometryError("metric sample contains non-finite values")

    @property
    def det(self) -> np.ndarray:
        return det3(self.g)

    @property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(self.det)

    def check_spd(self):
        g = self.g
        m1 = g[0, 0]
        m2 = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
        m3 = det3(g)
        if not (np.all(m1 > 0) and np.all(m2 > 0) and np.all(m3 > 0)):
            raise GeometryError("metric is not positive-definite at some sample point")
        return self


class MetricField:
    """Symmetric 3x3 metric given by six scalar component fields.

    Components are callables ``points -> Jet2`` (parsed expressions qualify) in
    the order g11, g12, g13, g22, g23, g33.
    """

    def __init__(self, components: Sequence[ScalarField], sources: Mapping[str, str] | None = None):
        if len(components) != 6:
            raise ValueError("a metric needs six components")
        self.components = tuple(components)
        self.sources = dict(sources) if sources else None

    @classmethod
    def from_exprs(cls, sources: Mapping[str, str] | Sequence[str], coords, constants=None) -> "MetricField":
        if not isinstance(sources, Mapping):
            sources = dict(zip(METRIC_KEYS, sources))
        exprs = [parse(str(sources[k]), coords, constants) for k in METRIC_KEYS]
        return cls(exprs, {k: str(sources[k]) for k in METRIC_KEYS})

    @classmethod
    def diagonal(cls, d1, d2, d3, coords, constants=None) -> "MetricField":
        return cls.from_exprs({"g11": d1, "g12": "0", "g13": "0", "g22": d2, "g23": "0", "g33": d3}, coords, constants)

    def jets(self, points) -> list[Jet2]:
        return [c(points) for c in self.components]

    def at(self, points, hessian: bool = False):
        """Sample at arbitrary points (shape ``(3, ...)``)."""
        jets = self.jets(points)
        shape = jets[0].shape
        g = np.empty((3, 3) + shape)
        dg = np.empty((3, 3, 3) + shape)
        ddg = np.empty((3, 3, 3, 3) + shape) if hessian else None
        for q, (i, j) in enumerate(_SYM):
            g[i, j] = g[j, i] = jets[q].val
            dg[:, i, j] = dg[:, j, i] = jets[q].grad
            if hessian:
                H = jets[q].hessian
                ddg[:, :, i, j] = ddg[:, :, j, i] = H
        sample = MetricSample(g, dg)
        return (sample, ddg) if hessian else sample

    def sample(self, grid: Grid) -> MetricSample:
        s = self.at(grid.points())
        s.grid = grid
        return s


class SampledMetric:
    """Metric known only through grid samples (values and first derivatives)."""

    def __init__(self, sample: MetricSample):
        if sample.grid is None:
            raise ValueError("sampled metric needs a grid")
        self._sample = sample

    @property
    def grid(self) -> Grid:
        return self._sample.grid

    def sample(self, grid: Grid) -> MetricSample:
        if grid != self._sample.grid:
            raise ValueError("sampled metric requested on a different grid")
        return self._sample


@dataclass
class VectorSample:
    V: np.ndarray
    dV: np.ndarray
    grid: Grid | None = None


class VectorField:
    """Vector field from three scalar component fields (coordinate components)."""

    def __init__(self, components: Sequence[ScalarField], sources: Sequence[str] | None = None):
        if len(components) != 3:
            raise ValueError("a vector field needs three components")
        self.components = tuple(components)
        self.sources = list(sources) if sources else None

    @classmethod
    def from_exprs(cls, sources: Sequence[str], coords, constants=None) -> "VectorField":
        return cls([parse(str(s), coords, constants) for s in sources], [str(s) for s in sources])

    def at(self, points, hessian: bool = False):
        jets = [c(points) for c in self.components]
        V = np.stack([j.val for j in jets])
        dV = np.stack([j.grad for j in jets], axis=1)
        s = VectorSample(V, dV)
        if hessian:
            return s, np.stack([j.hessian for j in jets], axis=2)
        return s

    def sample(self, grid: Grid) -> VectorSample:
        s = self.at(grid.points())
        s.grid = grid
        return s


# ---------------------------------------------------------------------------
# Pointwise algebra


def det3(m: np.ndarray) -> np.ndarray:
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def inv3(m: np.ndarray, det: np.ndarray | None = None) -> np.ndarray:
    d = det3(m) if det is None else det
    if np.any(d == 0) or not np.all(np.isfinite(d)):
        raise GeometryError("singular metric")
    c = np.empty_like(m)
    c[0, 0] = m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]
    c[0, 1] = m[0, 2] * m[2, 1] - m[0, 1] * m[2, 2]
    c[0, 2] = m[0, 1] * m[1, 2] - m[0, 2] * m[1, 1]
    c[1, 0] = m[1, 2] * m[2, 0] - m[1, 0] * m[2, 2]
    c[1, 1] = m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
    c[1, 2] = m[0, 2] * m[1, 0] - m[0, 0] * m[1, 2]
    c[2, 0] = m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]
    c[2, 1] = m[0, 1] * m[2, 0] - m[0, 0] * m[2, 1]
    c[2, 2] = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return c / d


def lower(g, V):
    return np.einsum("ij...,j...->i...", g, V)


def inner(g, U, V):
    return np.einsum("ij...,i...,j...->...", g, U, V)


def cross(g, sqrt_det, U, V, orientation: int = 1):
    """Metric cross product: the vector with lowered components vol(., U, V)."""
    Ul, Vl = lower(g, U), lower(g, V)
    c = np.stack(
        [
            Ul[1] * Vl[2] - Ul[2] * Vl[1],
            Ul[2] * Vl[0] - Ul[0] * Vl[2],
            Ul[0] * Vl[1] - Ul[1] * Vl[0],
        ]
    )
    return orientation * c / sqrt_det


def christoffel(g: np.ndarray, dg: np.ndarray, ginv: np.ndarray | None = None) -> np.ndarray:
    """Gamma^c_ab = 1/2 g^cd (d_a g_bd + d_b g_ad - d_d g_ab)."""
    if ginv is None:
        ginv = inv3(g)
    lowered = 0.5 * (dg + np.swapaxes(dg, 0, 1) - np.moveaxis(dg, 0, 2))
    # lowered[a, b, d]: d_a g_bd + d_b g_ad - d_d g_ab ... reorder to [d, a, b]
    first_kind = np.moveaxis(lowered, 2, 0)
    return np.einsum("cd...,dab...->cab...", ginv, first_kind)


def christoffel_at(metric: MetricField, p) -> np.ndarray:
    """Christoffel symbols of ``metric`` at a single point ``p``."""
    s = metric.at(np.asarray(p, dtype=float).reshape(3))
    if not np.all(det3(s.g) > 0):
        raise GeometryError("metric is not positive-definite at p")
    return christoffel(s.g, s.dg)


def covariant_jacobian(V, dV, gamma):
    """``DV[a, c] = d_a V^c + Gamma^c_ab V^b``."""
    return dV + np.einsum("cab...,b...->ac...", gamma, V)


def covariant_derivative(X, W, dW, gamma):
    """(nabla_X W)^c = X^a d_a W^c + Gamma^c_ab X^a W^b, with ``dW[a, c] = d_a W^c``."""
    return np.einsum("a...,ac...->c...", X, dW) + np.einsum("cab...,a...,b...->c...", gamma, X, W)


def lie_bracket(X, dX, Y, dY):
    """[X, Y]^c = X^a d_a Y^c - Y^a d_a X^c."""
    return np.einsum("a...,ac...->c...", X, dY) - np.einsum("a...,ac...->c...", Y, dX)


# ---------------------------------------------------------------------------
# Frenet apparatus


@dataclass
class FrenetData:
    """Frenet apparatus of ``T`` and second fundamental form of its orthogonal plane field.

    Frame vectors are zero outside ``mask`` (the set where ``k > k_cut``).
    ``h[0, 0] = h_NN``, ``h[0, 1] = h_NB``, ``h[1, 0] = h_BN``, ``h[1, 1] = h_BB``.
    """

    grid: Grid
    orientation: int
    k_cut: float
    g: np.ndarray
    dg: np.ndarray
    ginv: np.ndarray
    sqrt_det: np.ndarray
    gamma: np.ndarray
    T: np.ndarray
    dT: np.ndarray
    DT: np.ndarray
    k: np.ndarray
    mask: np.ndarray
    N: np.ndarray
    B: np.ndarray
    dN: np.ndarray
    dB: np.ndarray
    h: np.ndarray
    H: np.ndarray
    tau: np.ndarray
    Tcal: np.ndarray

    @property
    def coverage(self) -> float:
        return float(np.mean(self.mask))

    @property
    def geodesic(self) -> np.ndarray:
        return ~self.mask

    def T_of(self, f: np.ndarray) -> np.ndarray:
        """T(f) by 4th-order stencils."""
        return chart.directional_derivative(f, self.T, self.grid)

    def nabla(self, X: np.ndarray, W: np.ndarray, dW: np.ndarray | None = None) -> np.ndarray:
        if dW is None:
            dW = chart.gradient(W, self.grid)
        return covariant_derivative(X, W, dW, self.gamma)

    def inner(self, U, V):
        return inner(self.g, U, V)

    def sff(self, X, Y):
        """h(X, Y) = -<nabla_X T, Y>."""
        return -inner(self.g, np.einsum("a...,ac...->c...", X, self.DT), Y)

    @property
    def accel(self) -> np.ndarray:
        return np.einsum("a...,ac...->c...", self.T, self.DT)

    @property
    def div_T(self) -> np.ndarray:
        return np.einsum("aa...->...", self.DT)

    @property
    def lie_TN(self):
        return lie_bracket(self.T, self.dT, self.N, self.dN)

    @property
    def lie_BT(self):
        return lie_bracket(self.B, self.dB, self.T, self.dT)

    def integrate(self, f, mask=None) -> float:
        return chart.integrate(f, self.sqrt_det, self.grid, mask)


def _sample(field, grid):
    return field.sample(grid)


def frenet(
    metric,
    T,
    grid: Grid,
    k_cut: float = 1e-8,
    unit_tol: float = 1e-10,
    orientation: int | None = None,
) -> FrenetData:
    """Frenet apparatus of the unit field ``T`` on every node of ``grid``.

    ``metric`` and ``T`` are fields with a ``sample(grid)`` method, or ready
    :class:`MetricSample` / :class:`VectorSample` objects.
    """
    o = grid.box.orientation if orientation is None else orientation
    ms = metric if isinstance(metric, MetricSample) else _sample(metric, grid)
    ts = T if isinstance(T, VectorSample) else _sample(T, grid)
    ms.check_spd()
    g, dg = ms.g, ms.dg
    det = det3(g)
    ginv = inv3(g, det)
    sqrt_det = np.sqrt(det)
    gamma = christoffel(g, dg, ginv)
    Tv, dT = ts.V, ts.dV
    unit_defect = np.max(np.abs(inner(g, Tv, Tv) - 1.0))
    if not unit_defect <= unit_tol:
        raise NonUnitFieldError(f"g(T,T) deviates from 1 by {unit_defect:.3e}")
    DT = covariant_jacobian(Tv, dT, gamma)
    acc = np.einsum("a...,ac...->c...", Tv, DT)
    k = np.sqrt(np.maximum(inner(g, acc, acc), 0.0))
    if not np.all(np.isfinite(k)):
        raise GeometryError("NaN in derived derivatives of T")
    mask = k > k_cut
    safe_k = np.where(mask, k, 1.0)
    N = np.where(mask, acc / safe_k, 0.0)
    B = np.where(mask, cross(g, sqrt_det, Tv, N, o), 0.0)
    dN = chart.gradient(N, grid)
    dB = chart.gradient(B, grid)

    def sff(X, Y):
        return -inner(g, np.einsum("a...,ac...->c...", X, DT), Y)

    h = np.stack([np.stack([sff(N, N), sff(N, B)]), np.stack([sff(B, N), sff(B, B)])])
    H = 0.5 * (h[0, 0] + h[1, 1])
    nabla_T_B = covariant_derivative(Tv, B, dB, gamma)
    tau = np.where(mask, -inner(g, nabla_T_B, N), 0.0)
    Tcal = inner(g, lie_bracket(N, dN, B, dB), Tv)
    k = np.where(mask, k, 0.0)
    return FrenetData(
        grid=grid, orientation=o, k_cut=k_cut, g=g, dg=dg, ginv=ginv, sqrt_det=sqrt_det,
        gamma=gamma, T=Tv, dT=dT, DT=DT, k=k, mask=mask, N=N, B=B, dN=dN, dB=dB,
        h=h, H=H, tau=tau, Tcal=Tcal,
    )


@dataclass
class PointFrenet:
    N: np.ndarray
    B: np.ndarray
    k: float
    tau: float
    h: np.ndarray
    H: float
    Tcal: float
    geodesic: bool


def frenet_at(metric, T, p, box_names=("x1", "x2", "x3"), orientation: int = 1, step: float = 1e-3, k_cut: float = 1e-8) -> PointFrenet:
    """Frenet data at the single point ``p``.

    Quantities needing derivatives of the frame use a 5x5x5 stencil patch of
    spacing ``step`` centred on ``p``.
    """
    p = np.asarray(p, dtype=float)
    box = chart.ChartBox(tuple(box_names), p - 2 * step, p + 2 * step, orientation)
    grid = Grid.make(box, 4)
    F = frenet(metric, T, grid, k_cut=k_cut)
    c = (2, 2, 2)
    return PointFrenet(
        N=F.N[(slice(None),) + c], B=F.B[(slice(None),) + c], k=float(F.k[c]), tau=float(F.tau[c]),
        h=F.h[(slice(None), slice(None)) + c], H=float(F.H[c]), Tcal=float(F.Tcal[c]),
        geodesic=not bool(F.mask[c]),
    )
