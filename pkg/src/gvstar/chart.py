"""Coordinate boxes, sampling grids, 4th-order stencils and Simpson quadrature.

Fields on a grid are plain numpy arrays whose trailing three axes are the grid
axes; leading axes (if any) index tensor components.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exprlang import Jet2

__all__ = [
    "ChartError",
    "ChartBox",
    "GridSpec",
    "Grid",
    "partial",
    "gradient",
    "directional_derivative",
    "integrate",
    "simpson_weights",
    "Bump",
    "bump",
]


class ChartError(ValueError):
    pass


@dataclass(frozen=True)
class ChartBox:
    """Axis-aligned coordinate box with an orientation for the ordered frame."""

    coord_names: tuple[str, str, str]
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    orientation: int = 1

    def __post_init__(self):
        object.__setattr__(self, "coord_names", tuple(self.coord_names))
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.coord_names) != 3 or len(set(self.coord_names)) != 3:
            raise ChartError(f"need three distinct coordinate names, got {self.coord_names}")
        if len(self.lo) != 3 or len(self.hi) != 3:
            raise ChartError("lo and hi need three entries")
        for a, b in zip(self.lo, self.hi):
            if not a < b:
                raise ChartError(f"empty box extent [{a}, {b}]")
        if self.orientation not in (1, -1):
            raise ChartError("orientation must be +1 or -1")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lo) + np.array(self.hi))

    @property
    def widths(self) -> np.ndarray:
        return np.array(self.hi) - np.array(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def sub_box(self, lo, hi) -> "ChartBox":
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        for i in range(3):
            if lo[i] < self.lo[i] - 1e-12 or hi[i] > self.hi[i] + 1e-12:
                raise ChartError("sub-box is not contained in the box")
        return ChartBox(self.coord_names, lo, hi, self.orientation)

    def shrink(self, fraction: float) -> "ChartBox":
        """Box with each side trimmed by ``fraction`` of its width at both ends."""
        w = self.widths * fraction
        return ChartBox(self.coord_names, np.array(self.lo) + w, np.array(self.hi) - w, self.orientation)


@dataclass(frozen=True)
class GridSpec:
    """Number of intervals per axis; the grid has ``n[i] + 1`` nodes on axis ``i``."""

    n: tuple[int, int, int]

    def __post_init__(self):
        n = tuple(int(v) for v in (self.n if np.ndim(self.n) else (self.n,) * 3))
        object.__setattr__(self, "n", n)
        if len(n) != 3 or min(n) < 4:
            raise ChartError(f"grid needs at least 4 intervals per axis, got {n}")

    @classmethod
    def uniform(cls, n: int) -> "GridSpec":
        return cls((n, n, n))


@dataclass(frozen=True)
class Grid:
    box: ChartBox
    spec: GridSpec
    axes: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        axes = tuple(
            np.linspace(self.box.lo[i], self.box.hi[i], self.spec.n[i] + 1) for i in range(3)
        )
        object.__setattr__(self, "axes", axes)

    @classmethod
    def make(cls, box: ChartBox, n) -> "Grid":
        return cls(box, n if isinstance(n, GridSpec) else GridSpec(n if np.ndim(n) else (n, n, n)))

    @property
    def h(self) -> np.ndarray:
        return self.box.widths / np.array(self.spec.n)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(n + 1 for n in self.spec.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(3,) + shape``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"))

    def collar_mask(self, cells: int = 2) -> np.ndarray:
        """True on nodes within ``cells`` nodes of the boundary."""
        m = np.zeros(self.shape, dtype=bool)
        for ax in range(3):
            sl = [slice(None)] * 3
            sl[ax] = slice(0, cells)
            m[tuple(sl)] = True
            sl[ax] = slice(self.shape[ax] - cells, None)
            m[tuple(sl)] = True
        return m

    def box_mask(self, box: ChartBox, tol: float = 1e-12) -> np.ndarray:
        """True on nodes inside ``box`` (closed)."""
        masks = [
            (self.axes[i] >= box.lo[i] - tol) & (self.axes[i] <= box.hi[i] + tol) for i in range(3)
        ]
        return masks[0][:, None, None] & masks[1][None, :, None] & masks[2][None, None, :]


# ---------------------------------------------------------------------------
# Stencils

_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
# one-sided 5-point, 4th order, for nodes 0 and 1
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def partial(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    """4th-order derivative of ``f`` along grid ``axis`` (0..2 of the trailing three).

    Interior nodes use the 5-point central stencil; the two nodes nearest each
    end use one-sided 5-point stencils of the same order.
    """
    f = np.asarray(f, dtype=float)
    ax = f.ndim - 3 + axis
    n = f.shape[ax]
    if n < 5:
        raise ChartError(f"grid too coarse for the 5-point stencil (axis {axis} has {n} nodes)")
    g = np.moveaxis(f, ax, 0)
    out = np.empty_like(g)
    out[2:-2] = (g[:-4] - 8.0 * g[1:-3] + 8.0 * g[3:-1] - g[4:]) / 12.0
    head = g[:5]
    tail = g[-5:][::-1]
    out[0] = np.tensordot(_EDGE0, head, axes=1)
    out[1] = np.tensordot(_EDGE1, head, axes=1)
    out[-1] = -np.tensordot(_EDGE0, tail, axes=1)
    out[-2] = -np.tensordot(_EDGE1, tail, axes=1)
    return np.moveaxis(out, 0, ax) / h


def gradient(f: np.ndarray, grid: Grid) -> np.ndarray:
    """All three partials, stacked on a new leading axis: ``out[a] = d_a f``."""
    return np.stack([partial(f, a, grid.h[a]) for a in range(3)])


def directional_derivative(f: np.ndarray, V: np.ndarray, grid: Grid) -> np.ndarray:
    """``V^i d_i f`` with 4th-order stencils.  ``f`` may carry leading component axes."""
    V = np.asarray(V)
    out = None
    for a in range(3):
        if not np.any(V[a]):
            continue
        term = V[a] * partial(f, a, grid.h[a])
        out = term if out is None else out + term
    return np.zeros(np.shape(f)) if out is None else out


# ---------------------------------------------------------------------------
# Quadrature


def simpson_weights(n: int, h: float) -> np.ndarray:
    if n % 2:
        raise ChartError(f"composite Simpson needs an even number of intervals, got {n}")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def integrate(f: np.ndarray, sqrt_det_g: np.ndarray | float, grid: Grid, mask: np.ndarray | None = None) -> float:
    """Composite Simpson approximation of the integral of f * sqrt(det g) over the grid box.

    ``sqrt_det_g`` is the sampled volume density; a ``mask`` zeroes excluded nodes.
    """
    dens = np.broadcast_to(np.asarray(sqrt_det_g, dtype=float), grid.shape)
    if np.any(~(dens > 0)):
        raise ChartError("non-positive volume density (det g <= 0) at a grid node")
    f = np.asarray(f, dtype=float)
    integrand = f * dens
    if mask is not None:
        integrand = np.where(mask, integrand, 0.0)
    w = [simpson_weights(grid.spec.n[i], grid.h[i]) for i in range(3)]
    return float(np.einsum("ijk,i,j,k->", integrand, *w))


# ---------------------------------------------------------------------------
# Bump functions


BUMP_POWER = 8


def _bump1d(r: np.ndarray):
    """(1 - r^2)^8 with first and second derivatives; zero for |r| >= 1.

    C^7 across the support edge, which is smoother than 4th-order stencils and
    Simpson need, while its derivatives stay small enough to resolve on modest
    grids (the C-infinity exp(-1/(1 - r^2)) profile is not).
    """
    p = BUMP_POWER
    inside = np.abs(r) < 1.0
    rr = np.where(inside, r, 0.0)
    q = 1.0 - rr * rr
    f = q**p
    f1 = -2.0 * p * rr * q ** (p - 1)
    f2 = -2.0 * p * q ** (p - 1) + 4.0 * p * (p - 1) * rr * rr * q ** (p - 2)
    return np.where(inside, f, 0.0), np.where(inside, f1, 0.0), np.where(inside, f2, 0.0)


@dataclass(frozen=True)
class Bump:
    """Tensor-product bump centred at ``center`` with per-axis ``radius``."""

    center: tuple[float, float, float]
    radius: tuple[float, float, float]

    def __call__(self, points) -> Jet2:
        pts = np.asarray(points, dtype=float)
        c = np.asarray(self.center, dtype=float)
        R = np.asarray(self.radius, dtype=float)
        out = None
        for a in range(3):
            f, f1, f2 = _bump1d((pts[a] - c[a]) / R[a])
            j = Jet2.variable(pts[a], a).compose(f, f1 / R[a], f2 / R[a] ** 2)
            out = j if out is None else out * j
        return out

    def support(self, box: ChartBox) -> ChartBox:
        c, R = np.asarray(self.center), np.asarray(self.radius)
        return ChartBox(box.coord_names, c - R, c + R, box.orientation)


def bump(center: Sequence[float], radius: Sequence[float], grid: Grid | None = None, margin_cells: int = 2) -> Bump:
    """Build a bump, checking that its support keeps ``margin_cells`` cells clear of the boundary."""
    c = np.asarray(center, dtype=float)
    R = np.asarray(radius, dtype=float)
    if np.any(R <= 0):
        raise ChartError("bump radii must be positive")
    if grid is not None:
        margin = margin_cells * grid.h
        lo, hi = np.array(grid.box.lo) + margin, np.array(grid.box.hi) - margin
        if np.any(c - R < lo - 1e-12) or np.any(c + R > hi + 1e-12):
            raise ChartError("bump support touches the boundary collar of the box")
    return Bump(tuple(c), tuple(R))
