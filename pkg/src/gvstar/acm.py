"""Almost contact metric structures built from (g, T): phi, omega, nabla phi and the
Chinea-Gonzalez class tests available in dimension three."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chart import Grid
from .geometry import FrenetData, cross, frenet, inner, lower

__all__ = ["AcmStructure", "ClassReport", "build_acm", "phi_matrix", "phi_from_basis", "nabla_phi", "classify"]

_EPS = np.zeros((3, 3, 3))
_EPS[0, 1, 2] = _EPS[1, 2, 0] = _EPS[2, 0, 1] = 1.0
_EPS[0, 2, 1] = _EPS[2, 1, 0] = _EPS[1, 0, 2] = -1.0


def phi_matrix(g, sqrt_det, T, orientation=1):
    """phi^i_j = o / sqrt(det g) * eps^{ikl} T_k g_lj, i.e. phi X = T x X."""
    Tl = lower(g, T)
    return orientation * np.einsum("ikl,k...,lj...->ij...", _EPS, Tl, g) / sqrt_det


def phi_from_basis(g, T, E1, orientation=1):
    """phi built from an explicit orthonormal completion (T, E1, E2) of T.

    ``E1`` is any vector field transverse to T; it is projected and normalised
    first.  Used to check that the rotation does not depend on the basis.
    """
    sqrt_det = np.sqrt(np.linalg.det(np.moveaxis(g, (0, 1), (-2, -1))))
    E1 = E1 - inner(g, E1, T) * T
    E1 = E1 / np.sqrt(inner(g, E1, E1))
    E2 = cross(g, sqrt_det, T, E1, orientation)
    E1l, E2l = lower(g, E1), lower(g, E2)
    # phi E1 = E2, phi E2 = -E1, phi T = 0
    return np.einsum("i...,j...->ij...", E2, E1l) - np.einsum("i...,j...->ij...", E1, E2l)


def _phi_partials(F: FrenetData):
    """d_a phi^i_j by the product rule from exact first derivatives of g and T."""
    o = F.orientation
    g, dg, T, dT = F.g, F.dg, F.T, F.dT
    inv_sqrt = 1.0 / F.sqrt_det
    dlogdet = np.einsum("mn...,amn...->a...", F.ginv, dg)
    Tl = lower(g, T)
    dTl = np.einsum("akm...,m...->ak...", dg, T) + np.einsum("km...,am...->ak...", g, dT)
    base = np.einsum("ikl,k...,lj...->ij...", _EPS, Tl, g)
    d_base = np.einsum("ikl,ak...,lj...->aij...", _EPS, dTl, g) + np.einsum("ikl,k...,alj...->aij...", _EPS, Tl, dg)
    return o * inv_sqrt * (d_base - 0.5 * dlogdet[:, None, None] * base[None])


@dataclass
class AcmStructure:
    frame: FrenetData
    omega: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray

    @property
    def grid(self) -> Grid:
        return self.frame.grid

    @property
    def g(self):
        return self.frame.g

    @property
    def T(self):
        return self.frame.T

    def apply_phi(self, X):
        return np.einsum("ij...,j...->i...", self.phi, X)

    def omega_of(self, X):
        return np.einsum("i...,i...->...", self.omega, X)

    @property
    def nabla_phi_tensor(self) -> np.ndarray:
        """(nabla_a phi)^i_j."""
        gam = self.frame.gamma
        return (
            self.dphi
            + np.einsum("iab...,bj...->aij...", gam, self.phi)
            - np.einsum("baj...,ib...->aij...", gam, self.phi)
        )

    @property
    def d_omega(self) -> np.ndarray:
        """(d omega)_ij = d_i omega_j - d_j omega_i, exact from the jets of g and T."""
        F = self.frame
        dom = np.einsum("ijm...,m...->ij...", F.dg, F.T) + np.einsum("jm...,im...->ij...", F.g, F.dT)
        return dom - np.swapaxes(dom, 0, 1)

    def identity_residuals(self) -> dict[str, float]:
        """Sup-norm defects of the defining identities over the grid."""
        g, T, phi, om = self.g, self.T, self.phi, self.omega
        eye = np.eye(3).reshape((3, 3) + (1,) * (phi.ndim - 2))
        phi2 = np.einsum("ik...,kj...->ij...", phi, phi)
        r_phi2 = phi2 + eye - np.einsum("i...,j...->ij...", T, om)
        # <phi X, phi Y> - <X, Y> + omega(X) omega(Y) as a bilinear form
        compat = np.einsum("kl...,ki...,lj...->ij...", g, phi, phi) - g + np.einsum("i...,j...->ij...", om, om)
        F = self.frame
        out = {
            "phi_squared": float(np.max(np.abs(r_phi2))),
            "compatibility": float(np.max(np.abs(compat))),
            "omega_T": float(np.max(np.abs(self.omega_of(T) - 1.0))),
            "omega_phi": float(np.max(np.abs(np.einsum("i...,ij...->j...", om, phi)))),
            "phi_T": float(np.max(np.abs(self.apply_phi(T)))),
        }
        if np.any(F.mask):
            m = F.mask
            out["phiN_minus_B"] = float(np.max(np.abs(self.apply_phi(F.N) - F.B)[:, m]))
            out["phiB_plus_N"] = float(np.max(np.abs(self.apply_phi(F.B) + F.N)[:, m]))
        return out


def build_acm(metric, T=None, grid: Grid | None = None, k_cut: float = 1e-8, unit_tol: float = 1e-10) -> AcmStructure:
    """Build (phi, omega, T, g).  ``metric`` may already be a :class:`FrenetData`."""
    F = metric if isinstance(metric, FrenetData) else frenet(metric, T, grid, k_cut=k_cut, unit_tol=unit_tol)
    omega = lower(F.g, F.T)
    phi = phi_matrix(F.g, F.sqrt_det, F.T, F.orientation)
    return AcmStructure(F, omega, phi, _phi_partials(F))


def nabla_phi(A: AcmStructure, X, Y):
    """(nabla_X phi) Y = nabla_X(phi Y) - phi(nabla_X Y), evaluated tensorially."""
    return np.einsum("a...,aij...,j...->i...", X, A.nabla_phi_tensor, Y)


@dataclass
class ClassReport:
    residual_C5plus12: float
    residual_C5: float
    residual_C12: float
    residual_cosymplectic: float
    residual_contact_metric: float
    beta_estimate: float
    beta_stddev: float
    verdict: str
    class_tol: float
    beta_C5plus12_mean: float = 0.0
    beta_C5plus12_stddev: float = 0.0
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "class_tol": self.class_tol,
            "residual_cosymplectic": self.residual_cosymplectic,
            "residual_C5": self.residual_C5,
            "residual_C12": self.residual_C12,
            "residual_C5plus12": self.residual_C5plus12,
            "residual_contact_metric": self.residual_contact_metric,
            "beta_estimate": self.beta_estimate,
            "beta_stddev": self.beta_stddev,
            "beta_C5plus12_mean": self.beta_C5plus12_mean,
            "beta_C5plus12_stddev": self.beta_C5plus12_stddev,
            "notes": list(self.notes),
        }


def _frame(A: AcmStructure, sel):
    """(T, N, B) where k > k_cut, the coordinate frame elsewhere."""
    F = A.frame
    m = F.mask[sel]
    coord = np.eye(3)[:, :, None] * np.ones(m.shape)
    return [np.where(m, V[:, sel], c) for V, c in zip((F.T, F.N, F.B), coord)]


def classify(A: AcmStructure, class_tol: float = 1e-5, region: np.ndarray | None = None) -> ClassReport:
    """Evaluate the class-defining identities on all frame pairs at the sample nodes.

    ``region`` is a boolean node mask (default: every node).
    """
    F = A.frame
    sel = np.ones(F.grid.shape, dtype=bool) if region is None else region
    g = F.g[:, :, sel]
    T = F.T[:, sel]
    phi = A.phi[:, :, sel]
    om = A.omega[:, sel]
    Dphi = A.nabla_phi_tensor[:, :, :, sel]
    acc = F.accel[:, sel]
    frame = _frame(A, sel)

    def ph(X):
        return np.einsum("ij...,j...->i...", phi, X)

    def w(X):
        return np.einsum("i...,i...->...", om, X)

    def gnorm(V):
        return np.sqrt(np.maximum(inner(g, V, V), 0.0))

    phi_acc = ph(acc)
    D, M5, M12 = [], [], []
    for X in frame:
        for Y in frame:
            D.append(np.einsum("a...,aij...,j...->i...", X, Dphi, Y))
            M5.append(inner(g, ph(X), Y) * T - w(Y) * ph(X))
            M12.append(-w(X) * (inner(g, acc, ph(Y)) * T + w(Y) * phi_acc))

    def fit(target):
        num = sum(inner(g, t, m) for t, m in zip(target, M5))
        den = sum(inner(g, m, m) for m in M5)
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)

    beta5 = fit(D)
    beta512 = fit([d - m for d, m in zip(D, M12)])

    def sup(vectors):
        return float(max(np.max(gnorm(v)) for v in vectors)) if np.size(sel) and np.any(sel) else 0.0

    r_cosym = sup(D)
    r_c5 = sup([d - beta5 * m for d, m in zip(D, M5)])
    r_c12 = sup([d - m for d, m in zip(D, M12)])
    r_c512 = sup([d - m12 - beta512 * m5 for d, m12, m5 in zip(D, M12, M5)])

    dom = A.d_omega[:, :, sel]
    r_contact = 0.0
    for X in frame:
        for Y in frame:
            lhs = inner(g, X, ph(Y))
            rhs = np.einsum("ij...,i...,j...->...", dom, X, Y)
            r_contact = max(r_contact, float(np.max(np.abs(lhs - rhs))))

    b_mean, b_std = float(np.mean(beta5)), float(np.std(beta5))
    notes = [
        "beta for C5+C12 is fitted pointwise (a function); constancy is required only for C5",
    ]
    if r_cosym <= class_tol:
        verdict = "|C|"
    elif r_c5 <= class_tol and b_std <= class_tol and b_mean > 0:
        verdict = "C5"
    elif r_c12 <= class_tol:
        verdict = "C12"
    elif r_c512 <= class_tol:
        verdict = "C5+C12"
    elif r_contact <= class_tol:
        verdict = "contact-metric"
    else:
        verdict = "unclassified"
    if r_c5 <= class_tol and not (b_std <= class_tol and b_mean > 0) and verdict != "|C|":
        notes.append(f"C5-type identity holds but beta is not a positive constant (mean {b_mean:.6g}, std {b_std:.3g})")
    return ClassReport(
        residual_C5plus12=r_c512, residual_C5=r_c5, residual_C12=r_c12, residual_cosymplectic=r_cosym,
        residual_contact_metric=r_contact, beta_estimate=b_mean, beta_stddev=b_std, verdict=verdict,
        class_tol=class_tol, beta_C5plus12_mean=float(np.mean(beta512)),
        beta_C5plus12_stddev=float(np.std(beta512)), notes=notes,
    )
