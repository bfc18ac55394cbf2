"""The critical system k' = kH, H' = -H^2 - k^2/4 along T-curves: RK4 integration with
blow-up detection, first integrals, the cubic Taylor reference and the quadrature
solution s(H)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .report import csv_text

__all__ = [
    "OdeError",
    "DriftError",
    "CriticalProfile",
    "rhs",
    "integrate_critical",
    "taylor_reference",
    "first_integrals",
    "quadrature_solution",
    "blowup_quadrature",
    "invariants",
]

BLOWUP = 1e8
# drift is monitored only where |H|, |k| <= DRIFT_CAP * max(1, scale^(1/4)); past it the
# solution is inside the blow-up layer, where (H')^2 - H^4 cancels catastrophically
DRIFT_CAP = 10.0


class OdeError(ArithmeticError):
    pass


class DriftError(OdeError):
    pass


def rhs(k, H):
    return k * H, -H * H - 0.25 * k * k


def invariants(k0: float, H0: float) -> tuple[float, float]:
    """(C1, Ck) from the initial values."""
    C1 = (H0 * H0 + 0.25 * k0 * k0) ** 2 - H0**4
    Ck = k0 * k0 * H0 * H0 + k0**4 / 8.0
    return C1, Ck


def _rk4(k, H, dt):
    k1, h1 = rhs(k, H)
    k2, h2 = rhs(k + 0.5 * dt * k1, H + 0.5 * dt * h1)
    k3, h3 = rhs(k + 0.5 * dt * k2, H + 0.5 * dt * h2)
    k4, h4 = rhs(k + dt * k3, H + dt * h3)
    return k + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4), H + dt / 6 * (h1 + 2 * h2 + 2 * h3 + h4)


def _advance(k, H, dt, max_product=0.1):
    """One sample interval of length dt; substeps only inside the blow-up layer."""
    size = max(abs(k), abs(H), 1.0)
    n = max(1, math.ceil(abs(dt) * size / max_product))
    if n == 1:
        return _rk4(k, H, dt)
    sub = dt / n
    for _ in range(n):
        k, H = _rk4(k, H, sub)
        if not (abs(k) <= BLOWUP and abs(H) <= BLOWUP):
            return k, H
    return k, H


def _locate_blowup(s, k, H, direction):
    """March from a finite state with steps ~1/|H| until the threshold is crossed."""
    for _ in range(100000):
        size = max(abs(k), abs(H), 1.0)
        dt = direction * 0.01 / size
        k, H = _rk4(k, H, dt)
        s += dt
        if not (abs(k) <= BLOWUP and abs(H) <= BLOWUP):
            return s
    raise OdeError("blow-up search did not terminate")


def _march(k0, H0, s_max, step, direction):
    s_vals, k_vals, H_vals = [0.0], [k0], [H0]
    k, H = k0, H0
    n = int(round(s_max / step))
    blowup = None
    for i in range(1, n + 1):
        kn, Hn = _advance(k, H, direction * step)
        if not (abs(kn) <= BLOWUP and abs(Hn) <= BLOWUP):
            blowup = _locate_blowup(direction * (i - 1) * step, k, H, direction)
            break
        k, H = kn, Hn
        s_vals.append(direction * i * step)
        k_vals.append(k)
        H_vals.append(H)
    return s_vals, k_vals, H_vals, blowup


@dataclass
class CriticalProfile:
    s: np.ndarray
    k: np.ndarray
    H: np.ndarray
    k0: float
    H0: float
    C1: float
    Ck: float
    step: float
    blowup_s: float | None = None
    blowup_s_backward: float | None = None
    drift: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def samples(self):
        return list(zip(self.s.tolist(), self.k.tolist(), self.H.tolist()))

    def at(self, s: float) -> tuple[float, float]:
        """(k, H) at a sample abscissa (nearest node)."""
        i = int(np.argmin(np.abs(self.s - s)))
        if abs(self.s[i] - s) > 1e-9 * max(1.0, abs(s)):
            raise KeyError(f"s = {s} is not a sample of this profile")
        return float(self.k[i]), float(self.H[i])

    def to_csv(self) -> str:
        c1, ck = first_integrals(self)
        return csv_text(["s", "k", "H", "C1", "Ck"], zip(self.s, self.k, self.H, c1, ck))

    def as_dict(self) -> dict:
        return {
            "k0": self.k0,
            "H0": self.H0,
            "step": self.step,
            "s_min": float(self.s[0]),
            "s_max": float(self.s[-1]),
            "samples": int(self.s.size),
            "C1": self.C1,
            "Ck": self.Ck,
            "C1_relative_drift": self.drift,
            "blowup_s": self.blowup_s,
            "blowup_s_backward": self.blowup_s_backward,
            "notes": list(self.notes),
        }


def _drift_scale(C1, k0, H0):
    return max(abs(C1), (H0 * H0 + 0.25 * k0 * k0) ** 2, 1e-300)


def integrate_critical(k0: float, H0: float, s_max: float, step: float, drift_limit: float = 1e-8,
                       backward: bool = True) -> CriticalProfile:
    """RK4 from s = 0 forward (and backward) to +-s_max on a uniform grid of spacing ``step``.

    Halts on either side once |k| or |H| exceeds 1e8 and records where.  Raises
    :class:`DriftError` when C1 drifts by more than ``drift_limit`` relative.
    """
    if not step > 0 or not s_max > 0:
        raise ValueError("step and s_max must be positive")
    k0, H0 = float(k0), float(H0)
    sf, kf, Hf, bf = _march(k0, H0, s_max, step, +1)
    if backward:
        sb, kb, Hb, bb = _march(k0, H0, s_max, step, -1)
    else:
        sb, kb, Hb, bb = [0.0], [k0], [H0], None
    s = np.array(sb[::-1] + sf[1:])
    k = np.array(kb[::-1] + kf[1:])
    H = np.array(Hb[::-1] + Hf[1:])
    C1, Ck = invariants(k0, H0)
    prof = CriticalProfile(s, k, H, k0, H0, C1, Ck, step, bf, bb)
    c1, _ = first_integrals(prof)
    cap = DRIFT_CAP * max(1.0, _drift_scale(C1, k0, H0) ** 0.25)
    ok = (np.abs(k) <= cap) & (np.abs(H) <= cap)
    prof.drift = float(np.max(np.abs(c1[ok] - C1)) / _drift_scale(C1, k0, H0)) if np.any(ok) else 0.0
    if np.any(~ok):
        prof.notes.append(f"C1 drift monitored only where |k|, |H| <= {cap:g}")
    if prof.drift > drift_limit:
        raise DriftError(f"C1 relative drift {prof.drift:.3e} exceeds {drift_limit:g}; refine the step")
    return prof


def first_integrals(profile: CriticalProfile) -> tuple[np.ndarray, np.ndarray]:
    """(H')^2 - H^4 and (k')^2 + k^4/8 along the profile, derivatives from the right-hand side."""
    k, H = profile.k, profile.H
    dk, dH = rhs(k, H)
    return dH * dH - H**4, dk * dk + k**4 / 8.0


def taylor_reference(k0: float, H0: float, x: float) -> tuple[float, float]:
    """Cubic Taylor polynomials of (k, H) about s = 0."""
    a = H0 * H0 + 0.25 * k0 * k0
    H = H0 - a * x + H0**3 * x**2 - H0**2 * a * x**3
    k = k0 + k0 * H0 * x - (k0**3 / 8.0) * x**2 - (k0**3 * H0 / 8.0) * x**3
    return k, H


def _integrand(C1):
    return lambda h: 1.0 / math.sqrt(h**4 + C1)


def quadrature_solution(k0: float, H0: float, H_target: float) -> tuple[float, float]:
    """s at which H reaches ``H_target`` and the curvature there, from s = -int dH / sqrt(H^4 + C1).

    The curvature is 2 sqrt(-H' - H^2) with the sign of k0.
    """
    C1, _ = invariants(k0, H0)
    if C1 <= 0.0 and (min(H0, H_target) <= 0.0 <= max(H0, H_target)):
        raise OdeError("integrand is singular: C1 = 0 and H crosses 0 (the k = 0 line)")
    if C1 < 0.0:
        raise OdeError("C1 < 0 cannot occur for real initial data")
    val, _ = quad(_integrand(C1), H0, H_target, epsabs=1e-14, epsrel=1e-13, limit=200)
    s = -val
    Hp = -math.sqrt(H_target**4 + C1)
    k = math.copysign(2.0 * math.sqrt(max(-Hp - H_target**2, 0.0)), k0) if k0 != 0 else 0.0
    return s, k


def blowup_quadrature(k0: float, H0: float, direction: int = 1) -> float:
    """Finite s at which H runs to -inf (forward) or +inf (backward)."""
    C1, _ = invariants(k0, H0)
    if C1 <= 0.0:
        # k = 0: H = H0 / (1 + H0 s)
        if H0 != 0.0 and (direction > 0) == (H0 < 0):
            return -1.0 / H0
        return math.inf * (1 if direction > 0 else -1)
    if direction > 0:
        val, _ = quad(_integrand(C1), -np.inf, H0, epsabs=1e-14, epsrel=1e-13, limit=200)
        return val
    val, _ = quad(_integrand(C1), H0, np.inf, epsabs=1e-14, epsrel=1e-13, limit=200)
    return -val
