"""Independent analytic references used to verify the solver and gradients.

Nothing here touches the FEM assembly: partial-wave series for the
penetrable circular cylinder, closed-form disk averages, the free field of
a uniform disk source, and a central finite-difference directional
derivative checker.  Time convention ``exp(+j omega t)``: outgoing waves are
Hankel functions of the second kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import h2vp, hankel2, j1, jv, jvp


@dataclass(frozen=True)
class CylinderSpec:
    """Penetrable circular cylinder in a host fluid."""

    radius: float
    rho_in: float
    kappa_in: float
    rho_out: float
    kappa_out: float
    truncation: int = 0          # 0 = automatic

    def __post_init__(self) -> None:
        for name in ("radius", "rho_in", "kappa_in", "rho_out", "kappa_out"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    def order_for(self, k_out: float) -> int:
        auto = int(math.ceil(k_out * self.radius)) + 10
        return max(self.truncation, auto)


def _series_coefficients(spec: CylinderSpec, omega: float, order: int):
    """Modal scattering (A_m) and interior (B_m) coefficients.

    Continuity of pressure and of normal velocity a * dp/dr across r = R,
    with incident modal amplitude (-j)^m.
    """
    c_out = math.sqrt(spec.kappa_out / spec.rho_out)
    c_in = math.sqrt(spec.kappa_in / spec.rho_in)
    k0 = omega / c_out
    k1 = omega / c_in
    x0 = k0 * spec.radius
    x1 = k1 * spec.radius
    # velocity-matching weight (a_in k1) / (a_out k0)
    z = (spec.rho_out / spec.rho_in) * (k1 / k0)

    m = np.arange(-order, order + 1)
    cm = (-1j) ** m
    J0 = jv(m, x0)
    J0p = jvp(m, x0)
    H0 = hankel2(m, x0)
    H0p = h2vp(m, x0)
    J1 = jv(m, x1)
    J1p = jvp(m, x1)

    denom = J1 * H0p - z * J1p * H0
    A = cm * (z * J1p * J0 - J1 * J0p) / denom
    B = (cm * J0 + A * H0) / J1
    return m, A, B, k0, k1


def cylinder_scattering(spec: CylinderSpec, omega: float, angle: float,
                        points: np.ndarray, rtol: float = 1e-10):
    """Scattered field of a plane wave exp(-j k.x) hitting the cylinder.

    Returns the complex scattered pressure at each point (total minus
    incident inside the cylinder).  Raises if the series has not converged
    at the automatic/selected truncation order.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    order = spec.order_for(omega / math.sqrt(spec.kappa_out / spec.rho_out))
    m, A, B, k0, k1 = _series_coefficients(spec, omega, order)

    r = np.hypot(pts[:, 0], pts[:, 1])
    phi = np.arctan2(pts[:, 1], pts[:, 0]) - angle
    outside = r >= spec.radius

    e_m = np.exp(1j * np.outer(phi, m))       # (npts, nm)
    out = np.zeros(len(pts), dtype=complex)

    if outside.any():
        H = hankel2(m[None, :], k0 * r[outside, None])
        terms = A[None, :] * H * e_m[outside]
        out[outside] = terms.sum(axis=1)
        tail = np.abs(terms[:, [0, -1]]).max()
        if tail > rtol * max(np.abs(out[outside]).max(), 1e-300):
            raise RuntimeError(
                f"cylinder series not converged at order {order} (exterior)")
    inside = ~outside
    if inside.any():
        cm = (-1j) ** m
        Jn = jv(m[None, :], k1 * r[inside, None])
        total = (B[None, :] * Jn * e_m[inside]).sum(axis=1)
        Ji = jv(m[None, :], k0 * r[inside, None])
        incident = (cm[None, :] * Ji * e_m[inside]).sum(axis=1)
        out[inside] = total - incident
        terms_tail = np.abs(B[[0, -1]]).max() * np.abs(
            jv(np.array([m[0], m[-1]]), k1 * r[inside].max())).max()
        if terms_tail > rtol * max(np.abs(total).max(), 1e-300):
            raise RuntimeError(
                f"cylinder series not converged at order {order} (interior)")
    return out


def cylinder_scattering_gradient(spec: CylinderSpec, omega: float, angle: float,
                                 points: np.ndarray):
    """Gradient of the scattered field at exterior points (series, exact).

    Used to build exact absorbing-boundary data for convergence studies."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    order = spec.order_for(omega / math.sqrt(spec.kappa_out / spec.rho_out))
    m, A, _, k0, _ = _series_coefficients(spec, omega, order)
    r = np.hypot(pts[:, 0], pts[:, 1])
    if np.any(r < spec.radius):
        raise ValueError("gradient series implemented for exterior points only")
    phi = np.arctan2(pts[:, 1], pts[:, 0]) - angle
    e_m = np.exp(1j * np.outer(phi, m))
    H = hankel2(m[None, :], k0 * r[:, None])
    Hp = h2vp(m[None, :], k0 * r[:, None])
    dpdr = (A[None, :] * Hp * e_m).sum(axis=1) * k0
    dpdphi = (A[None, :] * H * (1j * m)[None, :] * e_m).sum(axis=1)
    cosp = pts[:, 0] / r
    sinp = pts[:, 1] / r
    gx = dpdr * cosp - dpdphi * sinp / r
    gy = dpdr * sinp + dpdphi * cosp / r
    return np.column_stack([gx, gy])


def disk_average_plane_wave(k: float, r: float) -> float:
    """Average of exp(-j k.x) over a disk of radius r: 2 J1(kr) / (kr)."""
    if k <= 0.0 or r <= 0.0:
        raise ValueError("k and r must be positive")
    x = k * r
    return float(2.0 * j1(x) / x)


def disk_source_free_field(k: float, source_radius: float, a0: float,
                           points: np.ndarray) -> np.ndarray:
    """Free-space outgoing field of a uniform unit disk source.

    Solves ``-a0 (lap + k^2) p = chi_disk`` in the whole plane; for
    ``r >= source_radius`` the solution is

        p(r) = (j / (4 a0)) * (2 pi s J1(k s) / k) * H0^2(k r).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.hypot(pts[:, 0], pts[:, 1])
    if np.any(r < source_radius):
        raise ValueError("free-field formula valid outside the source disk")
    amp = (1j / (4.0 * a0)) * (2.0 * math.pi * source_radius
                               * j1(k * source_radius) / k)
    return amp * hankel2(0, k * r)


# ---------------------------------------------------------------------------
# finite-difference gradient verification

@dataclass
class FdDirectionReport:
    direction: int
    analytic: float
    best_fd: float
    best_step: float
    best_rel_error: float
    sweep: list          # (step, fd, rel_error) tuples


def fd_gradient_check(cost, gradient_dot, x0: np.ndarray,
                      directions: np.ndarray,
                      steps=(1e-4, 1e-5, 1e-6, 1e-7)) -> list[FdDirectionReport]:
    """Central-difference check of directional derivatives.

    Parameters
    ----------
    cost : callable x -> float
    gradient_dot : callable (x, d) -> float, the analytic directional
        derivative at x along d (typically g(x) . d)
    x0 : base point
    directions : (k, n) array of directions
    steps : step sweep; the best (smallest relative error) step is reported
    """
    reports = []
    for idx, d in enumerate(np.atleast_2d(directions)):
        exact = float(gradient_dot(x0, d))
        sweep = []
        best = None
        for eps in steps:
            fd = (cost(x0 + eps * d) - cost(x0 - eps * d)) / (2.0 * eps)
            denom = max(abs(exact), abs(fd), 1e-300)
            rel = abs(fd - exact) / denom
            sweep.append((eps, fd, rel))
            if best is None or rel < best[2]:
                best = (eps, fd, rel)
        reports.append(FdDirectionReport(
            direction=idx, analytic=exact, best_fd=best[1],
            best_step=best[0], best_rel_error=best[2], sweep=sweep))
    return reports
