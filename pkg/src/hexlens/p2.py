"""Quadratic (6-node) triangle reference element: basis and quadrature.

Node ordering: vertices ``v0 v1 v2`` then edge midpoints ``m01 m12 m20``.
Reference coordinates ``(xi, eta)`` with ``v0=(0,0), v1=(1,0), v2=(0,1)``.
Triangle quadrature weights sum to the reference area 1/2.
"""

from __future__ import annotations

import numpy as np


def shape_functions(points: np.ndarray) -> np.ndarray:
    """P2 shape functions at reference points, shape (npts, 6)."""
    pts = np.atleast_2d(points)
    xi, eta = pts[:, 0], pts[:, 1]
    lam0 = 1.0 - xi - eta
    return np.column_stack([
        lam0 * (2.0 * lam0 - 1.0),
        xi * (2.0 * xi - 1.0),
        eta * (2.0 * eta - 1.0),
        4.0 * lam0 * xi,
        4.0 * xi * eta,
        4.0 * eta * lam0,
    ])


def shape_gradients(points: np.ndarray) -> np.ndarray:
    """Reference-space gradients of the P2 basis, shape (npts, 6, 2)."""
    pts = np.atleast_2d(points)
    xi, eta = pts[:, 0], pts[:, 1]
    lam0 = 1.0 - xi - eta
    g = np.empty((len(pts), 6, 2))
    g[:, 0, 0] = 1.0 - 4.0 * lam0
    g[:, 0, 1] = 1.0 - 4.0 * lam0
    g[:, 1, 0] = 4.0 * xi - 1.0
    g[:, 1, 1] = 0.0
    g[:, 2, 0] = 0.0
    g[:, 2, 1] = 4.0 * eta - 1.0
    g[:, 3, 0] = 4.0 * (lam0 - xi)
    g[:, 3, 1] = -4.0 * xi
    g[:, 4, 0] = 4.0 * eta
    g[:, 4, 1] = 4.0 * xi
    g[:, 5, 0] = -4.0 * eta
    g[:, 5, 1] = 4.0 * (lam0 - eta)
    return g


def _expand_symmetric(groups):
    pts, wts = [], []
    for w, bary in groups:
        seen = set()
        from itertools import permutations
        for perm in permutations(bary):
            if perm in seen:
                continue
            seen.add(perm)
            pts.append((perm[1], perm[2]))   # (lam1, lam2) = (xi, eta)
            wts.append(w)
    return np.array(pts), 0.5 * np.array(wts)


# Dunavant degree-4 rule, 6 points (exact for quartic polynomials).
TRI_Q4_POINTS, TRI_Q4_WEIGHTS = _expand_symmetric([
    (0.223381589678011, (0.108103018168070, 0.445948490915965, 0.445948490915965)),
    (0.109951743655322, (0.816847572980459, 0.091576213509771, 0.091576213509771)),
])

# Dunavant degree-8 rule, 16 points (used as the refined-quadrature oracle).
TRI_Q8_POINTS, TRI_Q8_WEIGHTS = _expand_symmetric([
    (0.144315607677787, (1 / 3, 1 / 3, 1 / 3)),
    (0.095091634413925, (0.081414823414554, 0.459292588292723, 0.459292588292723)),
    (0.103217370534718, (0.658861384496480, 0.170569307751760, 0.170569307751760)),
    (0.032458497623198, (0.898905543365938, 0.050547228317031, 0.050547228317031)),
    (0.027230314174435, (0.008394777409958, 0.263112829634638, 0.728492392955404)),
])

# 3-point Gauss rule on [0, 1] (exact for quintic polynomials).
EDGE_Q_POINTS = np.array([0.5 - np.sqrt(15.0) / 10.0, 0.5, 0.5 + np.sqrt(15.0) / 10.0])
EDGE_Q_WEIGHTS = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


def edge_shape_functions(t: np.ndarray) -> np.ndarray:
    """Quadratic shape functions on a 3-node edge (ends, then midpoint)."""
    t = np.atleast_1d(t)
    return np.column_stack([(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)])


def edge_shape_derivatives(t: np.ndarray) -> np.ndarray:
    t = np.atleast_1d(t)
    return np.column_stack([4 * t - 3, 4 * t - 1, 4 - 8 * t])


def element_geometry(nodes: np.ndarray, conn: np.ndarray, ref_points: np.ndarray):
    """Isoparametric geometry data at reference points for every element.

    Parameters
    ----------
    nodes : (Nn, 2) array
    conn : (Ne, 6) int array
    ref_points : (nq, 2) reference coordinates

    Returns
    -------
    phys : (Ne, nq, 2) physical coordinates
    detj : (Ne, nq) Jacobian determinants
    grads : (Ne, nq, 6, 2) physical gradients of the P2 basis
    """
    N = shape_functions(ref_points)          # (nq, 6)
    dN = shape_gradients(ref_points)         # (nq, 6, 2)
    coords = nodes[conn]                     # (Ne, 6, 2)
    phys = np.einsum("qi,eix->eqx", N, coords)
    # jac[e, q, x, d] = d(phys_x)/d(ref_d)
    jac = np.einsum("qid,eix->eqxd", dN, coords)
    detj = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    # invT[e, q, x, d] = (J^{-T})_{xd}
    invT = np.empty_like(jac)
    invT[..., 0, 0] = jac[..., 1, 1]
    invT[..., 0, 1] = -jac[..., 1, 0]
    invT[..., 1, 0] = -jac[..., 0, 1]
    invT[..., 1, 1] = jac[..., 0, 0]
    invT = invT / detj[..., None, None]
    # physical gradient: (grad N_i)_x = sum_d (J^{-T})_{xd} dN_{id}
    grads = np.einsum("eqxd,qid->eqix", invT, dN)
    return phys, detj, grads
