"""Quadratic FEM for the scattered-field Helmholtz problem.

Weak form on the disk domain, for one monoharmonic plane wave:

    find p_s with  a * grad(p_s) . grad(phi) - b * omega^2 * p_s * phi  dx
                 + alpha * p_s * phi  ds(outer circle)
               =  omega^2 (b - b0) p_i phi - (a - a0) grad(p_i) . grad(phi) dx

with ``alpha = a0 (jk + 1/(2 r_a))`` the first-order absorbing coefficient
and the incident wave ``p_i = exp(-j k . x)`` entering through the material
contrast only (integration by parts moves the derivative off the
discontinuous coefficients; the contrast vanishes at the boundary).  The
assembled operator is complex symmetric; solves use a sparse LU
factorisation and report the residual.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import p2
from .geometry import REGION_FOCAL
from .materials import MaterialField
from .meshing import Mesh

log = logging.getLogger("hexlens.solver")


@dataclass(frozen=True)
class DesignWave:
    """One plane-wave excitation: angular frequency and direction."""

    omega: float
    angle: float
    wave_vector: np.ndarray

    def __post_init__(self) -> None:
        if self.omega <= 0.0:
            raise ValueError("omega must be positive")
        k = np.asarray(self.wave_vector, dtype=float)
        object.__setattr__(self, "wave_vector", k)

    @property
    def wavenumber(self) -> float:
        return float(np.hypot(*self.wave_vector))

    @property
    def frequency(self) -> float:
        return self.omega / (2.0 * math.pi)


def plane_wave(frequency_hz: float, angle_rad: float, c0: float) -> DesignWave:
    omega = 2.0 * math.pi * frequency_hz
    k = omega / c0
    return DesignWave(omega=omega, angle=angle_rad,
                      wave_vector=np.array([k * math.cos(angle_rad),
                                            k * math.sin(angle_rad)]))


def incident_field(wave: DesignWave, points: np.ndarray):
    """Plane wave exp(-j k.x) and its gradient at the given points."""
    pts = np.asarray(points, dtype=float)
    phase = pts @ wave.wave_vector
    values = np.exp(-1j * phase)
    grads = (-1j * values)[..., None] * wave.wave_vector
    return values, grads


# ---------------------------------------------------------------------------
# precomputed per-mesh FEM data

@dataclass
class FemSpace:
    """Geometry-dependent assembly data, cached per mesh."""

    conn: np.ndarray
    region: np.ndarray
    n_dofs: int
    stiff_blocks: np.ndarray      # (Ne, 6, 6)
    mass_blocks: np.ndarray       # (Ne, 6, 6)
    rows: np.ndarray
    cols: np.ndarray
    boundary_matrix: sp.csc_matrix
    boundary_radius: float
    boundary_length: float
    # material-contrast subset (elements inside control cells)
    cell_elems: np.ndarray
    cell_phys: np.ndarray         # (Nc, nq, 2)
    cell_wdet: np.ndarray         # (Nc, nq)
    cell_grads: np.ndarray        # (Nc, nq, 6, 2)
    # focal quadrature
    focal_elems: np.ndarray
    focal_phys: np.ndarray
    focal_wdet: np.ndarray
    focal_area: float
    basis: np.ndarray             # (nq, 6) reference shape values
    _ops_cache: dict = field(default_factory=dict, repr=False)


def fem_space(mesh: Mesh) -> FemSpace:
    cached = mesh._cache.get("fem_space")
    if cached is not None:
        return cached

    conn = mesh.triangles
    n_dofs = mesh.n_nodes
    qp, qw = p2.TRI_Q4_POINTS, p2.TRI_Q4_WEIGHTS
    phys, detj, grads = p2.element_geometry(mesh.nodes, conn, qp)
    if detj.min() <= 0.0:
        raise ValueError("mesh has non-positive Jacobians")
    wdet = detj * qw[None, :]
    basis = p2.shape_functions(qp)

    stiff = np.einsum("eqid,eqjd,eq->eij", grads, grads, wdet, optimize=True)
    mass = np.einsum("qi,qj,eq->eij", basis, basis, wdet, optimize=True)

    rows = np.repeat(conn, 6, axis=1).ravel()
    cols = np.tile(conn, (1, 6)).ravel()

    bmat, blen, bradius = _boundary_matrix(mesh)

    inside = np.nonzero(mesh.region >= 0)[0]
    focal = np.nonzero(mesh.region == REGION_FOCAL)[0]
    space = FemSpace(
        conn=conn, region=mesh.region, n_dofs=n_dofs,
        stiff_blocks=stiff, mass_blocks=mass,
        rows=rows, cols=cols,
        boundary_matrix=bmat, boundary_radius=bradius, boundary_length=blen,
        cell_elems=inside, cell_phys=phys[inside], cell_wdet=wdet[inside],
        cell_grads=grads[inside],
        focal_elems=focal, focal_phys=phys[focal], focal_wdet=wdet[focal],
        focal_area=float(wdet[focal].sum()), basis=basis)
    mesh._cache["fem_space"] = space
    return space


def _boundary_matrix(mesh: Mesh):
    """Mass matrix of the outer boundary curve (3-node quadratic edges)."""
    edges = mesh.boundary_edges
    if len(edges) == 0:
        raise ValueError("mesh has no boundary edges")
    t = p2.EDGE_Q_POINTS
    w = p2.EDGE_Q_WEIGHTS
    N = p2.edge_shape_functions(t)          # (nq, 3)
    dN = p2.edge_shape_derivatives(t)       # (nq, 3)
    coords = mesh.nodes[edges]              # (nb, 3, 2)
    tang = np.einsum("qi,bix->bqx", dN, coords)
    jac = np.linalg.norm(tang, axis=2)      # (nb, nq)
    wj = jac * w[None, :]
    blocks = np.einsum("qi,qj,bq->bij", N, N, wj, optimize=True)
    rows = np.repeat(edges, 3, axis=1).ravel()
    cols = np.tile(edges, (1, 3)).ravel()
    mat = sp.coo_matrix((blocks.ravel(), (rows, cols)),
                        shape=(mesh.n_nodes, mesh.n_nodes)).tocsc()
    radius = float(np.max(np.hypot(*mesh.nodes[edges[0][0]])))
    # all boundary nodes share one circle; take the radius from the mesh data
    radius = float(mesh.circle_radii.max())
    return mat, float(wj.sum()), radius


def material_operators(mesh: Mesh, mat: MaterialField):
    """Global stiffness (a-weighted) and mass (b-weighted) operators."""
    space = fem_space(mesh)
    a_e, b_e = mat.element_coefficients(space.region)
    if np.any(a_e <= 0.0) or np.any(b_e <= 0.0):
        raise ValueError("non-positive material coefficient encountered")
    n = space.n_dofs
    data_a = (a_e[:, None, None] * space.stiff_blocks).ravel()
    data_b = (b_e[:, None, None] * space.mass_blocks).ravel()
    A = sp.coo_matrix((data_a, (space.rows, space.cols)), shape=(n, n)).tocsc()
    B = sp.coo_matrix((data_b, (space.rows, space.cols)), shape=(n, n)).tocsc()
    return A, B


@dataclass
class SystemMatrices:
    """Assembled operator and load for one design wave."""

    K: sp.csc_matrix
    load: np.ndarray
    wave: DesignWave
    alpha: complex
    mesh: Mesh
    material: MaterialField
    _lu: object = field(default=None, repr=False)

    def factor(self):
        if self._lu is None:
            self._lu = spla.splu(self.K)
            log.debug("factorized K: n=%d nnz=%d", self.K.shape[0], self.K.nnz)
        return self._lu

    def load_for(self, material: MaterialField) -> np.ndarray:
        """Load vector this wave would produce with different coefficients."""
        return contrast_load(self.mesh, material, self.wave)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.factor().solve(rhs)


def robin_alpha(mesh: Mesh, mat: MaterialField, wave: DesignWave) -> complex:
    space = fem_space(mesh)
    return mat.a0 * (1j * wave.wavenumber + 0.5 / space.boundary_radius)


def assemble(mesh: Mesh, mat: MaterialField, wave: DesignWave) -> SystemMatrices:
    """Assemble the complex-symmetric operator and the contrast load."""
    A, B = material_operators(mesh, mat)
    return assemble_from_operators(mesh, mat, wave, A, B)


def assemble_from_operators(mesh: Mesh, mat: MaterialField, wave: DesignWave,
                            A: sp.csc_matrix, B: sp.csc_matrix) -> SystemMatrices:
    """Build K(omega) from cached material operators (used for frequency sets)."""
    space = fem_space(mesh)
    alpha = robin_alpha(mesh, mat, wave)
    K = (A - (wave.omega ** 2) * B).astype(complex) \
        + alpha * space.boundary_matrix
    load = contrast_load(mesh, mat, wave)
    return SystemMatrices(K=K.tocsc(), load=load, wave=wave, alpha=alpha,
                          mesh=mesh, material=mat)


def contrast_load(mesh: Mesh, mat: MaterialField, wave: DesignWave) -> np.ndarray:
    """Weak-form load of the scattered formulation (zero for pure water)."""
    space = fem_space(mesh)
    f = np.zeros(space.n_dofs, dtype=complex)
    if mat.is_background or len(space.cell_elems) == 0:
        return f
    a_e, b_e = mat.element_coefficients(space.region)
    da = a_e[space.cell_elems] - mat.a0
    db = b_e[space.cell_elems] - mat.b0
    pinc, ginc = incident_field(wave, space.cell_phys)      # (Nc, nq), (Nc, nq, 2)
    w = space.cell_wdet
    # omega^2 (b - b0) p_i N_i  -  (a - a0) grad p_i . grad N_i
    term_b = np.einsum("eq,qi,eq->ei", (wave.omega ** 2) * db[:, None] * pinc,
                       space.basis, w, optimize=True)
    term_a = np.einsum("eqd,eqid,eq->ei", da[:, None, None] * ginc,
                       space.cell_grads, w, optimize=True)
    np.add.at(f, space.conn[space.cell_elems], term_b - term_a)
    return f


def boundary_data_load(mesh: Mesh, g_values) -> np.ndarray:
    """Load from inhomogeneous absorbing-boundary data g (callable on points).

    Adds the weak term  \\oint g phi ds  so manufactured problems with exact
    boundary data can be solved (used by the analytic verification path)."""
    edges = mesh.boundary_edges
    t = p2.EDGE_Q_POINTS
    w = p2.EDGE_Q_WEIGHTS
    N = p2.edge_shape_functions(t)
    dN = p2.edge_shape_derivatives(t)
    coords = mesh.nodes[edges]
    pts = np.einsum("qi,bix->bqx", N, coords)
    tang = np.einsum("qi,bix->bqx", dN, coords)
    jac = np.linalg.norm(tang, axis=2)
    g = np.asarray(g_values(pts.reshape(-1, 2))).reshape(jac.shape)
    contrib = np.einsum("bq,qi,bq->bi", g, N, jac * w[None, :], optimize=True)
    f = np.zeros(mesh.n_nodes, dtype=complex)
    np.add.at(f, edges, contrib)
    return f


def region_indicator_load(mesh: Mesh, tag: int = REGION_FOCAL) -> np.ndarray:
    """Load vector with density 1 on the tagged region: f_i = \\int_R phi_i."""
    space = fem_space(mesh)
    elems = np.nonzero(space.region == tag)[0]
    if len(elems) == 0:
        raise ValueError(f"no elements tagged {tag}")
    phys, detj, _ = p2.element_geometry(mesh.nodes, mesh.triangles[elems],
                                        p2.TRI_Q4_POINTS)
    wdet = detj * p2.TRI_Q4_WEIGHTS[None, :]
    contrib = np.einsum("eq,qi->ei", wdet, space.basis)
    f = np.zeros(space.n_dofs, dtype=complex)
    np.add.at(f, space.conn[elems], contrib)
    return f


@dataclass
class FieldSolution:
    """Nodal scattered-field coefficients for one design wave."""

    coeffs: np.ndarray
    wave: DesignWave
    residual: float

    def total_at_nodes(self, mesh: Mesh) -> np.ndarray:
        pinc, _ = incident_field(self.wave, mesh.nodes)
        return self.coeffs + pinc


def solve_scattered(sys: SystemMatrices, rhs: np.ndarray | None = None,
                    tol: float = 1e-10) -> FieldSolution:
    """Direct solve of K p = load; raises if the residual contract fails."""
    f = sys.load if rhs is None else rhs
    x = sys.solve(f)
    fn = float(np.linalg.norm(f))
    res = float(np.linalg.norm(sys.K @ x - f)) / fn if fn > 0.0 else 0.0
    log.info("solve: n=%d |f|=%.3e rel_residual=%.3e freq=%.6g angle=%.4g",
             sys.K.shape[0], fn, res, sys.wave.frequency, sys.wave.angle)
    if not np.all(np.isfinite(x)):
        raise RuntimeError("solver produced non-finite values")
    if res > tol:
        raise RuntimeError(f"solver residual {res:.3e} exceeds tolerance {tol:g}")
    return FieldSolution(coeffs=x, wave=sys.wave, residual=res)


# ---------------------------------------------------------------------------
# focal-region functionals

def focal_total_at_quadrature(sol: FieldSolution, mesh: Mesh) -> np.ndarray:
    """Total pressure (incident + scattered) at focal quadrature points."""
    space = fem_space(mesh)
    if len(space.focal_elems) == 0:
        raise ValueError("mesh has no focal region")
    ps = np.einsum("qi,ei->eq", space.basis,
                   sol.coeffs[space.conn[space.focal_elems]])
    pinc, _ = incident_field(sol.wave, space.focal_phys)
    return ps + pinc


def focal_mean(sol: FieldSolution, mesh: Mesh) -> complex:
    """Focal-disk average of the total pressure (hydrophone surrogate)."""
    space = fem_space(mesh)
    total = focal_total_at_quadrature(sol, mesh)
    return complex((total * space.focal_wdet).sum() / space.focal_area)


def evaluate_solution(sol: FieldSolution, mesh: Mesh,
                      points: np.ndarray) -> np.ndarray:
    """Scattered field at arbitrary points (element search by quadrature cell).

    Intended for diagnostics and exports, not inner loops."""
    from scipy.spatial import cKDTree
    pts = np.atleast_2d(points)
    verts = mesh.nodes[mesh.triangles[:, :3]]
    centroids = verts.mean(axis=1)
    tree = cKDTree(centroids)
    _, cand = tree.query(pts, k=min(8, len(centroids)))
    out = np.empty(len(pts), dtype=complex)
    for n, p in enumerate(pts):
        val = None
        for e in np.atleast_1d(cand[n]):
            v = verts[e]
            T = np.column_stack([v[1] - v[0], v[2] - v[0]])
            try:
                lam = np.linalg.solve(T, p - v[0])
            except np.linalg.LinAlgError:
                continue
            if lam.min() >= -1e-9 and lam.sum() <= 1.0 + 1e-9:
                N = p2.shape_functions(np.array([lam]))[0]
                val = complex(N @ sol.coeffs[mesh.triangles[e]])
                break
        if val is None:
            e = int(np.atleast_1d(cand[n])[0])
            v = verts[e]
            T = np.column_stack([v[1] - v[0], v[2] - v[0]])
            lam = np.linalg.solve(T, p - v[0])
            N = p2.shape_functions(np.array([lam]))[0]
            val = complex(N @ sol.coeffs[mesh.triangles[e]])
        out[n] = val
    return out


def save_field(sol: FieldSolution, mesh: Mesh, path) -> None:
    """CSV export: node id, x, y, Re p_s, Im p_s."""
    with open(path, "w") as f:
        f.write("node,x,y,re_ps,im_ps\n")
        for n, (x, y) in enumerate(mesh.nodes):
            c = sol.coeffs[n]
            f.write(f"{n},{float(x)!r},{float(y)!r},{c.real!r},{c.imag!r}\n")
