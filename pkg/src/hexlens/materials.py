"""Cell controls, material coefficient fields and the attainable-property set.

Each cell carries a control pair ``(v, u)``: the cell density is
``rho0 * exp(v)`` and the bulk modulus ``kappa0 * exp(u)``, equivalently the
equation coefficients are modulated as ``a = a0 * exp(-v)``,
``b = b0 * exp(-u)``.  The admissible set of normalised property pairs
``(rho_hat, kappa_hat) = (e^v, e^u)`` is a union of polygons in the
``(v, u) = (log rho_hat, log kappa_hat)`` plane; controls are kept feasible
by Euclidean projection in that plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import CellGraph


@dataclass(frozen=True)
class ReferenceMedium:
    """Background fluid (water by default)."""

    rho0: float = 998.0           # kg/m^3
    kappa0: float = 2.2e9         # Pa

    def __post_init__(self) -> None:
        if self.rho0 <= 0.0 or self.kappa0 <= 0.0:
            raise ValueError("reference density and bulk modulus must be positive")

    @property
    def c0(self) -> float:
        """Sound speed sqrt(kappa0 / rho0)."""
        return math.sqrt(self.kappa0 / self.rho0)

    @property
    def a0(self) -> float:
        return 1.0 / self.rho0

    @property
    def b0(self) -> float:
        return 1.0 / self.kappa0


@dataclass
class ControlState:
    """Per-cell log-property controls.

    ``log_density[j] = log(rho_j / rho0)`` and
    ``log_modulus[j] = log(kappa_j / kappa0)``.
    """

    log_density: np.ndarray
    log_modulus: np.ndarray

    def __post_init__(self) -> None:
        self.log_density = np.asarray(self.log_density, dtype=float)
        self.log_modulus = np.asarray(self.log_modulus, dtype=float)
        if self.log_density.shape != self.log_modulus.shape:
            raise ValueError("control components must have equal length")
        if self.log_density.ndim != 1:
            raise ValueError("controls must be 1-D arrays")

    @property
    def n_cells(self) -> int:
        return len(self.log_density)

    @property
    def rho_hat(self) -> np.ndarray:
        return np.exp(self.log_density)

    @property
    def kappa_hat(self) -> np.ndarray:
        return np.exp(self.log_modulus)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.log_density, self.log_modulus])

    @classmethod
    def from_stacked(cls, x: np.ndarray) -> "ControlState":
        n = len(x) // 2
        return cls(x[:n].copy(), x[n:].copy())

    @classmethod
    def water(cls, n_cells: int) -> "ControlState":
        return cls(np.zeros(n_cells), np.zeros(n_cells))

    def copy(self) -> "ControlState":
        return ControlState(self.log_density.copy(), self.log_modulus.copy())


@dataclass(frozen=True)
class MaterialField:
    """Piecewise-constant coefficients induced by a control state.

    ``a_cell[j] = a0 * exp(-v_j)`` and ``b_cell[j] = b0 * exp(-u_j)`` on cell
    j; the background values apply everywhere else.
    """

    a_cell: np.ndarray
    b_cell: np.ndarray
    a0: float
    b0: float

    @property
    def n_cells(self) -> int:
        return len(self.a_cell)

    def element_coefficients(self, region: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-element (a, b) arrays for a mesh region tagging."""
        a = np.full(len(region), self.a0)
        b = np.full(len(region), self.b0)
        inside = region >= 0
        a[inside] = self.a_cell[region[inside]]
        b[inside] = self.b_cell[region[inside]]
        return a, b

    @property
    def is_background(self) -> bool:
        return bool(np.all(self.a_cell == self.a0) and np.all(self.b_cell == self.b0))


def material_field(ctrl: ControlState, ref: ReferenceMedium,
                   cells: CellGraph | int) -> MaterialField:
    """Map controls to the piecewise-constant coefficient field."""
    n = cells if isinstance(cells, int) else cells.n_cells
    if ctrl.n_cells != n:
        raise ValueError(f"control length {ctrl.n_cells} != cell count {n}")
    if not (np.all(np.isfinite(ctrl.log_density))
            and np.all(np.isfinite(ctrl.log_modulus))):
        raise ValueError("controls must be finite")
    return MaterialField(
        a_cell=ref.a0 * np.exp(-ctrl.log_density),
        b_cell=ref.b0 * np.exp(-ctrl.log_modulus),
        a0=ref.a0, b0=ref.b0)


# ---------------------------------------------------------------------------
# attainable property region

@dataclass
class AttainableRegion:
    """Union of simple polygons in the (log rho_hat, log kappa_hat) plane."""

    polygons: list[np.ndarray]      # each (m, 2), open loop, log coordinates
    names: list[str]

    def __post_init__(self) -> None:
        if not self.polygons:
            raise ValueError("attainable region must contain at least one polygon")
        for name, poly in zip(self.names, self.polygons):
            if len(poly) < 3:
                raise ValueError(f"polygon {name!r} needs >= 3 vertices")
            if _polygon_area(poly) <= 0.0:
                raise ValueError(f"polygon {name!r} must be positively oriented "
                                 "with positive area")
            if _self_intersects(poly):
                raise ValueError(f"polygon {name!r} is self-intersecting")

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Vectorised membership test for (v, u) points."""
        pts = np.atleast_2d(points)
        inside = np.zeros(len(pts), dtype=bool)
        for poly in self.polygons:
            inside |= _points_in_polygon(pts, poly)
        # boundary points count as inside
        near = ~inside
        if near.any():
            d = np.full(int(near.sum()), np.inf)
            for poly in self.polygons:
                d = np.minimum(d, _distance_to_boundary(pts[near], poly))
            inside[near.nonzero()[0][d <= tol]] = True
        return inside

    def project(self, points: np.ndarray) -> np.ndarray:
        """Nearest admissible point for each (v, u) pair.

        Points inside any polygon are returned unchanged; outside points map
        to the closest boundary point over all polygons.  Exact ties prefer
        the earliest polygon in file order (the "crown" family first in the
        default region).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        inside = np.zeros(len(pts), dtype=bool)
        for poly in self.polygons:
            inside |= _points_in_polygon(pts, poly)
        todo = ~inside
        if todo.any():
            sub = pts[todo]
            best_d = np.full(len(sub), np.inf)
            best_p = sub.copy()
            for poly in self.polygons:
                cand, dist = _nearest_boundary_point(sub, poly)
                better = dist < best_d
                best_d[better] = dist[better]
                best_p[better] = cand[better]
            pts[todo] = best_p
        return pts


def _polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _self_intersects(poly: np.ndarray) -> bool:
    import shapely
    return not shapely.Polygon(poly).is_valid


def _points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Ray casting, vectorised over points."""
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    n = len(poly)
    for k in range(n):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xi)
    return inside


def _segment_points(p: np.ndarray, a, b):
    d = b - a
    denom = float(d @ d)
    if denom == 0.0:
        t = np.zeros(len(p))
    else:
        t = np.clip(((p - a) @ d) / denom, 0.0, 1.0)
    return a + t[:, None] * d


def _nearest_boundary_point(pts: np.ndarray, poly: np.ndarray):
    best = np.full(len(pts), np.inf)
    out = pts.copy()
    n = len(poly)
    for k in range(n):
        cand = _segment_points(pts, poly[k], poly[(k + 1) % n])
        d = np.linalg.norm(pts - cand, axis=1)
        better = d < best
        best[better] = d[better]
        out[better] = cand[better]
    return out, best


def _distance_to_boundary(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    _, d = _nearest_boundary_point(pts, poly)
    return d


def project_control(ctrl: ControlState, region: AttainableRegion) -> ControlState:
    """Project every (v_j, u_j) onto the attainable set."""
    pts = np.column_stack([ctrl.log_density, ctrl.log_modulus])
    proj = region.project(pts)
    return ControlState(proj[:, 0], proj[:, 1])


# Default attainable set: a declared polygonal approximation of the property
# ranges reachable by the two cell families.  The "crown" family covers
# denser, softer composites (rho_hat up to ~6, kappa_hat down to ~0.15); the
# "star" family covers light and soft ones.  Pure water (1, 1) lies on the
# boundary of both.  Vertices are (rho_hat, kappa_hat); the working polygons
# live in log coordinates.  The file format in `save_region` lets users
# replace this data without code changes.
DEFAULT_REGION_DATA = [
    ("crown", [
        (1.00, 1.00),
        (1.30, 0.60),
        (2.00, 0.32),
        (3.50, 0.20),
        (6.00, 0.15),
        (6.00, 0.50),
        (3.50, 0.78),
        (2.00, 0.95),
        (1.15, 1.00),
    ]),
    ("star", [
        (1.00, 1.00),
        (0.80, 0.42),
        (0.70, 0.16),
        (0.62, 0.10),
        (0.42, 0.12),
        (0.35, 0.30),
        (0.42, 0.62),
        (0.62, 0.90),
    ]),
]


def default_region() -> AttainableRegion:
    polys, names = [], []
    for name, verts in DEFAULT_REGION_DATA:
        arr = np.log(np.asarray(verts, dtype=float))
        if _polygon_area(arr) < 0.0:
            arr = arr[::-1]
        polys.append(arr)
        names.append(name)
    return AttainableRegion(polygons=polys, names=names)


def save_region(region: AttainableRegion, path) -> None:
    """Write the region as text blocks of `rho_hat kappa_hat` vertices."""
    with open(path, "w") as f:
        f.write("# attainable property region: rho_hat kappa_hat per vertex\n")
        for name, poly in zip(region.names, region.polygons):
            f.write(f"polygon {name}\n")
            for v, u in poly:
                f.write(f"{math.exp(v)!r} {math.exp(u)!r}\n")


def load_region(path) -> AttainableRegion:
    polys: list[np.ndarray] = []
    names: list[str] = []
    current: list[list[float]] = []

    def flush():
        if names and current:
            arr = np.log(np.asarray(current, dtype=float))
            if _polygon_area(arr) < 0.0:
                arr = arr[::-1]
            polys.append(arr)

    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("polygon"):
                flush()
                current = []
                names.append(line.split(None, 1)[1])
            else:
                rho, kappa = (float(t) for t in line.split())
                if rho <= 0.0 or kappa <= 0.0:
                    raise ValueError("region vertices must be positive ratios")
                current.append([rho, kappa])
    flush()
    if len(polys) != len(names):
        raise ValueError("malformed region file")
    return AttainableRegion(polygons=polys, names=names)


# ---------------------------------------------------------------------------
# control-space regularisation

@dataclass(frozen=True)
class Regularization:
    """Cell-area diagonal D and adjacency graph Laplacian H."""

    area_matrix: sp.csr_matrix
    graph_laplacian: sp.csr_matrix

    @property
    def n_cells(self) -> int:
        return self.area_matrix.shape[0]

    @property
    def combined(self) -> sp.csr_matrix:
        return (self.area_matrix + self.graph_laplacian).tocsr()

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.combined @ x


def regularization_matrices(cells: CellGraph) -> Regularization:
    """Build D (cell areas) and H (graph Laplacian with -1 couplings)."""
    n = cells.n_cells
    d = sp.diags(cells.areas, format="csr")
    rows, cols, vals = [], [], []
    for j in range(n):
        nbrs = cells.neighbors[j]
        rows.append(j)
        cols.append(j)
        vals.append(float(len(nbrs)))
        for k in nbrs:
            rows.append(j)
            cols.append(int(k))
            vals.append(-1.0)
    h = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return Regularization(area_matrix=d, graph_laplacian=h)


def control_norm_sq(ctrl: ControlState, reg: Regularization) -> float:
    """Quadratic smoothness measure v'(D+H)v + u'(D+H)u."""
    if ctrl.n_cells != reg.n_cells:
        raise ValueError("control / regularization size mismatch")
    m = reg.combined
    v, u = ctrl.log_density, ctrl.log_modulus
    return float(v @ (m @ v) + u @ (m @ u))


# ---------------------------------------------------------------------------
# control persistence

def save_control(ctrl: ControlState, path) -> None:
    """CSV rows: cell id, v, u, rho_hat, kappa_hat."""
    with open(path, "w") as f:
        f.write("cell,v,u,rho_hat,kappa_hat\n")
        for j in range(ctrl.n_cells):
            v = float(ctrl.log_density[j])
            u = float(ctrl.log_modulus[j])
            f.write(f"{j},{v!r},{u!r},{math.exp(v)!r},{math.exp(u)!r}\n")


def load_control(path) -> ControlState:
    rows = []
    with open(path) as f:
        header = f.readline()
        if not header.startswith("cell,"):
            raise ValueError("not a control CSV (missing header)")
        for line in f:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            rows.append((int(parts[0]), float(parts[1]), float(parts[2])))
    rows.sort()
    ids = [r[0] for r in rows]
    if ids != list(range(len(rows))):
        raise ValueError("control CSV must contain every cell exactly once")
    return ControlState(np.array([r[1] for r in rows]),
                        np.array([r[2] for r in rows]))


def save_cell_graph(cells: CellGraph, path) -> None:
    """Cell table (id, centroid, area) followed by the adjacency edge list."""
    with open(path, "w") as f:
        f.write(f"cells {cells.n_cells}\n")
        for c in cells.cells:
            f.write(f"{c.index} {float(c.centroid[0])!r} "
                    f"{float(c.centroid[1])!r} {float(c.area)!r}\n")
        pairs = cells.adjacency_pairs()
        f.write(f"edges {len(pairs)}\n")
        for i, j in pairs:
            f.write(f"{i} {j}\n")
