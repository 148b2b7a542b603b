"""Annular lens geometry and the hexagonal control-cell tiling.

The control annulus ``inner_radius <= r <= outer_radius`` is tiled with
flat-top regular hexagons (one symmetry axis on the x axis, so the mirror
symmetry of the scattering problem is representable exactly).  Cells cut by
the two circles are clipped; clipped remnants below an area threshold are
merged into a neighbouring cell so every control cell has a sensible size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import Polygon
from shapely.ops import unary_union

SQRT3 = math.sqrt(3.0)

# Region tags used by the mesh: non-negative values are cell indices.
REGION_FOCAL = -1
REGION_CLEARANCE = -2
REGION_EXTERIOR = -3

# Clipped fragments below this fraction of a full hexagon are merged away.
MIN_CELL_FRACTION = 0.25

# Number of segments per quarter circle when polygonising circles for clipping.
_CIRCLE_QUAD_SEGS = 64


class TilingError(ValueError):
    """Raised when the control annulus cannot be tiled."""


@dataclass(frozen=True)
class DomainSpec:
    """Radii and sizing of the computational domain (metres).

    ``focal_radius < inner_radius < outer_radius < boundary_radius`` define,
    in order, the focal disk, the water clearance, the control annulus and
    the artificial absorbing boundary.  ``cell_edge`` is the hexagon edge
    length and ``mesh_size`` the target element diameter.
    """

    focal_radius: float
    inner_radius: float
    outer_radius: float
    boundary_radius: float
    cell_edge: float
    mesh_size: float

    def __post_init__(self) -> None:
        r = (self.focal_radius, self.inner_radius, self.outer_radius,
             self.boundary_radius)
        if not (0.0 < r[0] < r[1] < r[2] < r[3]):
            raise ValueError(
                f"radii must satisfy 0 < focal < inner < outer < boundary, got {r}")
        if self.cell_edge <= 0.0:
            raise ValueError("cell_edge must be positive")
        if self.mesh_size <= 0.0:
            raise ValueError("mesh_size must be positive")


def hexagon_area(edge: float) -> float:
    """Area of a regular hexagon with the given edge length."""
    return 1.5 * SQRT3 * edge * edge


def hexagon_vertices(center: tuple[float, float], edge: float) -> np.ndarray:
    """Vertices of a flat-top hexagon, counter-clockwise starting at angle 0."""
    cx, cy = center
    ang = np.arange(6) * (math.pi / 3.0)
    return np.column_stack((cx + edge * np.cos(ang), cy + edge * np.sin(ang)))


# Lattice geometry is expressed in half-unit integer coordinates
# (x = p * edge/2, y = q * edge*sqrt(3)/2) so that vertices shared between
# neighbouring hexagons are bitwise identical floats.
_HEX_OFFSETS = ((2, 0), (1, 1), (-1, 1), (-2, 0), (-1, -1), (1, -1))


def _lattice_pq(i: int, j: int) -> tuple[int, int]:
    return 3 * i, 2 * j + (i % 2)


def _pq_xy(pq: tuple[int, int], edge: float) -> np.ndarray:
    return np.array([0.5 * edge * pq[0], 0.5 * SQRT3 * edge * pq[1]])


def _hexagon_vertex_pqs(i: int, j: int) -> list[tuple[int, int]]:
    p, q = _lattice_pq(i, j)
    return [(p + dp, q + dq) for dp, dq in _HEX_OFFSETS]


def _lattice_hexagon(i: int, j: int, edge: float) -> np.ndarray:
    return np.array([_pq_xy(pq, edge) for pq in _hexagon_vertex_pqs(i, j)])


def _lattice_center(i: int, j: int, edge: float) -> tuple[float, float]:
    return 1.5 * edge * i, SQRT3 * edge * (j + 0.5 * (i % 2))


def _mirror_lattice(i: int, j: int) -> tuple[int, int]:
    # Reflection about the x axis maps column i onto itself.
    return (i, -j) if i % 2 == 0 else (i, -j - 1)


def _lattice_neighbors(i: int, j: int) -> list[tuple[int, int]]:
    if i % 2 == 0:
        side = [(i - 1, j - 1), (i - 1, j), (i + 1, j - 1), (i + 1, j)]
    else:
        side = [(i - 1, j), (i - 1, j + 1), (i + 1, j), (i + 1, j + 1)]
    return [(i, j - 1), (i, j + 1)] + side


def annulus_polygon(r_in: float, r_out: float) -> Polygon:
    """Polygonal approximation of the annulus used for clipping cells."""
    outer = shapely.Point(0.0, 0.0).buffer(r_out, quad_segs=_CIRCLE_QUAD_SEGS)
    inner = shapely.Point(0.0, 0.0).buffer(r_in, quad_segs=_CIRCLE_QUAD_SEGS)
    return outer.difference(inner)


@dataclass(frozen=True)
class HexCell:
    """One control cell: a (possibly clipped or merged) hexagon."""

    index: int
    lattice: tuple[int, int]
    centroid: np.ndarray
    area: float
    boundary: np.ndarray          # closed vertex loop, shape (m, 2)
    clipped: bool
    absorbed: tuple[tuple[int, int], ...] = ()


@dataclass
class CellGraph:
    """Cells tiling the control annulus plus their adjacency structure."""

    spec: DomainSpec
    cells: list[HexCell]
    neighbors: list[np.ndarray]           # neighbors[j] = sorted cell indices
    mirror: np.ndarray                    # mirror[j] = index of x-axis mirror cell
    merge_report: list[str] = field(default_factory=list)
    # lattice key -> (cell index for y >= 0, cell index for y < 0)
    _lattice_map: dict[tuple[int, int], tuple[int, int]] = field(default_factory=dict)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def centroids(self) -> np.ndarray:
        return np.array([c.centroid for c in self.cells])

    @property
    def areas(self) -> np.ndarray:
        return np.array([c.area for c in self.cells])

    def adjacency_pairs(self) -> list[tuple[int, int]]:
        """Unique adjacent pairs (i, j) with i < j."""
        pairs = []
        for i, nbrs in enumerate(self.neighbors):
            pairs.extend((i, int(j)) for j in nbrs if i < j)
        return pairs

    def cell_of_points(self, points: np.ndarray) -> np.ndarray:
        """Cell index containing each point (assumed inside the annulus).

        The hexagon tiling is the Voronoi diagram of the lattice centers, so
        the containing hexagon is the nearest center; merged fragments then
        map to their host cell.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        edge = self.spec.cell_edge
        fi = pts[:, 0] / (1.5 * edge)
        out = np.full(len(pts), -9999, dtype=int)
        best = np.full(len(pts), np.inf)
        base_i = np.round(fi).astype(int)
        for di in (-1, 0, 1):
            ii = base_i + di
            fj = pts[:, 1] / (SQRT3 * edge) - 0.5 * (ii % 2)
            base_j = np.round(fj).astype(int)
            for dj in (-1, 0, 1):
                jj = base_j + dj
                cx = 1.5 * edge * ii
                cy = SQRT3 * edge * (jj + 0.5 * (ii % 2))
                d2 = (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2
                better = d2 < best
                for n in np.nonzero(better)[0]:
                    key = (int(ii[n]), int(jj[n]))
                    ids = self._lattice_map.get(key)
                    if ids is None:
                        continue
                    best[n] = d2[n]
                    out[n] = ids[0] if pts[n, 1] >= 0.0 else ids[1]
        return out

    def constraint_segments(self) -> list[tuple[np.ndarray, np.ndarray, int, int]]:
        """Hexagon edges that separate two different regions.

        Returns tuples ``(p0, p1, region_a, region_b)`` in the full plane;
        edges lying on the x axis are omitted (the mesher constrains the
        axis independently).  Regions are final cell indices, or -9999 for
        an edge owned by a single in-play hexagon.
        """
        edge = self.spec.cell_edge
        owners: dict[tuple, list] = {}
        for key in self._in_play:
            pqs = _hexagon_vertex_pqs(*key)
            for k in range(6):
                a, b = pqs[k], pqs[(k + 1) % 6]
                ident = (a, b) if a <= b else (b, a)
                owners.setdefault(ident, []).append(key)
        segments = []
        for (a, b) in sorted(owners):
            if a[1] == 0 and b[1] == 0:
                continue  # lies on the symmetry axis
            upper = (a[1] + b[1]) > 0
            regions = []
            for key in owners[(a, b) if a <= b else (b, a)]:
                ids = self._lattice_map.get(key, (-9999, -9999))
                regions.append(ids[0] if upper else ids[1])
            if len(regions) == 1:
                regions.append(-9999)
            if regions[0] != regions[1]:
                segments.append((_pq_xy(a, edge), _pq_xy(b, edge),
                                 regions[0], regions[1]))
        return segments

    @property
    def _in_play(self) -> list[tuple[int, int]]:
        keys = set(self._lattice_map)
        return sorted(keys)


def hex_tiling(spec: DomainSpec) -> CellGraph:
    """Tile the control annulus ``[inner_radius, outer_radius]`` with hexagons.

    Cells are clipped against the two circles; fragments smaller than
    ``MIN_CELL_FRACTION`` of a full hexagon are merged into their largest
    kept neighbour (fragments straddling the x axis are split along it and
    merged mirror-symmetrically so the tiling stays reflection symmetric).

    Raises
    ------
    TilingError
        If the annulus is too thin to host any cell.
    """
    edge = spec.cell_edge
    r_in, r_out = spec.inner_radius, spec.outer_radius
    apothem = 0.5 * SQRT3 * edge
    if r_out - r_in < apothem:
        raise TilingError(
            f"annulus too thin: width {r_out - r_in:.6g} m is below one cell "
            f"apothem {apothem:.6g} m")

    ring = annulus_polygon(r_in, r_out)
    a_hex = hexagon_area(edge)

    # Enumerate candidate lattice cells overlapping the annulus.
    imax = int(math.ceil((r_out + edge) / (1.5 * edge)))
    jmax = int(math.ceil((r_out + edge) / (SQRT3 * edge))) + 1
    polys: dict[tuple[int, int], Polygon] = {}
    clipped_flag: dict[tuple[int, int], bool] = {}
    for i in range(-imax, imax + 1):
        for j in range(-jmax, jmax + 1):
            cx, cy = _lattice_center(i, j, edge)
            rc = math.hypot(cx, cy)
            if rc < r_in - edge or rc > r_out + edge:
                continue
            verts = _lattice_hexagon(i, j, edge)
            vr = np.hypot(verts[:, 0], verts[:, 1])
            if vr.min() >= r_in and vr.max() <= r_out:
                polys[(i, j)] = Polygon(verts)
                clipped_flag[(i, j)] = False
                continue
            clip = Polygon(verts).intersection(ring)
            if clip.is_empty or clip.area < 1e-12 * a_hex:
                continue
            if clip.geom_type == "MultiPolygon":
                clip = max(clip.geoms, key=lambda g: g.area)
            polys[(i, j)] = clip
            clipped_flag[(i, j)] = True

    if not polys:
        raise TilingError("annulus too thin: no hexagon overlaps it")

    # Symmetrise areas across mirror pairs so later decisions are symmetric.
    areas = {k: polys[k].area for k in polys}
    for k in list(areas):
        mk = _mirror_lattice(*k)
        if mk in areas:
            mean = 0.5 * (areas[k] + areas[mk])
            areas[k] = areas[mk] = mean

    kept = sorted(k for k in polys if areas[k] >= MIN_CELL_FRACTION * a_hex)
    if not kept:
        raise TilingError("annulus too thin: all cells degenerate after clipping")
    fragments = sorted(k for k in polys if k not in set(kept))

    kept_set = set(kept)
    merged: dict[tuple[int, int], list[tuple[int, int]]] = {k: [] for k in kept}
    # lattice -> (host for y>=0, host for y<0); kept cells host themselves
    lattice_hosts: dict[tuple[int, int], tuple] = {k: (k, k) for k in kept}
    report: list[str] = []
    extra_geometry: dict[tuple[int, int], list] = {k: [] for k in kept}

    def _largest_kept_neighbor(key, part, upper_only=False):
        best_key, best_area = None, -1.0
        for nb in _lattice_neighbors(*key):
            if nb not in kept_set:
                continue
            _, nby = _lattice_center(*nb, edge)
            if upper_only and nby <= 0.0:
                continue
            if polys[nb].distance(part) > 1e-9 * edge:
                continue
            shared = polys[nb].intersection(part.buffer(1e-9 * edge)).area
            if shared <= 0.0:
                continue
            if areas[nb] > best_area + 1e-15 or (
                    abs(areas[nb] - best_area) <= 1e-15 and nb < best_key):
                best_key, best_area = nb, areas[nb]
        if best_key is None:
            # Fall back to the nearest kept cell (rare corner geometry).
            cand = [nb for nb in kept if (not upper_only
                                          or _lattice_center(*nb, edge)[1] > 0.0)]
            best_key = min(cand, key=lambda nb: polys[nb].distance(part))
        return best_key

    # Decide merges on the canonical (upper) half and mirror the decision.
    halfplane_up = Polygon([(-4 * r_out, 0.0), (4 * r_out, 0.0),
                            (4 * r_out, 4 * r_out), (-4 * r_out, 4 * r_out)])
    halfplane_dn = Polygon([(-4 * r_out, -4 * r_out), (4 * r_out, -4 * r_out),
                            (4 * r_out, 0.0), (-4 * r_out, 0.0)])
    done = set()
    for key in fragments:
        if key in done:
            continue
        cy = _lattice_center(*key, edge)[1]
        if abs(cy) < 1e-12 * edge:
            # On-axis fragment: split along the axis, merge halves into a
            # mirror pair of hosts so the tiling stays symmetric.
            up = polys[key].intersection(halfplane_up)
            host_up = _largest_kept_neighbor(key, up, upper_only=True)
            host_dn = _mirror_lattice(*host_up)
            if host_dn not in kept_set:
                raise TilingError(f"mirror host missing for axis fragment {key}")
            extra_geometry[host_up].append(up)
            extra_geometry[host_dn].append(polys[key].intersection(halfplane_dn))
            merged[host_up].append(key)
            merged[host_dn].append(key)
            lattice_hosts[key] = (host_up, host_dn)
            report.append(f"fragment {key} split on axis into {host_up}/{host_dn}")
            done.add(key)
            continue
        canon = key if cy > 0.0 else _mirror_lattice(*key)
        twin = _mirror_lattice(*canon)
        host = _largest_kept_neighbor(canon, polys[canon])
        host_twin = _mirror_lattice(*host)
        if host_twin not in kept_set:
            raise TilingError(f"mirror host missing for fragment {canon}")
        for frag, h in ((canon, host), (twin, host_twin)):
            if frag not in polys or frag in done:
                continue
            extra_geometry[h].append(polys[frag])
            merged[h].append(frag)
            lattice_hosts[frag] = (h, h)
            report.append(f"fragment {frag} (area {areas[frag]:.3e}) merged into {h}")
            done.add(frag)

    # Assemble final cell geometry and indices (lattice order).
    final_polys = {}
    for k in kept:
        geom = polys[k]
        if extra_geometry[k]:
            geom = unary_union([geom] + extra_geometry[k])
            if geom.geom_type == "MultiPolygon":
                geom = max(geom.geoms, key=lambda g: g.area)
        final_polys[k] = geom

    index_of = {k: n for n, k in enumerate(kept)}
    lattice_map = {k: (index_of[up], index_of[dn])
                   for k, (up, dn) in lattice_hosts.items()}

    # Mirror map on final indices.
    mirror = np.empty(len(kept), dtype=int)
    for k in kept:
        mk = _mirror_lattice(*k)
        if mk not in index_of:
            raise TilingError(f"tiling asymmetric: mirror of cell {k} missing")
        mirror[index_of[k]] = index_of[mk]

    # Symmetrised centroids/areas so mirror cells match exactly.
    cents = {k: np.array(final_polys[k].centroid.coords[0]) for k in kept}
    fareas = {k: final_polys[k].area for k in kept}
    cells = []
    for k in kept:
        mk = _mirror_lattice(*k)
        area = 0.5 * (fareas[k] + fareas[mk])
        c, mc = cents[k], cents[mk]
        centroid = np.array([0.5 * (c[0] + mc[0]),
                             math.copysign(0.5 * (abs(c[1]) + abs(mc[1])), c[1])])
        if k == mk:
            centroid[1] = 0.0
        was_clipped = clipped_flag[k] or bool(merged[k])
        cells.append(HexCell(
            index=index_of[k], lattice=k, centroid=centroid, area=area,
            boundary=np.asarray(final_polys[k].exterior.coords),
            clipped=was_clipped, absorbed=tuple(merged[k])))

    # Adjacency: lattice neighbours of all constituents, confirmed by a
    # positive-length shared boundary of the final geometry.
    constituents = {k: [k] + merged[k] for k in kept}
    neighbors: list[set[int]] = [set() for _ in kept]
    for k in kept:
        me = index_of[k]
        candidates = set()
        for part in constituents[k]:
            for nb in _lattice_neighbors(*part):
                hosts = lattice_hosts.get(nb)
                if hosts is None:
                    continue
                candidates.add(index_of[hosts[0]])
                candidates.add(index_of[hosts[1]])
        candidates.discard(me)
        for other in candidates:
            if other in neighbors[me]:
                continue
            ok = kept[other]
            shared = final_polys[k].intersection(final_polys[ok])
            if shared.length > 1e-9 * edge:
                neighbors[me].add(other)
                neighbors[other].add(me)

    graph = CellGraph(
        spec=spec,
        cells=cells,
        neighbors=[np.array(sorted(s), dtype=int) for s in neighbors],
        mirror=mirror,
        merge_report=report,
        _lattice_map=lattice_map,
    )
    _check_connected(graph)
    return graph


def _check_connected(graph: CellGraph) -> None:
    n = graph.n_cells
    if n == 0:
        raise TilingError("empty tiling")
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        j = stack.pop()
        for k in graph.neighbors[j]:
            if not seen[k]:
                seen[k] = True
                stack.append(int(k))
    if not seen.all():
        raise TilingError(
            f"cell adjacency graph is disconnected ({int(seen.sum())}/{n} reachable)")
