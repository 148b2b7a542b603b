"""Conforming quadratic triangle meshes for circular scattering domains.

The generator meshes the upper half plane only and mirrors the result, so
every mesh is exactly reflection symmetric about the x axis.  Region
interfaces (the circles and the hexagon edges of the control tiling) enter
as constraint polylines; interior points come from per-band triangular
lattices culled away from the constraints so that every constraint segment
has an empty diametral circle and therefore appears in the Delaunay
triangulation of the point set.  Midside nodes of element edges lying on a
circle are placed on the circle, giving curved (isoparametric) quadratic
elements along all circular interfaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from . import p2
from .geometry import (REGION_CLEARANCE, REGION_EXTERIOR, REGION_FOCAL,
                       CellGraph, DomainSpec)

REGION_NAMES = {REGION_FOCAL: "focal", REGION_CLEARANCE: "clearance",
                REGION_EXTERIOR: "exterior"}

# Constraint polylines are subdivided a bit finer than the element-size
# target; interior lattices use the same spacing.
_SPACING_FACTOR = 1.5
# Background points closer than this fraction of a segment's length are
# culled so the segment keeps an empty diametral circle (0.5 guarantees it;
# the extra margin keeps moat triangles well shaped).
_CULL_FACTOR = 0.55


class MeshError(RuntimeError):
    """Raised when mesh generation or validation fails."""


@dataclass
class Mesh:
    """Quadratic triangle mesh with region tags.

    ``triangles[:, :3]`` are vertices, ``triangles[:, 3:]`` midside nodes in
    edge order (01, 12, 20).  ``region`` holds a cell index (>= 0) or one of
    the REGION_* tags.  ``circle_edges`` lists vertex pairs lying on circle
    ``circle_radii[k]``; the midside node of such an edge sits on the circle.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    region: np.ndarray
    boundary_edges: np.ndarray        # (nb, 3) [end, end, mid] on the outer circle
    circle_radii: np.ndarray
    node_circle: np.ndarray           # circle index per node, -1 if none
    circle_edges: np.ndarray          # (nc, 3) [v0, v1, circle index]
    h_target: float
    generator_stats: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    def element_diameters(self) -> np.ndarray:
        """Longest vertex-to-vertex distance per element."""
        v = self.nodes[self.triangles[:, :3]]
        d01 = np.linalg.norm(v[:, 0] - v[:, 1], axis=1)
        d12 = np.linalg.norm(v[:, 1] - v[:, 2], axis=1)
        d20 = np.linalg.norm(v[:, 2] - v[:, 0], axis=1)
        return np.max(np.column_stack([d01, d12, d20]), axis=1)

    def element_areas(self) -> np.ndarray:
        """Element areas by isoparametric quadrature (curved edges included)."""
        _, detj, _ = p2.element_geometry(self.nodes, self.triangles,
                                         p2.TRI_Q4_POINTS)
        return detj @ p2.TRI_Q4_WEIGHTS

    def region_area(self, tag: int) -> float:
        areas = self.element_areas()
        return float(areas[self.region == tag].sum())

    def mirror_node_map(self, tol: float = 1e-9) -> np.ndarray:
        """Index map sending each node to its x-axis mirror node."""
        key = ("mirror", tol)
        if key in self._cache:
            return self._cache[key]
        scale = float(np.abs(self.nodes).max())
        tree = cKDTree(self.nodes)
        mirrored = self.nodes * np.array([1.0, -1.0])
        dist, idx = tree.query(mirrored)
        if dist.max() > tol * scale:
            raise MeshError(f"mesh is not mirror symmetric: max mismatch "
                            f"{dist.max():.3e} (tol {tol * scale:.3e})")
        self._cache[key] = idx
        return idx


# ---------------------------------------------------------------------------
# internal construction helpers

@dataclass
class _Chain:
    """Polyline whose consecutive point pairs must appear as mesh edges."""
    points: list          # list of (2,) float arrays
    circle: int           # circle index, or -1 for straight chains
    boundary: bool = False


class _PointRegistry:
    def __init__(self, scale: float):
        self._q = 1e-9 * scale
        self._map: dict[tuple, int] = {}
        self.points: list[np.ndarray] = []
        self.kind: list[int] = []      # 0 = constraint, 1 = background

    def add(self, p, kind: int) -> int:
        key = (round(p[0] / self._q), round(p[1] / self._q))
        idx = self._map.get(key)
        if idx is None:
            idx = len(self.points)
            self._map[key] = idx
            self.points.append(np.asarray(p, dtype=float))
            self.kind.append(kind)
        return idx


def _circle_chain_points(radius, spacing, forced_angles, min_half_points=6):
    """Half-circle polyline angles in [0, pi] including forced angles."""
    n = max(min_half_points, int(math.ceil(math.pi * radius / spacing)))
    canonical = np.linspace(0.0, math.pi, n + 1)
    forced = np.array(sorted(a for a in forced_angles if 1e-12 < a < math.pi - 1e-12))
    if forced.size:
        gap = math.pi / n
        keep = np.ones(len(canonical), dtype=bool)
        keep[0] = keep[-1] = True
        inner = canonical[1:-1]
        dist = np.min(np.abs(inner[:, None] - forced[None, :]), axis=1)
        keep[1:-1] = dist > 0.45 * gap
        angles = np.sort(np.concatenate([canonical[keep], forced]))
    else:
        angles = canonical
    pts = np.column_stack([radius * np.cos(angles), radius * np.sin(angles)])
    pts[0] = (radius, 0.0)
    pts[-1] = (-radius, 0.0)
    return pts


def _clip_segment_to_annulus(p0, p1, r_in, r_out):
    """Sub-segments of [p0, p1] inside the closed annulus, with exact circle
    intersection parameters.  Returns a list of (a, b) point pairs."""
    p0 = np.asarray(p0, dtype=float)
    d = np.asarray(p1, dtype=float) - p0
    a2 = d @ d
    if a2 == 0.0:
        return []
    b1 = p0 @ d
    c0 = p0 @ p0

    def roots(radius):
        disc = b1 * b1 - a2 * (c0 - radius * radius)
        if disc <= 0.0:
            return None
        s = math.sqrt(disc)
        return ((-b1 - s) / a2, (-b1 + s) / a2)

    # r^2(t) is a convex parabola: inside outer circle is one interval,
    # outside inner circle is the complement of one interval.
    out = roots(r_out)
    if out is None:
        lo, hi = (0.0, 1.0) if c0 <= r_out * r_out else (1.0, 0.0)
    else:
        lo, hi = out
    outer_iv = (max(0.0, lo), min(1.0, hi))
    if outer_iv[0] >= outer_iv[1]:
        return []
    inner = roots(r_in)
    if inner is None:
        gaps = [outer_iv]
    else:
        t1, t2 = inner
        gaps = []
        if outer_iv[0] < min(t1, outer_iv[1]):
            gaps.append((outer_iv[0], min(t1, outer_iv[1])))
        if max(t2, outer_iv[0]) < outer_iv[1]:
            gaps.append((max(t2, outer_iv[0]), outer_iv[1]))
    segs = []
    for ta, tb in gaps:
        if tb - ta <= 1e-12:
            continue
        segs.append((p0 + ta * d, p0 + tb * d))
    return segs


def _subdivide(a, b, spacing):
    n = max(1, int(math.ceil(np.linalg.norm(b - a) / spacing)))
    t = np.linspace(0.0, 1.0, n + 1)
    return [a + ti * (b - a) for ti in t]


def _generate_half_mesh(circles, straight_chains_pts, bands, extra_points,
                        stats):
    """Delaunay mesh of the upper half disk honouring all constraint chains.

    circles : list of dicts with keys radius, spacing, forced, boundary
    straight_chains_pts : list of point lists (already subdivided)
    bands : list of (r_lo, r_hi, h) interior sizing bands
    extra_points : additional interior seeds (e.g. hexagon centers)
    """
    r_max = max(c["radius"] for c in circles)
    registry = _PointRegistry(scale=r_max)
    chains: list[_Chain] = []

    # Axis chain: breakpoints at every circle and every constraint endpoint
    # touching the axis, then subdivision at the local band size.
    axis_break = set()
    for c in circles:
        axis_break.update((c["radius"], -c["radius"]))
    for pts in straight_chains_pts:
        for p in (pts[0], pts[-1]):
            if abs(p[1]) < 1e-12 * r_max:
                axis_break.add(float(p[0]))
    for p in extra_points:
        if abs(p[1]) < 1e-12 * r_max:
            axis_break.add(float(p[0]))
    xs = sorted(axis_break)

    def band_h(r):
        for lo, hi, h in bands:
            if lo - 1e-12 <= r <= hi + 1e-12:
                return h
        return bands[-1][2]

    axis_pts = []
    for x0, x1 in zip(xs[:-1], xs[1:]):
        h_loc = band_h(abs(0.5 * (x0 + x1))) / _SPACING_FACTOR
        seg = _subdivide(np.array([x0, 0.0]), np.array([x1, 0.0]), h_loc)
        if axis_pts:
            seg = seg[1:]
        axis_pts.extend(seg)
    for p in axis_pts:
        p[1] = 0.0
    chains.append(_Chain(points=axis_pts, circle=-1))

    for ci, c in enumerate(circles):
        pts = _circle_chain_points(c["radius"], c["spacing"], c["forced"])
        chains.append(_Chain(points=[np.array(p) for p in pts], circle=ci,
                             boundary=c.get("boundary", False)))

    for pts in straight_chains_pts:
        chains.append(_Chain(points=[np.asarray(p, float) for p in pts],
                             circle=-1))

    # Interior lattice per band, culled near constraints.
    seg_a, seg_b = [], []
    for ch in chains:
        for a, b in zip(ch.points[:-1], ch.points[1:]):
            seg_a.append(a)
            seg_b.append(b)
    seg_a = np.array(seg_a)
    seg_b = np.array(seg_b)
    seg_mid = 0.5 * (seg_a + seg_b)
    seg_len = np.linalg.norm(seg_b - seg_a, axis=1)
    seg_tree = cKDTree(seg_mid)
    max_len = seg_len.max()

    def cull(points):
        if len(points) == 0:
            return points
        keep = np.ones(len(points), dtype=bool)
        pairs = seg_tree.query_ball_point(points, r=max_len * 1.2)
        for n, cand in enumerate(pairs):
            for s in cand:
                if _point_segment_distance(points[n], seg_a[s], seg_b[s]) \
                        < _CULL_FACTOR * seg_len[s]:
                    keep[n] = False
                    break
        return points[keep]

    background = []
    for lo, hi, h in bands:
        b = h / _SPACING_FACTOR
        rows = int(math.ceil(r_max / (0.5 * SQ3 * b)))
        cols = int(math.ceil(r_max / b)) + 1
        m = np.arange(1, rows + 1)
        pts = []
        for mi in m:
            y = 0.5 * SQ3 * b * mi
            if y >= r_max:
                break
            x = (np.arange(-cols, cols + 1) + 0.5 * (mi % 2)) * b
            pts.append(np.column_stack([x, np.full_like(x, y)]))
        if not pts:
            continue
        pts = np.vstack(pts)
        r = np.hypot(pts[:, 0], pts[:, 1])
        margin = 0.55 * b
        pts = pts[(r > lo + margin) & (r < hi - margin)]
        background.append(cull(pts))
    extra = [p for p in extra_points if p[1] > 1e-12 * r_max]
    if extra:
        background.append(cull(np.array(extra)))
    background = np.vstack(background) if background else np.zeros((0, 2))

    # Assemble, triangulate, verify constraints, repair if needed.
    removed_background: set[tuple] = set()
    for attempt in range(12):
        registry = _PointRegistry(scale=r_max)
        chain_ids = []
        for ch in chains:
            chain_ids.append([registry.add(p, 0) for p in ch.points])
        bg_ids = []
        for p in background:
            key = (round(p[0] / (1e-9 * r_max)), round(p[1] / (1e-9 * r_max)))
            if key in removed_background:
                continue
            bg_ids.append(registry.add(p, 1))
        points = np.array(registry.points)
        kind = np.array(registry.kind)

        tri = Delaunay(points)
        simplices = tri.simplices
        edge_set = set()
        for t in simplices:
            for u, v in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                edge_set.add((min(u, v), max(u, v)))

        missing = []
        for ch, ids in zip(chains, chain_ids):
            for k, (u, v) in enumerate(zip(ids[:-1], ids[1:])):
                if (min(u, v), max(u, v)) not in edge_set:
                    missing.append((ch, k, u, v))
        if not missing:
            break
        # Repair: drop background points inside the offending diametral
        # circles; if none, split the constraint edge instead.
        point_tree = cKDTree(points)
        for ch, k, u, v in missing:
            mid = 0.5 * (points[u] + points[v])
            rad = 0.5 * np.linalg.norm(points[u] - points[v])
            inside = [n for n in point_tree.query_ball_point(mid, rad * 0.9999)
                      if n not in (u, v)]
            culprits = [n for n in inside if kind[n] == 1]
            if culprits:
                for n in culprits:
                    key = (round(points[n][0] / (1e-9 * r_max)),
                           round(points[n][1] / (1e-9 * r_max)))
                    removed_background.add(key)
            else:
                a, b = ch.points[k], ch.points[k + 1]
                if ch.circle >= 0:
                    radius = circles[ch.circle]["radius"]
                    m = 0.5 * (a + b)
                    m = m * (radius / np.linalg.norm(m))
                else:
                    m = 0.5 * (a + b)
                ch.points.insert(k + 1, m)
        stats["repair_rounds"] = attempt + 1
    else:
        raise MeshError("constraint recovery failed after 12 repair rounds")

    # Laplacian smoothing of background points (constraints stay fixed).
    indptr, indices = tri.vertex_neighbor_vertices
    for _ in range(2):
        new_points = points.copy()
        for n in np.nonzero(kind == 1)[0]:
            nbr = indices[indptr[n]:indptr[n + 1]]
            if len(nbr):
                target = points[nbr].mean(axis=0)
                new_points[n] = 0.5 * (points[n] + target)
        tri2 = Delaunay(new_points)
        edge_set2 = set()
        for t in tri2.simplices:
            for u, v in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                edge_set2.add((min(u, v), max(u, v)))
        ok = all((min(u, v), max(u, v)) in edge_set2
                 for ids in chain_ids
                 for u, v in zip(ids[:-1], ids[1:]))
        if not ok:
            break
        points, tri = new_points, tri2
        indptr, indices = tri.vertex_neighbor_vertices

    # Orient counter-clockwise.
    simplices = tri.simplices.copy()
    v = points[simplices]
    cross = ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
             - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0]))
    flip = cross < 0.0
    simplices[flip] = simplices[flip][:, [0, 2, 1]]
    area = 0.5 * np.abs(cross)
    good = area > 1e-14 * r_max * r_max
    simplices = simplices[good]

    node_circle = np.full(len(points), -1, dtype=int)
    circle_pairs = []
    boundary_pairs = []
    for ch, ids in zip(chains, chain_ids):
        if ch.circle < 0:
            continue
        for u, v in zip(ids[:-1], ids[1:]):
            circle_pairs.append((u, v, ch.circle))
            if ch.boundary:
                boundary_pairs.append((u, v))
        node_circle[ids] = ch.circle

    stats["half_points"] = len(points)
    return points, simplices, node_circle, circle_pairs, boundary_pairs


SQ3 = math.sqrt(3.0)


def _point_segment_distance(p, a, b):
    d = b - a
    t = np.dot(p - a, d) / np.dot(d, d)
    t = min(1.0, max(0.0, t))
    return float(np.linalg.norm(p - (a + t * d)))


def _mirror_and_build(points, simplices, node_circle, circle_pairs,
                      boundary_pairs, circles, classify, h_limit, stats):
    """Mirror the half mesh, classify regions and add quadratic nodes."""
    upper = points[:, 1] > 0.0
    n_half = len(points)
    new_index = np.full(n_half, -1, dtype=int)
    new_index[upper] = n_half + np.arange(int(upper.sum()))
    mirror_of = np.arange(n_half)
    mirror_of[upper] = new_index[upper]

    full_nodes = np.vstack([points, points[upper] * np.array([1.0, -1.0])])
    full_circle = np.concatenate([node_circle, node_circle[upper]])

    mirrored = mirror_of[simplices][:, [0, 2, 1]]
    full_tris = np.vstack([simplices, mirrored])

    full_circle_pairs = list(circle_pairs)
    for u, v, c in circle_pairs:
        mu, mv = mirror_of[u], mirror_of[v]
        if (mu, mv) != (u, v):
            full_circle_pairs.append((mu, mv, c))
    full_boundary_pairs = list(boundary_pairs)
    for u, v in boundary_pairs:
        mu, mv = mirror_of[u], mirror_of[v]
        if (mu, mv) != (u, v):
            full_boundary_pairs.append((mv, mu))

    # Quadratic nodes: one midpoint per undirected edge; midpoints of circle
    # edges are placed on the circle (curved isoparametric edges).
    circle_of_edge = {}
    for u, v, c in full_circle_pairs:
        circle_of_edge[(min(u, v), max(u, v))] = c
    radii = np.array([c["radius"] for c in circles])

    edge_mid: dict[tuple, int] = {}
    next_id = len(full_nodes)
    mid_coords = []
    mid_circle = []

    def midpoint(u, v):
        nonlocal next_id
        key = (min(u, v), max(u, v))
        idx = edge_mid.get(key)
        if idx is not None:
            return idx
        m = 0.5 * (full_nodes[u] + full_nodes[v])
        c = circle_of_edge.get(key, -1)
        if c >= 0:
            m = m * (radii[c] / np.linalg.norm(m))
            if abs(m[1]) < 1e-15 * radii[c]:
                m[1] = 0.0
        edge_mid[key] = next_id
        mid_coords.append(m)
        mid_circle.append(c)
        next_id += 1
        return edge_mid[key]

    conn = np.empty((len(full_tris), 6), dtype=int)
    conn[:, :3] = full_tris
    for e, t in enumerate(full_tris):
        conn[e, 3] = midpoint(t[0], t[1])
        conn[e, 4] = midpoint(t[1], t[2])
        conn[e, 5] = midpoint(t[2], t[0])

    all_nodes = np.vstack([full_nodes, np.array(mid_coords)]) \
        if mid_coords else full_nodes
    all_circle = np.concatenate([full_circle, np.array(mid_circle, dtype=int)]) \
        if mid_circle else full_circle

    boundary_edges = np.array(
        [(u, v, edge_mid[(min(u, v), max(u, v))]) for u, v in full_boundary_pairs],
        dtype=int)
    circle_edges = np.array(full_circle_pairs, dtype=int) \
        if full_circle_pairs else np.zeros((0, 3), dtype=int)

    centroids = all_nodes[conn[:, :3]].mean(axis=1)
    region = classify(centroids)

    mesh = Mesh(nodes=all_nodes, triangles=conn, region=region,
                boundary_edges=boundary_edges,
                circle_radii=radii, node_circle=all_circle,
                circle_edges=circle_edges, h_target=h_limit,
                generator_stats=stats)
    _validate(mesh)
    return mesh


def _validate(mesh: Mesh) -> None:
    _, detj, _ = p2.element_geometry(mesh.nodes, mesh.triangles,
                                     p2.TRI_Q4_POINTS)
    if detj.min() <= 0.0:
        bad = int(np.argwhere(detj.min(axis=1) <= 0.0)[0][0])
        raise MeshError(f"non-positive Jacobian in element {bad} "
                        f"(region {mesh.region[bad]})")
    diam = mesh.element_diameters()
    if diam.max() > mesh.h_target * (1.0 + 1e-9):
        bad = int(np.argmax(diam))
        raise MeshError(
            f"element {bad} diameter {diam.max():.4g} exceeds target "
            f"{mesh.h_target:.4g} (region {mesh.region[bad]})")
    mesh.generator_stats["min_angle_deg"] = float(_min_angle_deg(mesh))


def _min_angle_deg(mesh: Mesh) -> float:
    v = mesh.nodes[mesh.triangles[:, :3]]
    angles = []
    for k in range(3):
        a = v[:, (k + 1) % 3] - v[:, k]
        b = v[:, (k + 2) % 3] - v[:, k]
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        cosang = np.clip(np.einsum("ij,ij->i", a, b) / (na * nb), -1.0, 1.0)
        angles.append(np.degrees(np.arccos(cosang)))
    return float(np.min(np.column_stack(angles)))


# ---------------------------------------------------------------------------
# public mesh builders

def build_mesh(spec: DomainSpec, cells: CellGraph) -> Mesh:
    """Conforming mesh of the lens domain (focal disk, clearance, hexagonal
    control cells, exterior ring, absorbing boundary circle)."""
    h = spec.mesh_size
    spacing = h / _SPACING_FACTOR
    seg_spacing = min(spacing, 2.0 * spec.cell_edge)
    r_f, r_i, r_e, r_a = (spec.focal_radius, spec.inner_radius,
                          spec.outer_radius, spec.boundary_radius)

    # Clip the hexagon constraint edges to the annulus and the upper half.
    raw = cells.constraint_segments()
    chains_pts: list[list[np.ndarray]] = []
    forced = {1: [], 2: []}       # circle index -> forced angles (r_i=1, r_e=2)
    for p0, p1, _, _ in raw:
        if 0.5 * (p0[1] + p1[1]) < 0.0:
            continue
        for a, b in _clip_segment_to_annulus(p0, p1, r_i, r_e):
            if 0.5 * (a[1] + b[1]) < -1e-12 * r_a:
                continue
            for p in (a, b):
                r = math.hypot(p[0], p[1])
                for ci, rc in ((1, r_i), (2, r_e)):
                    if abs(r - rc) < 1e-9 * rc and p[1] > 1e-12 * r_a:
                        p *= rc / r
                        forced[ci].append(math.atan2(p[1], p[0]))
                if abs(p[1]) < 1e-12 * r_a:
                    p[1] = 0.0
            chains_pts.append(_subdivide(a, b, seg_spacing))

    circles = [
        {"radius": r_f, "spacing": spacing, "forced": [], "boundary": False},
        {"radius": r_i, "spacing": spacing, "forced": forced[1], "boundary": False},
        {"radius": r_e, "spacing": spacing, "forced": forced[2], "boundary": False},
        {"radius": r_a, "spacing": spacing, "forced": [], "boundary": True},
    ]
    bands = [(0.0, r_f, h), (r_f, r_i, h), (r_i, r_e, h), (r_e, r_a, h)]
    centers = [c.centroid for c in cells.cells]

    def classify(points):
        r = np.hypot(points[:, 0], points[:, 1])
        out = np.full(len(points), REGION_EXTERIOR, dtype=int)
        out[r < r_i] = REGION_CLEARANCE
        out[r < r_f] = REGION_FOCAL
        in_cells = (r >= r_i) & (r <= r_e)
        if in_cells.any():
            out[in_cells] = cells.cell_of_points(points[in_cells])
        return out

    stats: dict = {}
    half = _generate_half_mesh(circles, chains_pts, bands, centers, stats)
    mesh = _mirror_and_build(*half, circles, classify, h, stats)
    n_cells = cells.n_cells
    tags = mesh.region
    if (tags == -9999).any() or tags.max() >= n_cells:
        raise MeshError("element classified outside the cell index range")
    missing = set(range(n_cells)) - set(tags[tags >= 0].tolist())
    if missing:
        raise MeshError(f"cells without elements: {sorted(missing)[:8]}")
    return mesh


def disk_scatterer_mesh(radius: float, boundary_radius: float, h: float,
                        interior_h: float | None = None) -> Mesh:
    """Mesh for a single penetrable disk centred at the origin.

    Elements inside the disk are tagged as cell 0, the rest as exterior.
    ``interior_h`` refines the disk interior (shorter local wavelength)."""
    h_int = interior_h if interior_h is not None else h
    circles = [
        {"radius": radius, "spacing": min(h, h_int) / _SPACING_FACTOR,
         "forced": [], "boundary": False},
        {"radius": boundary_radius, "spacing": h / _SPACING_FACTOR,
         "forced": [], "boundary": True},
    ]
    bands = [(0.0, radius, h_int), (radius, boundary_radius, h)]

    def classify(points):
        r = np.hypot(points[:, 0], points[:, 1])
        out = np.full(len(points), REGION_EXTERIOR, dtype=int)
        out[r < radius] = 0
        return out

    stats: dict = {}
    half = _generate_half_mesh(circles, [], bands, [], stats)
    return _mirror_and_build(*half, circles, classify, max(h, h_int), stats)


def homogeneous_disk_mesh(focal_radius: float, boundary_radius: float,
                          h: float) -> Mesh:
    """Water-only disk with a focal region tag at the center."""
    circles = [
        {"radius": focal_radius, "spacing": h / _SPACING_FACTOR,
         "forced": [], "boundary": False},
        {"radius": boundary_radius, "spacing": h / _SPACING_FACTOR,
         "forced": [], "boundary": True},
    ]
    bands = [(0.0, focal_radius, h), (focal_radius, boundary_radius, h)]

    def classify(points):
        r = np.hypot(points[:, 0], points[:, 1])
        out = np.full(len(points), REGION_EXTERIOR, dtype=int)
        out[r < focal_radius] = REGION_FOCAL
        return out

    stats: dict = {}
    half = _generate_half_mesh(circles, [], bands, [], stats)
    return _mirror_and_build(*half, circles, classify, h, stats)


def refine(mesh: Mesh) -> Mesh:
    """Uniform refinement: each element splits into four; new vertices on
    circular interfaces stay on their circles."""
    old_nodes = mesh.nodes
    conn = mesh.triangles
    children = np.empty((4 * len(conn), 3), dtype=int)
    children[0::4] = conn[:, [0, 3, 5]]
    children[1::4] = conn[:, [3, 1, 4]]
    children[2::4] = conn[:, [5, 4, 2]]
    children[3::4] = conn[:, [3, 4, 5]]
    region = np.repeat(mesh.region, 4)

    # Old circle edge (u, v) with midpoint m splits into (u, m) and (m, v).
    edge_mid = {}
    for e, t in enumerate(conn):
        for k, (a, b) in enumerate(((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))):
            edge_mid[(min(a, b), max(a, b))] = t[3 + k]
    circle_pairs = []
    for u, v, c in mesh.circle_edges:
        m = edge_mid[(min(u, v), max(u, v))]
        circle_pairs.append((u, m, c))
        circle_pairs.append((m, v, c))
    boundary_pairs = []
    for u, v, m in mesh.boundary_edges:
        boundary_pairs.append((u, m))
        boundary_pairs.append((m, v))

    circle_of_edge = {(min(u, v), max(u, v)): c for u, v, c in circle_pairs}
    radii = mesh.circle_radii
    nodes = [old_nodes]
    new_mid: dict[tuple, int] = {}
    mid_coords = []
    mid_circle = []
    next_id = len(old_nodes)

    def midpoint(u, v):
        nonlocal next_id
        key = (min(u, v), max(u, v))
        idx = new_mid.get(key)
        if idx is not None:
            return idx
        m = 0.5 * (old_nodes[u] + old_nodes[v])
        c = circle_of_edge.get(key, -1)
        if c >= 0:
            m = m * (radii[c] / np.linalg.norm(m))
            if abs(m[1]) < 1e-15 * radii[c]:
                m[1] = 0.0
        new_mid[key] = next_id
        mid_coords.append(m)
        mid_circle.append(c)
        next_id += 1
        return new_mid[key]

    conn6 = np.empty((len(children), 6), dtype=int)
    conn6[:, :3] = children
    for e, t in enumerate(children):
        conn6[e, 3] = midpoint(t[0], t[1])
        conn6[e, 4] = midpoint(t[1], t[2])
        conn6[e, 5] = midpoint(t[2], t[0])

    all_nodes = np.vstack([old_nodes, np.array(mid_coords)])
    all_circle = np.concatenate([mesh.node_circle,
                                 np.array(mid_circle, dtype=int)])
    boundary_edges = np.array(
        [(u, v, new_mid[(min(u, v), max(u, v))]) for u, v in boundary_pairs],
        dtype=int)

    out = Mesh(nodes=all_nodes, triangles=conn6, region=region,
               boundary_edges=boundary_edges,
               circle_radii=radii, node_circle=all_circle,
               circle_edges=np.array(circle_pairs, dtype=int),
               h_target=0.5 * mesh.h_target,
               generator_stats={"refined_from": mesh.n_elements})
    return out


# ---------------------------------------------------------------------------
# plain-text mesh persistence

def region_label(tag: int) -> str:
    return REGION_NAMES.get(int(tag), f"cell{int(tag)}")


def parse_region_label(text: str) -> int:
    for tag, name in REGION_NAMES.items():
        if text == name:
            return tag
    if text.startswith("cell"):
        return int(text[4:])
    raise ValueError(f"unknown region label {text!r}")


def save_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as f:
        f.write("# hexlens mesh v1\n")
        f.write(f"circles {len(mesh.circle_radii)}\n")
        for r in mesh.circle_radii:
            f.write(f"{float(r)!r}\n")
        f.write(f"nodes {mesh.n_nodes}\n")
        for n, (x, y) in enumerate(mesh.nodes):
            f.write(f"{n} {float(x)!r} {float(y)!r} {mesh.node_circle[n]}\n")
        f.write(f"elements {mesh.n_elements}\n")
        for e, t in enumerate(mesh.triangles):
            ids = " ".join(str(i) for i in t)
            f.write(f"{e} {ids} {region_label(mesh.region[e])}\n")
        f.write(f"boundary_edges {len(mesh.boundary_edges)}\n")
        for u, v, m in mesh.boundary_edges:
            f.write(f"{u} {v} {m}\n")
        f.write(f"circle_edges {len(mesh.circle_edges)}\n")
        for u, v, c in mesh.circle_edges:
            f.write(f"{u} {v} {c}\n")
        f.write(f"h_target {float(mesh.h_target)!r}\n")


def load_mesh(path) -> Mesh:
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip() and not ln.startswith("#")]
    pos = 0

    def take_count(tag):
        nonlocal pos
        head, count = lines[pos].split()
        if head != tag:
            raise ValueError(f"expected section {tag!r}, got {head!r}")
        pos += 1
        return int(count)

    k = take_count("circles")
    radii = np.array([float(lines[pos + i]) for i in range(k)])
    pos += k
    n = take_count("nodes")
    nodes = np.empty((n, 2))
    node_circle = np.empty(n, dtype=int)
    for i in range(n):
        parts = lines[pos + i].split()
        nodes[i] = (float(parts[1]), float(parts[2]))
        node_circle[i] = int(parts[3])
    pos += n
    m = take_count("elements")
    conn = np.empty((m, 6), dtype=int)
    region = np.empty(m, dtype=int)
    for i in range(m):
        parts = lines[pos + i].split()
        conn[i] = [int(x) for x in parts[1:7]]
        region[i] = parse_region_label(parts[7])
    pos += m
    b = take_count("boundary_edges")
    bedges = np.array([[int(x) for x in lines[pos + i].split()]
                       for i in range(b)], dtype=int).reshape(b, 3)
    pos += b
    c = take_count("circle_edges")
    cedges = np.array([[int(x) for x in lines[pos + i].split()]
                       for i in range(c)], dtype=int).reshape(c, 3)
    pos += c
    head, value = lines[pos].split()
    if head != "h_target":
        raise ValueError("missing h_target record")
    return Mesh(nodes=nodes, triangles=conn, region=region,
                boundary_edges=bedges, circle_radii=radii,
                node_circle=node_circle, circle_edges=cedges,
                h_target=float(value))
