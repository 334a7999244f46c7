"""
Local Triangulation Regeneration

Replaces a patch whose connectivity cannot be made regular by moving
vertices. The patch boundary is projected to a planar polygon, fresh
interior points are scattered inside it, the points are triangulated,
lifted back to the original surface, polished by vertex relocation, and
the best regular candidate is spliced into the mesh in place of the patch.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Union

import numpy as np
from matplotlib.path import Path
from scipy.spatial import Delaunay

from .errors import (LiftError, MeshError, NonManifoldError, RankDeficiencyError, ScatterError,
                     TriangulationError)
from .geometry import (FittedPlane, fit_plane, fold_cosine, incircle, orient2d, plane_through, point_segment_distance,
                       signed_area_2d, triangle_angles, triangle_normals)
from .mesh_core import (RegularityParams, TriMesh, bfs_expand, check_regularity, classify, edge_key, fold_floor,
                        surface_fold)
from .vrem import LineSearchParams, LocalProjector, SpringSystem, vrem_iterate

# Configure logging
logger = logging.getLogger(__name__)

# Clearance of scattered points, as a fraction of the polygon's mean edge length
CLEARANCE_FACTOR = 0.1
# Half-width of the window of point counts tried around the estimate
COUNT_WINDOW = 2


@dataclass
class PlanarPolygon:
    """
    Patch boundary projected to a plane.

    points[i] is the planar position of patch vertex vertex_ids[i]; the
    order follows the boundary as traversed by the patch's triangles.
    """

    points: np.ndarray
    vertex_ids: List[int]
    plane: Optional[FittedPlane] = None

    @property
    def num_vertices(self) -> int:
        return len(self.points)

    @property
    def signed_area(self) -> float:
        return signed_area_2d(self.points)

    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.roll(self.points, -1, axis=0) - self.points, axis=1)

    def mean_edge_length(self) -> float:
        return float(self.edge_lengths().mean())

    def path(self) -> Path:
        return Path(np.vstack([self.points, self.points[:1]]), closed=True)

    def is_simple(self) -> bool:
        """True when no two non-adjacent edges meet and no vertex repeats."""
        m = self.num_vertices
        if m < 3 or len({tuple(p) for p in self.points.tolist()}) != m:
            return False
        pts = self.points
        for i in range(m):
            a, b = pts[i], pts[(i + 1) % m]
            for j in range(i + 1, m):
                if j == i or (j + 1) % m == i or j == (i + 1) % m:
                    continue
                c, d = pts[j], pts[(j + 1) % m]
                o1, o2 = orient2d(a, b, c), orient2d(a, b, d)
                o3, o4 = orient2d(c, d, a), orient2d(c, d, b)
                if o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4):
                    return False
                if 0 in (o1, o2, o3, o4) and _segments_touch(a, b, c, d):
                    return False
        return True


def _on_segment(p, q, r) -> bool:
    return min(p[0], r[0]) <= q[0] <= max(p[0], r[0]) and min(p[1], r[1]) <= q[1] <= max(p[1], r[1])


def _segments_touch(a, b, c, d) -> bool:
    return ((orient2d(a, b, c) == 0 and _on_segment(a, c, b)) or (orient2d(a, b, d) == 0 and _on_segment(a, d, b))
            or (orient2d(c, d, a) == 0 and _on_segment(c, a, d)) or (orient2d(c, d, b) == 0 and _on_segment(c, b, d)))


def boundary_loop(patch: TriMesh) -> List[int]:
    """
    Boundary vertices of a disk-like patch in traversal order.

    Raises:
        MeshError: the patch has no boundary, a pinched boundary, or several loops
    """
    successor: Dict[int, int] = {}
    for a, b in sorted(classify(patch).boundary_edges):
        tri = patch.triangles[patch.edge_triangles(a, b)[0]]
        i = tri.index(a)
        start, end = (a, b) if tri[(i + 1) % 3] == b else (b, a)
        if start in successor:
            raise MeshError(f"Patch boundary is pinched at vertex {start}")
        successor[start] = end
    if not successor:
        raise MeshError("Patch has no boundary")
    first = min(successor)
    loop = [first]
    v = successor[first]
    while v != first:
        loop.append(v)
        if len(loop) > len(successor) or v not in successor:
            raise MeshError("Patch boundary is not a single loop")
        v = successor[v]
    if len(loop) != len(successor):
        raise MeshError(f"Patch boundary has several loops ({len(successor)} edges, loop of {len(loop)})")
    return loop


def project_patch_boundary(patch: TriMesh, plane: Optional[FittedPlane] = None) -> PlanarPolygon:
    """Project the patch's boundary loop onto plane, by default the least-squares plane of the patch."""
    loop = boundary_loop(patch)
    if plane is None:
        used = sorted({v for tri in patch.triangles.values() for v in tri})
        plane = fit_plane(patch.vertices[used])
    return PlanarPolygon(points=plane.to_plane(patch.vertices[loop]), vertex_ids=loop, plane=plane)


def projection_planes(patch: TriMesh, seed_normal: Optional[np.ndarray] = None) -> List[FittedPlane]:
    """
    Candidate projection planes for a patch, in order of preference.

    The plane through the patch centroid normal to the area-weighted mean
    normal comes first, then the plane normal to seed_normal, then the
    least-squares plane. Planes that cannot be built are left out.
    """
    used = sorted({v for tri in patch.triangles.values() for v in tri})
    centroid = patch.vertices[used].mean(axis=0)
    _, faces = patch.face_array()
    normals = [triangle_normals(patch.vertices, faces, normalize=False).sum(axis=0)]
    if seed_normal is not None:
        normals.append(np.asarray(seed_normal, dtype=float))
    planes = []
    for normal in normals:
        length = float(np.linalg.norm(normal))
        if length > 0:
            planes.append(plane_through(centroid, normal / length))
    try:
        planes.append(fit_plane(patch.vertices[used]))
    except RankDeficiencyError:
        pass
    return planes


def projects_one_to_one(patch: TriMesh, plane: FittedPlane) -> bool:
    """True when every patch triangle keeps a nonzero area of one common sign in the plane."""
    _, faces = patch.face_array()
    corners = plane.to_plane(patch.vertices[faces.reshape(-1)]).reshape(-1, 3, 2)
    signs = {orient2d(*tri) for tri in corners}
    return len(signs) == 1 and 0 not in signs


def choose_projection(patch: TriMesh, seed_normal: Optional[np.ndarray] = None) -> Optional[PlanarPolygon]:
    """
    Projected boundary of the patch on the first plane that gives a simple polygon.

    A plane on which the whole patch projects one-to-one is preferred over
    one that only keeps the boundary simple.

    Raises:
        MeshError: the patch boundary is not a single loop
    """
    fallback = None
    for plane in projection_planes(patch, seed_normal):
        polygon = project_patch_boundary(patch, plane)
        if not polygon.is_simple():
            continue
        if projects_one_to_one(patch, plane):
            return polygon
        if fallback is None:
            fallback = polygon
    return fallback


def polygon_area(polygon: Union[PlanarPolygon, np.ndarray]) -> float:
    """Enclosed area by the boundary integral of x dy - y dx."""
    points = polygon.points if isinstance(polygon, PlanarPolygon) else np.asarray(polygon, dtype=float)
    return abs(signed_area_2d(points))


def estimate_points(polygon: PlanarPolygon, h_tri: Optional[float] = None) -> int:
    """
    Interior point count that makes equilateral triangles of side h_tri fill the polygon.

    m_est = max(0, 1 + round(2S / (sqrt(3) h^2) - m / 2)), rounding halves up,
    with h defaulting to the polygon's mean edge length.
    """
    h = polygon.mean_edge_length() if h_tri is None else h_tri
    if h <= 0:
        raise ValueError(f"h_tri must be positive, got {h}")
    ratio = 2.0 * polygon_area(polygon) / (math.sqrt(3.0) * h * h) - polygon.num_vertices / 2.0
    return max(0, 1 + int(math.floor(ratio + 0.5)))


def scatter_points(polygon: PlanarPolygon, m: int, rng: np.random.Generator, h_tri: Optional[float] = None,
                   max_draws: Optional[int] = None) -> np.ndarray:
    """
    Draw m points uniformly inside the polygon by rejection sampling.

    Accepted points keep a clearance of CLEARANCE_FACTOR * h_tri from the
    boundary and from each other.

    Raises:
        ScatterError: the draw budget ran out before m points were accepted
    """
    if m == 0:
        return np.zeros((0, 2))
    h = polygon.mean_edge_length() if h_tri is None else h_tri
    clearance = CLEARANCE_FACTOR * h
    budget = max_draws if max_draws is not None else 2000 * (m + 1)
    path = polygon.path()
    starts = polygon.points
    ends = np.roll(polygon.points, -1, axis=0)
    lower = polygon.points.min(axis=0)
    upper = polygon.points.max(axis=0)

    accepted: List[np.ndarray] = []
    drawn = 0
    while len(accepted) < m and drawn < budget:
        batch = rng.uniform(lower, upper, size=(min(256, budget - drawn), 2))
        drawn += len(batch)
        inside = path.contains_points(batch)
        for point, is_inside in zip(batch, inside):
            if not is_inside:
                continue
            if point_segment_distance(point, starts, ends).min() < clearance:
                continue
            if accepted and np.linalg.norm(np.asarray(accepted) - point, axis=1).min() < clearance:
                continue
            accepted.append(point)
            if len(accepted) == m:
                break
    if len(accepted) < m:
        raise ScatterError(f"Placed {len(accepted)} of {m} points after {drawn} draws")
    return np.asarray(accepted)


def _legalize(points: np.ndarray, triangles: List[List[int]]) -> List[List[int]]:
    """
    Lawson flips to the Delaunay triangulation using exact predicates.

    Cocircular quadrilaterals keep the diagonal whose sorted index pair is
    lexicographically smaller.
    """
    owners: Dict[tuple, List[int]] = {}

    def attach(index):
        tri = triangles[index]
        for k in range(3):
            owners.setdefault(edge_key(tri[k], tri[(k + 1) % 3]), []).append(index)

    def detach(index):
        tri = triangles[index]
        for k in range(3):
            owners[edge_key(tri[k], tri[(k + 1) % 3])].remove(index)

    for index in range(len(triangles)):
        attach(index)
    stack = [key for key, faces in owners.items() if len(faces) == 2]
    flip_cap = 20 * len(triangles) + 100
    flips = 0

    while stack and flips < flip_cap:
        key = stack.pop()
        faces = owners.get(key, [])
        if len(faces) != 2:
            continue
        t1, t2 = faces
        tri = triangles[t1]
        i = tri.index(key[0])
        if tri[(i + 1) % 3] == key[1]:
            u, w, c = key[0], key[1], tri[(i + 2) % 3]
        else:
            u, w, c = key[1], key[0], tri[(i + 1) % 3]
        d = next(v for v in triangles[t2] if v not in key)
        side = incircle(points[u], points[w], points[c], points[d])
        flip = side > 0
        if side == 0 and edge_key(c, d) < key:
            flip = orient2d(points[u], points[d], points[c]) > 0 and orient2d(points[d], points[w], points[c]) > 0
        if not flip:
            continue
        detach(t1)
        detach(t2)
        triangles[t1] = [u, d, c]
        triangles[t2] = [d, w, c]
        attach(t1)
        attach(t2)
        flips += 1
        stack.extend([edge_key(u, c), edge_key(c, w), edge_key(w, d), edge_key(d, u)])

    if stack and flips >= flip_cap:
        logger.warning(f"[LTR] Delaunay legalization stopped at the flip cap ({flip_cap})")
    return triangles


def delaunay_2d(points: np.ndarray, boundary: Optional[PlanarPolygon] = None) -> np.ndarray:
    """
    Delaunay triangulation of planar points, optionally clipped to a polygon.

    With a boundary, points[:boundary.num_vertices] must be the polygon
    vertices in loop order. Triangles whose centroid lies outside the polygon
    are dropped and the result must reproduce the polygon as its boundary.

    Returns:
        np.ndarray: (k, 3) counter-clockwise triangles indexing points

    Raises:
        TriangulationError: fewer than 3 points, collinear input, or boundary not recovered
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise TriangulationError(f"Need at least 3 points, got {len(pts)}")
    try:
        hull = Delaunay(pts)
    except (ValueError, RuntimeError) as e:
        raise TriangulationError(f"Planar triangulation failed: {str(e)}")
    if len(hull.coplanar):
        raise TriangulationError(f"{len(hull.coplanar)} input points were not triangulated")

    triangles = []
    for a, b, c in hull.simplices.tolist():
        sign = orient2d(pts[a], pts[b], pts[c])
        if sign == 0:
            continue
        triangles.append([a, b, c] if sign > 0 else [a, c, b])
    if not triangles:
        raise TriangulationError("Input points are collinear")
    result = np.array(_legalize(pts, triangles), dtype=int)

    if boundary is None:
        return result

    m = boundary.num_vertices
    centroids = pts[result].mean(axis=1)
    result = result[boundary.path().contains_points(centroids)]
    expected = {edge_key(i, (i + 1) % m) for i in range(m)}
    counts: Dict[tuple, int] = {}
    for tri in result.tolist():
        for k in range(3):
            key = edge_key(tri[k], tri[(k + 1) % 3])
            counts[key] = counts.get(key, 0) + 1
    found = {key for key, count in counts.items() if count == 1}
    if found != expected:
        raise TriangulationError("Clipped triangulation does not reproduce the polygon boundary")
    if len({v for tri in result.tolist() for v in tri}) != len(pts):
        raise TriangulationError("Clipped triangulation dropped interior points")
    return result


def lift_to_surface(planar_triangles: np.ndarray, points: np.ndarray, patch: TriMesh,
                    polygon: PlanarPolygon, projectors: Optional[Dict[int, LocalProjector]] = None) -> TriMesh:
    """
    Map a planar triangulation of the projected patch back onto the patch surface.

    Polygon vertices keep their original 3D positions. Every other planar point
    is placed on the plane and projected through the vertex star with the
    shortest projection distance (ties go to the lower vertex id).

    Returns:
        TriMesh: candidate whose first vertices are the polygon vertices;
        parent_vertex_ids holds patch-local ids for them and -1 for new vertices

    Raises:
        LiftError: a point lies in no vertex neighborhood
    """
    m = polygon.num_vertices
    if projectors is None:
        projectors = patch_projectors(patch)
    lifted = []
    for q2 in points[m:]:
        q3 = polygon.plane.from_plane(q2)
        best = None
        for v in sorted(projectors):
            projected = projectors[v].project(q3)
            if projected is None:
                continue
            distance = float(np.linalg.norm(q3 - projected))
            if best is None or distance < best[0]:
                best = (distance, projected)
        if best is None:
            raise LiftError(f"Planar point {q2.tolist()} lies in no vertex neighborhood")
        lifted.append(best[1])

    positions = np.vstack([patch.vertices[polygon.vertex_ids]] + ([np.asarray(lifted)] if lifted else []))
    faces = np.asarray(planar_triangles, dtype=int)
    if polygon.signed_area < 0:
        faces = faces[:, ::-1]
    candidate = TriMesh(positions, faces.tolist(),
                        parent_vertex_ids=list(polygon.vertex_ids) + [-1] * len(lifted))
    return candidate


def patch_projectors(patch: TriMesh) -> Dict[int, LocalProjector]:
    """Local projections for every vertex of the patch that supports one."""
    projectors = {}
    for v in patch.vertex_ids():
        try:
            projectors[v] = LocalProjector(patch, v)
        except (NonManifoldError, RankDeficiencyError):
            continue
    return projectors


def polish(candidate: TriMesh, params: RegularityParams, nu: int, line_search: Optional[LineSearchParams] = None,
           rest_length_mode: str = 'interior') -> TriMesh:
    """Relocate the candidate's interior vertices for at most nu iterations, stopping once it is regular."""
    try:
        system = SpringSystem.from_mesh(candidate, rest_length_mode)
        if not system.free_vertices:
            return candidate
        projectors = {v: LocalProjector(candidate, v) for v in system.free_vertices}
    except (MeshError, RankDeficiencyError):
        return candidate
    for state in vrem_iterate(candidate, system, nu, line_search, projectors):
        candidate.vertices = state.positions
        if check_regularity(candidate, params).is_regular:
            break
    return candidate


def _conflicts(mesh: TriMesh, patch: TriMesh, candidate: TriMesh) -> bool:
    """True if an edge between polygon vertices would end up with more than two triangles."""
    patch_tids: Set[int] = set(patch.parent_triangle_ids or [])
    m = len([v for v in candidate.parent_vertex_ids if v >= 0])
    for a, b in candidate.edges():
        if a >= m or b >= m:
            continue
        ga = int(patch.parent_vertex_ids[candidate.parent_vertex_ids[a]])
        gb = int(patch.parent_vertex_ids[candidate.parent_vertex_ids[b]])
        outside = [t for t in mesh.edge_triangles(ga, gb) if t not in patch_tids]
        if len(outside) + len(candidate.edge_triangles(a, b)) > 2:
            return True
    return False


def candidate_fold(mesh: TriMesh, patch: TriMesh, candidate: TriMesh) -> float:
    """
    Fold cosine the mesh would have around the patch after splicing the candidate.

    Covers edges inside the candidate and the polygon edges shared with the
    triangles outside the patch; the mesh is not modified.
    """
    patch_tids: Set[int] = set(patch.parent_triangle_ids or [])
    m = len([v for v in candidate.parent_vertex_ids if v >= 0])
    offset = len(mesh.vertices)
    mapping = [int(patch.parent_vertex_ids[candidate.parent_vertex_ids[i]]) for i in range(m)]
    mapping += list(range(offset, offset + len(candidate.vertices) - m))
    points = np.vstack([mesh.vertices, candidate.vertices[m:]])
    triangles = [[mapping[v] for v in candidate.triangles[t]] for t in candidate.triangle_ids()]
    for i in range(m):
        a, b = mapping[i], mapping[(i + 1) % m]
        triangles.extend(list(mesh.triangles[t]) for t in mesh.edge_triangles(a, b) if t not in patch_tids)
    return fold_cosine(points, np.array(triangles, dtype=int))


def splice(mesh: TriMesh, patch: TriMesh, candidate: TriMesh) -> List[int]:
    """
    Replace the patch's triangles in mesh with the candidate's.

    Returns:
        list: mesh id of every candidate vertex, in candidate order
    """
    loop_local = [int(v) for v in candidate.parent_vertex_ids if v >= 0]
    boundary_global = [int(patch.parent_vertex_ids[v]) for v in loop_local]
    for tid in patch.parent_triangle_ids:
        mesh.remove_triangle(tid)
    for v in set(int(g) for g in patch.parent_vertex_ids) - set(boundary_global):
        mesh.remove_vertex(v)
    m = len(boundary_global)
    new_ids = mesh.add_vertices(candidate.vertices[m:]) if candidate.num_vertices > m else []
    mapping = boundary_global + new_ids
    for tid in candidate.triangle_ids():
        mesh.add_triangle(*(mapping[v] for v in candidate.triangles[tid]))
    return mapping


@dataclass
class RegenerationOutcome:
    """Result of ltr_run; the mesh is modified only when success is True."""

    success: bool
    rounds: int = 0
    candidates_tried: int = 0
    candidates_regular: int = 0
    chosen_count: Optional[int] = None
    min_angle: Optional[float] = None
    patch_vertices: List[int] = field(default_factory=list)
    start_vertex: Optional[int] = None


def ltr_run(mesh: TriMesh, seed_triangle: int, params: RegularityParams, mu: int = 4, nu: int = 10,
            eta: int = 3, rng: Union[np.random.Generator, int, None] = None,
            line_search: Optional[LineSearchParams] = None, rest_length_mode: str = 'interior') -> RegenerationOutcome:
    """
    Regenerate the triangulation around a violating triangle.

    The patch grows breadth-first (at most mu rounds) from a vertex of the
    seed triangle, the largest angle first; when all rounds fail the next
    vertex of the triangle is tried. Each round projects the patch boundary
    with choose_projection. A round with no simple projection fails.
    Otherwise point counts in [max(m_est - 2, 0), m_est + 2] are tried eta
    times each; every candidate is triangulated, lifted and polished for at
    most nu iterations. The regular candidate with the largest minimum angle
    replaces the patch if it beats the current patch and does not fold the
    surface below fold_floor of the patch's current fold.

    Args:
        mesh: TriMesh, updated in place on success
        seed_triangle: id of the violating triangle
        params: RegularityParams
        mu, nu, eta: round, polish-iteration and trial caps
        rng: numpy Generator or seed for scattering
        line_search: Armijo constants for polishing
        rest_length_mode: 'interior' or 'all'

    Returns:
        RegenerationOutcome
    """
    generator = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    tri = np.array([mesh.triangles[seed_triangle]])
    angles = triangle_angles(mesh.vertices, tri)[0]
    seed_normal = triangle_normals(mesh.vertices, tri)[0]
    outcome = RegenerationOutcome(success=False)

    for k in np.argsort(-angles, kind='stable'):
        start = int(tri[0][k])
        outcome.start_vertex = start
        if _regenerate_from(mesh, seed_triangle, start, seed_normal, params, mu, nu, eta, generator,
                            line_search, rest_length_mode, outcome):
            return outcome

    logger.debug(f"[LTR] Triangle {seed_triangle} not regenerated from any of its vertices")
    return outcome


def _regenerate_from(mesh: TriMesh, seed_triangle: int, start: int, seed_normal: np.ndarray,
                     params: RegularityParams, mu: int, nu: int, eta: int, generator: np.random.Generator,
                     line_search: Optional[LineSearchParams], rest_length_mode: str,
                     outcome: RegenerationOutcome) -> bool:
    seeds = {start}
    for round_index in range(1, mu + 1):
        patch = bfs_expand(mesh, seeds)
        seeds = set(int(v) for v in patch.parent_vertex_ids)
        outcome.rounds = round_index
        try:
            polygon = choose_projection(patch, seed_normal)
        except (MeshError, RankDeficiencyError) as e:
            logger.debug(f"[LTR] Round {round_index} from vertex {start} skipped: {str(e)}")
            continue
        if polygon is None:
            logger.debug(f"[LTR] Round {round_index} from vertex {start}: no plane gives a simple boundary")
            continue

        h_tri = polygon.mean_edge_length()
        estimate = estimate_points(polygon, h_tri)
        projectors = patch_projectors(patch)
        floor = fold_floor(surface_fold(mesh, patch.parent_triangle_ids))
        best = None
        best_angle = check_regularity(patch, params).min_angle
        best_count = None
        for count in range(max(estimate - COUNT_WINDOW, 0), estimate + COUNT_WINDOW + 1):
            for _ in range(1 if count == 0 else eta):
                outcome.candidates_tried += 1
                try:
                    scattered = scatter_points(polygon, count, generator, h_tri)
                    planar = np.vstack([polygon.points, scattered])
                    faces = delaunay_2d(planar, polygon)
                    candidate = lift_to_surface(faces, planar, patch, polygon, projectors)
                    candidate = polish(candidate, params, nu, line_search, rest_length_mode)
                except (ScatterError, TriangulationError, LiftError, MeshError, RankDeficiencyError) as e:
                    logger.debug(f"[LTR] Candidate with {count} points rejected: {str(e)}")
                    continue
                report = check_regularity(candidate, params)
                if not report.is_regular:
                    continue
                outcome.candidates_regular += 1
                if report.min_angle <= best_angle or _conflicts(mesh, patch, candidate):
                    continue
                if candidate_fold(mesh, patch, candidate) < floor:
                    logger.debug(f"[LTR] Candidate with {count} points rejected: folds the surface")
                    continue
                best, best_angle, best_count = candidate, report.min_angle, count

        if best is not None:
            outcome.patch_vertices = splice(mesh, patch, best)
            outcome.success = True
            outcome.chosen_count = best_count
            outcome.min_angle = best_angle
            logger.debug(f"[LTR] Triangle {seed_triangle} regenerated in round {round_index} from vertex {start} "
                         f"with {best_count} interior points (estimate {estimate})")
            return True
    return False
