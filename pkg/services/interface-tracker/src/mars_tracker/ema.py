"""
Edge Manipulation Operations

Split, collapse and flip on a TriMesh. Each operation is local: it touches
the triangles around one edge and keeps the orientation of every
surviving or new triangle consistent with the triangles it replaces.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import IllegalCollapseError, MeshError, RankDeficiencyError
from .geometry import fit_plane, fold_cosine, orient2d, triangle_angles, triangle_normals
from .mesh_core import Edge, RegularityParams, TriMesh, edge_key, fold_floor

# Configure logging
logger = logging.getLogger(__name__)

# Largest normal rotation tolerated by a collapse, expressed as a cosine
COLLAPSE_NORMAL_COSINE = 0.0


def is_boundary_vertex(mesh: TriMesh, v: int) -> bool:
    """True if v touches an edge with a single triangle."""
    for u in mesh.neighbors(v):
        if len(mesh.edge_triangles(u, v)) == 1:
            return True
    return False


def edge_split(mesh: TriMesh, a: int, b: int, n_sub: int,
               new_positions: Optional[Sequence[Sequence[float]]] = None) -> List[int]:
    """
    Split edge (a, b) into n_sub subedges and fan-retriangulate its triangles.

    Args:
        mesh: TriMesh, modified in place
        a, b: edge endpoints
        n_sub: number of subedges, >= 1
        new_positions: positions of the n_sub - 1 new vertices ordered from a to b;
            equidistant points on the segment when omitted

    Returns:
        list: new vertex ids ordered from a to b
    """
    if n_sub < 1:
        raise ValueError(f"n_sub must be >= 1, got {n_sub}")
    tids = mesh.edge_triangles(a, b)
    if not tids:
        raise MeshError(f"Edge {(a, b)} is not in the mesh")
    if n_sub == 1:
        return []

    if new_positions is None:
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        fractions = np.arange(1, n_sub)[:, None] / n_sub
        new_positions = pa + fractions * (pb - pa)
    new_positions = np.asarray(new_positions, dtype=float).reshape(-1, 3)
    if len(new_positions) != n_sub - 1:
        raise ValueError(f"Expected {n_sub - 1} new positions, got {len(new_positions)}")

    new_ids = mesh.add_vertices(new_positions)
    chain = [a] + new_ids + [b]
    for tid in tids:
        tri = mesh.remove_triangle(tid)
        i = tri.index(a)
        if tri[(i + 1) % 3] == b:
            ordered, opposite = chain, tri[(i + 2) % 3]
        else:
            ordered, opposite = chain[::-1], tri[(i + 1) % 3]
        for j in range(n_sub):
            mesh.add_triangle(ordered[j], ordered[j + 1], opposite)
    return new_ids


def choose_kept_vertex(mesh: TriMesh, a: int, b: int) -> int:
    a_boundary = is_boundary_vertex(mesh, a)
    b_boundary = is_boundary_vertex(mesh, b)
    if a_boundary and not b_boundary:
        return a
    if b_boundary and not a_boundary:
        return b
    return min(a, b)


def edge_collapse(mesh: TriMesh, a: int, b: int, keep: Optional[int] = None,
                  max_length: Optional[float] = None) -> int:
    """
    Collapse edge (a, b) into one of its endpoints.

    The kept vertex defaults to the boundary endpoint, otherwise the lower id.
    The collapse is rejected when it breaks the link condition, duplicates a
    triangle, rotates a surviving normal by more than pi/2, degenerates a
    triangle, moves a boundary vertex off the boundary, or (with max_length)
    creates an edge longer than max_length.

    Returns:
        int: id of the kept vertex

    Raises:
        IllegalCollapseError: the collapse is rejected; the mesh is unchanged
    """
    edge_tids = mesh.edge_triangles(a, b)
    if not edge_tids:
        raise MeshError(f"Edge {(a, b)} is not in the mesh")
    if keep is None:
        keep = choose_kept_vertex(mesh, a, b)
    if keep not in (a, b):
        raise ValueError(f"Kept vertex {keep} is not an endpoint of {(a, b)}")
    discard = b if keep == a else a

    keep_boundary = is_boundary_vertex(mesh, keep)
    discard_boundary = is_boundary_vertex(mesh, discard)
    if len(edge_tids) > 1 and keep_boundary and discard_boundary:
        raise IllegalCollapseError(f"Interior edge {(a, b)} joins two boundary vertices")
    if discard_boundary and not keep_boundary:
        raise IllegalCollapseError(f"Collapse of {(a, b)} would pull boundary vertex {discard} inside")

    opposite = {v for t in edge_tids for v in mesh.triangles[t] if v not in (a, b)}
    common = mesh.neighbors(a) & mesh.neighbors(b)
    if common != opposite:
        raise IllegalCollapseError(f"Collapse of {(a, b)} violates the link condition")

    shared = set(edge_tids)
    affected = [t for t in mesh.vertex_triangles(discard) if t not in shared]
    keep_sets = {frozenset(mesh.triangles[t]) for t in mesh.vertex_triangles(keep) if t not in shared}
    p_keep = mesh.vertices[keep]
    replacements = []
    for tid in affected:
        tri = mesh.triangles[tid]
        new_tri = tuple(keep if v == discard else v for v in tri)
        if frozenset(new_tri) in keep_sets:
            raise IllegalCollapseError(f"Collapse of {(a, b)} would duplicate triangle {new_tri}")
        old_pts = mesh.vertices[list(tri)]
        new_pts = old_pts.copy()
        new_pts[tri.index(discard)] = p_keep
        old_normal = np.cross(old_pts[1] - old_pts[0], old_pts[2] - old_pts[0])
        new_normal = np.cross(new_pts[1] - new_pts[0], new_pts[2] - new_pts[0])
        new_norm = np.linalg.norm(new_normal)
        if new_norm <= 1e-14 * max(np.linalg.norm(old_normal), 1e-300):
            raise IllegalCollapseError(f"Collapse of {(a, b)} degenerates triangle {tid}")
        cosine = float(old_normal @ new_normal) / (np.linalg.norm(old_normal) * new_norm)
        if cosine < COLLAPSE_NORMAL_COSINE:
            raise IllegalCollapseError(f"Collapse of {(a, b)} flips the normal of triangle {tid}")
        if max_length is not None:
            for v in new_tri:
                if v != keep and np.linalg.norm(mesh.vertices[v] - p_keep) > max_length:
                    raise IllegalCollapseError(f"Collapse of {(a, b)} creates an edge longer than {max_length}")
        replacements.append((tid, new_tri))

    for tid in edge_tids:
        mesh.remove_triangle(tid)
    for tid, new_tri in replacements:
        mesh.remove_triangle(tid)
        mesh.add_triangle(*new_tri)
    mesh.remove_vertex(discard)
    return keep


@dataclass
class FlipDecision:
    """Outcome of an edge_flip attempt."""

    applied: bool
    edge: Optional[Edge] = None
    new_triangles: Tuple[int, ...] = ()
    old_min_angle: float = 0.0
    new_min_angle: float = 0.0
    reason: str = ''
    candidates: List[Edge] = field(default_factory=list)


def _quad(mesh: TriMesh, a: int, b: int):
    """(u, w, c, d, t1, t2): t1 traverses u->w with apex c, t2 traverses w->u with apex d."""
    tids = mesh.edge_triangles(a, b)
    if len(tids) != 2:
        return None
    t1, t2 = tids
    tri = mesh.triangles[t1]
    i = tri.index(a)
    if tri[(i + 1) % 3] == b:
        u, w, c = a, b, tri[(i + 2) % 3]
    else:
        u, w, c = b, a, tri[(i + 1) % 3]
    other = mesh.triangles[t2]
    d = next(v for v in other if v not in (a, b))
    return u, w, c, d, t1, t2


def flip_edge(mesh: TriMesh, a: int, b: int) -> Tuple[int, int]:
    """
    Replace the diagonal (a, b) of its quadrilateral by the other diagonal.

    Returns:
        tuple: ids of the two new triangles

    Raises:
        MeshError: boundary edge, or the other diagonal already exists
    """
    quad = _quad(mesh, a, b)
    if quad is None:
        raise MeshError(f"Edge {(a, b)} does not have two triangles")
    u, w, c, d, t1, t2 = quad
    if c == d or mesh.has_edge(c, d):
        raise MeshError(f"Flipping {(a, b)} would duplicate edge {(c, d)}")
    mesh.remove_triangle(t1)
    mesh.remove_triangle(t2)
    return mesh.add_triangle(u, d, c), mesh.add_triangle(d, w, c)


def _evaluate_flip(mesh: TriMesh, a: int, b: int, params: Optional[RegularityParams]):
    """Return (ok, old_min, new_min, reason) for flipping edge (a, b)."""
    quad = _quad(mesh, a, b)
    if quad is None:
        return False, 0.0, 0.0, 'boundary edge'
    u, w, c, d, t1, t2 = quad
    if c == d or mesh.has_edge(c, d):
        return False, 0.0, 0.0, 'diagonal exists'

    pts = mesh.vertices[[u, w, c, d]]
    try:
        plane = fit_plane(pts)
    except RankDeficiencyError:
        return False, 0.0, 0.0, 'degenerate quadrilateral'
    pu, pw, pc, pd = plane.to_plane(pts)
    signs = {orient2d(pu, pw, pc), orient2d(pw, pu, pd), orient2d(pu, pd, pc), orient2d(pd, pw, pc)}
    if len(signs) != 1 or 0 in signs:
        return False, 0.0, 0.0, 'not strictly convex'

    positions = mesh.vertices
    old_min = float(triangle_angles(positions, np.array([[u, w, c], [w, u, d]])).min())
    new_min = float(triangle_angles(positions, np.array([[u, d, c], [d, w, c]])).min())
    if params is not None:
        diagonal = float(np.linalg.norm(positions[c] - positions[d]))
        if diagonal > params.h_l or diagonal < params.min_length:
            return False, old_min, new_min, 'diagonal outside length window'
    if new_min <= old_min:
        return False, old_min, new_min, 'no angle gain'

    old_tris = np.array([[u, w, c], [w, u, d]])
    new_tris = np.array([[u, d, c], [d, w, c]])
    turn = triangle_normals(positions, new_tris) @ triangle_normals(positions, old_tris).T
    if turn.min() < COLLAPSE_NORMAL_COSINE:
        return False, old_min, new_min, 'normal reversal'
    outer = [t for p, q in ((w, c), (c, u), (u, d), (d, w))
             for t in mesh.edge_triangles(p, q) if t not in (t1, t2)]
    outer_tris = [mesh.triangles[t] for t in outer]
    old_fold = fold_cosine(positions, np.vstack([old_tris] + outer_tris))
    new_fold = fold_cosine(positions, np.vstack([new_tris] + outer_tris))
    if new_fold < fold_floor(old_fold):
        return False, old_min, new_min, 'fold'
    return True, old_min, new_min, 'ok'


def edge_flip(mesh: TriMesh, tid: int, params: Optional[RegularityParams] = None) -> FlipDecision:
    """
    Try to flip an edge of the triangle's smallest angle.

    Both edges bounding the smallest angle are candidates. A candidate is
    applicable when its quadrilateral, projected to the least-squares plane
    of its four vertices, is strictly convex, the flip strictly increases the
    minimum angle of the pair, and (with params) the new diagonal stays
    inside the length window. A flip is also refused when a new normal turns
    against a replaced one, or when it folds the pair against its outer
    neighbours below fold_floor of the current fold. The applicable
    candidate with the larger new minimum angle is applied.

    Returns:
        FlipDecision
    """
    tri = mesh.triangles[tid]
    angles = triangle_angles(mesh.vertices, np.array([tri]))[0]
    j = int(np.argmin(angles))
    candidates = [edge_key(tri[j], tri[(j + 1) % 3]), edge_key(tri[(j + 2) % 3], tri[j])]

    best = None
    reasons = []
    for a, b in candidates:
        ok, old_min, new_min, reason = _evaluate_flip(mesh, a, b, params)
        reasons.append(f"{(a, b)}: {reason}")
        if ok and (best is None or new_min > best[2]):
            best = ((a, b), old_min, new_min)

    if best is None:
        logger.debug(f"[EMA] No flip for triangle {tid}: {'; '.join(reasons)}")
        return FlipDecision(applied=False, reason='; '.join(reasons), candidates=candidates)

    (a, b), old_min, new_min = best
    new_tids = flip_edge(mesh, a, b)
    logger.debug(f"[EMA] Flipped {(a, b)} for triangle {tid}: min angle {old_min:.4f} -> {new_min:.4f}")
    return FlipDecision(applied=True, edge=(a, b), new_triangles=new_tids, old_min_angle=old_min,
                        new_min_angle=new_min, reason='ok', candidates=candidates)
