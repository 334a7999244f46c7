"""
Triangle Mesh Core for the Interface Tracker Service

This module owns the oriented triangle mesh that represents the tracked
interface, together with the combinatorial queries every other stage
relies on: boundary/interior classification, stars and links, the
regularity check and breadth-first patch growth.

Vertex ids are stable until compact() is called. Triangles are stored by
id in a dict; edge and vertex adjacency are maintained incrementally so
local operations stay local.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import MeshError, NonManifoldError
from .geometry import fold_cosine, triangle_angles

# Configure logging
logger = logging.getLogger(__name__)

Edge = Tuple[int, int]
Triangle = Tuple[int, int, int]

# Relative tolerance used by the regularity predicates
REGULARITY_EPSILON = 1e-12

# Edge neighbours whose normals meet below this cosine (60 degrees) count as folded
FOLD_COSINE = 0.5


def edge_key(a: int, b: int) -> Edge:
    """Canonical (sorted) key of an undirected edge."""
    return (a, b) if a < b else (b, a)


class TriMesh:
    """
    Oriented triangle mesh with incremental adjacency.

    Features:
    - Stable integer vertex ids with removal by tombstone
    - Triangles stored by id, oriented by vertex order
    - Edge-to-triangle and vertex-to-triangle maps kept in sync
    - Optional parent ids when the mesh is a patch of a larger mesh
    """

    def __init__(self, vertices: Iterable, triangles: Iterable[Sequence[int]] = (),
                 parent_vertex_ids: Optional[Sequence[int]] = None):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 3)
        self.triangles: Dict[int, Triangle] = {}
        self._removed: Set[int] = set()
        self._edge_faces: Dict[Edge, List[int]] = {}
        self._vertex_faces: Dict[int, Set[int]] = defaultdict(set)
        self._next_tid = 0
        self.parent_vertex_ids = None if parent_vertex_ids is None else np.asarray(parent_vertex_ids, dtype=int)
        self.parent_triangle_ids: Optional[List[int]] = None
        for tri in triangles:
            self.add_triangle(*tri)

    # ------------------------------------------------------------------ queries

    @property
    def num_vertices(self) -> int:
        return len(self.vertices) - len(self._removed)

    @property
    def num_edges(self) -> int:
        return len(self._edge_faces)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def is_active(self, v: int) -> bool:
        return 0 <= v < len(self.vertices) and v not in self._removed

    def vertex_ids(self) -> List[int]:
        return [v for v in range(len(self.vertices)) if v not in self._removed]

    def triangle_ids(self) -> List[int]:
        return sorted(self.triangles)

    def edges(self) -> List[Edge]:
        return sorted(self._edge_faces)

    def has_edge(self, a: int, b: int) -> bool:
        return edge_key(a, b) in self._edge_faces

    def edge_triangles(self, a: int, b: int) -> List[int]:
        return list(self._edge_faces.get(edge_key(a, b), ()))

    def vertex_triangles(self, v: int) -> List[int]:
        return sorted(self._vertex_faces.get(v, ()))

    def neighbors(self, v: int) -> Set[int]:
        result: Set[int] = set()
        for tid in self._vertex_faces.get(v, ()):
            result.update(self.triangles[tid])
        result.discard(v)
        return result

    def position(self, v: int) -> np.ndarray:
        return self.vertices[v]

    def edge_length(self, a: int, b: int) -> float:
        return float(np.linalg.norm(self.vertices[a] - self.vertices[b]))

    def face_array(self) -> Tuple[np.ndarray, np.ndarray]:
        """Triangle ids (sorted) and their (m, 3) vertex index array."""
        tids = np.array(sorted(self.triangles), dtype=int)
        faces = np.array([self.triangles[t] for t in tids], dtype=int).reshape(-1, 3)
        return tids, faces

    def edge_array(self) -> np.ndarray:
        return np.array(sorted(self._edge_faces), dtype=int).reshape(-1, 2)

    def diameter(self) -> float:
        active = self.vertex_ids()
        if not active:
            return 0.0
        pts = self.vertices[active]
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))

    def euler_characteristic(self) -> int:
        """V - E + F over active vertices."""
        return self.num_vertices - self.num_edges + self.num_triangles

    # --------------------------------------------------------------- mutation

    def add_vertex(self, position: Sequence[float]) -> int:
        self.vertices = np.vstack([self.vertices, np.asarray(position, dtype=float).reshape(1, 3)])
        return len(self.vertices) - 1

    def add_vertices(self, positions: np.ndarray) -> List[int]:
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        first = len(self.vertices)
        self.vertices = np.vstack([self.vertices, positions])
        return list(range(first, first + len(positions)))

    def set_position(self, v: int, position: Sequence[float]) -> None:
        self.vertices[v] = position

    def add_triangle(self, a: int, b: int, c: int) -> int:
        tri = (int(a), int(b), int(c))
        if len(set(tri)) != 3:
            raise MeshError(f"Triangle has repeated vertices: {tri}")
        for v in tri:
            if not self.is_active(v):
                raise MeshError(f"Triangle {tri} references unknown vertex {v}")
        tid = self._next_tid
        self._next_tid += 1
        self.triangles[tid] = tri
        for i in range(3):
            self._edge_faces.setdefault(edge_key(tri[i], tri[(i + 1) % 3]), []).append(tid)
            self._vertex_faces[tri[i]].add(tid)
        return tid

    def remove_triangle(self, tid: int) -> Triangle:
        tri = self.triangles.pop(tid)
        for i in range(3):
            key = edge_key(tri[i], tri[(i + 1) % 3])
            faces = self._edge_faces[key]
            faces.remove(tid)
            if not faces:
                del self._edge_faces[key]
            self._vertex_faces[tri[i]].discard(tid)
        return tri

    def remove_vertex(self, v: int) -> None:
        if self._vertex_faces.get(v):
            raise MeshError(f"Vertex {v} still has incident triangles")
        self._removed.add(v)
        self._vertex_faces.pop(v, None)

    def copy(self) -> 'TriMesh':
        clone = TriMesh(self.vertices.copy())
        clone.triangles = dict(self.triangles)
        clone._removed = set(self._removed)
        clone._edge_faces = {key: list(faces) for key, faces in self._edge_faces.items()}
        clone._vertex_faces = defaultdict(set, {v: set(faces) for v, faces in self._vertex_faces.items()})
        clone._next_tid = self._next_tid
        clone.parent_vertex_ids = None if self.parent_vertex_ids is None else self.parent_vertex_ids.copy()
        clone.parent_triangle_ids = None if self.parent_triangle_ids is None else list(self.parent_triangle_ids)
        return clone

    def compact(self) -> np.ndarray:
        """
        Drop removed vertices and renumber vertices and triangles consecutively.

        Returns:
            np.ndarray: old vertex id -> new id, -1 for dropped vertices
        """
        remap = np.full(len(self.vertices), -1, dtype=int)
        keep = self.vertex_ids()
        remap[keep] = np.arange(len(keep))
        faces = [self.triangles[t] for t in sorted(self.triangles)]
        fresh = TriMesh(self.vertices[keep], [tuple(remap[list(f)]) for f in faces])
        if self.parent_vertex_ids is not None:
            fresh.parent_vertex_ids = self.parent_vertex_ids[keep]
        self.__dict__.update(fresh.__dict__)
        return remap

    def __repr__(self) -> str:
        return f"TriMesh(V={self.num_vertices}, E={self.num_edges}, F={self.num_triangles})"


@dataclass(frozen=True)
class RegularityParams:
    """Length window [r_tiny*h_l, h_l] and minimum angle theta (radians)."""

    h_l: float
    r_tiny: float = 0.1
    theta: float = math.pi / 10

    def __post_init__(self):
        if not self.h_l > 0:
            raise ValueError(f"h_l must be positive, got {self.h_l}")
        if not 0 < self.r_tiny < 1:
            raise ValueError(f"r_tiny must lie in (0, 1), got {self.r_tiny}")
        if not 0 < self.theta < math.pi / 3:
            raise ValueError(f"theta must lie in (0, pi/3), got {self.theta}")

    @property
    def min_length(self) -> float:
        return self.r_tiny * self.h_l


class CascadeTier(str, Enum):
    EMA = 'EMA'
    VREM = 'VREM'
    LTR = 'LTR'
    UNRESOLVED = 'UNRESOLVED'


@dataclass
class Resolution:
    """One violating triangle and the tier that fixed it."""

    triangle: int
    tier: CascadeTier
    min_angle_before: float
    seconds: float = 0.0


@dataclass
class QualityReport:
    """
    Regularity snapshot of a mesh.

    Violations are listed worst first: long edges by decreasing length,
    short edges and small-angle triangles by increasing measure.
    """

    min_edge_length: float
    max_edge_length: float
    min_angle: float
    long_edges: List[Edge] = field(default_factory=list)
    short_edges: List[Edge] = field(default_factory=list)
    small_angle_triangles: List[int] = field(default_factory=list)
    num_vertices: int = 0
    num_triangles: int = 0
    euler_characteristic: int = 0
    resolutions: List[Resolution] = field(default_factory=list)
    step: Optional[int] = None
    time: Optional[float] = None
    ltr_seed: Optional[int] = None

    @property
    def is_regular(self) -> bool:
        return not (self.long_edges or self.short_edges or self.small_angle_triangles)

    @property
    def violation_count(self) -> int:
        return len(self.long_edges) + len(self.short_edges) + len(self.small_angle_triangles)

    def tier_counts(self) -> Dict[str, int]:
        counts = {tier.value: 0 for tier in CascadeTier}
        for resolution in self.resolutions:
            counts[CascadeTier(resolution.tier).value] += 1
        return counts

    def as_row(self) -> Dict[str, object]:
        """Flat record for CSV output; contains no wall-clock values."""
        row: Dict[str, object] = {
            'step': self.step,
            'time': '' if self.time is None else f"{self.time:.12g}",
            'num_vertices': self.num_vertices,
            'num_triangles': self.num_triangles,
            'euler': self.euler_characteristic,
            'min_edge_length': f"{self.min_edge_length:.12g}",
            'max_edge_length': f"{self.max_edge_length:.12g}",
            'min_angle_deg': f"{math.degrees(self.min_angle):.10g}",
            'long_edges': len(self.long_edges),
            'short_edges': len(self.short_edges),
            'small_angles': len(self.small_angle_triangles),
            'ltr_seed': '' if self.ltr_seed is None else self.ltr_seed,
        }
        for tier, count in self.tier_counts().items():
            row[f'resolved_{tier.lower()}'] = count
        return row


@dataclass
class Classification:
    boundary_edges: Set[Edge]
    interior_edges: Set[Edge]
    boundary_vertices: Set[int]
    interior_vertices: Set[int]


@dataclass
class StarLink:
    """
    Fan of triangles around a vertex and the opposite edges.

    link[i] is the edge of star[i] opposite the center, oriented as it is
    traversed by that triangle. For an interior vertex the link is a closed
    cycle; for a boundary vertex it is an open chain.
    """

    vertex: int
    star: List[int]
    link: List[Edge]
    closed: bool

    @property
    def link_vertices(self) -> List[int]:
        ordered = [edge[0] for edge in self.link]
        if not self.closed and self.link:
            ordered.append(self.link[-1][1])
        return ordered


@dataclass(frozen=True)
class MeshViolation:
    kind: str
    simplex: Tuple[int, ...]
    message: str


def classify(mesh: TriMesh) -> Classification:
    """
    Split edges and vertices into boundary and interior sets.

    An edge is boundary if exactly one triangle contains it. A vertex is
    boundary if it is incident to a boundary edge and interior if it has
    triangles but no boundary edge; isolated vertices belong to neither set.
    """
    boundary_edges: Set[Edge] = set()
    interior_edges: Set[Edge] = set()
    for key, faces in mesh._edge_faces.items():
        if len(faces) == 1:
            boundary_edges.add(key)
        else:
            interior_edges.add(key)
    boundary_vertices = {v for key in boundary_edges for v in key}
    interior_vertices: Set[int] = set()
    for v in mesh.vertex_ids():
        if v in boundary_vertices:
            continue
        if mesh._vertex_faces.get(v):
            interior_vertices.add(v)
    return Classification(boundary_edges, interior_edges, boundary_vertices, interior_vertices)


def star_link(mesh: TriMesh, v: int) -> StarLink:
    """
    Star and link of a vertex.

    Args:
        mesh: TriMesh
        v: vertex id

    Returns:
        StarLink with the fan in traversal order

    Raises:
        NonManifoldError: isolated vertex, or a star that is not one fan
    """
    if not mesh.is_active(v):
        raise NonManifoldError(f"Vertex {v} is not in the mesh")
    tids = mesh.vertex_triangles(v)
    if not tids:
        raise NonManifoldError(f"Vertex {v} is isolated")

    successor: Dict[int, Tuple[int, int]] = {}
    for tid in tids:
        a, b, c = mesh.triangles[tid]
        if v == a:
            u, w = b, c
        elif v == b:
            u, w = c, a
        else:
            u, w = a, b
        if u in successor:
            raise NonManifoldError(f"Star of vertex {v} is not a single fan")
        successor[u] = (w, tid)

    heads = set(successor) - {w for w, _ in successor.values()}
    if len(heads) > 1:
        raise NonManifoldError(f"Star of vertex {v} has {len(heads)} separate fans")
    closed = not heads
    start = min(successor) if closed else heads.pop()

    link: List[Edge] = []
    star: List[int] = []
    u = start
    while u in successor and len(link) < len(successor):
        w, tid = successor[u]
        link.append((u, w))
        star.append(tid)
        u = w
        if closed and u == start:
            break
    if len(link) != len(successor) or (closed and u != start):
        raise NonManifoldError(f"Star of vertex {v} is not a single fan")
    return StarLink(vertex=v, star=star, link=link, closed=closed)


def check_regularity(mesh: TriMesh, params: RegularityParams) -> QualityReport:
    """
    Report every edge outside [r_tiny*h_l, h_l] and every triangle with an angle below theta.

    Comparisons use a tolerance of REGULARITY_EPSILON times the mesh diameter
    for lengths and REGULARITY_EPSILON radians for angles.
    """
    tids, faces = mesh.face_array()
    edges = mesh.edge_array()
    tol = REGULARITY_EPSILON * max(mesh.diameter(), params.h_l)

    report = QualityReport(
        min_edge_length=0.0, max_edge_length=0.0, min_angle=math.pi,
        num_vertices=mesh.num_vertices, num_triangles=mesh.num_triangles,
        euler_characteristic=mesh.euler_characteristic(),
    )
    if len(edges):
        lengths = np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1)
        report.min_edge_length = float(lengths.min())
        report.max_edge_length = float(lengths.max())
        long_idx = np.flatnonzero(lengths > params.h_l + tol)
        short_idx = np.flatnonzero(lengths < params.min_length - tol)
        long_idx = long_idx[np.argsort(-lengths[long_idx], kind='stable')]
        short_idx = short_idx[np.argsort(lengths[short_idx], kind='stable')]
        report.long_edges = [tuple(map(int, edges[i])) for i in long_idx]
        report.short_edges = [tuple(map(int, edges[i])) for i in short_idx]
    if len(faces):
        min_angles = triangle_angles(mesh.vertices, faces).min(axis=1)
        report.min_angle = float(min_angles.min())
        small = np.flatnonzero(min_angles < params.theta - REGULARITY_EPSILON)
        small = small[np.argsort(min_angles[small], kind='stable')]
        report.small_angle_triangles = [int(tids[i]) for i in small]
    return report


def triangle_min_angle(mesh: TriMesh, tid: int) -> float:
    return float(triangle_angles(mesh.vertices, np.array([mesh.triangles[tid]])).min())


def ring_triangles(mesh: TriMesh, tids: Iterable[int]) -> List[int]:
    """The given triangles plus every triangle sharing an edge with one of them."""
    ring: Set[int] = set()
    for tid in tids:
        tri = mesh.triangles[tid]
        ring.add(tid)
        for i in range(3):
            ring.update(mesh._edge_faces.get(edge_key(tri[i], tri[(i + 1) % 3]), ()))
    return sorted(ring)


def surface_fold(mesh: TriMesh, tids: Iterable[int], positions: Optional[np.ndarray] = None) -> float:
    """
    Smallest normal cosine across the edges of the given triangles and their neighbours.

    positions overrides mesh.vertices, for trial placements that are not
    written to the mesh yet.
    """
    points = mesh.vertices if positions is None else positions
    ring = ring_triangles(mesh, tids)
    if not ring:
        return 1.0
    return fold_cosine(points, np.array([mesh.triangles[t] for t in ring]))


def fold_floor(baseline: float) -> float:
    """Lowest fold cosine an operation may leave: FOLD_COSINE, or the baseline if already below it."""
    return min(FOLD_COSINE, baseline)


def submesh(mesh: TriMesh, tids: Iterable[int]) -> TriMesh:
    """
    Patch made of the given triangles, renumbered locally.

    parent_vertex_ids maps local vertex ids to mesh ids; parent_triangle_ids
    lists the mesh triangle ids in local triangle order.
    """
    tids = sorted(set(tids))
    used = sorted({v for t in tids for v in mesh.triangles[t]})
    local = {v: i for i, v in enumerate(used)}
    patch = TriMesh(mesh.vertices[used], [tuple(local[v] for v in mesh.triangles[t]) for t in tids],
                    parent_vertex_ids=used)
    patch.parent_triangle_ids = tids
    return patch


def bfs_expand(mesh: TriMesh, seeds: Iterable[int]) -> TriMesh:
    """
    One breadth-first round: the patch of all triangles incident to a seed vertex.

    Feeding the patch's parent_vertex_ids back in grows the patch by one ring.
    """
    tids: Set[int] = set()
    for v in seeds:
        tids.update(mesh._vertex_faces.get(int(v), ()))
    return submesh(mesh, tids)


def validate(mesh: TriMesh) -> List[MeshViolation]:
    """
    Check closure, manifoldness, orientation and duplicate simplexes.

    Returns:
        list: MeshViolation entries, empty for a valid mesh
    """
    violations: List[MeshViolation] = []
    seen: Dict[frozenset, int] = {}
    for tid in mesh.triangle_ids():
        tri = mesh.triangles[tid]
        missing = [v for v in tri if not mesh.is_active(v)]
        if missing:
            violations.append(MeshViolation('closure', tri, f"Triangle {tid} references missing vertices {missing}"))
        key = frozenset(tri)
        if key in seen:
            violations.append(MeshViolation('duplicate', tri, f"Triangles {seen[key]} and {tid} share all vertices"))
        else:
            seen[key] = tid

    edge_ok = True
    for key, faces in mesh._edge_faces.items():
        if len(faces) > 2:
            edge_ok = False
            violations.append(MeshViolation('non_manifold_edge', key, f"Edge {key} is shared by {len(faces)} triangles"))
        elif len(faces) == 2:
            directions = []
            for tid in faces:
                tri = mesh.triangles[tid]
                i = tri.index(key[0])
                directions.append(tri[(i + 1) % 3] == key[1])
            if directions[0] == directions[1]:
                edge_ok = False
                violations.append(MeshViolation('orientation', key, f"Triangles {faces} traverse edge {key} the same way"))

    if edge_ok:
        for v in mesh.vertex_ids():
            if not mesh._vertex_faces.get(v):
                continue
            try:
                star_link(mesh, v)
            except NonManifoldError as e:
                violations.append(MeshViolation('non_manifold_vertex', (v,), str(e)))
    return violations
