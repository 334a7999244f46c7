"""
Vertex Relocation by Energy Minimization

Interior vertices of a patch are tied together by linear springs of a
common resting length and moved along the projected negative gradient of
the spring energy. Every trial position is mapped back onto the patch
surface through the local projection of its own star, so vertices never
leave the interface. Patch boundary vertices stay fixed.

Features:
- Spring forces, total energy and its gradient (vectorized)
- Local projection onto a vertex star through a least-squares plane
- Safe initial step from the distance to the link, Armijo backtracking
- Breadth-first relocation loop that grows the patch until it is regular
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from .errors import MeshError, NonManifoldError, RankDeficiencyError
from .geometry import FittedPlane, barycentric_2d, fit_plane, point_segment_distance, triangle_angles
from .mesh_core import (RegularityParams, TriMesh, bfs_expand, check_regularity, classify, fold_floor, star_link,
                        surface_fold)

# Configure logging
logger = logging.getLogger(__name__)

REST_LENGTH_MODES = ('interior', 'all')

# Tolerance on barycentric coordinates when locating a point in a planar star
LOCATION_TOLERANCE = 1e-12


@dataclass(frozen=True)
class LineSearchParams:
    """Armijo constants: sufficient-decrease c, contraction rho, backtrack cap."""

    c: float = 1e-4
    rho: float = 0.8
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise ValueError(f"Armijo c must lie in (0, 1), got {self.c}")
        if not 0 < self.rho < 1:
            raise ValueError(f"Armijo rho must lie in (0, 1), got {self.rho}")
        if self.max_backtracks < 1:
            raise ValueError(f"max_backtracks must be positive, got {self.max_backtracks}")


def resting_length(mesh: TriMesh, mode: str = 'interior') -> float:
    """
    Mean length of the interior edges, or of all edges with mode='all'.

    Raises:
        MeshError: the selected edge set is empty
        ValueError: unknown mode
    """
    if mode not in REST_LENGTH_MODES:
        raise ValueError(f"Unknown rest length mode: {mode}")
    if mode == 'all':
        edges = mesh.edge_array()
    else:
        edges = np.array(sorted(classify(mesh).interior_edges), dtype=int).reshape(-1, 2)
    if len(edges) == 0:
        raise MeshError(f"No {mode} edges to average")
    return float(np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1).mean())


@dataclass
class SpringSystem:
    """Springs on the interior edges of a patch; free_vertices are its interior vertices."""

    resting_length: float
    springs: np.ndarray
    free_vertices: List[int]

    @classmethod
    def from_mesh(cls, mesh: TriMesh, mode: str = 'interior') -> 'SpringSystem':
        classes = classify(mesh)
        springs = np.array(sorted(classes.interior_edges), dtype=int).reshape(-1, 2)
        return cls(resting_length=resting_length(mesh, mode), springs=springs,
                   free_vertices=sorted(classes.interior_vertices))


def spring_force(p_i: np.ndarray, p_j: np.ndarray, rest: float) -> np.ndarray:
    """
    Force on p_i from the spring (p_i, p_j): ((|p_j - p_i| - R) / |p_j - p_i|) (p_j - p_i).

    Raises:
        MeshError: coincident endpoints, where the spring direction is undefined
    """
    delta = np.asarray(p_j, dtype=float) - np.asarray(p_i, dtype=float)
    length = np.linalg.norm(delta)
    if length == 0:
        raise MeshError("Spring endpoints coincide")
    return ((length - rest) / length) * delta


def _spring_terms(positions: np.ndarray, system: SpringSystem):
    i, j = system.springs[:, 0], system.springs[:, 1]
    delta = positions[j] - positions[i]
    lengths = np.linalg.norm(delta, axis=1)
    return i, j, delta, lengths


def total_energy(mesh: TriMesh, system: SpringSystem, positions: Optional[np.ndarray] = None) -> float:
    """U = 1/2 sum over springs of (length - R)^2."""
    pts = mesh.vertices if positions is None else positions
    if len(system.springs) == 0:
        return 0.0
    _, _, _, lengths = _spring_terms(pts, system)
    return 0.5 * float(np.sum((lengths - system.resting_length) ** 2))


def net_forces(positions: np.ndarray, system: SpringSystem) -> np.ndarray:
    """
    Net spring force on every vertex, (n, 3).

    Raises:
        MeshError: a spring with coincident endpoints
    """
    forces = np.zeros_like(positions)
    if len(system.springs) == 0:
        return forces
    i, j, delta, lengths = _spring_terms(positions, system)
    if not np.all(lengths > 0):
        raise MeshError(f"Spring endpoints coincide: {system.springs[lengths == 0].tolist()}")
    scale = (lengths - system.resting_length) / lengths
    pull = scale[:, None] * delta
    np.add.at(forces, i, pull)
    np.add.at(forces, j, -pull)
    return forces


def energy_gradient(mesh: TriMesh, system: SpringSystem, positions: Optional[np.ndarray] = None) -> np.ndarray:
    """dU/dp_i = -F_i for the free vertices, stacked in free_vertices order."""
    pts = mesh.vertices if positions is None else positions
    return -net_forces(pts, system)[system.free_vertices]


class LocalProjector:
    """
    Orthogonal projection onto the star of one vertex.

    A plane is fitted to the vertex's neighbors, the star is projected onto
    it, and a point is lifted back through the barycentric coordinates of the
    planar triangle that contains its projection. Star geometry is frozen at
    construction time.
    """

    def __init__(self, mesh: TriMesh, vertex: int):
        links = star_link(mesh, vertex)
        self.vertex = vertex
        self.star = links.star
        neighbors = links.link_vertices
        fit_points = mesh.vertices[neighbors]
        if len(neighbors) < 3:
            fit_points = np.vstack([fit_points, mesh.vertices[vertex]])
        self.plane: FittedPlane = fit_plane(fit_points)
        faces = np.array([mesh.triangles[t] for t in self.star], dtype=int)
        self.corners = mesh.vertices[faces].copy()
        self.planar_corners = self.plane.to_plane(self.corners)
        self.link_starts = np.array([edge[0] for edge in links.link], dtype=int)
        self.link_ends = np.array([edge[1] for edge in links.link], dtype=int)

    def locate(self, point: np.ndarray):
        """(star index, barycentric coordinates) of the containing planar triangle, or None."""
        coords = barycentric_2d(self.plane.to_plane(point), self.planar_corners)
        inside = np.all(coords >= -LOCATION_TOLERANCE, axis=1)
        hits = np.flatnonzero(inside)
        if len(hits) == 0:
            return None
        first = int(hits[0])
        return first, coords[first]

    def project(self, point: np.ndarray) -> Optional[np.ndarray]:
        """Point on the star surface, or None when the point is outside the neighborhood."""
        located = self.locate(point)
        if located is None:
            return None
        index, coords = located
        return coords @ self.corners[index]

    def link_distance(self, positions: np.ndarray) -> float:
        """Distance from the vertex's current position to its link polygon."""
        return float(point_segment_distance(positions[self.vertex], positions[self.link_starts],
                                            positions[self.link_ends]).min())


def local_projection(mesh: TriMesh, p: int, q: np.ndarray) -> Optional[np.ndarray]:
    """
    Project q onto the star of vertex p.

    Returns:
        np.ndarray or None: the projected point, None when q lies outside the neighborhood of p
    """
    return LocalProjector(mesh, p).project(np.asarray(q, dtype=float))


@dataclass
class VremState:
    """State after one accepted relocation iteration."""

    iteration: int
    positions: np.ndarray
    energy: float
    gradient_norm: float
    alpha: float


def _project_all(projectors: Sequence[LocalProjector], targets: np.ndarray) -> Optional[np.ndarray]:
    projected = np.empty_like(targets)
    for row, projector in enumerate(projectors):
        point = projector.project(targets[row])
        if point is None:
            return None
        projected[row] = point
    return projected


def vrem_iterate(mesh: TriMesh, system: SpringSystem, max_iterations: int,
                 line_search: Optional[LineSearchParams] = None,
                 projectors: Optional[Dict[int, LocalProjector]] = None) -> Iterator[VremState]:
    """
    Projected steepest descent with Armijo backtracking.

    The mesh is not modified; each yielded state carries a full copy of the
    patch positions. A trial step whose projection is not a descent
    direction is halved like one that leaves the neighborhood. Iteration
    stops early when the forces vanish or when either halving or Armijo
    backtracking exceeds its cap.

    Args:
        mesh: patch whose free vertices move
        system: SpringSystem of the patch
        max_iterations: iteration cap
        line_search: Armijo constants
        projectors: per-vertex projections; built from the current mesh when omitted

    Yields:
        VremState
    """
    line_search = line_search or LineSearchParams()
    free = system.free_vertices
    if not free or len(system.springs) == 0:
        return
    if projectors is None:
        projectors = {v: LocalProjector(mesh, v) for v in free}
    ordered = [projectors[v] for v in free]

    positions = mesh.vertices.copy()
    energy = total_energy(mesh, system, positions)
    forces = net_forces(positions, system)[free]

    for iteration in range(1, max_iterations + 1):
        force_norms = np.linalg.norm(forces, axis=1)
        if not np.any(force_norms > 0):
            return
        link_distances = np.array([projector.link_distance(positions) for projector in ordered])
        moving = force_norms > 0
        alpha0 = float(np.min(2.0 * link_distances[moving] / (5.0 * force_norms[moving])))

        # Halve the trial step until the projection stays in its neighborhood
        # and the projected move is a descent direction
        current = positions[free]
        targets = None
        slope = 0.0
        for _ in range(line_search.max_backtracks):
            targets = _project_all(ordered, current + alpha0 * forces)
            if targets is not None:
                slope = float(np.sum(-forces * (targets - current))) / alpha0
                if slope < 0:
                    break
            alpha0 *= 0.5
        if targets is None:
            logger.debug(f"[VREM] Projection left the neighborhood at iteration {iteration}")
            return
        if slope >= 0:
            logger.debug(f"[VREM] Projected direction is not a descent direction at iteration {iteration}")
            return

        alpha = alpha0
        trial = targets
        accepted = None
        for _ in range(line_search.max_backtracks + 1):
            if trial is not None:
                candidate = positions.copy()
                candidate[free] = trial
                trial_energy = total_energy(mesh, system, candidate)
                if trial_energy <= energy + line_search.c * alpha * slope:
                    accepted = candidate
                    break
            alpha *= line_search.rho
            trial = _project_all(ordered, current + alpha * forces)
        if accepted is None:
            logger.debug(f"[VREM] Backtracking exhausted at iteration {iteration}")
            return

        positions = accepted
        energy = trial_energy
        forces = net_forces(positions, system)[free]
        yield VremState(iteration=iteration, positions=positions.copy(), energy=energy,
                        gradient_norm=float(np.linalg.norm(forces)), alpha=alpha)


def _original_fold(mesh: TriMesh, tids: Sequence[int], original: Dict[int, np.ndarray]) -> float:
    positions = mesh.vertices.copy()
    for v, position in original.items():
        positions[v] = position
    return surface_fold(mesh, tids, positions)


@dataclass
class RelocationOutcome:
    """Result of vrem_run; the mesh is modified only when success is True."""

    success: bool
    rounds: int = 0
    iterations: int = 0
    energies: List[float] = field(default_factory=list)
    patch_vertices: List[int] = field(default_factory=list)


def vrem_run(mesh: TriMesh, seed_triangle: int, params: RegularityParams, mu: int = 4, nu: int = 10,
             line_search: Optional[LineSearchParams] = None, rest_length_mode: str = 'interior') -> RelocationOutcome:
    """
    Relocate vertices around a violating triangle until the patch is regular.

    The patch starts as the star of the vertex with the largest angle in the
    seed triangle and grows by one breadth-first ring per round, for at most
    mu rounds. Each round recomputes the resting length, anchors the local
    projections at the round's starting positions and runs at most nu
    iterations, stopping as soon as every edge and angle of the patch is
    regular and the patch is folded no worse than fold_floor allows.

    Args:
        mesh: TriMesh, updated in place on success
        seed_triangle: id of the violating triangle
        params: RegularityParams
        mu: maximum number of breadth-first rounds
        nu: maximum iterations per round
        line_search: Armijo constants
        rest_length_mode: 'interior' or 'all'

    Returns:
        RelocationOutcome
    """
    tri = mesh.triangles[seed_triangle]
    angles = triangle_angles(mesh.vertices, np.array([tri]))[0]
    seeds = {tri[int(np.argmax(angles))]}
    outcome = RelocationOutcome(success=False)
    original: Dict[int, np.ndarray] = {}

    for round_index in range(1, mu + 1):
        patch = bfs_expand(mesh, seeds)
        seeds = set(int(v) for v in patch.parent_vertex_ids)
        outcome.rounds = round_index
        outcome.patch_vertices = sorted(seeds)
        try:
            system = SpringSystem.from_mesh(patch, rest_length_mode)
            if not system.free_vertices:
                continue
            projectors = {v: LocalProjector(patch, v) for v in system.free_vertices}
        except (MeshError, NonManifoldError, RankDeficiencyError) as e:
            logger.debug(f"[VREM] Round {round_index} skipped: {str(e)}")
            continue

        free = system.free_vertices
        targets = patch.parent_vertex_ids[free]
        for v in targets:
            original.setdefault(int(v), mesh.vertices[v].copy())
        floor = fold_floor(_original_fold(mesh, patch.parent_triangle_ids, original))
        try:
            for state in vrem_iterate(patch, system, nu, line_search, projectors):
                outcome.iterations += 1
                outcome.energies.append(state.energy)
                patch.vertices = state.positions
                mesh.vertices[targets] = state.positions[free]
                if not check_regularity(patch, params).is_regular:
                    continue
                if surface_fold(mesh, patch.parent_triangle_ids) < floor:
                    continue
                outcome.success = True
                logger.debug(f"[VREM] Triangle {seed_triangle} fixed in round {round_index} "
                             f"after {outcome.iterations} iterations")
                return outcome
        except MeshError as e:
            logger.debug(f"[VREM] Round {round_index} stopped: {str(e)}")

    for v, position in original.items():
        mesh.vertices[v] = position
    logger.debug(f"[VREM] Triangle {seed_triangle} not fixed after {mu} rounds")
    return outcome
