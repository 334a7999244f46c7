"""
MARS Time Stepper

One step carries the interface mesh from t to t + k:

1. advect every marker with the discrete flow map and keep its preimage
2. split long edges on the preimage mesh and advect the new markers,
   sweeping until no edge exceeds h_L
3. collapse short edges, shortest first
4. enforce the minimum angle with the cascade flip -> relocation -> regeneration

Each step ends with a regular mesh and a QualityReport; the CostLedger
accumulates which tier resolved each violation and how long each tier ran.
"""

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Set, Tuple, Union

import numpy as np

from .ema import choose_kept_vertex, edge_collapse, edge_flip, edge_split
from .errors import CascadeError, IllegalCollapseError, StepError
from .flows import DiscreteFlowMap, VelocityField, time_levels
from .geometry import triangle_angles
from .ltr import ltr_run
from .mesh_core import (REGULARITY_EPSILON, CascadeTier, Edge, QualityReport, RegularityParams, Resolution,
                        TriMesh, bfs_expand, check_regularity)
from .metrics import CostLedger
from .vrem import REST_LENGTH_MODES, LineSearchParams, vrem_run

# Configure logging
logger = logging.getLogger(__name__)

FlowMap = Callable[[np.ndarray, float, float], np.ndarray]


@dataclass(frozen=True)
class StepConfig:
    """Regularity window, time step and cascade caps for one run."""

    params: RegularityParams
    time_step: float
    mu: int = 4
    nu: int = 10
    eta: int = 3
    line_search: LineSearchParams = field(default_factory=LineSearchParams)
    seed: int = 0
    max_sweeps: int = 10
    rest_length_mode: str = 'interior'
    enable_vrem: bool = True
    enable_ltr: bool = True

    def __post_init__(self):
        if not self.time_step > 0:
            raise ValueError(f"time_step must be positive, got {self.time_step}")
        for name in ('mu', 'nu', 'eta', 'max_sweeps'):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.rest_length_mode not in REST_LENGTH_MODES:
            raise ValueError(f"Unknown rest length mode: {self.rest_length_mode}")

    @property
    def full_cascade(self) -> bool:
        return self.enable_vrem and self.enable_ltr


@dataclass
class PreimageMap:
    """Position at the start of the step of every vertex of the advected mesh."""

    positions: np.ndarray
    time: float

    def extend(self, positions: np.ndarray) -> None:
        self.positions = np.vstack([self.positions, np.asarray(positions, dtype=float).reshape(-1, 3)])

    def mesh_at_start(self, mesh: TriMesh) -> TriMesh:
        """The advected mesh's connectivity placed at the preimage positions."""
        start = mesh.copy()
        start.vertices = self.positions.copy()
        return start


@dataclass
class SimulationResult:
    mesh: TriMesh
    reports: List[QualityReport]
    ledger: CostLedger


def _as_flow_map(flow: Union[VelocityField, FlowMap]) -> FlowMap:
    return DiscreteFlowMap(flow) if isinstance(flow, VelocityField) else flow


def advect(mesh: TriMesh, flow_map: FlowMap, t: float, k: float) -> Tuple[TriMesh, PreimageMap]:
    """Move every marker from t to t + k; returns the moved copy and the preimages."""
    moved = mesh.copy()
    active = mesh.vertex_ids()
    if active:
        moved.vertices[active] = flow_map(mesh.vertices[active], t, k)
    return moved, PreimageMap(positions=mesh.vertices.copy(), time=t)


def _long_edges(mesh: TriMesh, h_l: float) -> List[Tuple[Edge, float]]:
    edges = mesh.edge_array()
    if len(edges) == 0:
        return []
    lengths = np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1)
    tol = REGULARITY_EPSILON * max(mesh.diameter(), h_l)
    picked = np.flatnonzero(lengths > h_l + tol)
    picked = picked[np.argsort(-lengths[picked], kind='stable')]
    return [((int(edges[i, 0]), int(edges[i, 1])), float(lengths[i])) for i in picked]


def augment_long_edges(preimages: PreimageMap, mesh: TriMesh, flow_map: FlowMap, t: float, k: float,
                       params: RegularityParams, max_sweeps: int = 10) -> int:
    """
    Split every edge longer than h_L, working on the preimage mesh.

    An edge of length L at t + k gets n = ceil(L / h_L) equal pieces of its
    preimage; the new preimage markers are advected and the triangles on the
    edge are fanned from their opposite vertices. Sweeps repeat until no
    long edge remains.

    Returns:
        int: number of edges split

    Raises:
        StepError: long edges remain after max_sweeps sweeps
    """
    splits = 0
    for sweep in range(max_sweeps + 1):
        long_edges = _long_edges(mesh, params.h_l)
        if not long_edges:
            return splits
        if sweep == max_sweeps:
            raise StepError(f"{len(long_edges)} long edges remain after {max_sweeps} augmentation sweeps")
        for (a, b), _ in long_edges:
            if not mesh.has_edge(a, b):
                continue
            n_sub = max(1, math.ceil(mesh.edge_length(a, b) / params.h_l))
            if n_sub == 1:
                continue
            start_a, start_b = preimages.positions[a], preimages.positions[b]
            fractions = np.arange(1, n_sub)[:, None] / n_sub
            start_points = start_a + fractions * (start_b - start_a)
            edge_split(mesh, a, b, n_sub, flow_map(start_points, t, k))
            preimages.extend(start_points)
            splits += 1
        logger.debug(f"[STEP] Augmentation sweep {sweep + 1}: {len(long_edges)} long edges")
    return splits


def collapse_short_edges(mesh: TriMesh, params: RegularityParams) -> List[Edge]:
    """
    Collapse edges shorter than r_tiny * h_L, shortest first.

    The default endpoint is tried first, then the other one. Collapses that
    would create an edge longer than h_L are rejected.

    Returns:
        list: short edges no collapse could remove, for the angle cascade
    """
    tol = REGULARITY_EPSILON * max(mesh.diameter(), params.h_l)
    limit = params.min_length - tol
    stuck: Set[Edge] = set()
    while True:
        edges = mesh.edge_array()
        if len(edges) == 0:
            break
        lengths = np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1)
        order = np.argsort(lengths, kind='stable')
        short = [(int(edges[i, 0]), int(edges[i, 1])) for i in order if lengths[i] < limit]
        short = [edge for edge in short if edge not in stuck]
        if not short:
            break
        progress = False
        for a, b in short:
            if not mesh.has_edge(a, b) or mesh.edge_length(a, b) >= limit:
                continue
            keep = choose_kept_vertex(mesh, a, b)
            try:
                edge_collapse(mesh, a, b, keep=keep, max_length=params.h_l)
                progress = True
                continue
            except IllegalCollapseError:
                pass
            try:
                edge_collapse(mesh, a, b, keep=b if keep == a else a, max_length=params.h_l)
                progress = True
            except IllegalCollapseError as e:
                logger.debug(f"[EMA] Short edge {(a, b)} escalated: {str(e)}")
                stuck.add((a, b))
        if not progress:
            break
    return sorted(edge for edge in stuck if mesh.has_edge(*edge))


def _triangle_score(mesh: TriMesh, tid: int, params: RegularityParams) -> Optional[float]:
    """Minimum angle of a violating triangle, None when the triangle is regular."""
    tri = mesh.triangles[tid]
    pts = mesh.vertices[list(tri)]
    min_angle = float(triangle_angles(mesh.vertices, np.array([tri])).min())
    lengths = np.linalg.norm(pts - np.roll(pts, -1, axis=0), axis=1)
    tol = REGULARITY_EPSILON * params.h_l
    if min_angle < params.theta - REGULARITY_EPSILON:
        return min_angle
    if lengths.max() > params.h_l + tol or lengths.min() < params.min_length - tol:
        return min_angle
    return None


def _push_around(heap: list, mesh: TriMesh, vertices, params: RegularityParams) -> None:
    tids: Set[int] = set()
    for v in vertices:
        if mesh.is_active(int(v)):
            tids.update(mesh.vertex_triangles(int(v)))
    for tid in tids:
        score = _triangle_score(mesh, tid, params)
        if score is not None:
            heapq.heappush(heap, (score, tid))


def enforce_theta(mesh: TriMesh, config: StepConfig, rng: Optional[np.random.Generator] = None,
                  ledger: Optional[CostLedger] = None) -> List[Resolution]:
    """
    Resolve every remaining violation, worst triangle first.

    Each violating triangle goes through the tiers in order: an edge flip,
    then vertex relocation seeded at the triangle (or at the worst triangle
    the flip left behind), then local regeneration. The tier that succeeds
    is recorded.

    Returns:
        list: Resolution per violating triangle

    Raises:
        CascadeError: every tier failed and the full cascade is enabled
    """
    params = config.params
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    ledger = ledger if ledger is not None else CostLedger()
    report = check_regularity(mesh, params)
    heap: list = []
    seeded: Set[int] = set(report.small_angle_triangles)
    for a, b in report.short_edges + report.long_edges:
        seeded.update(mesh.edge_triangles(a, b))
    for tid in seeded:
        score = _triangle_score(mesh, tid, params)
        if score is not None:
            heap.append((score, tid))
    heapq.heapify(heap)

    resolutions: List[Resolution] = []
    abandoned: Set[int] = set()
    deferred: Set[int] = set()
    retrying = False
    guard = 20 * len(heap) + 1000
    while guard > 0:
        if not heap:
            if retrying or not deferred:
                break
            # One more pass over the failures, now that their surroundings have changed
            retrying = True
            _push_around(heap, mesh, [v for t in deferred if t in mesh.triangles for v in mesh.triangles[t]], params)
            continue
        guard -= 1
        _, tid = heapq.heappop(heap)
        if tid not in mesh.triangles or tid in abandoned or (tid in deferred and not retrying):
            continue
        before = _triangle_score(mesh, tid, params)
        if before is None:
            continue

        started = time.perf_counter()
        tier, touched = _resolve(mesh, tid, config, rng, ledger)
        elapsed = time.perf_counter() - started
        if tier is None:
            if config.full_cascade and not retrying:
                deferred.add(tid)
                _push_around(heap, mesh, touched, params)
                logger.debug(f"[STEP] Triangle {tid} deferred to the second pass")
                continue
            if config.full_cascade:
                patch = bfs_expand(mesh, mesh.triangles[tid] if tid in mesh.triangles else touched)
                raise CascadeError(f"No tier could fix triangle {tid} (min angle {math.degrees(before):.3f} deg)",
                                   triangle=tid, patch=patch)
            abandoned.add(tid)
            ledger.record(CascadeTier.UNRESOLVED)
            resolutions.append(Resolution(tid, CascadeTier.UNRESOLVED, before, elapsed))
            logger.warning(f"[STEP] Triangle {tid} left unresolved (min angle {math.degrees(before):.3f} deg)")
            continue

        ledger.record(tier)
        resolutions.append(Resolution(tid, tier, before, elapsed))
        _push_around(heap, mesh, touched, params)
    return resolutions


def _resolve(mesh: TriMesh, tid: int, config: StepConfig, rng: np.random.Generator,
             ledger: CostLedger) -> Tuple[Optional[CascadeTier], List[int]]:
    params = config.params
    started = time.perf_counter()
    decision = edge_flip(mesh, tid, params)
    ledger.add_time(CascadeTier.EMA, time.perf_counter() - started)

    target = tid
    if decision.applied:
        touched = sorted({v for t in decision.new_triangles for v in mesh.triangles[t]})
        remaining = [(score, t) for t in decision.new_triangles
                     for score in [_triangle_score(mesh, t, params)] if score is not None]
        if not remaining:
            return CascadeTier.EMA, touched
        target = min(remaining)[1]

    if config.enable_vrem:
        started = time.perf_counter()
        outcome = vrem_run(mesh, target, params, config.mu, config.nu, config.line_search, config.rest_length_mode)
        ledger.add_time(CascadeTier.VREM, time.perf_counter() - started)
        if outcome.success:
            return CascadeTier.VREM, outcome.patch_vertices

    if config.enable_ltr:
        started = time.perf_counter()
        outcome = ltr_run(mesh, target, params, config.mu, config.nu, config.eta, rng, config.line_search,
                          config.rest_length_mode)
        ledger.add_time(CascadeTier.LTR, time.perf_counter() - started)
        if outcome.success:
            return CascadeTier.LTR, outcome.patch_vertices

    if decision.applied:
        logger.debug(f"[STEP] Flip kept for triangle {tid}; residual triangle {target} unresolved")
        return None, touched
    return None, []


def _finish(mesh: TriMesh, config: StepConfig, resolutions: List[Resolution], euler: int,
            step_index: Optional[int], t_end: Optional[float]) -> QualityReport:
    mesh.compact()
    report = check_regularity(mesh, config.params)
    report.resolutions = resolutions
    report.step = step_index
    report.time = t_end
    report.ltr_seed = config.seed
    if report.euler_characteristic != euler:
        raise StepError(f"Euler characteristic changed from {euler} to {report.euler_characteristic}")
    if not report.is_regular and config.full_cascade:
        raise StepError(f"Mesh not regular after the cascade: {len(report.long_edges)} long, "
                        f"{len(report.short_edges)} short, {len(report.small_angle_triangles)} small-angle")
    return report


def step(mesh: TriMesh, flow: Union[VelocityField, FlowMap], t: float, config: StepConfig,
         k: Optional[float] = None, rng: Optional[np.random.Generator] = None,
         ledger: Optional[CostLedger] = None, step_index: Optional[int] = None) -> Tuple[TriMesh, QualityReport]:
    """
    Advance a regular mesh from t to t + k.

    Args:
        mesh: regular TriMesh at time t; not modified
        flow: VelocityField or a flow map (points, t, k) -> points
        t: start time
        config: StepConfig
        k: step size, defaults to config.time_step; k = 0 leaves the geometry unchanged
        rng: generator for regeneration; seeded from config.seed when omitted
        ledger: CostLedger to accumulate into
        step_index: recorded in the report

    Returns:
        tuple: (mesh at t + k, QualityReport)

    Raises:
        StepError: augmentation did not converge, topology changed, or violations remain
    """
    k = config.time_step if k is None else k
    if k < 0:
        raise ValueError(f"Step size must be non-negative, got {k}")
    flow_map = _as_flow_map(flow)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    ledger = ledger if ledger is not None else CostLedger()
    euler = mesh.euler_characteristic()

    moved, preimages = advect(mesh, flow_map, t, k)
    splits = augment_long_edges(preimages, moved, flow_map, t, k, config.params, config.max_sweeps)
    stuck = collapse_short_edges(moved, config.params)
    resolutions = enforce_theta(moved, config, rng, ledger)
    report = _finish(moved, config, resolutions, euler, step_index, t + k)
    logger.info(f"[STEP] {step_index if step_index is not None else '-'} t={t + k:.6g} "
                f"V={report.num_vertices} F={report.num_triangles} splits={splits} "
                f"escalated={len(stuck)} tiers={report.tier_counts()}")
    return moved, report


def simulate(mesh: TriMesh, flow: VelocityField, period: float, config: StepConfig,
             on_step: Optional[Callable[[int, float, TriMesh, QualityReport], None]] = None) -> SimulationResult:
    """
    Run steps of size config.time_step from 0 to period, shortening the last one.

    Args:
        mesh: regular TriMesh at t = 0
        flow: VelocityField
        period: final time
        config: StepConfig
        on_step: called after every step with (index, time, mesh, report)

    Returns:
        SimulationResult
    """
    flow_map = DiscreteFlowMap(flow)
    rng = np.random.default_rng(config.seed)
    ledger = CostLedger()
    reports: List[QualityReport] = []
    levels = time_levels(period, config.time_step)
    logger.info(f"[STEP] Simulating {flow.name} to T={period} in {len(levels)} steps "
                f"(k={config.time_step:.6g}, h_L={config.params.h_l:.6g})")
    for index, (t, k) in enumerate(levels, start=1):
        mesh, report = step(mesh, flow_map, t, config, k=k, rng=rng, ledger=ledger, step_index=index)
        reports.append(report)
        if on_step is not None:
            on_step(index, t + k, mesh, report)
    return SimulationResult(mesh=mesh, reports=reports, ledger=ledger)


def remesh_static(mesh: TriMesh, config: StepConfig, ledger: Optional[CostLedger] = None) -> Tuple[TriMesh, QualityReport]:
    """
    Make a mesh regular without moving it.

    Long edges are split into equal pieces in sweeps, then short edges are
    collapsed and the angle cascade runs.
    """
    params = config.params
    work = mesh.copy()
    ledger = ledger if ledger is not None else CostLedger()
    euler = work.euler_characteristic()
    for sweep in range(config.max_sweeps + 1):
        long_edges = _long_edges(work, params.h_l)
        if not long_edges:
            break
        if sweep == config.max_sweeps:
            raise StepError(f"{len(long_edges)} long edges remain after {config.max_sweeps} sweeps")
        for (a, b), _ in long_edges:
            if work.has_edge(a, b):
                edge_split(work, a, b, max(1, math.ceil(work.edge_length(a, b) / params.h_l)))
    collapse_short_edges(work, params)
    resolutions = enforce_theta(work, config, np.random.default_rng(config.seed), ledger)
    report = _finish(work, config, resolutions, euler, None, None)
    return work, report
