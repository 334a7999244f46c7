"""
Accuracy and Cost Metrics

Sphere errors for the time-reversal benchmarks, convergence orders over
halving grids, mesh quality statistics and the per-tier cost ledger.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ResolutionError
from .geometry import triangle_angles
from .mesh_core import CascadeTier, RegularityParams, TriMesh

# Configure logging
logger = logging.getLogger(__name__)

ANGLE_BIN_DEGREES = 5.0


def e1(mesh: TriMesh, center: Sequence[float], radius: float) -> float:
    """Mean absolute radial deviation of the markers from the sphere (C, R)."""
    active = mesh.vertex_ids()
    if not active:
        raise ValueError("Mesh has no vertices")
    distances = np.linalg.norm(mesh.vertices[active] - np.asarray(center, dtype=float), axis=1)
    return float(np.mean(np.abs(distances - radius)))


def eg(e1_value: float, radius: float) -> float:
    """Volume-style error 4 pi R^2 E1."""
    return 4.0 * math.pi * radius * radius * e1_value


@dataclass
class ErrorRecord:
    h: float
    h_l: float
    e1: float
    eg: float
    num_vertices: int
    num_triangles: int

    def as_row(self) -> Dict[str, object]:
        return {
            'h': f"{self.h:.12g}",
            'h_l': f"{self.h_l:.12g}",
            'e1': f"{self.e1:.12e}",
            'eg': f"{self.eg:.12e}",
            'num_vertices': self.num_vertices,
            'num_triangles': self.num_triangles,
        }


def sphere_errors(mesh: TriMesh, center: Sequence[float], radius: float, h: float, h_l: float) -> ErrorRecord:
    value = e1(mesh, center, radius)
    return ErrorRecord(h=h, h_l=h_l, e1=value, eg=eg(value, radius),
                       num_vertices=mesh.num_vertices, num_triangles=mesh.num_triangles)


def convergence_order(records: Sequence[Union[Tuple[float, float], ErrorRecord]],
                      use_eg: bool = False) -> List[Optional[float]]:
    """
    Orders log2(E_coarse / E_fine) between consecutive grids.

    Args:
        records: (h, E) pairs or ErrorRecords, coarse to fine, each h half the previous
        use_eg: take Eg instead of E1 from ErrorRecords

    Returns:
        list: one order per consecutive pair; None where either error is zero

    Raises:
        ResolutionError: consecutive grid sizes do not halve
    """
    pairs = []
    for record in records:
        if isinstance(record, ErrorRecord):
            pairs.append((record.h, record.eg if use_eg else record.e1))
        else:
            pairs.append((float(record[0]), float(record[1])))

    orders: List[Optional[float]] = []
    for (h_coarse, e_coarse), (h_fine, e_fine) in zip(pairs, pairs[1:]):
        if h_fine <= 0 or not math.isclose(h_coarse / h_fine, 2.0, rel_tol=1e-9):
            raise ResolutionError(f"Grid sizes {h_coarse} and {h_fine} do not halve")
        if e_fine == 0 or e_coarse == 0:
            orders.append(None)
        else:
            orders.append(math.log2(e_coarse / e_fine))
    return orders


@dataclass
class QualityStats:
    min_angle: float
    mean_angle: float
    min_edge_length: float
    max_edge_length: float
    mean_edge_length: float
    num_vertices: int
    num_edges: int
    num_triangles: int
    euler_characteristic: int
    angle_histogram: Dict[str, List[float]] = field(default_factory=dict)
    edge_histogram: Dict[str, List[float]] = field(default_factory=dict)


def quality_stats(mesh: TriMesh, params: Optional[RegularityParams] = None) -> QualityStats:
    """
    Angle and edge statistics with histograms.

    Angles are binned in degrees; edge lengths are normalised by h_L when
    params are given.
    """
    _, faces = mesh.face_array()
    edges = mesh.edge_array()
    angles = np.degrees(triangle_angles(mesh.vertices, faces)).ravel() if len(faces) else np.zeros(0)
    lengths = (np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1)
               if len(edges) else np.zeros(0))

    angle_counts, angle_edges = np.histogram(angles, bins=np.arange(0.0, 180.0 + ANGLE_BIN_DEGREES,
                                                                    ANGLE_BIN_DEGREES))
    scaled = lengths / params.h_l if params is not None else lengths
    upper = max(1.0, float(scaled.max())) if len(scaled) else 1.0
    edge_counts, edge_bins = np.histogram(scaled, bins=20, range=(0.0, upper))

    return QualityStats(
        min_angle=float(angles.min()) if len(angles) else 0.0,
        mean_angle=float(angles.mean()) if len(angles) else 0.0,
        min_edge_length=float(lengths.min()) if len(lengths) else 0.0,
        max_edge_length=float(lengths.max()) if len(lengths) else 0.0,
        mean_edge_length=float(lengths.mean()) if len(lengths) else 0.0,
        num_vertices=mesh.num_vertices,
        num_edges=mesh.num_edges,
        num_triangles=mesh.num_triangles,
        euler_characteristic=mesh.euler_characteristic(),
        angle_histogram={'counts': angle_counts.tolist(), 'bin_edges': angle_edges.tolist()},
        edge_histogram={'counts': edge_counts.tolist(), 'bin_edges': edge_bins.tolist()},
    )


class CostLedger:
    """
    Per-tier tally of resolved violations and measured wall time.

    Times come from time.perf_counter and are therefore not reproducible;
    they are kept apart from the counts for that reason.
    """

    TIERS = tuple(tier.value for tier in CascadeTier)

    def __init__(self):
        self.counts: Dict[str, int] = {tier: 0 for tier in self.TIERS}
        self.seconds: Dict[str, float] = {tier: 0.0 for tier in self.TIERS}

    def record(self, tier: Union[CascadeTier, str], seconds: float = 0.0) -> None:
        key = CascadeTier(tier).value
        self.counts[key] += 1
        self.seconds[key] += seconds

    def add_time(self, tier: Union[CascadeTier, str], seconds: float) -> None:
        self.seconds[CascadeTier(tier).value] += seconds

    def merge(self, other: 'CostLedger') -> 'CostLedger':
        for tier in self.TIERS:
            self.counts[tier] += other.counts[tier]
            self.seconds[tier] += other.seconds[tier]
        return self

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def count_shares(self) -> Dict[str, float]:
        """Percentage of violations per tier; zeros when nothing was recorded."""
        total = self.total
        return {tier: (100.0 * count / total if total else 0.0) for tier, count in self.counts.items()}

    def time_shares(self) -> Dict[str, float]:
        total = sum(self.seconds.values())
        return {tier: (100.0 * seconds / total if total else 0.0) for tier, seconds in self.seconds.items()}

    def count_rows(self) -> List[Dict[str, object]]:
        shares = self.count_shares()
        return [{'tier': tier, 'count': self.counts[tier], 'percent': f"{shares[tier]:.6f}"} for tier in self.TIERS]

    def summary(self) -> Dict[str, object]:
        return {
            'counts': dict(self.counts),
            'count_percent': self.count_shares(),
            'seconds': dict(self.seconds),
            'time_percent': self.time_shares(),
        }
