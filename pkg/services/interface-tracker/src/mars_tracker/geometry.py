"""
Geometry kernels shared by the mesh operations

Vectorized triangle measures, the dropped-axis least-squares plane fit,
planar point location and the orientation/incircle predicates used by the
planar triangulator. The predicates evaluate in floating point first and
fall back to exact rational arithmetic when the result is within the
rounding error bound.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from .errors import RankDeficiencyError

# Configure logging
logger = logging.getLogger(__name__)

# Relative rank threshold on the diagonal of R in the plane fit
RANK_TOLERANCE = 1e-10

# Static error bounds for double precision (epsilon = 2**-53)
_EPS = 2.0 ** -53
_CCW_BOUND = (3.0 + 16.0 * _EPS) * _EPS
_ICC_BOUND = (10.0 + 96.0 * _EPS) * _EPS


def triangle_angles(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """
    Interior angles of every triangle.

    Args:
        points: (n, 3) vertex positions
        triangles: (m, 3) vertex indices

    Returns:
        (m, 3) array, column j holding the angle at corner j
    """
    tris = np.asarray(triangles, dtype=int).reshape(-1, 3)
    if len(tris) == 0:
        return np.zeros((0, 3))
    corners = points[tris]
    angles = np.empty((len(tris), 3))
    for j in range(3):
        origin = corners[:, j]
        u = corners[:, (j + 1) % 3] - origin
        v = corners[:, (j + 2) % 3] - origin
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        dot = np.einsum('ij,ij->i', u, v)
        angles[:, j] = np.arctan2(cross, dot)
    return angles


def triangle_normals(points: np.ndarray, triangles: np.ndarray, normalize: bool = True) -> np.ndarray:
    """Right-hand normals of the given triangles; zero for degenerate ones."""
    tris = np.asarray(triangles, dtype=int).reshape(-1, 3)
    corners = points[tris]
    normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    if normalize:
        norms = np.linalg.norm(normals, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        normals = normals / safe[:, None]
    return normals


def fold_cosine(points: np.ndarray, triangles: np.ndarray) -> float:
    """Smallest normal cosine over pairs of listed triangles sharing an edge; 1.0 if none do."""
    tris = np.asarray(triangles, dtype=int).reshape(-1, 3)
    normals = triangle_normals(points, tris)
    owners: Dict[Tuple[int, int], List[int]] = {}
    worst = 1.0
    for i, tri in enumerate(tris):
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            key = (a, b) if a < b else (b, a)
            for j in owners.get(key, ()):
                worst = min(worst, float(normals[i] @ normals[j]))
            owners.setdefault(key, []).append(i)
    return worst


def point_segment_distance(point: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from one point to each segment [starts[i], ends[i]]."""
    starts = np.atleast_2d(starts)
    ends = np.atleast_2d(ends)
    direction = ends - starts
    length_sq = np.einsum('ij,ij->i', direction, direction)
    offset = point - starts
    t = np.einsum('ij,ij->i', offset, direction) / np.where(length_sq > 0, length_sq, 1.0)
    t = np.clip(np.where(length_sq > 0, t, 0.0), 0.0, 1.0)
    closest = starts + t[:, None] * direction
    return np.linalg.norm(point - closest, axis=1)


def barycentric_2d(point: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """
    Barycentric coordinates of a planar point in each of several planar triangles.

    Args:
        point: (2,) query
        triangles: (m, 3, 2) corner coordinates

    Returns:
        (m, 3) coordinates; rows of degenerate triangles are NaN
    """
    a = triangles[:, 0]
    v0 = triangles[:, 1] - a
    v1 = triangles[:, 2] - a
    v2 = point - a
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    with np.errstate(divide='ignore', invalid='ignore'):
        l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / det
        l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / det
    coords = np.stack([1.0 - l1 - l2, l1, l2], axis=1)
    coords[det == 0] = np.nan
    return coords


def signed_area_2d(polygon: np.ndarray) -> float:
    """Signed area of a closed planar polygon by the boundary (shoelace) integral."""
    x = polygon[:, 0]
    y = polygon[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True)
class FittedPlane:
    """
    Plane x_k = A*x_u + B*x_v + C over the two axes kept after dropping axis k.

    The kept axes (u, v) are the remaining axes in increasing order.
    """

    dropped_axis: int
    coefficients: Tuple[float, float, float]

    @property
    def free_axes(self) -> Tuple[int, int]:
        u, v = [axis for axis in range(3) if axis != self.dropped_axis]
        return u, v

    @property
    def raw_normal(self) -> np.ndarray:
        a, b, _ = self.coefficients
        u, v = self.free_axes
        normal = np.zeros(3)
        normal[self.dropped_axis] = 1.0
        normal[u] = -a
        normal[v] = -b
        return normal

    @property
    def normal(self) -> np.ndarray:
        raw = self.raw_normal
        return raw / np.linalg.norm(raw)

    @property
    def origin(self) -> np.ndarray:
        point = np.zeros(3)
        point[self.dropped_axis] = self.coefficients[2]
        return point

    def basis(self) -> Tuple[np.ndarray, np.ndarray]:
        """Orthonormal in-plane axes (e1, e2) with e1 x e2 along the normal."""
        u, _ = self.free_axes
        e1 = np.zeros(3)
        e1[u] = 1.0
        e1[self.dropped_axis] = self.coefficients[0]
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(self.normal, e1)
        return e1, e2

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        raw = self.raw_normal
        return (np.asarray(points) @ raw - self.coefficients[2]) / np.linalg.norm(raw)

    def project(self, points: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto the plane; accepts (3,) or (n, 3)."""
        pts = np.asarray(points, dtype=float)
        return pts - np.multiply.outer(self.signed_distance(pts), self.normal)

    def to_plane(self, points: np.ndarray) -> np.ndarray:
        """In-plane coordinates of the orthogonal projection; (3,) -> (2,), (n, 3) -> (n, 2)."""
        e1, e2 = self.basis()
        offset = np.asarray(points, dtype=float) - self.origin
        return np.stack([offset @ e1, offset @ e2], axis=-1)

    def from_plane(self, coords: np.ndarray) -> np.ndarray:
        """Inverse of to_plane for points lying on the plane."""
        e1, e2 = self.basis()
        coords = np.asarray(coords, dtype=float)
        return self.origin + np.multiply.outer(coords[..., 0], e1) + np.multiply.outer(coords[..., 1], e2)


def fit_plane(points: np.ndarray) -> FittedPlane:
    """
    Least-squares plane through a point cloud.

    The axis with the smallest coordinate span is dropped (ties prefer z,
    then x, then y) and the remaining linear least-squares problem is solved
    by QR factorization.

    Args:
        points: (n, 3) array with n >= 3

    Returns:
        FittedPlane

    Raises:
        RankDeficiencyError: fewer than three points, or points collinear or coincident
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise RankDeficiencyError(f"Plane fit needs at least 3 points, got {len(pts)}")

    spans = np.ptp(pts, axis=0)
    if spans[2] <= spans[0] and spans[2] <= spans[1]:
        dropped = 2
    elif spans[0] <= spans[1]:
        dropped = 0
    else:
        dropped = 1
    u, v = [axis for axis in range(3) if axis != dropped]

    center_u = pts[:, u].mean()
    center_v = pts[:, v].mean()
    design = np.column_stack([pts[:, u] - center_u, pts[:, v] - center_v, np.ones(len(pts))])
    q, r = np.linalg.qr(design)
    diagonal = np.abs(np.diag(r))
    if diagonal.min() <= RANK_TOLERANCE * diagonal.max():
        raise RankDeficiencyError(f"Plane fit is rank deficient (diag(R) = {diagonal.tolist()})")

    a, b, c_centered = solve_triangular(r, q.T @ pts[:, dropped])
    c = c_centered - a * center_u - b * center_v
    return FittedPlane(dropped_axis=dropped, coefficients=(float(a), float(b), float(c)))


def plane_through(point: np.ndarray, normal: np.ndarray) -> FittedPlane:
    """
    Plane through a point with the given normal direction.

    The dropped axis is the one the normal is most aligned with, so the
    plane is never parallel to it. The returned normal may point opposite
    to the given one.

    Raises:
        RankDeficiencyError: zero normal
    """
    n = np.asarray(normal, dtype=float)
    p = np.asarray(point, dtype=float)
    dropped = int(np.argmax(np.abs(n)))
    if not abs(n[dropped]) > 0:
        raise RankDeficiencyError("Plane normal is zero")
    u, v = [axis for axis in range(3) if axis != dropped]
    a = -n[u] / n[dropped]
    b = -n[v] / n[dropped]
    c = float(n @ p) / n[dropped]
    return FittedPlane(dropped_axis=dropped, coefficients=(float(a), float(b), float(c)))


def _exact_orient(a, b, c) -> int:
    ax, ay = Fraction(a[0]), Fraction(a[1])
    det = (Fraction(b[0]) - ax) * (Fraction(c[1]) - ay) - (Fraction(b[1]) - ay) * (Fraction(c[0]) - ax)
    return (det > 0) - (det < 0)


def orient2d(a, b, c) -> int:
    """Sign of the signed area of (a, b, c): +1 counter-clockwise, -1 clockwise, 0 collinear."""
    left = (b[0] - a[0]) * (c[1] - a[1])
    right = (b[1] - a[1]) * (c[0] - a[0])
    det = left - right
    if abs(det) > _CCW_BOUND * (abs(left) + abs(right)):
        return 1 if det > 0 else -1
    return _exact_orient(a, b, c)


def _exact_incircle(a, b, c, d) -> int:
    rows = []
    for p in (a, b, c):
        dx = Fraction(p[0]) - Fraction(d[0])
        dy = Fraction(p[1]) - Fraction(d[1])
        rows.append((dx, dy, dx * dx + dy * dy))
    (a0, a1, a2), (b0, b1, b2), (c0, c1, c2) = rows
    det = a0 * (b1 * c2 - b2 * c1) - a1 * (b0 * c2 - b2 * c0) + a2 * (b0 * c1 - b1 * c0)
    return (det > 0) - (det < 0)


def incircle(a, b, c, d) -> int:
    """
    Position of d relative to the circumcircle of counter-clockwise (a, b, c).

    Returns:
        +1 inside, -1 outside, 0 on the circle
    """
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    bc = bdx * cdy - bdy * cdx
    ca = cdx * ady - cdy * adx
    ab = adx * bdy - ady * bdx
    det = alift * bc + blift * ca + clift * ab
    permanent = (
        (abs(bdx * cdy) + abs(bdy * cdx)) * alift
        + (abs(cdx * ady) + abs(cdy * adx)) * blift
        + (abs(adx * bdy) + abs(ady * bdx)) * clift
    )
    if abs(det) > _ICC_BOUND * permanent:
        return 1 if det > 0 else -1
    return _exact_incircle(a, b, c, d)
