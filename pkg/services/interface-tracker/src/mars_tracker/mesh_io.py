"""
Mesh Input/Output

Wavefront OBJ reading and writing for triangle meshes and the subdivided
icosahedron used as the initial sphere.
"""

import logging
import math
import os
from typing import Optional, Sequence

import numpy as np

from .errors import MeshFormatError
from .mesh_core import TriMesh, validate

# Configure logging
logger = logging.getLogger(__name__)

MAX_SUBDIVISIONS = 8

_PHI = (1.0 + math.sqrt(5.0)) / 2.0
_ICOSAHEDRON_VERTICES = [
    (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
    (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
    (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
]
_ICOSAHEDRON_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def _icosahedron():
    vertices = np.array(_ICOSAHEDRON_VERTICES, dtype=float)
    vertices /= np.linalg.norm(vertices, axis=1)[:, None]
    faces = np.array(_ICOSAHEDRON_FACES, dtype=int)
    corners = vertices[faces]
    normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    inward = np.einsum('ij,ij->i', normals, corners.mean(axis=1)) < 0
    faces[inward] = faces[inward][:, ::-1]
    return vertices, faces


def _subdivide(vertices: np.ndarray, faces: np.ndarray):
    """Split every triangle into four and push the midpoints onto the unit sphere."""
    edges = np.sort(np.vstack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    unique, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    midpoints = vertices[unique].mean(axis=1)
    midpoints /= np.linalg.norm(midpoints, axis=1)[:, None]
    mid = len(vertices) + inverse.reshape(3, -1).T
    a, b, c = faces.T
    m_ab, m_bc, m_ca = mid.T
    refined = np.vstack([
        np.column_stack([a, m_ab, m_ca]),
        np.column_stack([m_ab, b, m_bc]),
        np.column_stack([m_ca, m_bc, c]),
        np.column_stack([m_ab, m_bc, m_ca]),
    ])
    return np.vstack([vertices, midpoints]), refined


def _mean_edge_length(vertices: np.ndarray, faces: np.ndarray) -> float:
    edges = np.unique(np.sort(np.vstack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1), axis=0)
    return float(np.linalg.norm(vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1).mean())


def gen_sphere(center: Sequence[float], radius: float, target_edge_length: Optional[float] = None,
               subdivisions: Optional[int] = None) -> TriMesh:
    """
    Outward-oriented icosphere.

    Args:
        center: sphere center
        radius: sphere radius
        target_edge_length: pick the smallest subdivision level whose mean edge
            length is at most this value
        subdivisions: explicit level s, giving 10*4^s + 2 vertices and 20*4^s triangles

    Returns:
        TriMesh with every vertex at distance radius from center
    """
    if radius <= 0:
        raise ValueError(f"Radius must be positive, got {radius}")
    vertices, faces = _icosahedron()
    if subdivisions is not None:
        if subdivisions < 0:
            raise ValueError(f"subdivisions must be non-negative, got {subdivisions}")
        for _ in range(subdivisions):
            vertices, faces = _subdivide(vertices, faces)
    elif target_edge_length is not None:
        if target_edge_length <= 0:
            raise ValueError(f"target_edge_length must be positive, got {target_edge_length}")
        level = 0
        while radius * _mean_edge_length(vertices, faces) > target_edge_length and level < MAX_SUBDIVISIONS:
            vertices, faces = _subdivide(vertices, faces)
            level += 1
        logger.info(f"Icosphere level {level}: {len(vertices)} vertices for target spacing {target_edge_length:.6g}")
    positions = np.asarray(center, dtype=float) + radius * vertices
    return TriMesh(positions, faces.tolist())


def write_obj(mesh: TriMesh, path: str, comment: Optional[str] = None) -> str:
    """
    Write the mesh as OBJ with 17 significant digits per coordinate.

    Removed vertices are skipped and indices renumbered.

    Returns:
        str: the path written
    """
    compacted = mesh.copy()
    compacted.compact()
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'w') as handle:
        if comment:
            for line in comment.splitlines():
                handle.write(f"# {line}\n")
        for x, y, z in compacted.vertices:
            handle.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for tid in compacted.triangle_ids():
            a, b, c = compacted.triangles[tid]
            handle.write(f"f {a + 1} {b + 1} {c + 1}\n")
    return path


def _face_index(token: str, count: int, line_number: int) -> int:
    raw = token.split('/')[0]
    try:
        index = int(raw)
    except ValueError:
        raise MeshFormatError(f"Line {line_number}: bad face index '{token}'")
    if index < 0:
        index = count + index
    else:
        index -= 1
    if not 0 <= index < count:
        raise MeshFormatError(f"Line {line_number}: face index {token} out of range")
    return index


def read_obj(path: str, check: bool = True) -> TriMesh:
    """
    Read a triangle mesh from an OBJ file.

    Only 'v' and 'f' records are used; face tokens may be 'i', 'i/j' or
    'i/j/k' and negative indices are relative to the last vertex.

    Raises:
        MeshFormatError: non-triangle faces, bad indices, or (with check) an invalid mesh
    """
    vertices = []
    faces = []
    with open(path, 'r') as handle:
        for line_number, line in enumerate(handle, start=1):
            parts = line.split()
            if not parts or parts[0].startswith('#'):
                continue
            if parts[0] == 'v':
                try:
                    vertices.append([float(value) for value in parts[1:4]])
                except ValueError:
                    raise MeshFormatError(f"Line {line_number}: bad vertex record")
                if len(vertices[-1]) != 3:
                    raise MeshFormatError(f"Line {line_number}: vertex needs three coordinates")
            elif parts[0] == 'f':
                if len(parts) != 4:
                    raise MeshFormatError(f"Line {line_number}: only triangle faces are supported, "
                                          f"got {len(parts) - 1} vertices")
                faces.append([_face_index(token, len(vertices), line_number) for token in parts[1:]])

    try:
        mesh = TriMesh(vertices, faces)
    except ValueError as e:
        raise MeshFormatError(f"{path}: {str(e)}")
    if check:
        violations = validate(mesh)
        if violations:
            details = '; '.join(v.message for v in violations[:5])
            raise MeshFormatError(f"{path}: {len(violations)} mesh violations: {details}")
    logger.info(f"Read {mesh} from {path}")
    return mesh
