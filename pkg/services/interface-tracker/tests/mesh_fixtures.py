"""Small meshes shared by the test modules."""

import math
import os
import sys

import numpy as np

sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))

from mars_tracker.mesh_core import TriMesh


def hexagon_ring(radius: float = 1.0) -> np.ndarray:
    angles = np.arange(6) * math.pi / 3
    return np.column_stack([radius * np.cos(angles), radius * np.sin(angles), np.zeros(6)])


def hex_fan(center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Center vertex 0 and ring vertices 1..6, triangles (0, i, i+1) counter-clockwise."""
    vertices = np.vstack([np.asarray(center, dtype=float), hexagon_ring()])
    triangles = [(0, i, i % 6 + 1) for i in range(1, 7)]
    return TriMesh(vertices, triangles)


def offset_hex_fan() -> TriMesh:
    """Hex fan whose center sits at (0.75, 0, 0); triangles 0 and 5 have a 14 degree angle."""
    return hex_fan((0.75, 0.0, 0.0))


def octahedron() -> TriMesh:
    vertices = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    triangles = [(0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4), (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5)]
    return TriMesh(vertices, triangles)


def tetrahedron() -> TriMesh:
    vertices = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]
    triangles = [(0, 1, 2), (0, 3, 1), (0, 2, 3), (1, 3, 2)]
    return TriMesh(vertices, triangles)


def dome(rings: int = 3, segments: int = 12) -> TriMesh:
    """Upper unit hemisphere: pole 0, then rings of equal size down to the equator, outward oriented."""
    vertices = [(0.0, 0.0, 1.0)]
    for k in range(1, rings + 1):
        polar = 0.5 * math.pi * k / rings
        for j in range(segments):
            azimuth = 2 * math.pi * j / segments
            vertices.append((math.sin(polar) * math.cos(azimuth), math.sin(polar) * math.sin(azimuth), math.cos(polar)))

    def ring(k, j):
        return 1 + (k - 1) * segments + j % segments

    triangles = [(0, ring(1, j), ring(1, j + 1)) for j in range(segments)]
    for k in range(1, rings):
        for j in range(segments):
            a, b = ring(k, j), ring(k, j + 1)
            c, d = ring(k + 1, j + 1), ring(k + 1, j)
            triangles += [(a, d, c), (a, c, b)]
    return TriMesh(np.array(vertices), triangles)
