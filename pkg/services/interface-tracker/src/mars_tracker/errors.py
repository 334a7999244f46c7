"""
Exceptions for the Interface Tracker Service

Mesh-level problems derive from ValueError, algorithmic failures from
RuntimeError. Local failures inside the regularization cascade are plain
return values; only the cases below escape to callers.
"""

from typing import Optional, Any


class MeshError(ValueError):
    """Invalid mesh construction or use."""


class NonManifoldError(MeshError):
    """A vertex whose star is not a single fan, or an isolated vertex."""


class IllegalCollapseError(MeshError):
    """An edge collapse that would break the link condition or flip normals."""


class MeshFormatError(MeshError):
    """Malformed mesh file."""


class RankDeficiencyError(ValueError):
    """Least-squares plane fit on collinear or coincident points."""


class ResolutionError(ValueError):
    """Grid sizes of a convergence study that do not halve."""


class TriangulationError(RuntimeError):
    """Planar triangulation could not be built or did not recover its boundary."""


class ScatterError(RuntimeError):
    """Rejection sampling ran out of retries."""


class LiftError(RuntimeError):
    """A planar point lies in no local projection neighborhood."""


class StepError(RuntimeError):
    """A time step that could not produce a regular mesh."""


class CascadeError(StepError):
    """
    Every enabled tier failed on a violating triangle.

    Attributes:
        triangle: id of the triangle that could not be fixed
        patch: submesh around it, kept for inspection
    """

    def __init__(self, message: str, triangle: Optional[int] = None, patch: Optional[Any] = None):
        super().__init__(message)
        self.triangle = triangle
        self.patch = patch
