"""
MARS Interface Tracker

Explicit tracking of a closed interface in three dimensions: markers are
advected with a fourth-order flow map and the triangulation is kept
(r_tiny, h_L, theta)-regular by edge split, collapse and flip, vertex
relocation and local triangulation regeneration.
"""

from .errors import CascadeError, MeshError, StepError
from .flows import make_field
from .mesh_core import QualityReport, RegularityParams, TriMesh, check_regularity
from .mesh_io import gen_sphere, read_obj, write_obj
from .stepper import StepConfig, remesh_static, simulate, step

__version__ = '1.0.1'

__all__ = [
    'CascadeError', 'MeshError', 'StepError', 'make_field', 'QualityReport', 'RegularityParams', 'TriMesh',
    'check_regularity', 'gen_sphere', 'read_obj', 'write_obj', 'StepConfig', 'remesh_static', 'simulate', 'step',
]
