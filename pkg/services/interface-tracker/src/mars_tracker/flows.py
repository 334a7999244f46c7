"""
Velocity Fields and Discrete Flow Map

Benchmark velocity fields on the unit cube and the classical fourth-order
Runge-Kutta map that carries interface markers from t to t + k. All fields
are evaluated on (n, 3) arrays.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

# Configure logging
logger = logging.getLogger(__name__)

DEFAULT_PERIOD = 3.0

Evaluator = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class VelocityField:
    """
    Time-dependent velocity u(x, t).

    Attributes:
        name: registry key
        evaluator: (points, t) -> velocities, both (n, 3)
        sup_norm: upper bound of |u| over the domain and the run
        period: T for time-reversing fields, None otherwise
    """

    name: str
    evaluator: Evaluator
    sup_norm: float
    period: float = DEFAULT_PERIOD

    def __call__(self, points: np.ndarray, t: float) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.evaluator(pts, t)


def vortical_shear(points: np.ndarray, t: float, period: float = DEFAULT_PERIOD) -> np.ndarray:
    """Shear vortex in the xy-plane with a radial z-drift, reversed at t = T/2."""
    x, y = points[:, 0], points[:, 1]
    c = math.cos(math.pi * t / period)
    r = np.sqrt((x - 0.5) ** 2 + (y - 0.5) ** 2)
    return np.column_stack([
        2.0 * np.sin(math.pi * x) ** 2 * np.sin(2 * math.pi * y) * c,
        -np.sin(2 * math.pi * x) * np.sin(math.pi * y) ** 2 * c,
        (1.0 - 2.0 * r) ** 2 * c,
    ])


def deformation(points: np.ndarray, t: float, period: float = DEFAULT_PERIOD) -> np.ndarray:
    """Divergence-free three-dimensional deformation, reversed at t = T/2."""
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    c = math.cos(math.pi * t / period)
    two_pi = 2 * math.pi
    return np.column_stack([
        2.0 * np.sin(math.pi * x) ** 2 * np.sin(two_pi * y) * np.sin(two_pi * z) * c,
        -np.sin(math.pi * y) ** 2 * np.sin(two_pi * z) * np.sin(two_pi * x) * c,
        -np.sin(math.pi * z) ** 2 * np.sin(two_pi * x) * np.sin(two_pi * y) * c,
    ])


def rigid_rotation(points: np.ndarray, t: float, angular_speed: float = 2 * math.pi) -> np.ndarray:
    """Solid-body rotation about the vertical axis through (0.5, 0.5)."""
    x, y = points[:, 0] - 0.5, points[:, 1] - 0.5
    return np.column_stack([-angular_speed * y, angular_speed * x, np.zeros(len(points))])


def uniform_translation(points: np.ndarray, t: float, velocity=(1.0, 0.0, 0.0)) -> np.ndarray:
    return np.tile(np.asarray(velocity, dtype=float), (len(points), 1))


def make_field(name: str, period: float = DEFAULT_PERIOD) -> VelocityField:
    """
    Build a registered velocity field.

    Args:
        name: 'vortical_shear', 'deformation', 'rigid_rotation' or 'uniform_translation'
        period: T for the time-reversing fields

    Raises:
        ValueError: unknown field name
    """
    if name == 'vortical_shear':
        return VelocityField(name, lambda p, t: vortical_shear(p, t, period), sup_norm=2.0, period=period)
    if name == 'deformation':
        return VelocityField(name, lambda p, t: deformation(p, t, period), sup_norm=2.0, period=period)
    if name == 'rigid_rotation':
        # |u| <= 2*pi*|r| with |r| <= sqrt(2)/2 inside the unit cube
        return VelocityField(name, rigid_rotation, sup_norm=math.pi * math.sqrt(2.0), period=period)
    if name == 'uniform_translation':
        return VelocityField(name, uniform_translation, sup_norm=1.0, period=period)
    raise ValueError(f"Unknown velocity field: {name}")


FIELD_NAMES = ('vortical_shear', 'deformation', 'rigid_rotation', 'uniform_translation')


def rk4_step(field: VelocityField, points: np.ndarray, t: float, k: float) -> np.ndarray:
    """
    Classical fourth-order Runge-Kutta map from t to t + k.

    Args:
        field: VelocityField
        points: (n, 3) positions at time t
        t: start time
        k: step size; k = 0 returns a copy

    Returns:
        np.ndarray: positions at t + k
    """
    pts = np.asarray(points, dtype=float)
    if k == 0 or len(pts) == 0:
        return pts.copy()
    k1 = field(pts, t)
    k2 = field(pts + 0.5 * k * k1, t + 0.5 * k)
    k3 = field(pts + 0.5 * k * k2, t + 0.5 * k)
    k4 = field(pts + k * k3, t + k)
    return pts + (k / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class DiscreteFlowMap:
    """RK4 flow map of a velocity field; also reports markers that leave the unit cube."""

    def __init__(self, field: VelocityField):
        self.field = field

    def __call__(self, points: np.ndarray, t: float, k: float) -> np.ndarray:
        moved = rk4_step(self.field, points, t, k)
        outside = np.any((moved < 0.0) | (moved > 1.0), axis=1) if len(moved) else np.zeros(0, dtype=bool)
        if outside.any():
            logger.warning(f"[FLOW] {int(outside.sum())} markers left the unit cube at t={t + k:.6g}")
        return moved


def time_step(h: float, courant: float, field: VelocityField) -> float:
    """k = Cr * h / |u|_inf."""
    if h <= 0 or courant <= 0:
        raise ValueError(f"h and courant must be positive, got h={h}, courant={courant}")
    return courant * h / field.sup_norm


def time_levels(period: float, k: float) -> List[Tuple[float, float]]:
    """
    Step start times and sizes up to the final time.

    The last step is shortened so the run lands exactly on the final time.

    Returns:
        list: [(t_n, k_n), ...] as tuples
    """
    if k <= 0:
        raise ValueError(f"Time step must be positive, got {k}")
    levels = []
    n_steps = max(1, math.ceil(period / k - 1e-9))
    for n in range(n_steps):
        t = n * k
        levels.append((t, min(k, period - t)))
    return levels


def field_summary(field: VelocityField) -> Dict[str, object]:
    return {'field': field.name, 'sup_norm': field.sup_norm, 'period': field.period}
