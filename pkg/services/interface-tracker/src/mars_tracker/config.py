"""
Run Configuration

RunConfig mirrors the benchmark parameter tables one key per field. Values
are resolved in the order defaults < YAML file < environment < command-line
overrides.
"""

import dataclasses
import logging
import math
import os
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .flows import FIELD_NAMES, make_field, time_step
from .mesh_core import RegularityParams
from .stepper import StepConfig
from .vrem import REST_LENGTH_MODES, LineSearchParams

# Configure logging
logger = logging.getLogger(__name__)

HL_RULES = ('0.5h', '6h^1.5')

# Sphere and final time per velocity field
FIELD_DEFAULTS: Dict[str, Dict[str, Any]] = {
    'vortical_shear': {'center': [0.5, 0.75, 0.25], 'radius': 0.15, 'period': 3.0},
    'deformation': {'center': [0.35, 0.35, 0.35], 'radius': 0.15, 'period': 3.0},
    'rigid_rotation': {'center': [0.5, 0.75, 0.5], 'radius': 0.15, 'period': 1.0},
    'uniform_translation': {'center': [0.25, 0.5, 0.5], 'radius': 0.15, 'period': 0.5},
}

ENV_OVERRIDES = {
    'MARS_OUTPUT_DIR': ('output_dir', str),
    'MARS_SEED': ('seed', int),
}


@dataclass
class RunConfig:
    """
    Parameters of one benchmark study.

    Features:
    - One field per row of the benchmark parameter tables
    - Several grid levels per study for convergence orders
    - Optional input mesh instead of the generated sphere
    - Tier switches for cascade ablation
    """

    field: str = 'vortical_shear'
    period: float = 3.0
    center: List[float] = dataclasses.field(default_factory=lambda: [0.5, 0.75, 0.25])
    radius: float = 0.15
    h_levels: List[float] = dataclasses.field(default_factory=lambda: [1.0 / 32])
    hl_rule: str = '0.5h'
    courant: float = 0.5
    initial_spacing_factor: float = 0.25
    r_tiny: float = 0.1
    theta: float = math.pi / 10
    mu: int = 4
    nu: int = 10
    eta: int = 3
    armijo_c: float = 1e-4
    armijo_rho: float = 0.8
    max_backtracks: int = 60
    max_sweeps: int = 10
    rest_length_mode: str = 'interior'
    enable_vrem: bool = True
    enable_ltr: bool = True
    seed: int = 0
    snapshot_times: List[float] = dataclasses.field(default_factory=list)
    output_dir: str = 'output'
    input_mesh: Optional[str] = None

    @classmethod
    def for_field(cls, name: str, **overrides) -> 'RunConfig':
        """Defaults for a velocity field with its own sphere and final time."""
        values = dict(FIELD_DEFAULTS.get(name, {}))
        values['center'] = list(values.get('center', [0.5, 0.5, 0.5]))
        values.update(overrides)
        return cls(field=name, **values)

    def h_l(self, h: float) -> float:
        """Maximum edge length for grid size h."""
        if self.hl_rule == '0.5h':
            return 0.5 * h
        if self.hl_rule == '6h^1.5':
            return 6.0 * h ** 1.5
        raise ValueError(f"Unknown h_L rule: {self.hl_rule}")

    def time_step(self, h: float) -> float:
        return time_step(h, self.courant, make_field(self.field, self.period))

    def regularity_params(self, h: float) -> RegularityParams:
        return RegularityParams(h_l=self.h_l(h), r_tiny=self.r_tiny, theta=self.theta)

    def step_config(self, h: float) -> StepConfig:
        return StepConfig(
            params=self.regularity_params(h),
            time_step=self.time_step(h),
            mu=self.mu,
            nu=self.nu,
            eta=self.eta,
            line_search=LineSearchParams(c=self.armijo_c, rho=self.armijo_rho, max_backtracks=self.max_backtracks),
            seed=self.seed,
            max_sweeps=self.max_sweeps,
            rest_length_mode=self.rest_length_mode,
            enable_vrem=self.enable_vrem,
            enable_ltr=self.enable_ltr,
        )

    def validate(self) -> Tuple[bool, str]:
        """
        Check every field.

        Returns:
            tuple: (is_valid, error_message)
        """
        if self.field not in FIELD_NAMES:
            return False, f"Unknown field: {self.field}"
        if not self.period > 0:
            return False, "period must be positive"
        if len(self.center) != 3:
            return False, "center must have three coordinates"
        if not self.radius > 0:
            return False, "radius must be positive"
        if not self.h_levels:
            return False, "h_levels must not be empty"
        if any(not h > 0 for h in self.h_levels):
            return False, "Every h in h_levels must be positive"
        if self.hl_rule not in HL_RULES:
            return False, f"Unknown h_L rule: {self.hl_rule} (expected one of {', '.join(HL_RULES)})"
        if not self.courant > 0:
            return False, "courant must be positive"
        if not self.initial_spacing_factor > 0:
            return False, "initial_spacing_factor must be positive"
        if not 0 < self.r_tiny < 1:
            return False, "r_tiny must lie in (0, 1)"
        if not 0 < self.theta < math.pi / 3:
            return False, "theta must lie in (0, pi/3)"
        for name in ('mu', 'nu', 'eta', 'max_backtracks', 'max_sweeps'):
            if getattr(self, name) < 1:
                return False, f"{name} must be a positive integer"
        if not 0 < self.armijo_c < 1 or not 0 < self.armijo_rho < 1:
            return False, "Armijo constants must lie in (0, 1)"
        if self.rest_length_mode not in REST_LENGTH_MODES:
            return False, f"Unknown rest_length_mode: {self.rest_length_mode}"
        if any(not 0 <= t <= self.period for t in self.snapshot_times):
            return False, "snapshot_times must lie in [0, period]"
        if self.input_mesh is not None and not os.path.isfile(self.input_mesh):
            return False, f"input_mesh not found: {self.input_mesh}"
        return True, ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _field_names() -> List[str]:
    return [f.name for f in fields(RunConfig)]


def _coerce(values: Dict[str, Any]) -> Dict[str, Any]:
    """Normalise YAML or CLI values to the RunConfig field types."""
    out = dict(values)
    if 'h_levels' in out and not isinstance(out['h_levels'], (list, tuple)):
        out['h_levels'] = [out['h_levels']]
    if 'h_levels' in out:
        out['h_levels'] = [_number(h) for h in out['h_levels']]
    for key in ('center', 'snapshot_times'):
        if key in out and out[key] is not None:
            out[key] = [float(v) for v in out[key]]
    for key in ('period', 'radius', 'courant', 'initial_spacing_factor', 'r_tiny', 'theta',
                'armijo_c', 'armijo_rho'):
        if key in out:
            out[key] = _number(out[key])
    return out


def _number(value: Any) -> float:
    """Float from a number or a simple fraction string such as '1/32'."""
    if isinstance(value, str) and '/' in value:
        numerator, denominator = value.split('/', 1)
        return float(numerator) / float(denominator)
    return float(value)


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Resolve a RunConfig from a YAML file, the environment and explicit overrides.

    Args:
        path: YAML file with flat RunConfig keys
        overrides: values from the command line; None entries are ignored

    Returns:
        RunConfig

    Raises:
        ValueError: unknown keys or a configuration that fails validate()
    """
    values: Dict[str, Any] = {}
    if path:
        with open(path, 'r') as handle:
            loaded = yaml.safe_load(handle) or {}
        if not isinstance(loaded, dict):
            raise ValueError(f"{path}: expected a mapping of configuration keys")
        values.update(loaded)
        logger.info(f"Loaded run configuration from {path}")

    for variable, (key, cast) in ENV_OVERRIDES.items():
        raw = os.environ.get(variable)
        if raw:
            values[key] = cast(raw)

    values.update({k: v for k, v in (overrides or {}).items() if v is not None})

    unknown = sorted(set(values) - set(_field_names()))
    if unknown:
        raise ValueError(f"Unknown configuration keys: {', '.join(unknown)}")

    name = values.pop('field', 'vortical_shear')
    config = RunConfig.for_field(name, **_coerce(values))
    is_valid, error_message = config.validate()
    if not is_valid:
        raise ValueError(error_message)
    return config
