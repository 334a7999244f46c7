"""
Benchmark Runner

Drives convergence studies: one simulation per grid level, with per-step
quality CSVs, OBJ snapshots, sphere errors, convergence orders, the tier
ledger and a JSON summary. CSV rows are flushed as each step ends so an
aborted run keeps its partial artifacts.
"""

import csv
import json
import logging
import os
import time
import traceback
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .config import RunConfig
from .errors import ResolutionError
from .flows import make_field
from .mesh_core import QualityReport, TriMesh, check_regularity, classify, validate
from .mesh_io import gen_sphere, read_obj, write_obj
from .metrics import CostLedger, ErrorRecord, convergence_order, quality_stats, sphere_errors
from .stepper import remesh_static, simulate

# Configure logging
logger = logging.getLogger(__name__)

ERROR_COLUMNS = ['h', 'h_l', 'e1', 'eg', 'num_vertices', 'num_triangles']
CONVERGENCE_COLUMNS = ['h_coarse', 'h_fine', 'e1_order', 'eg_order']
LEDGER_COLUMNS = ['h', 'tier', 'count', 'percent']
SNAPSHOT_TOLERANCE = 1e-9


class CustomJSONEncoder(json.JSONEncoder):
    """JSON encoder that understands numpy scalars and arrays."""

    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (set, tuple)):
            return list(obj)
        return super(CustomJSONEncoder, self).default(obj)


def level_label(h: float) -> str:
    """'h32' for h = 1/32; the raw value for grid sizes that are not reciprocals."""
    inverse = 1.0 / h
    if abs(inverse - round(inverse)) < 1e-9:
        return f"h{int(round(inverse))}"
    return f"h{h:.6g}"


def exact_center(config: RunConfig) -> np.ndarray:
    """Sphere center at the final time: reversing fields return to the start."""
    center = np.asarray(config.center, dtype=float)
    if config.field == 'uniform_translation':
        return center + config.period * make_field(config.field, config.period)(center[None, :], 0.0)[0]
    return center


def initial_mesh(config: RunConfig, h: float) -> TriMesh:
    """
    Starting mesh for grid size h, regularised if needed.

    The generated sphere has mean marker spacing at most
    initial_spacing_factor * h; an input mesh is read from OBJ instead.
    """
    if config.input_mesh:
        mesh = read_obj(config.input_mesh)
    else:
        mesh = gen_sphere(config.center, config.radius, target_edge_length=config.initial_spacing_factor * h)
    step_config = config.step_config(h)
    report = check_regularity(mesh, step_config.params)
    if not report.is_regular:
        logger.info(f"Initial mesh has {report.violation_count} violations, remeshing")
        mesh, _ = remesh_static(mesh, step_config)
    return mesh


def _snapshot_schedule(config: RunConfig) -> List[float]:
    return sorted(set([0.0, float(config.period)] + [float(t) for t in config.snapshot_times]))


def _write_snapshot(mesh: TriMesh, out_dir: str, label: str, t: float) -> str:
    path = os.path.join(out_dir, f"snapshot_{label}_t{t:.4f}.obj")
    return write_obj(mesh, path, comment=f"t = {t:.12g}")


def run_level(config: RunConfig, h: float, out_dir: str) -> Dict[str, Any]:
    """
    Simulate one grid level and write its quality CSV and snapshots.

    Returns:
        dict: error record, ledger, final report and wall time for the level
    """
    label = level_label(h)
    step_config = config.step_config(h)
    velocity = make_field(config.field, config.period)
    started = time.perf_counter()

    mesh = initial_mesh(config, h)
    initial_report = check_regularity(mesh, step_config.params)
    initial_report.step = 0
    initial_report.time = 0.0

    pending = _snapshot_schedule(config)
    snapshots: List[str] = []
    if pending and pending[0] <= SNAPSHOT_TOLERANCE:
        snapshots.append(_write_snapshot(mesh, out_dir, label, pending.pop(0)))

    quality_path = os.path.join(out_dir, f"quality_{label}.csv")
    with open(quality_path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=list(initial_report.as_row().keys()))
        writer.writeheader()
        writer.writerow(initial_report.as_row())
        handle.flush()

        def on_step(index: int, t: float, current: TriMesh, report: QualityReport) -> None:
            writer.writerow(report.as_row())
            handle.flush()
            while pending and pending[0] <= t + SNAPSHOT_TOLERANCE:
                snapshots.append(_write_snapshot(current, out_dir, label, pending.pop(0)))

        logger.info(f"Running {config.field} at {label}: h_L={step_config.params.h_l:.6g}, "
                    f"k={step_config.time_step:.6g}, V0={mesh.num_vertices}")
        result = simulate(mesh, velocity, config.period, step_config, on_step=on_step)

    record = sphere_errors(result.mesh, exact_center(config), config.radius, h, step_config.params.h_l)
    elapsed = time.perf_counter() - started
    logger.info(f"Finished {label}: E1={record.e1:.6e}, V={record.num_vertices}, "
                f"ledger={result.ledger.counts}, {elapsed:.1f}s")
    return {
        'label': label,
        'record': record,
        'ledger': result.ledger,
        'final_report': result.reports[-1] if result.reports else initial_report,
        'quality_csv': quality_path,
        'snapshots': snapshots,
        'seconds': elapsed,
    }


def write_errors_csv(records: Sequence[ErrorRecord], path: str) -> str:
    with open(path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=ERROR_COLUMNS)
        writer.writeheader()
        for record in records:
            writer.writerow(record.as_row())
    return path


def _format_order(order: Optional[float]) -> str:
    return '' if order is None else f"{order:.6f}"


def convergence_rows(records: Sequence[ErrorRecord]) -> List[Dict[str, str]]:
    """One row per consecutive pair of levels, coarse to fine."""
    ordered = sorted(records, key=lambda r: -r.h)
    e1_orders = convergence_order(ordered)
    eg_orders = convergence_order(ordered, use_eg=True)
    return [
        {
            'h_coarse': f"{coarse.h:.12g}",
            'h_fine': f"{fine.h:.12g}",
            'e1_order': _format_order(e1_order),
            'eg_order': _format_order(eg_order),
        }
        for coarse, fine, e1_order, eg_order in zip(ordered, ordered[1:], e1_orders, eg_orders)
    ]


def write_convergence_csv(rows: Sequence[Dict[str, str]], path: str) -> str:
    with open(path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=CONVERGENCE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return path


def write_ledger_csv(ledgers: Sequence[tuple], path: str) -> str:
    """Tier counts and count shares per level; ledgers is [(h, CostLedger), ...]."""
    with open(path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=LEDGER_COLUMNS)
        writer.writeheader()
        for h, ledger in ledgers:
            for row in ledger.count_rows():
                writer.writerow({'h': f"{h:.12g}", **row})
    return path


def write_summary(summary: Dict[str, Any], path: str) -> str:
    with open(path, 'w') as handle:
        json.dump(summary, handle, indent=2, sort_keys=True, cls=CustomJSONEncoder)
        handle.write('\n')
    return path


def run_study(config: RunConfig) -> Dict[str, Any]:
    """
    Run every grid level of the configuration and write the study artifacts.

    Args:
        config: validated RunConfig

    Returns:
        dict: the summary also written to summary.json

    Raises:
        ValueError: invalid configuration
        StepError: a step could not produce a regular mesh; the quality CSVs
            written so far and an error summary are kept
    """
    is_valid, error_message = config.validate()
    if not is_valid:
        raise ValueError(error_message)
    out_dir = config.output_dir
    os.makedirs(out_dir, exist_ok=True)

    levels = sorted(config.h_levels, reverse=True)
    summary: Dict[str, Any] = {
        'status': 'running',
        'config': config.to_dict(),
        'levels': [],
    }
    records: List[ErrorRecord] = []
    ledgers = []
    total = CostLedger()
    try:
        for h in levels:
            outcome = run_level(config, h, out_dir)
            records.append(outcome['record'])
            ledgers.append((h, outcome['ledger']))
            total.merge(outcome['ledger'])
            summary['levels'].append({
                'h': h,
                'label': outcome['label'],
                'errors': outcome['record'].as_row(),
                'ledger': outcome['ledger'].summary(),
                'final_min_angle_deg': float(np.degrees(outcome['final_report'].min_angle)),
                'snapshots': outcome['snapshots'],
                'seconds': outcome['seconds'],
            })
    except Exception as e:
        logger.error(f"Study aborted: {str(e)}")
        logger.error(traceback.format_exc())
        summary.update({'status': 'error', 'error': str(e), 'type': type(e).__name__})
        if records:
            write_errors_csv(records, os.path.join(out_dir, 'errors.csv'))
        write_summary(summary, os.path.join(out_dir, 'summary.json'))
        raise

    write_errors_csv(records, os.path.join(out_dir, 'errors.csv'))
    write_ledger_csv(ledgers, os.path.join(out_dir, 'ledger.csv'))
    if len(records) >= 2:
        try:
            rows = convergence_rows(records)
            write_convergence_csv(rows, os.path.join(out_dir, 'convergence.csv'))
            summary['convergence'] = rows
        except ResolutionError as e:
            logger.warning(f"No convergence table: {str(e)}")

    summary['status'] = 'success'
    summary['ledger'] = total.summary()
    write_summary(summary, os.path.join(out_dir, 'summary.json'))
    return summary


def remesh_file(input_path: str, output_path: str, config: RunConfig, h: float) -> Dict[str, Any]:
    """
    Regularise a static OBJ mesh for grid size h and write the result.

    Returns:
        dict: before/after quality statistics and the tier counts
    """
    step_config = config.step_config(h)
    mesh = read_obj(input_path)
    before = quality_stats(mesh, step_config.params)
    ledger = CostLedger()
    remeshed, report = remesh_static(mesh, step_config, ledger=ledger)
    write_obj(remeshed, output_path)
    logger.info(f"Remeshed {input_path} -> {output_path}: {mesh} -> {remeshed}")
    return {
        'status': 'success',
        'input': input_path,
        'output': output_path,
        'h_l': step_config.params.h_l,
        'regular': report.is_regular,
        'before': vars(before),
        'after': vars(quality_stats(remeshed, step_config.params)),
        'ledger': ledger.counts,
    }


def report_orders(errors_csv: str) -> List[Dict[str, str]]:
    """Convergence rows computed from an errors.csv written by run_study."""
    records = []
    with open(errors_csv, 'r', newline='') as handle:
        for row in csv.DictReader(handle):
            records.append(ErrorRecord(
                h=float(row['h']), h_l=float(row['h_l']), e1=float(row['e1']), eg=float(row['eg']),
                num_vertices=int(row['num_vertices']), num_triangles=int(row['num_triangles']),
            ))
    if len(records) < 2:
        raise ValueError(f"{errors_csv}: need at least two grid levels, found {len(records)}")
    return convergence_rows(records)


def mesh_report(path: str, config: Optional[RunConfig] = None, h: Optional[float] = None) -> Dict[str, Any]:
    """Validation, topology and (with h) regularity of an OBJ mesh."""
    mesh = read_obj(path, check=False)
    violations = validate(mesh)
    parts = classify(mesh)
    report: Dict[str, Any] = {
        'status': 'success' if not violations else 'invalid',
        'path': path,
        'num_vertices': mesh.num_vertices,
        'num_edges': mesh.num_edges,
        'num_triangles': mesh.num_triangles,
        'euler_characteristic': mesh.euler_characteristic(),
        'closed': not parts.boundary_edges,
        'violations': [{'kind': v.kind, 'simplex': v.simplex, 'message': v.message} for v in violations],
    }
    if not violations and not parts.boundary_edges:
        # chi = 2 - 2g for a closed orientable surface
        report['genus'] = (2 - report['euler_characteristic']) // 2
    if config is not None and h is not None and not violations:
        params = config.regularity_params(h)
        regularity = check_regularity(mesh, params)
        report['regularity'] = {
            'h_l': params.h_l,
            'regular': regularity.is_regular,
            'long_edges': len(regularity.long_edges),
            'short_edges': len(regularity.short_edges),
            'small_angles': len(regularity.small_angle_triangles),
            'min_angle_deg': float(np.degrees(regularity.min_angle)),
        }
    return report
