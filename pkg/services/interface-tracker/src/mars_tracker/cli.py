"""
Command Line Interface

Subcommands:
    run       benchmark study over one or more grid levels
    remesh    regularise a static OBJ mesh
    report    convergence orders from an errors.csv
    validate  manifold and topology check of an OBJ mesh

Every command prints a JSON result on stdout. Failures print a single JSON
error line on stderr and exit with status 1.
"""

import argparse
import json
import logging
import os
import sys
import traceback
from typing import Any, Dict, List, Optional, Tuple

from dotenv import load_dotenv

from .config import HL_RULES, load_run_config
from .flows import FIELD_NAMES
from .runner import CustomJSONEncoder, mesh_report, remesh_file, report_orders, run_study

# Configure logging
logger = logging.getLogger(__name__)

COMMANDS = ('run', 'remesh', 'report', 'validate')


def _grid_size(value: str) -> float:
    """Parse '0.03125' or '1/32'."""
    try:
        if '/' in value:
            numerator, denominator = value.split('/', 1)
            h = float(numerator) / float(denominator)
        else:
            h = float(value)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"Invalid grid size: {value}")
    if h <= 0:
        raise argparse.ArgumentTypeError(f"Grid size must be positive: {value}")
    return h


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', help='YAML run configuration')
    parser.add_argument('--field', choices=FIELD_NAMES, help='velocity field')
    parser.add_argument('--h', type=_grid_size, action='append', dest='h_levels',
                        help='grid size, e.g. 1/32; repeat for a convergence study')
    parser.add_argument('--hL-rule', dest='hl_rule', choices=HL_RULES, help='maximum edge length rule')
    parser.add_argument('--seed', type=int, help='random seed for triangulation regeneration')
    parser.add_argument('--out', dest='output_dir', help='output directory')
    parser.add_argument('--no-vrem', dest='enable_vrem', action='store_false', default=None,
                        help='disable vertex relocation')
    parser.add_argument('--no-ltr', dest='enable_ltr', action='store_false', default=None,
                        help='disable triangulation regeneration')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='mars-tracker', description='3D MARS interface tracking')
    subparsers = parser.add_subparsers(dest='command')

    run_parser = subparsers.add_parser('run', help='run a benchmark study')
    _add_run_options(run_parser)

    remesh_parser = subparsers.add_parser('remesh', help='regularise a static mesh')
    remesh_parser.add_argument('input', help='input OBJ mesh')
    remesh_parser.add_argument('output', help='output OBJ mesh')
    _add_run_options(remesh_parser)

    report_parser = subparsers.add_parser('report', help='convergence orders from errors.csv')
    report_parser.add_argument('errors', help='errors.csv written by run')

    validate_parser = subparsers.add_parser('validate', help='check an OBJ mesh')
    validate_parser.add_argument('input', help='OBJ mesh')
    _add_run_options(validate_parser)
    return parser


def validate_input_parameters(params: Dict[str, Any]) -> Tuple[bool, str]:
    """
    Validates parsed command-line parameters.

    Args:
        params (dict): parsed arguments

    Returns:
        tuple: (is_valid, error_message)
    """
    command = params.get('command')
    if command not in COMMANDS:
        return False, f"Missing or unknown command (expected one of {', '.join(COMMANDS)})"

    for key in ('input', 'errors', 'config'):
        path = params.get(key)
        if path and not os.path.isfile(path):
            return False, f"File not found: {path}"

    if command == 'remesh' and len(params.get('h_levels') or []) > 1:
        return False, "remesh takes a single --h"
    if command == 'remesh' and params.get('output', '').lower()[-4:] != '.obj':
        return False, "remesh output must be an .obj file"
    return True, ""


def _overrides(params: Dict[str, Any]) -> Dict[str, Any]:
    keys = ('field', 'h_levels', 'hl_rule', 'seed', 'output_dir', 'enable_vrem', 'enable_ltr')
    return {key: params.get(key) for key in keys if params.get(key) is not None}


def handle_command(params: Dict[str, Any]) -> Dict[str, Any]:
    """
    Dispatch one command.

    Returns:
        dict: command result with a 'status' key
    """
    is_valid, error_message = validate_input_parameters(params)
    if not is_valid:
        return {'status': 'error', 'error': error_message, 'type': 'ValidationError'}

    command = params['command']
    try:
        if command == 'report':
            return {'status': 'success', 'convergence': report_orders(params['errors'])}

        config = load_run_config(params.get('config'), _overrides(params))
        if command == 'run':
            return run_study(config)
        if command == 'remesh':
            return remesh_file(params['input'], params['output'], config, config.h_levels[0])
        h = config.h_levels[0] if params.get('h_levels') else None
        return mesh_report(params['input'], config, h)

    except Exception as e:
        logger.error(f"Command '{command}' failed: {str(e)}")
        logger.error(traceback.format_exc())
        return {'status': 'error', 'error': str(e), 'type': type(e).__name__}


def configure_logging() -> None:
    load_dotenv()
    level = os.environ.get('MARS_LOG_LEVEL', 'INFO').upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    result = handle_command(vars(args))

    if result.get('status') == 'error':
        sys.stderr.write(json.dumps(result, cls=CustomJSONEncoder) + '\n')
        return 1
    print(json.dumps(result, indent=2, sort_keys=True, cls=CustomJSONEncoder))
    return 0 if result.get('status') == 'success' else 2


if __name__ == '__main__':
    sys.exit(main())
