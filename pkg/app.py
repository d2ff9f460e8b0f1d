"""
wallscale - Command-line Application
Builds, relaxes and evaluates domain-wall fields in soft ferromagnetic films and
runs the (Q, t/d) energy studies.
"""

import argparse
import json
import logging
import math
import sys
from collections import Counter
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from config import Config, RunConfig, get_config, load_run_config, parse_run_config
from modules import __version__
from modules.bounds import CORE_LEMMAS, EXTRA_LEMMAS, BoundAuditor
from modules.constructions import WallConstructor
from modules.energy import WallEnergy
from modules.error_handler import (
    ConfigError, ErrorHandler, FieldValidationError, SweepError, WallScaleError, configure_logging
)
from modules.field_io import (
    header_comments, read_field, write_csv, write_energy_csv, write_field, write_sweep_csv,
    write_trace_csv
)
from modules.fields import GridPolicy, MagnetizationField, MaterialParams, validate_admissible, vertical_average
from modules.minimize import FieldRelaxer, RelaxOptions
from modules.plotting import plot_sweep_svg, render_field_png
from modules.sweep import ParameterSweep, SweepSettings


logger = logging.getLogger('wallscale')

# Initialize processing classes
wall_energy = WallEnergy()
wall_constructor = WallConstructor()
field_relaxer = FieldRelaxer(wall_energy)
bound_auditor = BoundAuditor(wall_energy)
parameter_sweep = ParameterSweep()

CROSSOVER_COLUMNS = ('Q', 't_star_over_d', 'predicted', 'ratio', 'bracket_low', 'bracket_high', 'probes')
AUDIT_COLUMNS = ('lemma', 'calibration', 'perturbation_max', 'refined_calibration', 'stability')

# argparse dest -> (run-config section, key)
OVERRIDES = {
    'd': ('params', 'd'),
    'Q': ('params', 'Q'),
    't': ('params', 't'),
    'n1': ('grid', 'n1'),
    'n3': ('grid', 'n3'),
    'L': ('grid', 'L'),
    'points_per_core': ('grid', 'points_per_core'),
    'delta': ('construction', 'delta'),
    'mollify_width': ('construction', 'mollify_width'),
    'max_iters': ('relax', 'max_iters'),
    'grad_tol': ('relax', 'grad_tol'),
    'q_values': ('sweep', 'Q'),
    't_over_d': ('sweep', 't_over_d'),
    'out_dir': ('output', 'dir'),
    'perturbations': ('audit', 'perturbations'),
    'amplitude': ('audit', 'amplitude'),
}


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def emit(payload: Dict) -> None:
    """Print a command result as JSON on stdout."""
    print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """
    Load the YAML run config (if any) and apply command-line overrides.

    Args:
        args: Parsed arguments

    Returns:
        RunConfig
    """
    run_config = load_run_config(args.config) if args.config else parse_run_config(None)

    sections: Dict[str, Dict] = {}
    for dest, (section, key) in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            sections.setdefault(section, {})[key] = value
    for section, values in sections.items():
        run_config = run_config.with_overrides(section, **values)

    if getattr(args, 'no_refine', False):
        run_config = run_config.with_overrides('audit', refine=False)

    seed = getattr(args, 'seed', None)
    workers = getattr(args, 'workers', None)
    if seed is not None or workers is not None:
        data = run_config.to_dict()
        if seed is not None:
            data['seed'] = seed
        if workers is not None:
            data['workers'] = workers
        run_config = parse_run_config(data, source=run_config.source)
    return run_config


def material_params(run_config: RunConfig, t: Optional[float] = None) -> MaterialParams:
    """
    Material parameters of a command; t falls back to the thickness of an input field.

    Args:
        run_config: Run configuration
        t: Thickness of the input field, if any

    Returns:
        MaterialParams
    """
    params = run_config.params
    if t is not None and 't' in params and not math.isclose(params['t'], t, rel_tol=1e-12):
        raise FieldValidationError(f"Configured t = {params['t']} differs from the field thickness {t}",
                                   "THICKNESS_MISMATCH")
    t = params.get('t', t)
    missing = [name for name, value in (('Q', params.get('Q')), ('t', t)) if value is None]
    if missing:
        raise ConfigError(f"Missing parameters: {', '.join(missing)} (set params in the config or use --Q/--t)",
                          "MISSING_PARAMETER")
    return MaterialParams(params.get('d', 1.0), params['Q'], t)


def output_path(run_config: RunConfig, explicit: Optional[str], key: Optional[str],
                default: Optional[str]) -> Optional[Path]:
    """
    Resolve an output path: explicit option, then output.<key>, then the default.

    Relative paths are placed under output.dir, which is created on demand.
    """
    output = run_config.output
    name = explicit or (output.get(key) if key else None) or default
    if name is None:
        return None
    path = Path(name)
    if not path.is_absolute() and output.get('dir'):
        path = Path(output['dir']) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def output_comments(run_config: RunConfig, command: str) -> list:
    return header_comments(run_config.to_yaml(), {'command': command})


def in_plane_line_energy(field: MagnetizationField, params: MaterialParams) -> Optional[float]:
    """t^2 * N(m1-bar) for x3-independent in-plane fields, None otherwise."""
    values = field.values
    if np.max(np.abs(values[:, :, 2])) > Config.NORM_TOL:
        return None
    if np.max(np.abs(values - values[:1])) > Config.NORM_TOL:
        return None
    return params.t ** 2 * WallEnergy.half_norm_energy(vertical_average(field, 1), field.grid.h1)


def cmd_energy(args: argparse.Namespace, run_config: RunConfig) -> Dict:
    """Evaluate the energy of a field file."""
    field = read_field(args.field)
    params = material_params(run_config, t=field.grid.t)
    validation = validate_admissible(field)
    if not validation['valid']:
        logger.warning(f"Field {args.field} is not admissible: {'; '.join(validation['errors'])}")

    breakdown = wall_energy.total_energy(field, params, diagnostics=True)
    m3 = field.component(3)
    summary = {
        'success': True,
        'command': 'energy',
        'field': str(args.field),
        'grid': field.grid.header(),
        'params': params.to_dict(),
        'energy': breakdown.to_dict(),
        'stray_fraction': breakdown.stray_fraction,
        'face_m3_max': float(max(np.max(np.abs(m3[0])), np.max(np.abs(m3[-1])))),
        'validation': validation,
    }
    line_energy = in_plane_line_energy(field, params)
    if line_energy is not None:
        summary['line_charge_energy'] = line_energy

    csv_path = output_path(run_config, args.csv, None, None)
    if csv_path:
        row = {'t': params.t, 'd': params.d, 'Q': params.Q, **breakdown.to_dict()}
        write_energy_csv(row, csv_path, output_comments(run_config, 'energy'))
        summary['csv'] = str(csv_path)

    ErrorHandler.log_operation('cmd_energy', {'field': str(args.field), 'total': breakdown.total})
    return summary


def cmd_build(args: argparse.Namespace, run_config: RunConfig) -> Dict:
    """Build a Bloch or Neel wall and write it as a field file."""
    params = material_params(run_config)
    regime = params.regime_report()
    if not regime['in_soft_regime']:
        logger.warning(f"Parameters {params.to_dict()} are outside the soft regime: {regime}")

    construction = run_config.construction
    delta = construction.get('delta', Config.BLOCH_DELTA)
    field, info = wall_constructor.build_initializer(args.kind, params, GridPolicy(**run_config.grid), delta,
                                                     construction.get('mollify_width'))
    breakdown = wall_energy.total_energy(field, params, diagnostics=True)

    summary = {
        'success': True,
        'command': 'build',
        'kind': args.kind,
        'params': params.to_dict(),
        'regime': regime,
        'grid': info['grid'],
        'validation': info['validation'],
        'energy': breakdown.to_dict(),
        'stray_fraction': breakdown.stray_fraction,
    }
    if args.kind == 'bloch':
        summary['energy_over_bloch_scale'] = breakdown.total / (params.d ** 2 + params.Q * params.t ** 2)
    else:
        profile = wall_constructor.build_neel_profile(params, field.grid)
        summary['m1_center'] = float(np.interp(0.0, field.grid.x1, vertical_average(field, 1)))
        summary['reduced_energy'] = wall_constructor.reduced_neel_energy(profile, params).to_dict()

    comments = output_comments(run_config, f'build {args.kind}')
    path = output_path(run_config, args.output, 'field', f'{args.kind}.field')
    write_field(field, path, comments)
    summary['output'] = str(path)

    png = output_path(run_config, args.png, 'png', None)
    if png:
        render_field_png(field, png, comments)
        summary['png'] = str(png)
    return summary


def cmd_relax(args: argparse.Namespace, run_config: RunConfig) -> Dict:
    """Relax a field file and write the relaxed field plus its energy trace."""
    field = read_field(args.field)
    params = material_params(run_config, t=field.grid.t)
    opts = RelaxOptions(probe_seed=run_config.seed, **run_config.relax)
    relaxed, report = field_relaxer.relax(field, params, opts)

    comments = output_comments(run_config, 'relax')
    source = Path(args.field)
    path = output_path(run_config, args.output, None, f'{source.stem}.relaxed.field')
    trace_path = output_path(run_config, args.trace, 'trace', 'trace.csv')
    write_field(relaxed, path, comments)
    write_trace_csv(report, trace_path, comments)

    summary = {
        'success': True,
        'command': 'relax',
        'params': params.to_dict(),
        'report': report.to_dict(),
        'grad_tol': opts.grad_tol,
        'output': str(path),
        'trace': str(trace_path),
    }
    png = output_path(run_config, args.png, 'png', None)
    if png:
        render_field_png(relaxed, png, comments)
        summary['png'] = str(png)
    return summary


def cmd_sweep(args: argparse.Namespace, run_config: RunConfig) -> Dict:
    """Run the (Q, t/d) sweep and write the sweep CSV (and optionally the SVG)."""
    if not run_config.sweep.get('t_over_d'):
        raise ConfigError("sweep.t_over_d is empty", "EMPTY_SWEEP")
    if run_config.sweep.get('Q') is None and 'Q' not in run_config.params:
        raise ConfigError("sweep.Q (or params.Q) is required", "MISSING_PARAMETER")

    table = parameter_sweep.run_sweep(run_config)
    comments = output_comments(run_config, 'sweep')
    csv_path = output_path(run_config, args.csv, 'csv', 'sweep.csv')
    write_sweep_csv(table, csv_path, comments)

    try:
        fit = parameter_sweep.fit_scaling(table)
    except SweepError as e:
        fit = {'error': e.message, 'error_code': e.error_code}

    summary = {
        'success': True,
        'command': 'sweep',
        'points': len(table),
        'statuses': dict(Counter(p.status for p in table.points)),
        'fit': fit,
        'csv': str(csv_path),
    }
    svg = output_path(run_config, args.svg, 'svg', None)
    if svg:
        plot_sweep_svg(table, svg, run_config.params.get('d', 1.0), comments)
        summary['svg'] = str(svg)
    return summary


def cmd_crossover(args: argparse.Namespace, run_config: RunConfig) -> Dict:
    """Bisect the Bloch/Neel cross-over thickness for one or more Q."""
    sweep = run_config.sweep
    q_values = args.q_values or sweep.get('crossover_Q') or sweep.get('Q') or run_config.params.get('Q')
    if q_values is None:
        raise ConfigError("No Q given for the cross-over search", "MISSING_PARAMETER")
    if not isinstance(q_values, (list, tuple)):
        q_values = [q_values]
    bracket = args.bracket or sweep.get('crossover_bracket', Config.CROSSOVER_BRACKET)

    settings = SweepSettings.from_run_config(run_config)
    results = [parameter_sweep.find_crossover(float(Q), bracket, settings) for Q in q_values]

    summary = {
        'success': True,
        'command': 'crossover',
        'results': [r.to_dict() for r in results],
    }
    csv_path = output_path(run_config, args.csv, None, None)
    if csv_path:
        rows = [(r.Q, r.t_star_over_d, r.predicted, r.ratio, r.bracket[0], r.bracket[1], len(r.probes))
                for r in results]
        write_csv(csv_path, CROSSOVER_COLUMNS, rows, output_comments(run_config, 'crossover'))
        summary['csv'] = str(csv_path)
    return summary


def cmd_verify_bounds(args: argparse.Namespace, run_config: RunConfig) -> Dict:
    """Calibrate and audit the lower-bound inequalities at one parameter point."""
    params = material_params(run_config)
    audit = run_config.audit
    result = bound_auditor.audit_ensemble(
        params,
        GridPolicy(**run_config.grid),
        RelaxOptions(probe_seed=run_config.seed, **run_config.relax),
        perturbations=audit.get('perturbations', get_config().AUDIT_PERTURBATIONS),
        amplitude=audit.get('amplitude', Config.AUDIT_AMPLITUDE),
        seed=run_config.seed,
        refine=audit.get('refine', True),
        delta=run_config.construction.get('delta', Config.BLOCH_DELTA),
    )
    summary = {'command': 'verify-bounds', 'core_lemmas': list(CORE_LEMMAS), 'extra_lemmas': list(EXTRA_LEMMAS),
               **result}

    csv_path = output_path(run_config, args.csv, None, None)
    if csv_path:
        refined = result.get('refined_calibration', {})
        stability = result.get('stability', {})
        rows = [(lemma, value, result['perturbation_max'].get(lemma, math.nan),
                 refined.get(lemma, math.nan), stability.get(lemma, math.nan))
                for lemma, value in sorted(result['calibration'].items())]
        write_csv(csv_path, AUDIT_COLUMNS, rows, output_comments(run_config, 'verify-bounds'))
        summary['csv'] = str(csv_path)
    return summary


COMMANDS = {
    'energy': cmd_energy,
    'build': cmd_build,
    'relax': cmd_relax,
    'sweep': cmd_sweep,
    'crossover': cmd_crossover,
    'verify-bounds': cmd_verify_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML run configuration')
    common.add_argument('--d', type=float, help='exchange length')
    common.add_argument('--Q', type=float, help='quality factor')
    common.add_argument('--t', type=float, help='film thickness')
    common.add_argument('--seed', type=int, help='seed of randomized audits and descent probes')
    common.add_argument('--out-dir', help='directory for relative output paths')
    common.add_argument('--log-level', help='logging level (default from LOG_LEVEL)')

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument('--n1', type=int, help='nodes along x1')
    grid.add_argument('--n3', type=int, help='nodes across the thickness')
    grid.add_argument('--L', type=float, help='truncation half width')
    grid.add_argument('--points-per-core', type=int, help='nodes per wall core width')
    grid.add_argument('--delta', type=float, help='Bloch core smoothing (units of t)')
    grid.add_argument('--mollify-width', type=float, help='Bloch m2 transition width (units of t)')

    relax = argparse.ArgumentParser(add_help=False)
    relax.add_argument('--max-iters', type=int, help='iteration limit of the relaxation')
    relax.add_argument('--grad-tol', type=float, help='sup-norm gradient tolerance')

    parser = argparse.ArgumentParser(prog='wallscale', description='Micromagnetic wall-energy lab for soft thin films')
    parser.add_argument('--version', action='version', version=f'wallscale {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    energy = sub.add_parser('energy', parents=[common], help='evaluate the energy of a field file')
    energy.add_argument('field', help='field file')
    energy.add_argument('--csv', help='write the breakdown as a one-row CSV')

    build = sub.add_parser('build', parents=[common, grid], help='build a Bloch or Neel wall')
    build.add_argument('kind', choices=['bloch', 'neel'])
    build.add_argument('-o', '--output', help='field file to write (default <kind>.field)')
    build.add_argument('--png', help='write a PNG snapshot')

    relax_cmd = sub.add_parser('relax', parents=[common, relax], help='relax a field file')
    relax_cmd.add_argument('field', help='field file')
    relax_cmd.add_argument('-o', '--output', help='relaxed field file (default <stem>.relaxed.field)')
    relax_cmd.add_argument('--trace', help='energy trace CSV (default trace.csv)')
    relax_cmd.add_argument('--png', help='write a PNG snapshot of the relaxed field')

    sweep = sub.add_parser('sweep', parents=[common, grid, relax], help='run the (Q, t/d) sweep')
    sweep.add_argument('--Q-values', dest='q_values', type=float, nargs='+', help='Q values of the sweep')
    sweep.add_argument('--t-over-d', type=float, nargs='+', help='t/d values of the sweep')
    sweep.add_argument('--workers', type=int, help='worker processes')
    sweep.add_argument('--csv', help='sweep CSV (default sweep.csv)')
    sweep.add_argument('--svg', help='write the energy figure as SVG')

    crossover = sub.add_parser('crossover', parents=[common, grid, relax], help='bisect the cross-over thickness')
    crossover.add_argument('--Q-values', dest='q_values', type=float, nargs='+', help='Q values to bisect')
    crossover.add_argument('--bracket', type=float, nargs=2, metavar=('LOW', 'HIGH'), help='t/d bracket')
    crossover.add_argument('--csv', help='write the results as CSV')

    bounds = sub.add_parser('verify-bounds', parents=[common, grid, relax], help='audit the lower-bound inequalities')
    bounds.add_argument('--perturbations', type=int, help='number of random perturbations')
    bounds.add_argument('--amplitude', type=float, help='perturbation amplitude')
    bounds.add_argument('--no-refine', action='store_true', help='skip the grid-doubling check')
    bounds.add_argument('--csv', help='write the audit table as CSV')
    return parser


def main(argv=None) -> int:
    """
    Run one command.

    Args:
        argv: Argument list (defaults to sys.argv[1:])

    Returns:
        Exit code: 0 success, 1 validation failure, 2 I/O or parse error
    """
    args = build_parser().parse_args(argv)
    app_config = get_config()
    configure_logging(args.log_level or app_config.LOG_LEVEL, app_config.LOG_FILE)

    try:
        run_config = build_run_config(args)
        ErrorHandler.log_operation('command_start', {'command': args.command, 'config': run_config.source})
        summary = COMMANDS[args.command](args, run_config)
    except WallScaleError as e:
        response, code = ErrorHandler.create_error_response(e.message, e.error_code,
                                                            ErrorHandler.exit_code_for(e), e.details)
        emit(response)
        return code
    except OSError as e:
        response, code = ErrorHandler.create_error_response(str(e), 'IO_ERROR', ErrorHandler.EXIT_IO)
        emit(response)
        return code

    emit(summary)
    return ErrorHandler.EXIT_OK if summary.get('success', True) else ErrorHandler.EXIT_VALIDATION


if __name__ == '__main__':
    sys.exit(main())
