#!/usr/bin/env python3
"""
Test Suite for wallscale
Field codec, run configuration, error plumbing, plotting and the command-line commands.
"""

import csv
import io
import json
import os
import shutil
import sys
import tempfile
import unittest
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np
from PIL import Image

# Add modules to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from app import main
from config import RunConfig, load_run_config, parse_run_config
from modules.error_handler import (
    ConfigError, ErrorHandler, FieldFormatError, RelaxationError, SweepError
)
from modules.field_io import header_comments, read_field, write_csv, write_field
from modules.fields import StripGrid, make_uniform
from modules.plotting import plot_sweep_svg, render_field_png
from modules.sweep import SweepPoint, SweepTable
from test_fields import random_admissible

VERSION_LINE = '# wallscale 1.0.0'


def run_cli(*argv):
    """Run the CLI and return (exit code, parsed JSON summary)."""
    buffer = io.StringIO()
    with redirect_stdout(buffer):
        code = main([*argv, '--log-level', 'ERROR'])
    return code, json.loads(buffer.getvalue())


def read_rows(path):
    """CSV rows of an output file with the comment header removed."""
    with open(path, encoding='utf-8') as handle:
        return list(csv.DictReader(line for line in handle if not line.startswith('#')))


class TempDirTestCase(unittest.TestCase):
    """Test case with a scratch directory."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def path(self, name):
        return os.path.join(self.test_dir, name)


class TestFieldIO(TempDirTestCase):
    """Test the field file codec."""

    def test_roundtrip_exact(self):
        field = random_admissible(StripGrid(L=1.5, t=0.7, n1=17, n3=4), seed=12)
        write_field(field, self.path('f.field'), ['note: test'])
        loaded = read_field(self.path('f.field'))
        self.assertEqual(loaded.grid, field.grid)
        self.assertTrue(np.array_equal(loaded.values, field.values))

    def test_comment_header(self):
        grid = StripGrid(L=1.0, t=1.0, n1=9, n3=3)
        write_field(random_admissible(grid), self.path('f.field'), header_comments('a: 1\n', {'command': 'x'}))
        lines = Path(self.path('f.field')).read_text().split('\n')
        self.assertTrue(lines[0].startswith('wallscale-field v1 L='))
        self.assertEqual(lines[1], VERSION_LINE)
        self.assertIn('# command: x', lines)
        self.assertIn('#   a: 1', lines)

    def test_truncated(self):
        field = random_admissible(StripGrid(L=1.0, t=1.0, n1=9, n3=3))
        write_field(field, self.path('f.field'))
        lines = Path(self.path('f.field')).read_text().split('\n')
        Path(self.path('cut.field')).write_text('\n'.join(lines[:-5]) + '\n')
        with self.assertRaises(FieldFormatError) as ctx:
            read_field(self.path('cut.field'))
        self.assertEqual(ctx.exception.error_code, 'TRUNCATED')

    def test_parse_error_reports_line(self):
        text = 'wallscale-field v1 L=1.0 n1=9 n3=3 t=1.0\n# comment\n0.0 1.0\n'
        Path(self.path('bad.field')).write_text(text)
        with self.assertRaises(FieldFormatError) as ctx:
            read_field(self.path('bad.field'))
        self.assertEqual(ctx.exception.error_code, 'PARSE_ERROR')
        self.assertEqual(ctx.exception.details['line'], 3)
        self.assertEqual(ctx.exception.details['offset'], text.index('0.0 1.0'))

    def test_non_numeric(self):
        Path(self.path('bad.field')).write_text('wallscale-field v1 L=1.0 n1=9 n3=3 t=1.0\n0 x 1\n')
        with self.assertRaises(FieldFormatError) as ctx:
            read_field(self.path('bad.field'))
        self.assertEqual(ctx.exception.details['line'], 2)

    def test_bad_header(self):
        Path(self.path('bad.field')).write_text('not a field\n0 1 0\n')
        with self.assertRaises(FieldFormatError) as ctx:
            read_field(self.path('bad.field'))
        self.assertEqual(ctx.exception.details['line'], 1)

    def test_csv_format(self):
        write_csv(self.path('t.csv'), ('a', 'b'), [(1.0, float('nan')), (2, 'x')], ['wallscale 1.0.0'])
        lines = Path(self.path('t.csv')).read_text().split('\n')
        self.assertEqual(lines[0], VERSION_LINE)
        self.assertEqual(lines[1], 'a,b')
        self.assertEqual(lines[2], '1.0000000000e+00,nan')
        self.assertEqual(lines[3], '2,x')


class TestRunConfig(TempDirTestCase):
    """Test the YAML run configuration."""

    def test_defaults(self):
        run_config = parse_run_config(None)
        self.assertIsInstance(run_config, RunConfig)
        self.assertEqual(run_config.params, {})

    def test_unknown_keys(self):
        for data in ({'plot': {}}, {'grid': {'nx': 5}}):
            with self.assertRaises(ConfigError) as ctx:
                parse_run_config(data)
            self.assertEqual(ctx.exception.error_code, 'UNKNOWN_KEY')

    def test_invalid_values(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_run_config({'params': {'Q': -1}})
        self.assertEqual(ctx.exception.error_code, 'INVALID_PARAMETER')
        with self.assertRaises(ConfigError) as ctx:
            parse_run_config({'workers': 0})
        self.assertEqual(ctx.exception.error_code, 'INVALID_CONFIG')

    def test_overrides(self):
        run_config = parse_run_config({'params': {'Q': 0.001, 't': 2}})
        updated = run_config.with_overrides('params', t=4.0, d=None)
        self.assertEqual(updated.params, {'Q': 0.001, 't': 4.0})
        self.assertEqual(run_config.params['t'], 2.0)
        self.assertIn('params:', updated.to_yaml())

    def test_load_yaml(self):
        Path(self.path('run.yaml')).write_text('params:\n  Q: 0.001\nsweep:\n  t_over_d: [1, 2]\nseed: 5\n')
        run_config = load_run_config(self.path('run.yaml'))
        self.assertEqual(run_config.sweep['t_over_d'], [1, 2])
        self.assertEqual(run_config.seed, 5)
        self.assertEqual(run_config.source, self.path('run.yaml'))

    def test_shipped_configs_load(self):
        config_dir = Path(__file__).resolve().parent / 'configs'
        for path in sorted(config_dir.glob('*.yaml')):
            run_config = load_run_config(path)
            self.assertEqual(run_config.params['d'], 1.0)
        sweep = load_run_config(config_dir / 'sweep_q00025.yaml')
        self.assertEqual(sweep.sweep['Q'], [0.00025])

    def test_load_errors(self):
        with self.assertRaises(ConfigError) as ctx:
            load_run_config(self.path('missing.yaml'))
        self.assertEqual(ctx.exception.error_code, 'CONFIG_IO')
        Path(self.path('bad.yaml')).write_text('params: [unclosed\n')
        with self.assertRaises(ConfigError) as ctx:
            load_run_config(self.path('bad.yaml'))
        self.assertEqual(ctx.exception.error_code, 'PARSE_ERROR')


class TestErrorHandler(unittest.TestCase):
    """Test error handling."""

    def test_exit_codes(self):
        self.assertEqual(ErrorHandler.exit_code_for(FieldFormatError('x', 'TRUNCATED')), 2)
        self.assertEqual(ErrorHandler.exit_code_for(ConfigError('x', 'CONFIG_IO')), 2)
        self.assertEqual(ErrorHandler.exit_code_for(ConfigError('x', 'UNKNOWN_KEY')), 1)
        self.assertEqual(ErrorHandler.exit_code_for(RelaxationError('x', 'NON_FINITE')), 1)

    def test_create_error_response(self):
        response, code = ErrorHandler.create_error_response("Test error", "TEST_ERROR", 2, {'line': 4})
        self.assertFalse(response['success'])
        self.assertEqual(response['error'], "Test error")
        self.assertEqual(response['error_code'], "TEST_ERROR")
        self.assertEqual(response['details'], {'line': 4})
        self.assertEqual(code, 2)

    def test_handle_processing_error(self):
        @ErrorHandler.handle_processing_error
        def failing(kind):
            if kind == 'sweep':
                raise SweepError("no sign change", "NO_SIGN_CHANGE", {'a': 1.0})
            raise ValueError("boom")

        result = failing('sweep')
        self.assertFalse(result['success'])
        self.assertEqual(result['error_code'], 'NO_SIGN_CHANGE')
        self.assertEqual(result['details'], {'a': 1.0})
        self.assertEqual(failing('other')['error_code'], 'PROCESSING_ERROR')

    def test_validate_positive(self):
        self.assertEqual(ErrorHandler.validate_positive('x', '2.5'), 2.5)
        for bad in (0, -1, float('inf'), 'abc'):
            with self.assertRaises(Exception):
                ErrorHandler.validate_positive('x', bad)


class TestPlotting(TempDirTestCase):
    """Test the figure and snapshot writers."""

    def test_png_snapshot(self):
        field = random_admissible(StripGrid(L=2.0, t=1.0, n1=65, n3=5))
        render_field_png(field, self.path('f.png'), ['wallscale 1.0.0', 'seed: 3'])
        with Image.open(self.path('f.png')) as image:
            self.assertEqual(image.size, (65, 64))
            self.assertEqual(image.mode, 'RGB')
            self.assertEqual(image.text['Description'], 'wallscale 1.0.0\nseed: 3')

    def test_svg_deterministic(self):
        table = SweepTable([
            SweepPoint(Q=1e-3, t_over_d=r, E_min=e, winner=w)
            for r, e, w in ((1.0, 0.5, 'neel'), (2.0, 1.1, 'neel'), (8.0, 9.0, 'bloch'))
        ])
        plot_sweep_svg(table, self.path('a.svg'), comments=['wallscale 1.0.0'])
        plot_sweep_svg(table, self.path('b.svg'), comments=['wallscale 1.0.0'])
        first = Path(self.path('a.svg')).read_bytes()
        self.assertEqual(first, Path(self.path('b.svg')).read_bytes())
        self.assertIn(b'wallscale 1.0.0', first)


class TestCommandLine(TempDirTestCase):
    """Test the commands end to end on small grids."""

    def test_build_neel(self):
        code, summary = run_cli('build', 'neel', '--Q', '1e-3', '--t', '1', '--d', '1', '--n1', '401',
                                '--n3', '3', '--L', '20', '--out-dir', self.test_dir)
        self.assertEqual(code, 0)
        self.assertAlmostEqual(summary['m1_center'], 1.0, places=12)
        self.assertTrue(summary['validation']['valid'])
        self.assertEqual(summary['grid']['n1'], 401)
        self.assertGreater(summary['energy']['stray'], 0.0)
        self.assertTrue(os.path.exists(self.path('neel.field')))

    def test_build_bloch(self):
        code, summary = run_cli('build', 'bloch', '--Q', '1e-3', '--t', '12', '--n1', '97', '--n3', '25',
                                '--L', '24', '-o', 'b.field', '--png', 'b.png', '--out-dir', self.test_dir)
        self.assertEqual(code, 0)
        self.assertTrue(summary['validation']['valid'])
        self.assertGreater(summary['energy_over_bloch_scale'], 1.0)
        self.assertTrue(os.path.exists(self.path('b.field')))
        with Image.open(self.path('b.png')) as image:
            description = image.text['Description']
        self.assertEqual(description.split('\n')[0], VERSION_LINE[2:])
        self.assertIn('command: build bloch', description)

    def test_build_bloch_too_coarse(self):
        code, summary = run_cli('build', 'bloch', '--Q', '1e-3', '--t', '12', '--n1', '41', '--n3', '5',
                                '--L', '24', '--out-dir', self.test_dir)
        self.assertEqual(code, 1)
        self.assertEqual(summary['error_code'], 'GRID_TOO_COARSE')

    def test_build_missing_parameter(self):
        code, summary = run_cli('build', 'neel', '--t', '1', '--out-dir', self.test_dir)
        self.assertEqual(code, 1)
        self.assertEqual(summary['error_code'], 'MISSING_PARAMETER')

    def test_energy_uniform(self):
        grid = StripGrid(L=2.0, t=1.0, n1=33, n3=3)
        write_field(make_uniform(grid, (0.0, 1.0, 0.0)), self.path('u.field'))
        code, summary = run_cli('energy', self.path('u.field'), '--Q', '1e-3',
                                '--csv', 'e.csv', '--out-dir', self.test_dir)
        self.assertEqual(code, 0)
        self.assertEqual(summary['energy']['total'], 0.0)
        self.assertEqual(summary['line_charge_energy'], 0.0)
        self.assertFalse(summary['validation']['valid'])
        rows = read_rows(self.path('e.csv'))
        self.assertEqual(float(rows[0]['total']), 0.0)
        self.assertEqual(Path(self.path('e.csv')).read_text().split('\n')[0], VERSION_LINE)

    def test_energy_of_built_neel(self):
        run_cli('build', 'neel', '--Q', '1e-3', '--t', '1', '--n1', '401', '--n3', '3', '--L', '20',
                '--out-dir', self.test_dir)
        code, summary = run_cli('energy', self.path('neel.field'), '--Q', '1e-3')
        self.assertEqual(code, 0)
        self.assertGreater(summary['energy']['stray'], 0.0)
        self.assertEqual(summary['face_m3_max'], 0.0)
        self.assertLessEqual(summary['energy']['stray'], summary['line_charge_energy'])

    def test_energy_thickness_mismatch(self):
        write_field(random_admissible(StripGrid(L=2.0, t=1.0, n1=17, n3=3)), self.path('r.field'))
        code, summary = run_cli('energy', self.path('r.field'), '--Q', '1e-3', '--t', '2')
        self.assertEqual(code, 1)
        self.assertEqual(summary['error_code'], 'THICKNESS_MISMATCH')

    def test_energy_truncated_file(self):
        Path(self.path('cut.field')).write_text('wallscale-field v1 L=1.0 n1=9 n3=3 t=1.0\n0 1 0\n')
        code, summary = run_cli('energy', self.path('cut.field'), '--Q', '1e-3')
        self.assertEqual(code, 2)
        self.assertEqual(summary['error_code'], 'TRUNCATED')

    def test_energy_missing_file(self):
        code, summary = run_cli('energy', self.path('nope.field'), '--Q', '1e-3')
        self.assertEqual(code, 2)
        self.assertEqual(summary['error_code'], 'IO_ERROR')

    def test_relax_trace(self):
        run_cli('build', 'neel', '--Q', '0.05', '--t', '1', '--n1', '65', '--n3', '3', '--L', '8',
                '--out-dir', self.test_dir)
        code, summary = run_cli('relax', self.path('neel.field'), '--Q', '0.05', '--max-iters', '10',
                                '--out-dir', self.test_dir)
        self.assertEqual(code, 0)
        self.assertTrue(os.path.exists(self.path('neel.relaxed.field')))
        rows = read_rows(self.path('trace.csv'))
        totals = [float(row['total']) for row in rows]
        self.assertEqual(len(totals), summary['report']['iterations'] + 1)
        self.assertTrue(all(b <= a for a, b in zip(totals, totals[1:])))
        self.assertEqual(Path(self.path('trace.csv')).read_text().split('\n')[0], VERSION_LINE)

    def test_sweep_deterministic(self):
        argv = ('sweep', '--Q-values', '0.01', '--t-over-d', '2', '40', '--n1', '161', '--n3', '41',
                '--L', '4', '--max-iters', '3', '--out-dir', self.test_dir)
        code, summary = run_cli(*argv)
        self.assertEqual(code, 0)
        self.assertEqual(summary['points'], 2)
        self.assertEqual(summary['statuses'], {'ok': 1, 'skipped_regime': 1})
        self.assertEqual(summary['fit']['error_code'], 'INSUFFICIENT_POINTS')
        first = Path(self.path('sweep.csv')).read_bytes()

        run_cli(*argv)
        self.assertEqual(first, Path(self.path('sweep.csv')).read_bytes())
        self.assertTrue(first.startswith(VERSION_LINE.encode()))
        rows = read_rows(self.path('sweep.csv'))
        self.assertEqual([row['status'] for row in rows], ['ok', 'skipped_regime'])

    def test_sweep_empty(self):
        code, summary = run_cli('sweep', '--Q-values', '0.01', '--out-dir', self.test_dir)
        self.assertEqual(code, 1)
        self.assertEqual(summary['error_code'], 'EMPTY_SWEEP')

    def test_crossover_degenerate_bracket(self):
        code, summary = run_cli('crossover', '--Q-values', '0.001', '--bracket', '3', '3')
        self.assertEqual(code, 1)
        self.assertEqual(summary['error_code'], 'DEGENERATE_BRACKET')

    def test_verify_bounds(self):
        code, summary = run_cli('verify-bounds', '--Q', '0.01', '--t', '2', '--n1', '161', '--n3', '41',
                                '--L', '4', '--max-iters', '3', '--perturbations', '2', '--no-refine',
                                '--csv', 'audit.csv', '--out-dir', self.test_dir)
        self.assertEqual(code, 0 if summary['success'] else 1)
        self.assertEqual(summary['core_lemmas'], ['l2', 'l1', 'poincare'])
        self.assertNotIn('stability', summary)
        rows = read_rows(self.path('audit.csv'))
        self.assertEqual({row['lemma'] for row in rows}, set(summary['calibration']))

    def test_verify_bounds_outside_hypothesis(self):
        code, summary = run_cli('verify-bounds', '--Q', '0.01', '--t', '0.05', '--no-refine')
        self.assertEqual(code, 1)
        self.assertEqual(summary['error_code'], 'OUTSIDE_HYPOTHESIS')

    def test_config_unknown_key(self):
        Path(self.path('run.yaml')).write_text('params:\n  Q: 0.001\n  foo: 1\n')
        code, summary = run_cli('build', 'neel', '--config', self.path('run.yaml'))
        self.assertEqual(code, 1)
        self.assertEqual(summary['error_code'], 'UNKNOWN_KEY')

    def test_config_missing_file(self):
        code, summary = run_cli('build', 'neel', '--config', self.path('missing.yaml'))
        self.assertEqual(code, 2)
        self.assertEqual(summary['error_code'], 'CONFIG_IO')

    def test_config_file_drives_build(self):
        Path(self.path('run.yaml')).write_text(
            'params:\n  Q: 0.001\n  t: 1.0\ngrid:\n  n1: 201\n  n3: 3\n  L: 10.0\n'
            f'output:\n  dir: {self.test_dir}\n  field: cfg.field\n'
        )
        code, summary = run_cli('build', 'neel', '--config', self.path('run.yaml'))
        self.assertEqual(code, 0)
        self.assertEqual(summary['grid']['n1'], 201)
        self.assertEqual(summary['output'], self.path('cfg.field'))


def run_tests():
    """Run all tests."""
    print("wallscale - Test Suite")
    print("=" * 40)

    # Create test suite
    test_suite = unittest.TestSuite()

    # Add test modules
    test_modules = ['test_fields', 'test_energy', 'test_constructions', 'test_minimize', 'test_bounds',
                    'test_sweep']
    loader = unittest.TestLoader()
    for name in test_modules:
        test_suite.addTests(loader.loadTestsFromName(name))

    for test_class in (TestFieldIO, TestRunConfig, TestErrorHandler, TestPlotting, TestCommandLine):
        test_suite.addTests(loader.loadTestsFromTestCase(test_class))

    # Run tests
    runner = unittest.TextTestRunner(verbosity=2)
    result = runner.run(test_suite)

    # Print summary
    print("\n" + "=" * 40)
    print(f"Tests run: {result.testsRun}")
    print(f"Failures: {len(result.failures)}")
    print(f"Errors: {len(result.errors)}")
    print(f"Skipped: {len(result.skipped)}")

    success = result.wasSuccessful()
    print(f"\nTest Result: {'PASSED' if success else 'FAILED'}")

    return success


if __name__ == '__main__':
    os.environ.setdefault('WALLSCALE_CONFIG', 'testing')
    success = run_tests()
    sys.exit(0 if success else 1)
