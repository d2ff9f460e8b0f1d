#!/usr/bin/env python3
"""
Test Suite for the fields module
Material parameters, grids, admissibility and the grid policy.
"""

import math
import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import Config
from modules.error_handler import FieldValidationError
from modules.fields import (
    LEFT_STATE, RIGHT_STATE, GridPolicy, MagnetizationField, MaterialParams, Profile1D, StripGrid,
    default_half_width, enforce_clamp, make_grid, make_uniform, normalize_nodes, validate_admissible,
    vertical_average
)


def random_admissible(grid, seed=0):
    """Random clamped unit field used across the suites."""
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((grid.n3, grid.n1, 3))
    normalize_nodes(values)
    enforce_clamp(values)
    return MagnetizationField(grid, values)


class TestMaterialParams(unittest.TestCase):
    """Test material parameters and the soft regime."""

    def test_ratios(self):
        params = MaterialParams(d=2.0, Q=1e-3, t=6.0)
        self.assertAlmostEqual(params.t_over_d, 3.0)
        self.assertAlmostEqual(params.log_ratio, math.log(9.0 / 1e-3))

    def test_non_positive_rejected(self):
        for bad in ({'d': 0.0, 'Q': 1e-3, 't': 1.0}, {'d': 1.0, 'Q': -1.0, 't': 1.0},
                    {'d': 1.0, 'Q': 1e-3, 't': float('nan')}):
            with self.assertRaises(FieldValidationError) as ctx:
                MaterialParams(**bad)
            self.assertEqual(ctx.exception.error_code, 'INVALID_PARAMETER')

    def test_regime_report(self):
        inside = MaterialParams(1.0, 1e-3, 3.0).regime_report()
        self.assertTrue(inside['in_soft_regime'])

        thick = MaterialParams(1.0, 1e-2, 20.0).regime_report()
        self.assertFalse(thick['below_upper'])
        self.assertFalse(thick['in_soft_regime'])

        hard = MaterialParams(1.0, 0.2, 1.0)
        self.assertFalse(hard.in_soft_regime())
        self.assertFalse(hard.regime_report()['soft'])


class TestStripGrid(unittest.TestCase):
    """Test grid geometry and quadrature."""

    def test_spacing_and_nodes(self):
        grid = StripGrid(L=4.0, t=2.0, n1=33, n3=5)
        self.assertAlmostEqual(grid.h1, 0.25)
        self.assertAlmostEqual(grid.h3, 0.5)
        self.assertEqual(grid.x1[0], -4.0)
        self.assertEqual(grid.x1[-1], 4.0)
        self.assertAlmostEqual(grid.x3[0], -1.0)

    def test_weights_integrate_area(self):
        grid = StripGrid(L=3.0, t=0.5, n1=21, n3=4)
        self.assertAlmostEqual(float(np.sum(grid.w3)), grid.t, places=14)
        self.assertAlmostEqual(float(np.sum(grid.cell_weights)), grid.area, places=12)

    def test_refined_halves_spacing(self):
        grid = StripGrid(L=2.0, t=1.0, n1=17, n3=3)
        fine = grid.refined()
        self.assertEqual((fine.n1, fine.n3), (33, 5))
        self.assertAlmostEqual(fine.h1, 0.5 * grid.h1)

    def test_invalid_sizes(self):
        with self.assertRaises(FieldValidationError):
            StripGrid(L=1.0, t=1.0, n1=3, n3=3)
        with self.assertRaises(FieldValidationError):
            StripGrid(L=1.0, t=1.0, n1=8, n3=1)
        with self.assertRaises(FieldValidationError):
            StripGrid(L=-1.0, t=1.0, n1=8, n3=3)

    def test_grids_are_hashable(self):
        self.assertEqual(hash(StripGrid(1.0, 1.0, 9, 3)), hash(StripGrid(1.0, 1.0, 9, 3)))


class TestMagnetizationField(unittest.TestCase):
    """Test field containers and admissibility."""

    def setUp(self):
        self.grid = StripGrid(L=2.0, t=1.0, n1=17, n3=3)

    def test_shape_checked(self):
        with self.assertRaises(FieldValidationError) as ctx:
            MagnetizationField(self.grid, np.zeros((3, 16, 3)))
        self.assertEqual(ctx.exception.error_code, 'SHAPE_MISMATCH')

    def test_values_read_only(self):
        field = random_admissible(self.grid)
        with self.assertRaises(ValueError):
            field.values[0, 0, 0] = 1.0

    def test_random_field_admissible(self):
        report = validate_admissible(random_admissible(self.grid))
        self.assertTrue(report['valid'])
        self.assertLessEqual(report['norm_residual'], Config.NORM_TOL)
        self.assertEqual(report['clamp_left'], 0.0)

    def test_uniform_field_fails_left_clamp(self):
        report = validate_admissible(make_uniform(self.grid, (0.0, 1.0, 0.0)))
        self.assertFalse(report['valid'])
        self.assertEqual(report['error_code'], 'NOT_ADMISSIBLE')
        self.assertEqual(report['clamp_right'], 0.0)
        self.assertAlmostEqual(report['clamp_left'], 2.0)

    def test_non_unit_rejected(self):
        values = np.array(random_admissible(self.grid).values)
        values[1, 5] *= 1.01
        report = validate_admissible(MagnetizationField(self.grid, values))
        self.assertFalse(report['valid'])
        self.assertIn('Norm residual', report['errors'][0])

    def test_non_finite_reported(self):
        values = np.array(random_admissible(self.grid).values)
        values[0, 3, 1] = np.nan
        report = validate_admissible(MagnetizationField(self.grid, values))
        self.assertEqual(report['error_code'], 'NON_FINITE')

    def test_make_uniform_rejects_non_unit(self):
        with self.assertRaises(FieldValidationError) as ctx:
            make_uniform(self.grid, (0.0, 2.0, 0.0))
        self.assertEqual(ctx.exception.error_code, 'NON_UNIT_VECTOR')

    def test_normalize_zero_vector(self):
        values = np.zeros((3, 17, 3))
        with self.assertRaises(FieldValidationError) as ctx:
            normalize_nodes(values)
        self.assertEqual(ctx.exception.error_code, 'ZERO_VECTOR')

    def test_enforce_clamp(self):
        values = np.ones((3, 17, 3))
        enforce_clamp(values)
        np.testing.assert_array_equal(values[:, 0], np.tile(LEFT_STATE, (3, 1)))
        np.testing.assert_array_equal(values[:, -1], np.tile(RIGHT_STATE, (3, 1)))

    def test_reflection_keeps_admissibility(self):
        field = random_admissible(self.grid, seed=3)
        self.assertTrue(validate_admissible(field.reflected())['valid'])

    def test_vertical_average_of_constant(self):
        field = make_uniform(self.grid, (0.6, 0.8, 0.0))
        np.testing.assert_allclose(vertical_average(field, 2), 0.8, rtol=0, atol=1e-15)


class TestProfile1D(unittest.TestCase):
    """Test in-plane angle profiles."""

    def test_clamped_profile(self):
        x = np.linspace(-1.0, 1.0, 11)
        profile = Profile1D(x, 0.5 * np.pi * x)
        self.assertTrue(profile.is_clamped())
        self.assertAlmostEqual(profile.h, 0.2)
        np.testing.assert_allclose(profile.m1 ** 2 + profile.m2 ** 2, 1.0)

    def test_non_uniform_rejected(self):
        with self.assertRaises(FieldValidationError):
            Profile1D(np.array([0.0, 0.1, 0.3, 0.4]), np.zeros(4))


class TestGridPolicy(unittest.TestCase):
    """Test truncation and resolution policy."""

    def test_default_half_width(self):
        params = MaterialParams(1.0, 1e-3, 2.0)
        self.assertAlmostEqual(default_half_width(params, 'bloch'), Config.L_MIN_OVER_T * 2.0)
        self.assertAlmostEqual(default_half_width(params, 'neel'), Config.C_TAIL * 2.0 / 1e-3)
        with self.assertRaises(FieldValidationError):
            default_half_width(params, 'vortex')

    def test_make_grid_resolves_core(self):
        params = MaterialParams(1.0, 1e-2, 2.0)
        grid = make_grid(params, 'neel', GridPolicy(L=20.0))
        self.assertEqual(grid.L, 20.0)
        self.assertEqual(grid.n1 % 2, 1)
        self.assertLessEqual(grid.h1, 0.5 / Config.POINTS_PER_CORE + 1e-12)
        self.assertLessEqual(grid.n3, Config.NEEL_MAX_N3)

    def test_make_grid_center_node(self):
        grid = make_grid(MaterialParams(1.0, 1e-2, 1.0), 'neel', GridPolicy(L=10.0))
        self.assertAlmostEqual(grid.x1[grid.n1 // 2], 0.0, places=12)

    def test_make_grid_cap(self):
        params = MaterialParams(1.0, 1e-4, 1.0)
        with self.assertLogs('modules.fields', level='WARNING'):
            grid = make_grid(params, 'neel', GridPolicy(max_n1=1025))
        self.assertEqual(grid.n1, 1025)

    def test_explicit_grid_wins(self):
        params = MaterialParams(1.0, 1e-3, 12.0)
        grid = make_grid(params, 'bloch', GridPolicy(n1=97, n3=25, L=24.0))
        self.assertEqual((grid.n1, grid.n3, grid.L), (97, 25, 24.0))


if __name__ == '__main__':
    unittest.main()
