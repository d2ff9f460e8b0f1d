#!/usr/bin/env python3
"""
Test Suite for the energy module
Closed-form oracles, the stray-field solver, reciprocity and the discrete gradient.
"""

import math
import os
import sys
import unittest

import numpy as np
from scipy import integrate

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from modules.energy import WallEnergy, difference_matrix, tangent_projection
from modules.error_handler import FieldValidationError
from modules.fields import MagnetizationField, MaterialParams, StripGrid, make_uniform
from test_fields import random_admissible


def in_plane_field(grid, theta):
    """x3-independent field (cos theta, sin theta, 0) for theta sampled on x1."""
    row = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=-1)
    return MagnetizationField(grid, np.broadcast_to(row, (grid.n3, grid.n1, 3)))


def line_kernel_mode(k: float, a: float) -> float:
    """
    Fourier mode of the line-charge kernel -(1/2 pi) ln sqrt(s^2 + a^2), by quadrature.

    Integrating by parts against cos(k s) leaves (1 / (pi k)) * int_0^inf s/(s^2+a^2) sin(k s) ds.
    """
    def near(s):
        return k * np.sinc(k * s / np.pi) if a == 0.0 else s / (s * s + a * a) * math.sin(k * s)

    head, _ = integrate.quad(near, 0.0, 1.0, limit=200)
    tail, _ = integrate.quad(lambda s: s / (s * s + a * a), 1.0, np.inf, weight='sin', wvar=k)
    return (head + tail) / (math.pi * k)


class TestDifferenceMatrix(unittest.TestCase):
    """Test the difference operator."""

    def test_linear_exact(self):
        x = np.linspace(0.0, 1.0, 9)
        np.testing.assert_allclose(difference_matrix(9, x[1]) @ (3.0 * x - 1.0), 3.0, rtol=1e-12)

    def test_summation_by_parts(self):
        n, h = 7, 0.3
        w = np.full(n, h)
        w[0] = w[-1] = 0.5 * h
        wd = np.diag(w) @ difference_matrix(n, h).toarray()
        expected = np.zeros((n, n))
        expected[0, 0], expected[-1, -1] = -1.0, 1.0
        np.testing.assert_allclose(wd + wd.T, expected, atol=1e-14)


class TestLocalTerms(unittest.TestCase):
    """Test exchange and anisotropy against closed forms."""

    def setUp(self):
        self.energy = WallEnergy()
        self.params = MaterialParams(d=1.3, Q=0.02, t=1.0)

    def test_linear_angle_exchange(self):
        grid = StripGrid(L=2.0, t=1.0, n1=33, n3=3)
        s = 0.7
        field = in_plane_field(grid, s * grid.x1)
        h = grid.h1
        expected = self.params.d ** 2 * grid.t * (
            (grid.n1 - 2) * math.sin(s * h) ** 2 / h + 4.0 * math.sin(0.5 * s * h) ** 2 / h
        )
        self.assertAlmostEqual(self.energy.exchange_energy(field, self.params) / expected, 1.0, places=12)

    def test_uniform_hard_axis_anisotropy(self):
        grid = StripGrid(L=3.0, t=1.0, n1=25, n3=4)
        field = make_uniform(grid, (1.0, 0.0, 0.0))
        self.assertAlmostEqual(self.energy.anisotropy_energy(field, self.params),
                               self.params.Q * grid.area, places=12)
        self.assertEqual(self.energy.exchange_energy(field, self.params), 0.0)

    def test_easy_axis_field_has_zero_energy(self):
        grid = StripGrid(L=3.0, t=1.0, n1=25, n3=4)
        breakdown = self.energy.total_energy(make_uniform(grid, (0.0, 1.0, 0.0)), self.params)
        self.assertEqual(breakdown.total, 0.0)
        self.assertEqual(breakdown.stray_fraction, 0.0)

    def test_non_finite_rejected(self):
        grid = StripGrid(L=1.0, t=1.0, n1=9, n3=3)
        values = np.zeros((3, 9, 3))
        values[..., 1] = 1.0
        values[1, 4, 0] = np.inf
        with self.assertRaises(FieldValidationError) as ctx:
            self.energy.total_energy(MagnetizationField(grid, values), self.params)
        self.assertEqual(ctx.exception.error_code, 'NON_FINITE')


class TestStrayField(unittest.TestCase):
    """Test the spectral stray-field solver."""

    def setUp(self):
        self.energy = WallEnergy()

    def single_mode(self, grid, eps, j):
        k0 = math.pi * j / grid.L
        values = np.zeros((grid.n3, grid.n1, 3))
        values[:, :, 2] = eps * np.cos(k0 * grid.x1)[None, :]
        return MagnetizationField(grid, values), k0

    def test_single_mode_closed_form(self):
        grid = StripGrid(L=2.0, t=1.0, n1=33, n3=8)
        field, k0 = self.single_mode(grid, 0.3, 2)
        solution = self.energy.solve_stray_field(field)
        P = 2.0 * grid.L
        expected = 0.3 ** 2 * P * (1.0 - math.exp(-k0 * grid.t)) / (2.0 * k0)
        self.assertAlmostEqual(solution.dirichlet_energy / expected, 1.0, places=10)

    def test_single_mode_line_kernel_oracle(self):
        grid = StripGrid(L=2.0, t=1.0, n1=33, n3=8)
        eps = 0.3
        field, k0 = self.single_mode(grid, eps, 3)
        solution = self.energy.solve_stray_field(field)
        P = 2.0 * grid.L
        oracle = eps ** 2 * P * (line_kernel_mode(k0, 0.0) - line_kernel_mode(k0, grid.t))
        self.assertLess(abs(solution.dirichlet_energy - oracle) / oracle, 1e-3)

    def test_thickness_scaling(self):
        base = StripGrid(L=2.0, t=1.0, n1=33, n3=5)
        scaled = StripGrid(L=6.0, t=3.0, n1=33, n3=5)
        field = random_admissible(base, seed=4)
        e1 = self.energy.solve_stray_field(field).dirichlet_energy
        e3 = self.energy.solve_stray_field(MagnetizationField(scaled, field.values)).dirichlet_energy
        self.assertAlmostEqual(e3 / e1, 9.0, places=10)

    def test_reciprocity(self):
        grid = StripGrid(L=2.0, t=1.0, n1=33, n3=8)
        for seed in range(3):
            field = random_admissible(grid, seed=seed)
            solution = self.energy.solve_stray_field(field)
            pairing = self.energy.stray_pairing(field, solution)
            self.assertLess(abs(solution.dirichlet_energy - pairing) / solution.dirichlet_energy, 1e-10)
            self.assertLess(solution.truncation_residual, 1e-10)

    def test_diagnostics_attached(self):
        grid = StripGrid(L=2.0, t=1.0, n1=33, n3=8)
        breakdown = self.energy.total_energy(random_admissible(grid), MaterialParams(1.0, 1e-3, 1.0),
                                             diagnostics=True)
        self.assertIn('reciprocity_defect', breakdown.to_dict())
        self.assertLess(breakdown.diagnostics['reciprocity_defect'], 1e-10)
        self.assertEqual(breakdown.diagnostics['truncation_residual'], 0.0)
        self.assertGreater(breakdown.stray, 0.0)

    def test_seam_jump_reported(self):
        grid = StripGrid(L=2.0, t=1.0, n1=33, n3=4)
        # theta runs from 0 to pi/2, so m1 drops from 1 to 0 across the seam
        theta = 0.25 * np.pi * (grid.x1 / grid.L + 1.0)
        with self.assertLogs('modules.energy', level='WARNING'):
            solution = self.energy.solve_stray_field(in_plane_field(grid, theta))
        self.assertAlmostEqual(solution.truncation_residual, 1.0, places=12)

    def test_in_plane_wall_below_line_charge_energy(self):
        grid = StripGrid(L=8.0, t=1.0, n1=257, n3=3)
        theta = 0.5 * np.pi * np.sin(0.5 * np.pi * grid.x1 / grid.L)
        field = in_plane_field(grid, theta)
        stray = self.energy.solve_stray_field(field).dirichlet_energy
        line = grid.t ** 2 * WallEnergy.half_norm_energy(np.cos(theta), grid.h1)
        self.assertGreater(stray, 0.0)
        self.assertLessEqual(stray, line)


class TestHalfNorm(unittest.TestCase):
    """Test the line-charge energy N."""

    def test_sine_mode(self):
        L, n1 = 3.0, 129
        x = np.linspace(-L, L, n1)
        k0 = 2.0 * np.pi / L
        value = WallEnergy.half_norm_energy(np.sin(k0 * x), x[1] - x[0])
        self.assertAlmostEqual(value / (2.0 * L * k0), 1.0, places=10)

    def test_gaussian(self):
        x = np.linspace(-200.0, 200.0, 8193)
        value = WallEnergy.half_norm_energy(np.exp(-x ** 2), x[1] - x[0])
        self.assertAlmostEqual(value, 2.0, delta=1e-3)

    def test_too_short(self):
        with self.assertRaises(FieldValidationError):
            WallEnergy.half_norm_energy(np.zeros(2), 0.1)


class TestGradient(unittest.TestCase):
    """Test the discrete gradient against finite differences."""

    def setUp(self):
        self.energy = WallEnergy()
        self.params = MaterialParams(d=1.0, Q=0.05, t=1.0)
        self.grid = StripGrid(L=2.0, t=1.0, n1=32, n3=8)
        self.field = random_admissible(self.grid, seed=7)

    def test_tangent_and_clamped(self):
        g = self.energy.energy_gradient(self.field, self.params)
        np.testing.assert_allclose(np.sum(g * self.field.values, axis=-1), 0.0, atol=1e-12)
        self.assertEqual(float(np.max(np.abs(g[:, 0]))), 0.0)
        self.assertEqual(float(np.max(np.abs(g[:, -1]))), 0.0)

    def test_directional_derivatives(self):
        g = self.energy.energy_gradient(self.field, self.params)
        rng = np.random.default_rng(11)
        step = 1e-4
        for _ in range(20):
            v = tangent_projection(rng.standard_normal(self.field.values.shape), self.field.values)
            plus, _ = self.energy.evaluate(self.field.values + step * v, self.grid, self.params, False)
            minus, _ = self.energy.evaluate(self.field.values - step * v, self.grid, self.params, False)
            fd = (plus.total - minus.total) / (2.0 * step)
            analytic = float(np.sum(g * v))
            self.assertLess(abs(fd - analytic) / abs(analytic), 1e-5)


class TestSymmetryAndConvergence(unittest.TestCase):
    """Test invariances and mesh convergence."""

    def setUp(self):
        self.energy = WallEnergy()
        self.params = MaterialParams(d=1.0, Q=0.01, t=1.0)

    def test_reflection_invariance(self):
        grid = StripGrid(L=2.0, t=1.0, n1=33, n3=6)
        field = random_admissible(grid, seed=5)
        e = self.energy.total_energy(field, self.params)
        r = self.energy.total_energy(field.reflected(), self.params)
        self.assertAlmostEqual(r.exchange / e.exchange, 1.0, places=12)
        self.assertAlmostEqual(r.stray / e.stray, 1.0, places=10)

    def test_mesh_convergence(self):
        totals = []
        for n1 in (65, 129, 257):
            grid = StripGrid(L=4.0, t=1.0, n1=n1, n3=3)
            theta = 0.5 * np.pi * np.sin(0.5 * np.pi * grid.x1 / grid.L)
            totals.append(self.energy.total_energy(in_plane_field(grid, theta), self.params).total)
        coarse, fine = abs(totals[1] - totals[0]), abs(totals[2] - totals[1])
        # second order: halving h divides the increment by about 4
        self.assertGreater(fine / coarse, 0.2)
        self.assertLess(fine / coarse, 0.35)


if __name__ == '__main__':
    unittest.main()
