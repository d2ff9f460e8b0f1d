"""
Energy Module
Handles the exchange, anisotropy and stray-field terms of the specific wall energy.

Lengths are scaled by the film thickness t internally; public results carry length^2.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import fft, sparse

from config import Config
from modules.error_handler import ErrorHandler, FieldValidationError
from modules.fields import MagnetizationField, MaterialParams, StripGrid


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Exchange, anisotropy and stray-field parts of the wall energy (length^2)."""

    exchange: float
    anisotropy: float
    stray: float
    total: float = field(init=False)
    diagnostics: Dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'total', self.exchange + self.anisotropy + self.stray)

    def to_dict(self) -> Dict:
        data = {
            'exchange': self.exchange,
            'anisotropy': self.anisotropy,
            'stray': self.stray,
            'total': self.total,
        }
        data.update(self.diagnostics)
        return data

    @property
    def stray_fraction(self) -> float:
        return self.stray / self.total if self.total > 0 else 0.0


@dataclass(frozen=True, eq=False)
class StrayFieldSolution:
    """Per-wavenumber stray-field potential of one field."""

    grid: StripGrid
    wavenumbers: np.ndarray        # k in 1/length, FFT order
    charges: np.ndarray            # (n_modes, n3), nodal charge per mode (nondimensional)
    potential: np.ndarray          # (n_modes, n3), u-hat at the x3 nodes (nondimensional)
    grad_u: np.ndarray             # (n3, n_modes, 2), (d1 u, d3 u) on the periodic nodes
    dirichlet_energy: float        # length^2
    truncation_residual: float     # largest jump of m1, m3 across the periodic seam


@dataclass(frozen=True, eq=False)
class GridOperators:
    """Difference operators and quadrature weights in units of t."""

    d1: sparse.csr_matrix
    d3: np.ndarray
    weights: np.ndarray
    w1: np.ndarray
    w3: np.ndarray
    h1: float


@dataclass(frozen=True, eq=False)
class ModeKernels:
    k: np.ndarray              # |k| symbol of the Green's function
    k_deriv: np.ndarray        # symbol of d/dx1 (Nyquist removed)
    green: np.ndarray          # (n_modes, n3, n3)
    face_charge: np.ndarray    # S - W D3 acting on m3-hat


def difference_matrix(n: int, h: float) -> sparse.csr_matrix:
    """Central differences inside, first-order one-sided differences at both ends."""
    main = np.zeros(n)
    upper = np.full(n - 1, 0.5 / h)
    lower = np.full(n - 1, -0.5 / h)
    main[0], upper[0] = -1.0 / h, 1.0 / h
    main[-1], lower[-1] = 1.0 / h, -1.0 / h
    return sparse.diags([lower, main, upper], [-1, 0, 1], format='csr')


@lru_cache(maxsize=16)
def grid_operators(grid: StripGrid) -> GridOperators:
    t = grid.t
    w1 = grid.w1 / t
    w3 = grid.w3 / t
    return GridOperators(
        d1=difference_matrix(grid.n1, grid.h1 / t),
        d3=difference_matrix(grid.n3, grid.h3 / t).toarray(),
        weights=np.outer(w3, w1),
        w1=w1,
        w3=w3,
        h1=grid.h1 / t,
    )


@lru_cache(maxsize=8)
def mode_kernels(grid: StripGrid) -> ModeKernels:
    """Green's matrices e^{-|k||z|}/(2|k|) (and -|z|/2 at k = 0) between the x3 nodes."""
    ops = grid_operators(grid)
    n = grid.n1 - 1
    k = 2.0 * np.pi * fft.fftfreq(n, ops.h1)
    k_abs = np.abs(k)
    k_deriv = k.copy()
    if n % 2 == 0:
        k_deriv[n // 2] = 0.0

    z = grid.x3 / grid.t
    dz = np.abs(z[:, None] - z[None, :])
    green = np.empty((n, grid.n3, grid.n3))
    nonzero = k_abs > 0
    green[nonzero] = np.exp(-k_abs[nonzero, None, None] * dz) / (2.0 * k_abs[nonzero, None, None])
    green[~nonzero] = -0.5 * dz

    faces = np.zeros((grid.n3, grid.n3))
    faces[0, 0], faces[-1, -1] = -1.0, 1.0
    face_charge = faces - ops.w3[:, None] * ops.d3

    logger.debug(f"Built mode kernels for n1={grid.n1}, n3={grid.n3}")
    return ModeKernels(k=k_abs, k_deriv=k_deriv, green=green, face_charge=face_charge)


def _along_x1(op, values: np.ndarray) -> np.ndarray:
    n3, n1, c = values.shape
    flat = np.moveaxis(values, 1, 0).reshape(n1, n3 * c)
    return np.moveaxis(np.asarray(op @ flat).reshape(n1, n3, c), 0, 1)


def tangent_projection(gradient: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Project nodal vectors onto the tangent planes of the sphere and zero the clamp columns."""
    tangent = gradient - np.sum(gradient * values, axis=-1, keepdims=True) * values
    tangent[:, 0, :] = 0.0
    tangent[:, -1, :] = 0.0
    return tangent


class StrayFieldSolver:
    """Spectral solver of the magnetostatic potential of a strip field."""

    def solve_stray_field(self, field: MagnetizationField) -> StrayFieldSolution:
        """
        Solve for the potential u generated by the charges of a field.

        The x1 direction is periodic over the n1 - 1 distinct nodes; m1 and m3
        vanish at both clamps so the extension has no jump.

        Args:
            field: Magnetization field (must be finite)

        Returns:
            StrayFieldSolution with the Dirichlet energy in length^2
        """
        ErrorHandler.validate_finite('field', field.values)
        grid = field.grid
        energy, solution = self._solve(field.values, grid)
        if solution.truncation_residual > Config.CLAMP_TOL:
            logger.warning(f"m1/m3 jump by {solution.truncation_residual:.3g} across the periodic seam; "
                           f"the stray field sees a phantom charge line")
        return solution

    def _solve(self, values: np.ndarray, grid: StripGrid) -> Tuple[float, StrayFieldSolution]:
        ops = grid_operators(grid)
        kern = mode_kernels(grid)
        n = grid.n1 - 1

        m1_hat = fft.fft(values[:, :n, 0], axis=1).T
        m3_hat = fft.fft(values[:, :n, 2], axis=1).T
        charges = -ops.w3 * (1j * kern.k_deriv[:, None] * m1_hat) + m3_hat @ kern.face_charge.T
        potential = np.einsum('kij,kj->ki', kern.green, charges)

        energy = ops.h1 / n * float(np.sum((np.conj(charges) * potential).real))

        grad_u = np.empty((grid.n3, n, 2))
        grad_u[:, :, 0] = fft.ifft((1j * kern.k_deriv[:, None] * potential).T, axis=1).real
        grad_u[:, :, 1] = fft.ifft((potential @ ops.d3.T).T, axis=1).real

        # m1 and m3 must match across the periodic seam
        seam = values[:, -1, :] - values[:, 0, :]
        residual = float(np.max(np.abs(seam[:, [0, 2]])))
        solution = StrayFieldSolution(
            grid=grid,
            wavenumbers=kern.k_deriv / grid.t,
            charges=charges,
            potential=potential,
            grad_u=grad_u,
            dirichlet_energy=grid.t ** 2 * energy,
            truncation_residual=residual,
        )
        return energy, solution

    def stray_pairing(self, field: MagnetizationField, solution: StrayFieldSolution) -> float:
        """Charge-potential pairing of the weak form tested with u (length^2)."""
        grid = field.grid
        ops = grid_operators(grid)
        n = grid.n1 - 1
        m = field.values[:, :n, :]
        density = m[:, :, 0] * solution.grad_u[:, :, 0] + m[:, :, 2] * solution.grad_u[:, :, 1]
        return grid.t ** 2 * ops.h1 * float(ops.w3 @ density.sum(axis=1))


class WallEnergy:
    """Class to evaluate the discretized wall energy and its gradient."""

    def __init__(self):
        self.stray_solver = StrayFieldSolver()

    def exchange_energy(self, field: MagnetizationField, params: MaterialParams) -> float:
        """
        Exchange energy d^2 * integral of |grad m|^2.

        Args:
            field: Magnetization field
            params: Material parameters

        Returns:
            Energy in length^2
        """
        energy, _ = self._exchange(field.values, field.grid, params, with_gradient=False)
        return field.grid.t ** 2 * energy

    def anisotropy_energy(self, field: MagnetizationField, params: MaterialParams) -> float:
        """Anisotropy energy Q * integral of (m1^2 + m3^2), in length^2."""
        energy, _ = self._anisotropy(field.values, field.grid, params, with_gradient=False)
        return field.grid.t ** 2 * energy

    def solve_stray_field(self, field: MagnetizationField) -> StrayFieldSolution:
        return self.stray_solver.solve_stray_field(field)

    def stray_pairing(self, field: MagnetizationField, solution: StrayFieldSolution) -> float:
        return self.stray_solver.stray_pairing(field, solution)

    def total_energy(self, field: MagnetizationField, params: MaterialParams,
                     diagnostics: bool = False) -> EnergyBreakdown:
        """
        Evaluate all three energy terms.

        Args:
            field: Magnetization field
            params: Material parameters
            diagnostics: Attach truncation residual and reciprocity defect

        Returns:
            EnergyBreakdown in length^2
        """
        ErrorHandler.validate_finite('field', field.values)
        grid = field.grid
        scale = grid.t ** 2
        exchange, _ = self._exchange(field.values, grid, params, with_gradient=False)
        anisotropy, _ = self._anisotropy(field.values, grid, params, with_gradient=False)
        stray, solution = self.stray_solver._solve(field.values, grid)

        extra = {}
        if diagnostics:
            pairing = self.stray_pairing(field, solution)
            dirichlet = solution.dirichlet_energy
            extra = {
                'truncation_residual': solution.truncation_residual,
                'reciprocity_defect': abs(dirichlet - pairing) / max(abs(dirichlet), np.finfo(float).tiny),
            }
        return EnergyBreakdown(scale * exchange, scale * anisotropy, scale * stray, diagnostics=extra)

    def energy_gradient(self, field: MagnetizationField, params: MaterialParams) -> np.ndarray:
        """
        Tangent gradient of the discrete total energy with respect to nodal values.

        Args:
            field: Magnetization field
            params: Material parameters

        Returns:
            Array (n3, n1, 3) orthogonal to m at every node, zero on the clamp columns
        """
        _, gradient = self.evaluate(field.values, field.grid, params)
        return tangent_projection(gradient, field.values)

    def evaluate(self, values: np.ndarray, grid: StripGrid, params: MaterialParams,
                 with_gradient: bool = True) -> Tuple[EnergyBreakdown, Optional[np.ndarray]]:
        """
        Energy and raw (unprojected) nodal gradient of an array of node values.

        Args:
            values: Array (n3, n1, 3)
            grid: Grid of the values
            params: Material parameters
            with_gradient: Skip the gradient when False

        Returns:
            Tuple of (EnergyBreakdown, gradient in length^2 per unit node value or None)
        """
        scale = grid.t ** 2
        exchange, g_ex = self._exchange(values, grid, params, with_gradient)
        anisotropy, g_an = self._anisotropy(values, grid, params, with_gradient)
        stray, solution = self.stray_solver._solve(values, grid)
        breakdown = EnergyBreakdown(scale * exchange, scale * anisotropy, scale * stray)
        if not with_gradient:
            return breakdown, None

        ops = grid_operators(grid)
        n = grid.n1 - 1
        g_st = np.zeros_like(values)
        g_st[:, :n, 0] = 2.0 * ops.h1 * ops.w3[:, None] * solution.grad_u[:, :, 0]
        g_st[:, :n, 2] = 2.0 * ops.h1 * ops.w3[:, None] * solution.grad_u[:, :, 1]
        return breakdown, scale * (g_ex + g_an + g_st)

    def nodal_weights(self, grid: StripGrid) -> np.ndarray:
        """Quadrature weight of every node in length^2, shape (n3, n1, 1)."""
        return grid.t ** 2 * grid_operators(grid).weights[:, :, None]

    def _exchange(self, values, grid, params, with_gradient):
        ops = grid_operators(grid)
        coeff = (params.d / grid.t) ** 2
        g1 = _along_x1(ops.d1, values)
        g3 = np.einsum('ij,jkc->ikc', ops.d3, values)
        density = np.sum(g1 ** 2 + g3 ** 2, axis=-1)
        energy = coeff * float(np.sum(ops.weights * density))
        if not with_gradient:
            return energy, None
        w = ops.weights[:, :, None]
        gradient = _along_x1(ops.d1.T, w * g1) + np.einsum('ji,jkc->ikc', ops.d3, w * g3)
        return energy, 2.0 * coeff * gradient

    def _anisotropy(self, values, grid, params, with_gradient):
        ops = grid_operators(grid)
        hard = values.copy()
        hard[:, :, 1] = 0.0
        energy = params.Q * float(np.sum(ops.weights * np.sum(hard ** 2, axis=-1)))
        if not with_gradient:
            return energy, None
        return energy, 2.0 * params.Q * ops.weights[:, :, None] * hard

    @staticmethod
    def half_norm_energy(samples: np.ndarray, h: float) -> float:
        """
        Two-sided harmonic-extension energy of a line trace, 2 * sum |k| |F_k|^2 * h/n.

        Args:
            samples: Uniform samples whose first and last values coincide
            h: Sample spacing

        Returns:
            Dimensionless energy N
        """
        samples = np.asarray(samples, dtype=float)
        ErrorHandler.validate_finite('samples', samples)
        n = samples.size - 1
        if n < 2:
            raise FieldValidationError("Need at least three samples", "SHAPE_MISMATCH")
        spectrum = fft.fft(samples[:n])
        k = 2.0 * np.pi * fft.fftfreq(n, h)
        return 2.0 * h / n * float(np.sum(np.abs(k) * np.abs(spectrum) ** 2))
