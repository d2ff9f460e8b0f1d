"""
Minimize Module
Handles sphere-constrained relaxation of wall fields by projected gradient descent.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config, get_config
from modules.energy import EnergyBreakdown, WallEnergy, tangent_projection
from modules.error_handler import ErrorHandler, RelaxationError
from modules.fields import (
    MagnetizationField, MaterialParams, enforce_clamp, normalize_nodes, validate_admissible
)


logger = logging.getLogger(__name__)

TRACE_COLUMNS = ('iter', 'exchange', 'anisotropy', 'stray', 'total', 'grad_norm')

MAX_STEP_GROWTH = 1e6
PROBE_DIRECTIONS = 5
PROBE_STEP = 1e-6
PROBE_ROUND_OFF = 1e-6


@dataclass(frozen=True)
class RelaxOptions:
    """Stopping rule and Armijo backtracking parameters."""

    max_iters: int = field(default_factory=lambda: get_config().MAX_ITERS)
    grad_tol: float = Config.GRAD_TOL
    initial_step: float = Config.INITIAL_STEP
    armijo_factor: float = Config.ARMIJO_FACTOR
    armijo_c: float = Config.ARMIJO_C
    stall_ratio: float = Config.STALL_RATIO
    probe_seed: int = Config.DEFAULT_SEED

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise RelaxationError(f"max_iters must be a positive integer, got {self.max_iters}",
                                  "INVALID_OPTIONS")
        for name in ('grad_tol', 'initial_step', 'stall_ratio'):
            ErrorHandler.validate_positive(name, getattr(self, name))
        if not 0.0 < self.armijo_factor < 1.0:
            raise RelaxationError(f"armijo_factor must lie in (0, 1), got {self.armijo_factor}",
                                  "INVALID_OPTIONS")
        if not 0.0 < self.armijo_c <= 0.5:
            raise RelaxationError(f"armijo_c must lie in (0, 1/2], got {self.armijo_c}", "INVALID_OPTIONS")


@dataclass(frozen=True, eq=False)
class RelaxReport:
    """Outcome of one relaxation; trace rows follow TRACE_COLUMNS."""

    iterations: int
    trace: List[Tuple[int, float, float, float, float, float]]
    grad_norm: float
    reason: str
    initial_energy: EnergyBreakdown
    final_energy: EnergyBreakdown
    probe: Dict = field(default_factory=dict)

    @property
    def energy_trace(self) -> List[float]:
        return [row[4] for row in self.trace]

    def to_dict(self) -> Dict:
        return {
            'iterations': self.iterations,
            'reason': self.reason,
            'grad_norm': self.grad_norm,
            'initial_total': self.initial_energy.total,
            'final': self.final_energy.to_dict(),
            'probe': self.probe,
        }


class FieldRelaxer:
    """Class to relax admissible fields to local minimizers of the wall energy."""

    def __init__(self, energy: Optional[WallEnergy] = None):
        self.energy = energy or WallEnergy()

    def relax(self, field: MagnetizationField, params: MaterialParams,
              opts: Optional[RelaxOptions] = None) -> Tuple[MagnetizationField, RelaxReport]:
        """
        Projected gradient descent with Barzilai-Borwein steps and Armijo backtracking.

        The descent direction is the tangent gradient divided by the nodal
        quadrature weights, so the step does not depend on the grid spacing.

        Args:
            field: Admissible starting field
            params: Material parameters
            opts: Relaxation options

        Returns:
            Tuple of (relaxed field, RelaxReport)
        """
        opts = opts or RelaxOptions()
        check = validate_admissible(field)
        if not check['valid']:
            raise RelaxationError(f"Input field is not admissible: {'; '.join(check['errors'])}",
                                  "INVALID_INPUT", check)

        grid = field.grid
        weights = self.energy.nodal_weights(grid)
        m = np.array(field.values)

        breakdown, raw = self.energy.evaluate(m, grid, params)
        trace = []
        self._check_finite(breakdown, trace)
        g = tangent_projection(raw, m) / weights
        grad_norm = self._sup_norm(g)
        initial = breakdown
        trace.append(self._row(0, breakdown, grad_norm))

        step = opts.initial_step
        min_step = opts.stall_ratio * opts.initial_step
        max_step = MAX_STEP_GROWTH * opts.initial_step
        reason = 'max_iters'
        iterations = 0

        while iterations < opts.max_iters:
            if grad_norm <= opts.grad_tol:
                reason = 'converged'
                break

            slope = float(np.sum(weights * g * g))
            alpha = step
            accepted = None
            while alpha >= min_step:
                trial = normalize_nodes(m - alpha * g)
                enforce_clamp(trial)
                trial_energy, _ = self.energy.evaluate(trial, grid, params, with_gradient=False)
                self._check_finite(trial_energy, trace)
                if (trial_energy.total < breakdown.total
                        and trial_energy.total <= breakdown.total - opts.armijo_c * alpha * slope):
                    accepted = trial_energy
                    break
                alpha *= opts.armijo_factor

            if accepted is None:
                reason = 'stalled'
                logger.info(f"Relaxation stalled after {iterations} iterations (step < {min_step:.1e})")
                break

            _, raw = self.energy.evaluate(trial, grid, params)
            g_new = tangent_projection(raw, trial) / weights

            s = trial - m
            sy = float(np.sum(weights * s * (g_new - g)))
            ss = float(np.sum(weights * s * s))
            step = ss / sy if sy > 0 else 2.0 * alpha
            step = min(max(step, min_step), max_step)

            m, g, breakdown = trial, g_new, accepted
            grad_norm = self._sup_norm(g)
            iterations += 1
            trace.append(self._row(iterations, breakdown, grad_norm))

        if reason == 'max_iters' and grad_norm <= opts.grad_tol:
            reason = 'converged'

        relaxed = MagnetizationField(grid, m)
        probe = self.probe_descent(relaxed, params, opts.probe_seed) if reason == 'converged' else {}
        report = RelaxReport(
            iterations=iterations,
            trace=trace,
            grad_norm=grad_norm,
            reason=reason,
            initial_energy=initial,
            final_energy=breakdown,
            probe=probe,
        )
        ErrorHandler.log_operation('relax_done', {
            'iterations': iterations, 'reason': reason, 'grad_norm': grad_norm,
            'initial_total': initial.total, 'final_total': breakdown.total
        })
        return relaxed, report

    def probe_descent(self, field: MagnetizationField, params: MaterialParams,
                      seed: int = Config.DEFAULT_SEED, directions: int = PROBE_DIRECTIONS) -> Dict:
        """
        Central-difference slopes of the energy along random tangent directions.

        A direction v of unit weighted L2 norm cannot change the energy faster than
        sup|g| * sqrt(area) / t, with g the scaled tangent gradient of the field.
        The probe is consistent when every measured slope stays below that bound
        plus the round-off of the difference quotient.

        Args:
            field: Field to probe
            params: Material parameters
            seed: Seed of the direction generator
            directions: Number of directions

        Returns:
            Dict with the seed, the largest slope per unit L2 norm of the direction,
            the first-order bound and whether the slopes respect it
        """
        rng = np.random.default_rng(seed)
        grid = field.grid
        weights = self.energy.nodal_weights(grid)
        breakdown, raw = self.energy.evaluate(field.values, grid, params)
        grad_norm = self._sup_norm(tangent_projection(raw, field.values) / weights)

        slopes = []
        for _ in range(directions):
            v = tangent_projection(rng.standard_normal(field.values.shape), field.values)
            v /= math.sqrt(float(np.sum(weights * v * v))) / grid.t
            plus = enforce_clamp(normalize_nodes(field.values + PROBE_STEP * v))
            minus = enforce_clamp(normalize_nodes(field.values - PROBE_STEP * v))
            e_plus, _ = self.energy.evaluate(plus, grid, params, with_gradient=False)
            e_minus, _ = self.energy.evaluate(minus, grid, params, with_gradient=False)
            slopes.append((e_plus.total - e_minus.total) / (2.0 * PROBE_STEP * grid.t ** 2))

        max_abs_slope = float(np.max(np.abs(slopes)))
        area = float(np.sum(weights))
        round_off = PROBE_ROUND_OFF * max(1.0, abs(breakdown.total) / grid.t ** 2)
        bound = grad_norm * math.sqrt(area) / grid.t + round_off
        consistent = max_abs_slope <= bound
        if not consistent:
            logger.warning(f"Descent probe slope {max_abs_slope:.3g} exceeds the first-order bound {bound:.3g}")
        return {
            'seed': seed,
            'directions': directions,
            'max_abs_slope': max_abs_slope,
            'bound': bound,
            'consistent': consistent,
        }

    def best_of(self, initializers: Sequence[Tuple[str, MagnetizationField]], params: MaterialParams,
                opts: Optional[RelaxOptions] = None) -> Tuple[MagnetizationField, EnergyBreakdown, str]:
        """
        Relax every initializer and keep the lowest energy.

        Args:
            initializers: Sequence of (tag, field) pairs
            params: Material parameters
            opts: Relaxation options

        Returns:
            Tuple of (relaxed field, its EnergyBreakdown, tag of the winning initializer)
        """
        if not initializers:
            raise RelaxationError("best_of needs at least one initializer", "NO_INITIALIZERS")

        best = None
        for tag, start in initializers:
            relaxed, report = self.relax(start, params, opts)
            logger.info(f"Initializer {tag}: E = {report.final_energy.total:.6g} ({report.reason})")
            if best is None or report.final_energy.total < best[1].total:
                best = (relaxed, report.final_energy, tag)
        return best

    @staticmethod
    def _sup_norm(g: np.ndarray) -> float:
        return float(np.max(np.linalg.norm(g, axis=-1)))

    @staticmethod
    def _row(iteration: int, breakdown: EnergyBreakdown, grad_norm: float) -> Tuple:
        return (iteration, breakdown.exchange, breakdown.anisotropy, breakdown.stray,
                breakdown.total, grad_norm)

    @staticmethod
    def _check_finite(breakdown: EnergyBreakdown, trace: List) -> None:
        if not math.isfinite(breakdown.total):
            raise RelaxationError("Non-finite energy encountered during relaxation", "NON_FINITE",
                                  {'trace': list(trace)})
