"""
Bounds Module
Audits the lower-bound interpolation inequalities of the wall energy as
bounded ratios lhs / (rhs without the universal constant) over field ensembles.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import eval_legendre

from config import Config
from modules.constructions import WallConstructor
from modules.energy import WallEnergy, tangent_projection
from modules.error_handler import ErrorHandler, FieldValidationError, RegimeError
from modules.fields import (
    GridPolicy, MagnetizationField, MaterialParams, enforce_clamp, make_grid, normalize_nodes,
    vertical_average
)
from modules.minimize import FieldRelaxer, RelaxOptions


logger = logging.getLogger(__name__)

CORE_LEMMAS = ('l2', 'l1', 'poincare')
EXTRA_LEMMAS = ('vertical_m3', 'x3_poincare', 'localization')


@dataclass(frozen=True)
class BoundReport:
    """One inequality evaluated on one field."""

    lemma: str
    lhs: float
    rhs: float
    ratio: float
    provenance: str = ''
    params: Dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> Dict:
        return {'lemma': self.lemma, 'lhs': self.lhs, 'rhs': self.rhs, 'ratio': self.ratio,
                'provenance': self.provenance}


def _ratio(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs == 0 else math.inf


class BoundAuditor:
    """Class to evaluate and audit the lower-bound inequalities."""

    def __init__(self, energy: Optional[WallEnergy] = None):
        self.energy = energy or WallEnergy()
        self.constructor = WallConstructor()
        self.relaxer = FieldRelaxer(self.energy)

    def _total(self, field: MagnetizationField, params: MaterialParams, energy: Optional[float]) -> float:
        if energy is None:
            energy = self.energy.total_energy(field, params).total
        return energy

    def _report(self, lemma, lhs, rhs, provenance, params) -> BoundReport:
        return BoundReport(lemma, float(lhs), float(rhs), _ratio(lhs, rhs), provenance, params.to_dict())

    def lemma_l2_ratio(self, field: MagnetizationField, params: MaterialParams,
                       energy: Optional[float] = None, provenance: str = '') -> BoundReport:
        """
        Out-of-plane control: integral of m3^2 against (1 + (t/d)^2) * E.

        Args:
            field: Admissible field
            params: Material parameters
            energy: Precomputed total energy (length^2)
            provenance: Tag of the field

        Returns:
            BoundReport (ratio 0 for a zero-energy field)
        """
        E = self._total(field, params, energy)
        lhs = float(np.sum(field.grid.cell_weights * field.component(3) ** 2))
        rhs = (1.0 + params.t_over_d ** 2) * E
        return self._report('l2', lhs, rhs, provenance, params)

    def lemma_l1_ratio(self, field: MagnetizationField, params: MaterialParams,
                       energy: Optional[float] = None, provenance: str = '') -> BoundReport:
        """
        Averaged in-plane control: sup of m1-bar^2 over the x1 nodes against
        (ln(t^2/(Q d^2))/t^2 + 1/d^2) * E.

        The sup over nodes is a lower bound of the continuum sup.
        """
        E = self._total(field, params, energy)
        lhs = float(np.max(vertical_average(field, 1) ** 2))
        return self._report('l1', lhs, self._lower_bound_rhs(params, E), provenance, params)

    def lower_bound_ratio(self, field: MagnetizationField, params: MaterialParams,
                          energy: Optional[float] = None, provenance: str = '') -> BoundReport:
        """
        Combined lower bound: 1 / [(ln(t^2/(Q d^2))/t^2 + 1/d^2) * E].

        Args:
            field: Admissible field
            params: Material parameters
            energy: Precomputed total energy (length^2)
            provenance: Tag of the field

        Returns:
            BoundReport with lhs = 1
        """
        E = self._total(field, params, energy)
        if E <= 0:
            raise FieldValidationError("Lower-bound ratio is undefined for a zero-energy field", "ZERO_ENERGY")
        return self._report('lower_bound', 1.0, self._lower_bound_rhs(params, E), provenance, params)

    @staticmethod
    def dominant_term(params: MaterialParams) -> str:
        """Which term of the lower-bound prefactor dominates: 'thin' (log/t^2) or 'thick' (1/d^2)."""
        BoundAuditor._check_log_hypothesis(params)
        return 'thin' if params.log_ratio / params.t ** 2 > 1.0 / params.d ** 2 else 'thick'

    @staticmethod
    def _check_log_hypothesis(params: MaterialParams) -> None:
        if params.t_over_d ** 2 / params.Q <= 1.0:
            raise RegimeError(
                f"t^2/(Q d^2) = {params.t_over_d ** 2 / params.Q:.4g} <= 1: outside the hypothesis (t/d)^2 >> Q",
                "OUTSIDE_HYPOTHESIS", params.to_dict()
            )

    def _lower_bound_rhs(self, params: MaterialParams, E: float) -> float:
        self._check_log_hypothesis(params)
        return (params.log_ratio / params.t ** 2 + 1.0 / params.d ** 2) * E

    def wall_center(self, field: MagnetizationField) -> float:
        """
        Position of the upward zero of m2-bar, linearly interpolated between nodes.

        Args:
            field: Wall field

        Returns:
            x1 coordinate of the wall center
        """
        m2 = vertical_average(field, 2)
        idx = np.nonzero((m2[:-1] <= 0.0) & (m2[1:] > 0.0))[0]
        if idx.size == 0:
            raise FieldValidationError("m2-bar has no sign change on the grid; the field is not a wall",
                                       "NOT_A_WALL")
        j = int(idx[0])
        x = field.grid.x1
        frac = -m2[j] / (m2[j + 1] - m2[j])
        return float(x[j] + frac * (x[j + 1] - x[j]))

    def _square_samples(self, field: MagnetizationField, component: int) -> Tuple[np.ndarray, np.ndarray, float]:
        """Resample one component on the square of side t centered at the wall."""
        grid = field.grid
        xi = self.wall_center(field)
        half = 0.5 * grid.t
        if xi - half < -grid.L or xi + half > grid.L:
            raise FieldValidationError(f"Wall center {xi:.4g} is closer than t/2 to the truncation",
                                       "WALL_AT_BOUNDARY")
        count = max(3, int(round(grid.t / grid.h1)) + 1)
        offsets = np.linspace(-half, half, count)
        ws = np.full(count, grid.t / (count - 1))
        ws[0] = ws[-1] = 0.5 * ws[1]
        values = field.component(component)
        samples = np.stack([np.interp(xi + offsets, grid.x1, row) for row in values])
        mean = float(np.interp(xi, grid.x1, vertical_average(field, component)))
        return samples, ws, mean

    def poincare_ratio(self, field: MagnetizationField, params: MaterialParams, component: int,
                       energy: Optional[float] = None, provenance: str = '') -> BoundReport:
        """
        Localization on the t x t square at the recentred wall: integral of
        (m_i - m_i-bar(xi))^2 against (t/d)^2 * E.

        Args:
            field: Admissible wall field
            params: Material parameters
            component: 1, 2 or 3
            energy: Precomputed total energy (length^2)
            provenance: Tag of the field

        Returns:
            BoundReport
        """
        E = self._total(field, params, energy)
        samples, ws, mean = self._square_samples(field, component)
        lhs = float(field.grid.w3 @ ((samples - mean) ** 2 @ ws))
        rhs = params.t_over_d ** 2 * E
        return self._report(f'poincare_m{component}', lhs, rhs, provenance, params)

    def vertical_m3_ratio(self, field: MagnetizationField, params: MaterialParams,
                          energy: Optional[float] = None, provenance: str = '') -> BoundReport:
        """Averaged out-of-plane control: integral of m3-bar^2 dx1 against (1/t + t/d^2) * E."""
        E = self._total(field, params, energy)
        lhs = float(field.grid.w1 @ vertical_average(field, 3) ** 2)
        rhs = (1.0 / params.t + params.t / params.d ** 2) * E
        return self._report('vertical_m3', lhs, rhs, provenance, params)

    def x3_poincare_ratio(self, field: MagnetizationField, params: MaterialParams,
                          energy: Optional[float] = None, provenance: str = '') -> BoundReport:
        """Vertical fluctuation: integral of (m3 - m3-bar)^2 against (t/d)^2 * E."""
        E = self._total(field, params, energy)
        deviation = field.component(3) - vertical_average(field, 3)[None, :]
        lhs = float(np.sum(field.grid.cell_weights * deviation ** 2))
        rhs = params.t_over_d ** 2 * E
        return self._report('x3_poincare', lhs, rhs, provenance, params)

    def localization_ratio(self, field: MagnetizationField, params: MaterialParams,
                           energy: Optional[float] = None, provenance: str = '') -> BoundReport:
        """Rotation out of the Neel direction at the wall center: 1 - m1-bar(xi)^2 against (1/t^2 + 1/d^2) * E."""
        E = self._total(field, params, energy)
        m1 = float(np.interp(self.wall_center(field), field.grid.x1, vertical_average(field, 1)))
        lhs = max(0.0, 1.0 - m1 ** 2)
        rhs = (1.0 / params.t ** 2 + 1.0 / params.d ** 2) * E
        return self._report('localization', lhs, rhs, provenance, params)

    def all_ratios(self, field: MagnetizationField, params: MaterialParams,
                   provenance: str = '') -> Dict[str, BoundReport]:
        """
        Evaluate every audited inequality on one field.

        Args:
            field: Admissible wall field
            params: Material parameters
            provenance: Tag of the field

        Returns:
            Dict lemma -> BoundReport; 'poincare' holds the largest component ratio
        """
        E = self.energy.total_energy(field, params).total
        reports = {
            'l2': self.lemma_l2_ratio(field, params, E, provenance),
            'l1': self.lemma_l1_ratio(field, params, E, provenance),
            'vertical_m3': self.vertical_m3_ratio(field, params, E, provenance),
            'x3_poincare': self.x3_poincare_ratio(field, params, E, provenance),
            'localization': self.localization_ratio(field, params, E, provenance),
        }
        components = [self.poincare_ratio(field, params, i, E, provenance) for i in (1, 2, 3)]
        reports['poincare'] = max(components, key=lambda r: r.ratio)
        return reports

    def perturb(self, field: MagnetizationField, amplitude: float,
                rng: np.random.Generator) -> MagnetizationField:
        """
        Smooth random admissible perturbation localized around the wall.

        Args:
            field: Admissible wall field
            amplitude: Largest nodal size of the tangent perturbation
            rng: Seeded generator

        Returns:
            Renormalized, clamped MagnetizationField
        """
        ErrorHandler.validate_positive('amplitude', amplitude)
        grid = field.grid
        try:
            xi = self.wall_center(field)
        except FieldValidationError:
            xi = 0.0
        X = (grid.x1[None, :] - xi) / grid.t
        Z = 2.0 * grid.x3[:, None] / grid.t
        envelope = np.exp(-(X / 2.0) ** 2)

        pert = np.zeros_like(field.values)
        for c in range(3):
            for a in range(4):
                for b in range(3):
                    coef = rng.standard_normal()
                    phase = rng.uniform(0.0, 2.0 * np.pi)
                    pert[:, :, c] += coef * np.cos(0.25 * np.pi * a * X + phase) * eval_legendre(b, Z)
        pert *= envelope[:, :, None]
        pert = tangent_projection(pert, field.values)
        size = float(np.max(np.linalg.norm(pert, axis=-1)))
        if size > 0:
            pert *= amplitude / size
        values = enforce_clamp(normalize_nodes(field.values + pert))
        return field.with_values(values)

    def audit_ensemble(self, params: MaterialParams, policy: Optional[GridPolicy] = None,
                       relax_opts: Optional[RelaxOptions] = None,
                       perturbations: int = Config.AUDIT_PERTURBATIONS,
                       amplitude: float = Config.AUDIT_AMPLITUDE,
                       seed: int = Config.DEFAULT_SEED,
                       refine: bool = True,
                       delta: float = Config.BLOCH_DELTA) -> Dict:
        """
        Calibrate the constants on both constructions and their relaxations, then
        audit seeded perturbations and (optionally) the grid-doubled calibration.

        Args:
            params: Material parameters
            policy: Grid policy of the base ensemble
            relax_opts: Relaxation options
            perturbations: Number of random perturbations
            amplitude: Perturbation amplitude
            seed: Seed of the perturbation generator
            refine: Repeat the calibration with n1 and n3 doubled
            delta: Bloch core smoothing

        Returns:
            Dict with calibration, perturbation maxima, refinement stability and violations
        """
        self._check_log_hypothesis(params)
        policy = policy or GridPolicy()
        ensemble = self._calibration_ensemble(params, {'neel': policy, 'bloch': policy}, relax_opts, delta)
        calibration = self._max_ratios([self.all_ratios(f, params, tag) for tag, f in ensemble])

        rng = np.random.default_rng(seed)
        perturbed = []
        for i in range(perturbations):
            tag, base = ensemble[i % len(ensemble)]
            perturbed.append(self.all_ratios(self.perturb(base, amplitude, rng), params, f'{tag}+perturb{i}'))
        perturbation_max = self._max_ratios(perturbed) if perturbed else {}

        factor = Config.AUDIT_VIOLATION_FACTOR
        violations = [
            lemma for lemma, value in perturbation_max.items()
            if calibration.get(lemma, 0.0) > 0 and value > factor * calibration[lemma]
        ]

        result = {
            'success': not violations,
            'params': params.to_dict(),
            'seed': seed,
            'ensemble': [tag for tag, _ in ensemble],
            'calibration': calibration,
            'perturbation_max': perturbation_max,
            'violations': violations,
        }

        if refine:
            refined = self._calibration_ensemble(params, self._refined_policies(params, policy, delta),
                                                 relax_opts, delta)
            refined_calibration = self._max_ratios([self.all_ratios(f, params, tag) for tag, f in refined])
            stability = {}
            for lemma, value in calibration.items():
                other = refined_calibration.get(lemma, 0.0)
                if value > 0 and other > 0:
                    stability[lemma] = max(value / other, other / value)
            unstable = [lemma for lemma in CORE_LEMMAS
                        if stability.get(lemma, 1.0) >= Config.AUDIT_REFINEMENT_FACTOR]
            result.update({'refined_calibration': refined_calibration, 'stability': stability,
                           'unstable': unstable})
            result['success'] = result['success'] and not unstable

        ErrorHandler.log_operation('audit_ensemble', {
            'Q': params.Q, 't_over_d': params.t_over_d, 'perturbations': perturbations,
            'violations': violations, 'success': result['success']
        })
        return result

    def _calibration_ensemble(self, params, policies, relax_opts, delta) -> List[Tuple[str, MagnetizationField]]:
        ensemble = []
        for kind in ('neel', 'bloch'):
            start, _ = self.constructor.build_initializer(kind, params, policies[kind], delta)
            relaxed, _ = self.relaxer.relax(start, params, relax_opts)
            ensemble.append((kind, start))
            ensemble.append((f'{kind}_relaxed', relaxed))
        return ensemble

    @staticmethod
    def _refined_policies(params: MaterialParams, policy: GridPolicy, delta: float) -> Dict[str, GridPolicy]:
        refined = {}
        for kind in ('neel', 'bloch'):
            grid = make_grid(params, kind, policy, delta).refined()
            refined[kind] = GridPolicy(n1=grid.n1, n3=grid.n3, L=grid.L, max_n1=max(grid.n1, policy.max_n1))
        return refined

    @staticmethod
    def _max_ratios(rows: List[Dict[str, BoundReport]]) -> Dict[str, float]:
        result = {}
        for row in rows:
            for lemma, report in row.items():
                result[lemma] = max(result.get(lemma, 0.0), report.ratio)
        return result
