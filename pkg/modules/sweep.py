"""
Sweep Module
Drives the (Q, t/d) parameter study: relaxed Bloch and Neel energies per point,
comparison with the two scaling branches, cross-over bisection and scaling fits.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config, RunConfig
from modules.bounds import BoundAuditor
from modules.constructions import WallConstructor
from modules.error_handler import ErrorHandler, SweepError
from modules.fields import GridPolicy, MaterialParams
from modules.minimize import FieldRelaxer, RelaxOptions


logger = logging.getLogger(__name__)

SWEEP_COLUMNS = (
    'Q', 't_over_d', 'E_bloch', 'E_neel', 'E_min', 'winner', 'pred_thick', 'pred_thin',
    'ratio_thick', 'ratio_thin', 'l2_ratio', 'l1_ratio', 'lb_ratio', 'n1', 'n3', 'L_over_t',
    'iters_bloch', 'iters_neel', 'status', 'predicted_branch',
)

MIN_BRANCH_POINTS = 3


@dataclass(frozen=True)
class SweepSettings:
    """Everything a sweep point needs besides (Q, t/d)."""

    d: float = 1.0
    policy: GridPolicy = field(default_factory=GridPolicy)
    relax: RelaxOptions = field(default_factory=RelaxOptions)
    delta: float = Config.BLOCH_DELTA
    mollify_width: Optional[float] = None
    workers: int = 1

    @classmethod
    def from_run_config(cls, run_config: RunConfig) -> 'SweepSettings':
        construction = run_config.construction
        return cls(
            d=run_config.params.get('d', 1.0),
            policy=GridPolicy(**run_config.grid),
            relax=RelaxOptions(**run_config.relax),
            delta=construction.get('delta', Config.BLOCH_DELTA),
            mollify_width=construction.get('mollify_width'),
            workers=run_config.workers,
        )


@dataclass(frozen=True)
class SweepPoint:
    """One row of the sweep table; energies in units of length^2."""

    Q: float
    t_over_d: float
    E_bloch: float = math.nan
    E_neel: float = math.nan
    E_min: float = math.nan
    winner: str = ''
    pred_thick: float = math.nan
    pred_thin: float = math.nan
    ratio_thick: float = math.nan
    ratio_thin: float = math.nan
    l2_ratio: float = math.nan
    l1_ratio: float = math.nan
    lb_ratio: float = math.nan
    n1: int = 0
    n3: int = 0
    L_over_t: float = math.nan
    iters_bloch: int = 0
    iters_neel: int = 0
    status: str = 'ok'
    predicted_branch: str = ''

    @property
    def ok(self) -> bool:
        return self.status == 'ok'

    def row(self) -> Tuple:
        return tuple(getattr(self, name) for name in SWEEP_COLUMNS)


@dataclass(frozen=True)
class SweepTable:
    points: List[SweepPoint] = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    def ok_points(self) -> List[SweepPoint]:
        return [p for p in self.points if p.ok]


@dataclass(frozen=True)
class CrossoverResult:
    """Cross-over thickness where the relaxed Bloch and Neel energies coincide."""

    Q: float
    t_star_over_d: float
    predicted: float
    ratio: float
    bracket: Tuple[float, float]
    probes: List[Tuple[float, float, float]] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return asdict(self)


def predictions(params: MaterialParams) -> Tuple[float, float]:
    """Thick-branch d^2 and thin-branch t^2 / ln(t^2/(Q d^2))."""
    pred_thin = params.t ** 2 / params.log_ratio if params.log_ratio > 0 else math.nan
    return params.d ** 2, pred_thin


def predicted_branch(params: MaterialParams) -> str:
    """'thick' iff (t/d)^2 >= ln(1/Q)."""
    return 'thick' if params.t_over_d ** 2 >= math.log(1.0 / params.Q) else 'thin'


def in_sweep_regime(Q: float, t_over_d: float) -> bool:
    r2 = t_over_d ** 2
    return (Q <= Config.SWEEP_Q_MAX and Config.SWEEP_LOWER_MARGIN * Q <= r2
            and r2 <= Config.SWEEP_UPPER_MARGIN / Q)


def relaxed_energies(params: MaterialParams, settings: SweepSettings) -> Dict:
    """
    Build and relax both initializers from scratch.

    Args:
        params: Material parameters
        settings: Sweep settings

    Returns:
        Dict kind -> (relaxed field, RelaxReport)
    """
    constructor = WallConstructor()
    relaxer = FieldRelaxer(constructor.energy)
    results = {}
    for kind in ('bloch', 'neel'):
        start, _ = constructor.build_initializer(kind, params, settings.policy, settings.delta,
                                                 settings.mollify_width)
        results[kind] = relaxer.relax(start, params, settings.relax)
    return results


@ErrorHandler.handle_processing_error
def _evaluate(Q: float, t_over_d: float, settings: SweepSettings) -> Dict:
    params = MaterialParams(settings.d, Q, t_over_d * settings.d)
    results = relaxed_energies(params, settings)
    (bloch_field, bloch_report), (neel_field, neel_report) = results['bloch'], results['neel']
    e_bloch = bloch_report.final_energy.total
    e_neel = neel_report.final_energy.total
    winner = 'bloch' if e_bloch < e_neel else 'neel'
    best = bloch_field if winner == 'bloch' else neel_field
    e_min = min(e_bloch, e_neel)

    auditor = BoundAuditor()
    pred_thick, pred_thin = predictions(params)
    point = SweepPoint(
        Q=Q,
        t_over_d=t_over_d,
        E_bloch=e_bloch,
        E_neel=e_neel,
        E_min=e_min,
        winner=winner,
        pred_thick=pred_thick,
        pred_thin=pred_thin,
        ratio_thick=e_min / pred_thick,
        ratio_thin=e_min / pred_thin,
        l2_ratio=auditor.lemma_l2_ratio(best, params, e_min, winner).ratio,
        l1_ratio=auditor.lemma_l1_ratio(best, params, e_min, winner).ratio,
        lb_ratio=auditor.lower_bound_ratio(best, params, e_min, winner).ratio,
        n1=best.grid.n1,
        n3=best.grid.n3,
        L_over_t=best.grid.L / params.t,
        iters_bloch=bloch_report.iterations,
        iters_neel=neel_report.iterations,
        predicted_branch=predicted_branch(params),
    )
    return {'success': True, 'point': point}


def evaluate_point(key: Tuple[float, float], settings: SweepSettings) -> SweepPoint:
    """
    Evaluate one (Q, t/d) point; failures become a status instead of an exception.

    Args:
        key: (Q, t/d)
        settings: Sweep settings

    Returns:
        SweepPoint
    """
    Q, t_over_d = key
    if not in_sweep_regime(Q, t_over_d):
        logger.warning(f"Point Q={Q}, t/d={t_over_d} is outside the sweep regime; skipped")
        return SweepPoint(Q=Q, t_over_d=t_over_d, status='skipped_regime')

    result = _evaluate(Q, t_over_d, settings)
    if not result['success']:
        return SweepPoint(Q=Q, t_over_d=t_over_d, status=f"failed:{result['error_code']}")

    point = result['point']
    ErrorHandler.log_operation('sweep_point', {
        'Q': Q, 't_over_d': t_over_d, 'winner': point.winner, 'E_min': point.E_min,
        'predicted_branch': point.predicted_branch
    })
    return point


def _evaluate_star(args):
    return evaluate_point(*args)


class ParameterSweep:
    """Class to run parameter sweeps, cross-over searches and scaling fits."""

    def run_sweep(self, run_config: RunConfig) -> SweepTable:
        """
        Evaluate every (Q, t/d) combination of the sweep section.

        Args:
            run_config: Run configuration with sweep.Q and sweep.t_over_d lists

        Returns:
            SweepTable ordered by (Q, t/d)
        """
        settings = SweepSettings.from_run_config(run_config)
        q_values = self._as_list(run_config.sweep.get('Q', run_config.params.get('Q')))
        ratios = self._as_list(run_config.sweep.get('t_over_d', []))
        keys = sorted({(float(q), float(r)) for q in q_values for r in ratios})

        ErrorHandler.log_operation('run_sweep', {'points': len(keys), 'workers': settings.workers})
        if settings.workers > 1 and len(keys) > 1:
            with ProcessPoolExecutor(max_workers=settings.workers) as executor:
                points = list(executor.map(_evaluate_star, [(key, settings) for key in keys]))
        else:
            points = [evaluate_point(key, settings) for key in keys]
        return SweepTable(points)

    def find_crossover(self, Q: float, bracket: Sequence[float],
                       settings: Optional[SweepSettings] = None,
                       rel_width: float = Config.BISECTION_REL_WIDTH) -> CrossoverResult:
        """
        Bisect E_bloch - E_neel in t/d, relaxing fresh initializers at every probe.

        Args:
            Q: Quality factor
            bracket: (a, b) in units of t/d with a sign change of the energy difference
            settings: Sweep settings
            rel_width: Stop when (b - a) / midpoint falls below this

        Returns:
            CrossoverResult
        """
        settings = settings or SweepSettings()
        a, b = (float(v) for v in bracket)
        if not a < b:
            raise SweepError(f"Degenerate bracket [{a}, {b}]", "DEGENERATE_BRACKET", {'bracket': [a, b]})
        for x in (a, b):
            if not in_sweep_regime(Q, x):
                raise SweepError(f"Bracket end t/d = {x} is outside the sweep regime for Q = {Q}",
                                 "OUTSIDE_REGIME", {'Q': Q, 't_over_d': x})

        probes = []

        def difference(x: float) -> float:
            results = relaxed_energies(MaterialParams(settings.d, Q, x * settings.d), settings)
            e_bloch = results['bloch'][1].final_energy.total
            e_neel = results['neel'][1].final_energy.total
            probes.append((x, e_bloch, e_neel))
            logger.info(f"Cross-over probe Q={Q}, t/d={x:.5g}: E_bloch - E_neel = {e_bloch - e_neel:.6g}")
            return e_bloch - e_neel

        fa, fb = difference(a), difference(b)
        if fa * fb > 0:
            raise SweepError(
                f"E_bloch - E_neel has the same sign at both bracket ends ({fa:.4g}, {fb:.4g})",
                "NO_SIGN_CHANGE", {'a': a, 'diff_a': fa, 'b': b, 'diff_b': fb}
            )

        while (b - a) / (0.5 * (a + b)) > rel_width:
            mid = 0.5 * (a + b)
            fm = difference(mid)
            if fm == 0.0:
                a = b = mid
                break
            if math.copysign(1.0, fm) == math.copysign(1.0, fa):
                a, fa = mid, fm
            else:
                b, fb = mid, fm

        t_star = 0.5 * (a + b)
        predicted = math.sqrt(math.log(1.0 / Q))
        result = CrossoverResult(Q=Q, t_star_over_d=t_star, predicted=predicted,
                                 ratio=t_star / predicted, bracket=(a, b), probes=probes)
        ErrorHandler.log_operation('find_crossover', {'Q': Q, 't_star_over_d': t_star, 'ratio': result.ratio})
        return result

    def fit_scaling(self, table: SweepTable) -> Dict:
        """
        Summarize E_min / prediction per branch (branch = winning initializer).

        Args:
            table: Sweep table

        Returns:
            Dict with per-branch band, slope of log E_min vs log prediction,
            branch-consistency constant and the lower-bound band
        """
        points = table.ok_points()
        branches = {
            'thick': ([p for p in points if p.winner == 'bloch'], 'pred_thick', 'ratio_thick'),
            'thin': ([p for p in points if p.winner == 'neel'], 'pred_thin', 'ratio_thin'),
        }
        report = {}
        for name, (members, pred_key, ratio_key) in branches.items():
            if len(members) < MIN_BRANCH_POINTS:
                report[name] = {'count': len(members), 'insufficient': True}
                continue
            ratios = np.array([getattr(p, ratio_key) for p in members])
            pred = np.log([getattr(p, pred_key) for p in members])
            energy = np.log([p.E_min for p in members])
            slope = float(np.polyfit(pred, energy, 1)[0]) if np.ptp(pred) > 1e-12 else None
            report[name] = {
                'count': len(members),
                'insufficient': False,
                'ratio_min': float(ratios.min()),
                'ratio_max': float(ratios.max()),
                'ratio_geomean': float(np.exp(np.mean(np.log(ratios)))),
                'spread': float(ratios.max() / ratios.min()),
                'energy_spread': float(np.exp(np.ptp(energy))),
                'slope': slope,
            }

        if all(entry['insufficient'] for entry in report.values()):
            raise SweepError(f"fit_scaling needs at least {MIN_BRANCH_POINTS} points in a branch",
                             "INSUFFICIENT_POINTS", {'points': len(points)})

        report['consistency'] = self._branch_consistency(points)
        lb = [p.lb_ratio for p in points if math.isfinite(p.lb_ratio)]
        if lb:
            report['lower_bound'] = {'min': min(lb), 'max': max(lb), 'spread': max(lb) / min(lb)}
        return report

    @staticmethod
    def _branch_consistency(points: List[SweepPoint]) -> Dict:
        """Range of c with winner = bloch iff pred_thick <= c * pred_thin."""
        bloch = [p.pred_thick / p.pred_thin for p in points if p.winner == 'bloch']
        neel = [p.pred_thick / p.pred_thin for p in points if p.winner == 'neel']
        c_low = max(bloch) if bloch else 0.0
        c_high = min(neel) if neel else math.inf
        consistent = c_low < c_high
        c = math.sqrt(c_low * c_high) if consistent and c_low > 0 and math.isfinite(c_high) else None
        return {'c_low': c_low, 'c_high': c_high, 'consistent': consistent, 'c': c}

    @staticmethod
    def _as_list(value) -> List:
        if value is None:
            return []
        if isinstance(value, (list, tuple)):
            return list(value)
        return [value]
