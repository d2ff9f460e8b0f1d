"""
Fields Module
Material parameters, strip grids and the sphere-valued magnetization field of a wall.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Optional, Sequence

import numpy as np

from config import Config, get_config
from modules.error_handler import ErrorHandler, FieldValidationError


logger = logging.getLogger(__name__)

# End states of the wall: x1 -> -inf and x1 -> +inf
LEFT_STATE = np.array([0.0, -1.0, 0.0])
RIGHT_STATE = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class MaterialParams:
    """Exchange length d, quality factor Q and film thickness t."""

    d: float
    Q: float
    t: float

    def __post_init__(self):
        for name in ('d', 'Q', 't'):
            object.__setattr__(self, name, ErrorHandler.validate_positive(name, getattr(self, name)))

    @property
    def t_over_d(self) -> float:
        return self.t / self.d

    @property
    def log_ratio(self) -> float:
        """ln(t^2 / (Q d^2)); positive iff (t/d)^2 > Q."""
        return math.log(self.t_over_d ** 2 / self.Q)

    def in_soft_regime(self, q_max: float = Config.Q_MAX) -> bool:
        """Soft regime: Q < q_max and Q < (t/d)^2 < 1/Q."""
        r2 = self.t_over_d ** 2
        return self.Q < q_max and self.Q < r2 < 1.0 / self.Q

    def regime_report(self, q_max: float = Config.Q_MAX) -> Dict:
        """
        Describe where the parameters sit relative to the soft regime.

        Args:
            q_max: Margin for "Q << 1"

        Returns:
            Dictionary with the individual regime flags
        """
        r2 = self.t_over_d ** 2
        return {
            'soft': self.Q < q_max,
            'above_lower': self.Q < r2,
            'below_upper': r2 < 1.0 / self.Q,
            'in_soft_regime': self.in_soft_regime(q_max),
            't_over_d_squared': r2,
            'ln_inv_Q': math.log(1.0 / self.Q),
        }

    def to_dict(self) -> Dict[str, float]:
        return {'d': self.d, 'Q': self.Q, 't': self.t}


@dataclass(frozen=True)
class StripGrid:
    """Uniform collocated grid on [-L, L] x [-t/2, t/2]."""

    L: float
    t: float
    n1: int
    n3: int

    def __post_init__(self):
        ErrorHandler.validate_positive('L', self.L)
        ErrorHandler.validate_positive('t', self.t)
        if int(self.n1) != self.n1 or self.n1 < 4:
            raise FieldValidationError(f"n1 must be an integer >= 4, got {self.n1}", "INVALID_GRID")
        if int(self.n3) != self.n3 or self.n3 < 2:
            raise FieldValidationError(f"n3 must be an integer >= 2, got {self.n3}", "INVALID_GRID")
        object.__setattr__(self, 'L', float(self.L))
        object.__setattr__(self, 't', float(self.t))
        object.__setattr__(self, 'n1', int(self.n1))
        object.__setattr__(self, 'n3', int(self.n3))

    @property
    def h1(self) -> float:
        return 2.0 * self.L / (self.n1 - 1)

    @property
    def h3(self) -> float:
        return self.t / (self.n3 - 1)

    @cached_property
    def x1(self) -> np.ndarray:
        x = np.linspace(-self.L, self.L, self.n1)
        x.setflags(write=False)
        return x

    @cached_property
    def x3(self) -> np.ndarray:
        x = np.linspace(-0.5 * self.t, 0.5 * self.t, self.n3)
        x.setflags(write=False)
        return x

    @cached_property
    def w1(self) -> np.ndarray:
        """Trapezoid weights along x1 (length units)."""
        return _trapezoid_weights(self.n1, self.h1)

    @cached_property
    def w3(self) -> np.ndarray:
        """Trapezoid weights along x3 (length units); they sum to t."""
        return _trapezoid_weights(self.n3, self.h3)

    @cached_property
    def cell_weights(self) -> np.ndarray:
        """Nodal quadrature weights, shape (n3, n1)."""
        w = np.outer(self.w3, self.w1)
        w.setflags(write=False)
        return w

    @property
    def area(self) -> float:
        return 2.0 * self.L * self.t

    def refined(self) -> 'StripGrid':
        """Grid with every spacing halved."""
        return StripGrid(self.L, self.t, 2 * self.n1 - 1, 2 * self.n3 - 1)

    def header(self) -> Dict:
        return {'L': self.L, 'n1': self.n1, 'n3': self.n3, 't': self.t}


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    w.setflags(write=False)
    return w


class MagnetizationField:
    """Immutable unit-vector field on a StripGrid; values have shape (n3, n1, 3)."""

    def __init__(self, grid: StripGrid, values: np.ndarray):
        values = np.array(values, dtype=float)
        if values.shape != (grid.n3, grid.n1, 3):
            raise FieldValidationError(
                f"Field values have shape {values.shape}, expected {(grid.n3, grid.n1, 3)}",
                "SHAPE_MISMATCH"
            )
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    def component(self, i: int) -> np.ndarray:
        """Component m_i for i in {1, 2, 3}."""
        if i not in (1, 2, 3):
            raise FieldValidationError(f"Component must be 1, 2 or 3, got {i}", "INVALID_COMPONENT")
        return self.values[:, :, i - 1]

    def with_values(self, values: np.ndarray) -> 'MagnetizationField':
        return MagnetizationField(self.grid, values)

    def norm_residual(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.values, axis=-1) - 1.0)))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def reflected(self) -> 'MagnetizationField':
        """Image under x1 -> -x1, m1 -> -m1, m2 -> -m2 (a symmetry of the energy)."""
        values = self.values[:, ::-1, :].copy()
        values[:, :, 0] *= -1.0
        values[:, :, 1] *= -1.0
        return self.with_values(values)

    def __repr__(self):
        return f"MagnetizationField(L={self.grid.L}, t={self.grid.t}, n1={self.grid.n1}, n3={self.grid.n3})"


@dataclass(frozen=True, eq=False)
class Profile1D:
    """Angle profile theta(x1) of an x3-independent in-plane wall."""

    x1: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        x1 = np.asarray(self.x1, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        if x1.ndim != 1 or x1.shape != theta.shape or x1.size < 4:
            raise FieldValidationError("Profile samples must be matching 1D arrays of length >= 4",
                                       "SHAPE_MISMATCH")
        steps = np.diff(x1)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise FieldValidationError("Profile samples must be uniform and increasing", "INVALID_GRID")
        ErrorHandler.validate_finite('theta', theta)
        object.__setattr__(self, 'x1', x1)
        object.__setattr__(self, 'theta', theta)

    @property
    def h(self) -> float:
        return float(self.x1[1] - self.x1[0])

    @property
    def m1(self) -> np.ndarray:
        return np.cos(self.theta)

    @property
    def m2(self) -> np.ndarray:
        return np.sin(self.theta)

    def is_clamped(self, tol: float = Config.CLAMP_TOL) -> bool:
        return (abs(self.theta[0] + 0.5 * np.pi) <= tol and abs(self.theta[-1] - 0.5 * np.pi) <= tol)


def enforce_clamp(values: np.ndarray) -> np.ndarray:
    """
    Project node values onto the clamp condition of the wall.

    Args:
        values: Array of shape (n3, n1, 3); modified in place

    Returns:
        The same array
    """
    values[:, 0, :] = LEFT_STATE
    values[:, -1, :] = RIGHT_STATE
    return values


def normalize_nodes(values: np.ndarray) -> np.ndarray:
    """Renormalize every node to unit length (in place)."""
    norms = np.linalg.norm(values, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise FieldValidationError("Cannot normalize a zero vector", "ZERO_VECTOR")
    values /= norms
    return values


def make_uniform(grid: StripGrid, v: Sequence[float]) -> MagnetizationField:
    """
    Build a constant field.

    Args:
        grid: Target grid
        v: Unit 3-vector repeated at every node

    Returns:
        MagnetizationField (the clamp condition only holds for v = (0, +-1, 0))
    """
    vec = ErrorHandler.validate_unit_vector(v, Config.NORM_TOL)
    values = np.broadcast_to(vec, (grid.n3, grid.n1, 3))
    return MagnetizationField(grid, values)


def validate_admissible(field: MagnetizationField,
                        norm_tol: float = Config.NORM_TOL,
                        clamp_tol: float = Config.CLAMP_TOL) -> Dict:
    """
    Check the admissibility conditions of a wall field.

    Args:
        field: Field to check
        norm_tol: Tolerance on | |m| - 1 |
        clamp_tol: Tolerance on the boundary clamp residuals

    Returns:
        Dict with validation results
    """
    if not field.is_finite():
        return {
            'valid': False,
            'norm_residual': float('inf'),
            'clamp_left': float('inf'),
            'clamp_right': float('inf'),
            'errors': ['Field contains NaN or Inf'],
            'error_code': 'NON_FINITE'
        }

    norm_residual = field.norm_residual()
    clamp_left = float(np.max(np.abs(field.values[:, 0, :] - LEFT_STATE)))
    clamp_right = float(np.max(np.abs(field.values[:, -1, :] - RIGHT_STATE)))

    errors = []
    if norm_residual > norm_tol:
        errors.append(f"Norm residual {norm_residual:.3e} exceeds {norm_tol:.0e}")
    if clamp_left > clamp_tol:
        errors.append(f"Left clamp residual {clamp_left:.3e} exceeds {clamp_tol:.0e}")
    if clamp_right > clamp_tol:
        errors.append(f"Right clamp residual {clamp_right:.3e} exceeds {clamp_tol:.0e}")

    report = {
        'valid': not errors,
        'norm_residual': norm_residual,
        'clamp_left': clamp_left,
        'clamp_right': clamp_right,
        'errors': errors
    }
    if errors:
        report['error_code'] = 'NOT_ADMISSIBLE'
    return report


def vertical_average(field: MagnetizationField, component: int) -> np.ndarray:
    """
    Vertical average of one component.

    Args:
        field: Magnetization field
        component: 1, 2 or 3

    Returns:
        Array of length n1 with (1/t) * trapezoid integral over x3
    """
    values = field.component(component)
    return field.grid.w3 @ values / field.grid.t


def default_half_width(params: MaterialParams, kind: str, c_tail: float = Config.C_TAIL) -> float:
    """
    Truncation half width L for a wall type.

    Args:
        params: Material parameters
        kind: 'bloch' (compact) or 'neel' (logarithmic tail up to t/Q)
        c_tail: Multiple of the Neel tail length t/Q

    Returns:
        L in length units
    """
    base = Config.L_MIN_OVER_T * params.t
    if kind == 'bloch':
        return base
    if kind == 'neel':
        return max(base, c_tail * params.t / params.Q)
    raise FieldValidationError(f"Unknown wall kind '{kind}'", "UNKNOWN_KIND")


@dataclass(frozen=True)
class GridPolicy:
    """Resolution policy: explicit n1/n3/L win over the derived values."""

    n1: Optional[int] = None
    n3: Optional[int] = None
    L: Optional[float] = None
    points_per_core: int = Config.POINTS_PER_CORE
    c_tail: float = Config.C_TAIL
    max_n1: int = field(default_factory=lambda: get_config().MAX_N1)
    min_n3: int = Config.MIN_N3


def wall_core_scale(params: MaterialParams, kind: str, delta: float = Config.BLOCH_DELTA) -> float:
    """Length the grid has to resolve: d^2/t for Neel walls, delta*t for the Bloch core."""
    if kind == 'neel':
        return params.d ** 2 / params.t
    if kind == 'bloch':
        return delta * params.t
    raise FieldValidationError(f"Unknown wall kind '{kind}'", "UNKNOWN_KIND")


def make_grid(params: MaterialParams, kind: str, policy: GridPolicy = None,
              delta: float = Config.BLOCH_DELTA) -> StripGrid:
    """
    Build the grid of one wall type at one parameter point.

    Args:
        params: Material parameters
        kind: 'bloch' or 'neel'
        policy: Resolution policy
        delta: Bloch core smoothing (units of t)

    Returns:
        StripGrid with h1 <= min(d, core)/points_per_core unless capped
    """
    policy = policy or GridPolicy()
    L = policy.L or default_half_width(params, kind, policy.c_tail)
    h_target = min(params.d, wall_core_scale(params, kind, delta)) / policy.points_per_core

    if policy.n1:
        n1 = int(policy.n1)
    else:
        # odd, so x1 = 0 is a node
        n1 = max(Config.MIN_N1, 2 * int(math.ceil(L / h_target)) + 1)
        if n1 > policy.max_n1:
            logger.warning(f"Grid capped: n1={n1} requested for {kind} wall, using {policy.max_n1} "
                           f"(h1={2.0 * L / (policy.max_n1 - 1):.4g} vs target {h_target:.4g})")
            n1 = policy.max_n1

    if policy.n3:
        n3 = int(policy.n3)
    else:
        n3_max = Config.MAX_N3 if kind == 'bloch' else Config.NEEL_MAX_N3
        n3 = int(math.ceil(params.t / h_target)) + 1
        if n3 > n3_max:
            logger.debug(f"n3={n3} capped at {n3_max} for {kind} wall")
        n3 = min(max(policy.min_n3, n3), n3_max)

    return StripGrid(L=L, t=params.t, n1=n1, n3=n3)
