"""
Constructions Module
Builds the explicit competitor walls: the asymmetric Bloch wall from a stream
function and the logarithmic Neel wall, plus the reduced energy of in-plane profiles.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy import integrate

from config import Config
from modules.energy import EnergyBreakdown, WallEnergy, difference_matrix
from modules.error_handler import ConstructionError, ErrorHandler, FieldValidationError, RegimeError
from modules.fields import (
    GridPolicy, MagnetizationField, MaterialParams, Profile1D, StripGrid,
    enforce_clamp, make_grid, normalize_nodes, validate_admissible
)


logger = logging.getLogger(__name__)

GAMMA_SAMPLES = 401


@dataclass(frozen=True, eq=False)
class BlochStream:
    """Stream function of the Bloch wall in units of t, with its analytic gradient."""

    grid: StripGrid
    delta: float
    psi: np.ndarray            # (n3, n1)
    grad: np.ndarray           # (n3, n1, 2): (d psi/dx1, d psi/dx3)
    gamma: np.ndarray          # (M, 2) points (x1, x3) of the half ellipse 4 x1^2 + x3^2 = 1/4
    gamma_grad2: np.ndarray    # |grad psi|^2 along gamma
    eps_grid: float
    rescale: float

    def coverage(self, delta_core: float = Config.DELTA_CORE) -> float:
        """Fraction of gamma on which |grad psi|^2 >= 1 - delta_core."""
        return float(np.mean(self.gamma_grad2 >= 1.0 - delta_core))

    def report(self, delta_core: float = Config.DELTA_CORE) -> Dict:
        return {
            'delta': self.delta,
            'max_grad2': float(np.max(np.sum(self.grad ** 2, axis=-1))),
            'eps_grid': self.eps_grid,
            'gamma_min_grad2': float(np.min(self.gamma_grad2)),
            'gamma_coverage': self.coverage(delta_core),
            'psi_max': float(np.max(self.psi)),
            'rescale': self.rescale,
        }


def _flattening(s: np.ndarray, delta: float) -> Tuple[np.ndarray, np.ndarray]:
    """C^2 flattening f with f = 0 for s <= delta/2 and f' = 1 for s >= delta."""
    u = np.clip((s - 0.5 * delta) / (0.5 * delta), 0.0, 1.0)
    f = np.where(s >= delta, 0.25 * delta + (s - delta), 0.5 * delta * (u ** 3 - 0.5 * u ** 4))
    fprime = np.where(s >= delta, 1.0, 3.0 * u ** 2 - 2.0 * u ** 3)
    return f, fprime


def _cutoff(x1: np.ndarray, half_width: float = Config.BLOCH_HALF_WIDTH) -> Tuple[np.ndarray, np.ndarray]:
    """Smooth cutoff equal to 1 for |x1| <= half_width/2 and 0 for |x1| >= half_width."""
    inner = 0.5 * half_width
    u = np.clip((np.abs(x1) - inner) / (half_width - inner), 0.0, 1.0)
    step = u ** 3 * (10.0 - 15.0 * u + 6.0 * u ** 2)
    dstep = 30.0 * u ** 2 * (1.0 - u) ** 2 / (half_width - inner)
    return 1.0 - step, -dstep * np.sign(x1)


def _stream(x1: np.ndarray, x3: np.ndarray, delta: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """psi = f(1/2 - r(|x|)) * w(x1) with the cone tip rounded inside |x| < delta."""
    rho = np.hypot(x1, x3)
    tip = rho < delta
    r = np.where(tip, rho ** 2 / (2.0 * delta) + 0.5 * delta, rho)
    kappa = 1.0 / np.maximum(rho, delta)
    f, fprime = _flattening(0.5 - r, delta)
    w, dw = _cutoff(x1)
    psi = f * w
    dpsi1 = -fprime * kappa * x1 * w + f * dw
    dpsi3 = -fprime * kappa * x3 * w
    return psi, dpsi1, dpsi3


class WallConstructor:
    """Class to build Bloch and Neel wall fields."""

    def __init__(self):
        self.energy = WallEnergy()

    def build_bloch_stream(self, grid: StripGrid, delta: float = Config.BLOCH_DELTA,
                           delta_core: float = Config.DELTA_CORE) -> BlochStream:
        """
        Build the stream function psi of the Bloch wall.

        Args:
            grid: Strip grid; coordinates are used in units of t
            delta: Core smoothing (units of t), in (0, 0.2)
            delta_core: Tolerance of |grad psi|^2 = 1 on gamma

        Returns:
            BlochStream
        """
        if not 0.0 < delta < 0.2:
            raise ConstructionError(f"Core smoothing delta must lie in (0, 0.2), got {delta}",
                                    "DELTA_OUT_OF_RANGE")
        h = max(grid.h1, grid.h3) / grid.t
        if h > 0.5 * delta:
            raise ConstructionError(
                f"Grid too coarse to resolve the Bloch core: h/t = {h:.4g} > delta/2 = {0.5 * delta:.4g}",
                "GRID_TOO_COARSE", {'h_over_t': h, 'delta': delta}
            )

        x1 = grid.x1[None, :] / grid.t
        x3 = grid.x3[:, None] / grid.t
        psi, dpsi1, dpsi3 = _stream(np.broadcast_to(x1, (grid.n3, grid.n1)),
                                    np.broadcast_to(x3, (grid.n3, grid.n1)), delta)

        eps_grid = 10.0 * h ** 2
        max_grad = float(np.sqrt(np.max(dpsi1 ** 2 + dpsi3 ** 2)))
        rescale = 1.0
        if max_grad > 1.0 + 1e-12:
            rescale = 1.0 / max_grad
            logger.warning(f"|grad psi| reached {max_grad:.6f}; rescaling psi by {rescale:.6f}")
            psi, dpsi1, dpsi3 = psi * rescale, dpsi1 * rescale, dpsi3 * rescale

        g3 = np.linspace(-0.5, 0.5, GAMMA_SAMPLES)
        g1 = 0.5 * np.sqrt(np.maximum(0.25 - g3 ** 2, 0.0))
        _, gd1, gd3 = _stream(g1, g3, delta)
        gamma_grad2 = rescale ** 2 * (gd1 ** 2 + gd3 ** 2)

        stream = BlochStream(
            grid=grid,
            delta=delta,
            psi=psi,
            grad=np.stack([dpsi1, dpsi3], axis=-1),
            gamma=np.stack([g1, g3], axis=-1),
            gamma_grad2=gamma_grad2,
            eps_grid=eps_grid,
            rescale=rescale,
        )

        coverage = stream.coverage(delta_core)
        if coverage < 0.5:
            raise ConstructionError(
                f"delta = {delta} leaves |grad psi|^2 >= 1 - {delta_core} on only "
                f"{coverage:.0%} of gamma (min {float(np.min(gamma_grad2)):.4f})",
                "CORE_NOT_COVERED", stream.report(delta_core)
            )
        return stream

    def build_bloch(self, grid: StripGrid, params: MaterialParams,
                    delta: float = Config.BLOCH_DELTA,
                    mollify_width: Optional[float] = None) -> MagnetizationField:
        """
        Build the asymmetric Bloch wall (m1, m3) = (-d3 psi, d1 psi).

        m2 takes the sign of the side of gamma and changes it smoothly over
        mollify_width (default max(h, d/t), units of t). Inside that band the
        missing length is put into m1 with the sign of x3, which gives the surface
        Neel caps and keeps every node away from the zero vector.

        Args:
            grid: Strip grid
            params: Material parameters (t must match the grid)
            delta: Core smoothing (units of t)
            mollify_width: Width of the m2 sign change (units of t)

        Returns:
            Admissible MagnetizationField
        """
        if not math.isclose(grid.t, params.t, rel_tol=1e-12):
            raise FieldValidationError(f"Grid thickness {grid.t} differs from t = {params.t}", "GRID_MISMATCH")
        if params.t_over_d ** 2 * params.Q > Config.SWEEP_UPPER_MARGIN:
            logger.warning(f"(t/d)^2 = {params.t_over_d ** 2:.4g} is not small against 1/Q = "
                           f"{1.0 / params.Q:.4g}; the Bloch construction is outside its hypothesis")

        stream = self.build_bloch_stream(grid, delta)
        h = max(grid.h1, grid.h3) / grid.t
        width = mollify_width if mollify_width is not None else max(h, params.d / params.t)
        width = ErrorHandler.validate_positive('mollify_width', width)

        x1 = np.broadcast_to(grid.x1[None, :] / grid.t, (grid.n3, grid.n1))
        x3 = np.broadcast_to(grid.x3[:, None] / grid.t, (grid.n3, grid.n1))

        m1 = -stream.grad[:, :, 1]
        m3 = stream.grad[:, :, 0]
        a = np.sqrt(np.maximum(0.0, 1.0 - m1 ** 2 - m3 ** 2))

        offset = x1 - 0.5 * np.sqrt(np.maximum(0.25 - x3 ** 2, 0.0))
        u = np.clip(offset / width, -1.0, 1.0)
        sigma = 0.5 * u * (3.0 - u ** 2)
        cap = np.where(x3 >= 0.0, 1.0, -1.0)

        values = np.empty((grid.n3, grid.n1, 3))
        values[:, :, 0] = m1 + a * np.sqrt(1.0 - sigma ** 2) * cap
        values[:, :, 1] = a * sigma
        values[:, :, 2] = m3
        normalize_nodes(values)
        enforce_clamp(values)

        field = MagnetizationField(grid, values)
        ErrorHandler.log_operation('build_bloch', {
            't_over_d': params.t_over_d, 'Q': params.Q, 'delta': delta,
            'mollify_width': width, 'gamma_coverage': stream.coverage()
        })
        return field

    def build_neel_profile(self, params: MaterialParams,
                           grid1d: Union[np.ndarray, StripGrid]) -> Profile1D:
        """
        Build the logarithmic Neel profile.

        m1(x) = ln(sqrt(min{(Q|x|/t)^2 + (Q d^2/t^2)^2, 1})) / ln(Q d^2/t^2), so m1(0) = 1
        and m1 = 0 beyond |x| = t/Q.

        Args:
            params: Material parameters
            grid1d: Uniform x1 samples on [-L, L] (or a StripGrid)

        Returns:
            Profile1D with theta = sign(x) * arccos(m1)
        """
        x = np.asarray(grid1d.x1 if isinstance(grid1d, StripGrid) else grid1d, dtype=float)
        d, Q, t = params.d, params.Q, params.t
        core = Q * d ** 2 / t ** 2
        if core >= 1.0:
            raise RegimeError(f"Q d^2/t^2 = {core:.4g} >= 1: the logarithmic profile is undefined",
                              "OUTSIDE_HYPOTHESIS", params.to_dict())
        if params.t_over_d ** 2 < Config.SWEEP_LOWER_MARGIN * Q:
            logger.warning(f"(t/d)^2 = {params.t_over_d ** 2:.4g} is not large against Q = {Q}; "
                           f"the Neel construction is outside its hypothesis")

        m1 = self._neel_m1(np.abs(x), params)
        theta = np.sign(x) * np.arccos(m1)

        L = float(max(-x[0], x[-1]))
        tail = t / Q
        if L < tail:
            missing = self._truncated_tail_energy(L, params)
            logger.warning(f"Half width L = {L:.4g} is shorter than the Neel tail t/Q = {tail:.4g}; "
                           f"estimated truncated anisotropy energy {missing:.4g}")
        theta[0] = -0.5 * np.pi
        theta[-1] = 0.5 * np.pi
        return Profile1D(x1=x, theta=theta)

    @staticmethod
    def _neel_m1(x_abs: np.ndarray, params: MaterialParams) -> np.ndarray:
        d, Q, t = params.d, params.Q, params.t
        core = Q * d ** 2 / t ** 2
        y = x_abs * t / d ** 2
        m1 = 1.0 + 0.5 * np.log1p(y ** 2) / math.log(core)
        m1 = np.where(Q * x_abs / t >= 1.0, 0.0, m1)
        return np.clip(m1, 0.0, 1.0)

    def _truncated_tail_energy(self, L: float, params: MaterialParams) -> float:
        tail = params.t / params.Q

        def density(x):
            return float(self._neel_m1(np.array([x]), params)[0]) ** 2

        value, _ = integrate.quad(density, L, tail, limit=200)
        return 2.0 * params.Q * params.t * value

    def lift_profile(self, profile: Profile1D, grid: StripGrid) -> MagnetizationField:
        """
        Extend an angle profile to the strip as m = (cos theta, sin theta, 0).

        Args:
            profile: Angle profile on the x1 nodes of the grid
            grid: Target grid

        Returns:
            x3-independent MagnetizationField
        """
        if profile.x1.shape != grid.x1.shape or not np.allclose(profile.x1, grid.x1, rtol=0.0,
                                                                 atol=1e-9 * grid.L):
            raise FieldValidationError("Profile samples do not match the grid x1 nodes", "GRID_MISMATCH")
        row = np.stack([profile.m1, profile.m2, np.zeros_like(profile.theta)], axis=-1)
        return MagnetizationField(grid, np.broadcast_to(row, (grid.n3, grid.n1, 3)))

    def reduced_neel_energy(self, profile: Profile1D, params: MaterialParams) -> EnergyBreakdown:
        """
        Energy of the x3-independent in-plane wall m = (cos theta, sin theta, 0).

        Exchange is evaluated on (cos theta, sin theta) with the difference operator
        of the 2D energy, which equals theta'^2 without the 0/0 at m1 = +-1 and makes
        the lifted field reproduce it exactly.

        Args:
            profile: Angle profile
            params: Material parameters

        Returns:
            EnergyBreakdown of t * 1D exchange, t * 1D anisotropy and t^2 * N(cos theta)
        """
        h = profile.h
        n = profile.x1.size
        w = np.full(n, h)
        w[0] = w[-1] = 0.5 * h
        m = np.stack([profile.m1, profile.m2], axis=-1)
        dm = difference_matrix(n, h) @ m
        exchange = params.d ** 2 * params.t * float(w @ np.sum(dm ** 2, axis=-1))
        anisotropy = params.Q * params.t * float(w @ profile.m1 ** 2)
        stray = params.t ** 2 * WallEnergy.half_norm_energy(profile.m1, h)
        return EnergyBreakdown(exchange, anisotropy, stray)

    def build_initializer(self, kind: str, params: MaterialParams, policy: GridPolicy = None,
                          delta: float = Config.BLOCH_DELTA,
                          mollify_width: Optional[float] = None) -> Tuple[MagnetizationField, Dict]:
        """
        Build a wall of the given kind on the grid chosen by the resolution policy.

        Args:
            kind: 'bloch' or 'neel'
            params: Material parameters
            policy: Grid resolution policy
            delta: Bloch core smoothing
            mollify_width: Bloch m2 transition width

        Returns:
            Tuple of (field, info dict with grid and validation report)
        """
        grid = make_grid(params, kind, policy, delta)
        if kind == 'bloch':
            field = self.build_bloch(grid, params, delta, mollify_width)
        elif kind == 'neel':
            field = self.lift_profile(self.build_neel_profile(params, grid.x1), grid)
        else:
            raise FieldValidationError(f"Unknown wall kind '{kind}'", "UNKNOWN_KIND")

        info = {'kind': kind, 'grid': grid.header(), 'validation': validate_admissible(field)}
        if not info['validation']['valid']:
            raise ConstructionError(f"{kind} construction is not admissible: {info['validation']['errors']}",
                                    "NOT_ADMISSIBLE", info)
        return field, info
