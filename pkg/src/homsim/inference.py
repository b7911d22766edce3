"""Fitting and inversion of HOM visibility data.

* exponential fit of V(dt) with the intercept pinned to V(0) = 1;
* the one-to-one map between the fitted decay time tau_V and the pure
  dephasing rate, built from master-equation curves, and its inverse;
* raw and purity-corrected visibilities with first-order error propagation;
* Purcell-enhancement what-if analysis.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import repeat
from typing import NamedTuple

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from .correlators import DEFAULT_GRID, VisibilityCurve, visibility_curve
from .emitter import EmitterParams
from .errors import (
    DomainError,
    ExtrapolationError,
    FitDegenerateError,
    MapConstructionError,
    ParameterError,
    UnreachableError,
)

__all__ = [
    "CorrelationInputs",
    "DephasingEstimate",
    "DephasingMap",
    "Estimate",
    "ExponentialFit",
    "PurcellResult",
    "VisibilityCurve",
    "build_dephasing_map",
    "corrected_visibility",
    "fit_visibility_decay",
    "invert_dephasing",
    "purcell_visibility",
    "raw_visibility",
    "required_purcell",
]

# in units of gamma_sp (gamma star) and T1 (window widths)
DEFAULT_GAMMA_STAR_GRID = np.geomspace(0.05, 5.0, 25)
DEFAULT_DT_GRID = np.linspace(0.1, 6.0, 60)

_SCAN_POINTS = 512
_SCAN_DECADES = 3.0


class Estimate(NamedTuple):
    value: float
    sigma: float


@dataclass(frozen=True)
class ExponentialFit:
    """V(dt) = v_inf + (1 - v_inf) exp(-dt / tau_v)."""

    tau_v: float
    v_inf: float
    residual_norm: float

    def __call__(self, dt):
        return self.v_inf + (1.0 - self.v_inf) * np.exp(-np.asarray(dt, dtype=float) / self.tau_v)


def _profile(log_tau, dt, v, w):
    e = np.exp(-dt / math.exp(log_tau))
    x = 1.0 - e
    y = v - e
    # model is linear in v_inf once tau is fixed; the clipped solution is the constrained optimum
    den = float(np.sum(w * x * x))
    v_inf = min(max(float(np.sum(w * x * y)) / den, 0.0), 1.0) if den > 0 else 0.0
    r = y - v_inf * x
    return float(np.sum(w * r * r)), v_inf


def fit_visibility_decay(curve: VisibilityCurve) -> ExponentialFit:
    """Least-squares fit of the fixed-intercept exponential.

    A log-spaced scan over tau, with the asymptote solved in closed form at
    each tau, brackets the global minimum; bounded Brent refinement polishes
    it. Weighted by 1/sigma^2 when the curve carries errors.
    """
    dt, v = curve.dt_values, curve.v_values
    if len(dt) < 3:
        raise ParameterError("need at least 3 points to fit a visibility decay")
    if np.ptp(v) <= 1e-12:
        raise FitDegenerateError("all visibilities equal: no decay to fit")
    w = np.ones_like(v) if curve.v_errors is None else 1.0 / curve.v_errors**2

    lo = math.log(max(dt[0], 1e-12)) - _SCAN_DECADES * math.log(10)
    hi = math.log(dt[-1]) + _SCAN_DECADES * math.log(10)
    grid = np.linspace(lo, hi, _SCAN_POINTS)
    sse = np.array([_profile(g, dt, v, w)[0] for g in grid])
    i = int(np.argmin(sse))
    if i == 0 or i == len(grid) - 1:
        raise FitDegenerateError("decay time not bracketed by the data (curve flat or instantaneous)")
    res = minimize_scalar(lambda g: _profile(g, dt, v, w)[0], bounds=(grid[i - 1], grid[i + 1]),
                          method="bounded", options={"xatol": 1e-13})
    log_tau = float(res.x) if res.fun <= sse[i] else float(grid[i])
    sse_best, v_inf = _profile(log_tau, dt, v, w)
    return ExponentialFit(tau_v=math.exp(log_tau), v_inf=v_inf, residual_norm=math.sqrt(sse_best))


@dataclass(frozen=True, eq=False)
class DephasingMap:
    """tau_V as a function of gamma_star, both in units where gamma_sp = 1."""

    gamma_star_values: np.ndarray
    tau_v_values: np.ndarray
    dt_grid: np.ndarray

    def __len__(self):
        return len(self.gamma_star_values)

    @property
    def tau_range(self) -> tuple[float, float]:
        return float(self.tau_v_values.min()), float(self.tau_v_values.max())


@dataclass(frozen=True)
class DephasingEstimate:
    gamma_star: float
    gamma_sp: float

    @property
    def t2_star(self) -> float:
        return 1.0 / self.gamma_star

    @property
    def t2(self) -> float:
        return 1.0 / (0.5 * self.gamma_sp + self.gamma_star)

    @property
    def t1(self) -> float:
        return 1.0 / self.gamma_sp


def _map_point(g, dts, n, rtol):
    curve = visibility_curve(EmitterParams(1.0, float(g)), dts, n, rtol=rtol)
    try:
        return fit_visibility_decay(curve).tau_v
    except FitDegenerateError as exc:
        raise MapConstructionError(f"fit failed at gamma_star = {g:g}: {exc}") from exc


def build_dephasing_map(gamma_star_grid=DEFAULT_GAMMA_STAR_GRID, dt_grid=DEFAULT_DT_GRID,
                        n: int = DEFAULT_GRID, rtol: float = 1e-7, workers: int = 1) -> DephasingMap:
    """Fit tau_V to simulated V(dt) for each gamma_star (units of gamma_sp).

    ``dt_grid`` is in units of T1. Raises MapConstructionError when tau_V is
    not strictly decreasing, which usually means dt_grid does not resolve
    the fastest decays. Grid points are independent and may be spread over
    ``workers`` processes; the result does not depend on it.
    """
    gs = np.asarray(gamma_star_grid, dtype=float)
    dts = np.asarray(dt_grid, dtype=float)
    if gs.ndim != 1 or len(gs) == 0 or dts.ndim != 1 or len(dts) == 0:
        raise ParameterError("gamma_star_grid and dt_grid must be non-empty 1-D sequences")
    if np.any(gs <= 0) or np.any(np.diff(gs) <= 0):
        raise ParameterError("gamma_star_grid must be positive and strictly increasing")
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            taus = np.array(list(pool.map(_map_point, gs, repeat(dts), repeat(n), repeat(rtol))))
    else:
        taus = np.array([_map_point(g, dts, n, rtol) for g in gs])
    bad = np.nonzero(np.diff(taus) >= 0)[0]
    if len(bad):
        k = int(bad[0])
        raise MapConstructionError(
            f"tau_V not decreasing between gamma_star = {gs[k]:g} and {gs[k + 1]:g} "
            f"({taus[k]:.6g} -> {taus[k + 1]:.6g}); refine dt_grid or n")
    for a in (gs, taus, dts):
        a.setflags(write=False)
    return DephasingMap(gs, taus, dts)


def invert_dephasing(dmap: DephasingMap, tau_v_measured: float, gamma_sp: float) -> DephasingEstimate:
    """gamma_star (1/ns) from a measured tau_V (ns) and the known emission rate."""
    if not gamma_sp > 0:
        raise DomainError("gamma_sp must be > 0")
    if not tau_v_measured > 0:
        raise DomainError("tau_v_measured must be > 0")
    tau = tau_v_measured * gamma_sp
    lo, hi = dmap.tau_range
    if not lo <= tau <= hi:
        raise ExtrapolationError(
            f"tau_V = {tau:.4g}/gamma_sp outside the tabulated range [{lo:.4g}, {hi:.4g}]")
    if len(dmap) == 1:
        g = float(dmap.gamma_star_values[0])
    else:
        # tau decreases with gamma_star; interpolate log gamma_star against ascending log tau
        order = np.argsort(dmap.tau_v_values)
        interp = PchipInterpolator(np.log(dmap.tau_v_values[order]), np.log(dmap.gamma_star_values[order]))
        g = math.exp(float(interp(math.log(tau))))
    return DephasingEstimate(gamma_star=g * gamma_sp, gamma_sp=gamma_sp)


@dataclass(frozen=True)
class CorrelationInputs:
    g2_hbt: Estimate
    g2_parallel: Estimate
    g2_orthogonal: Estimate

    def __post_init__(self):
        for name in ("g2_hbt", "g2_parallel", "g2_orthogonal"):
            val = Estimate(*map(float, getattr(self, name)))
            if val.value < 0 or val.sigma < 0:
                raise DomainError(f"{name} must have non-negative value and error, got {val}")
            object.__setattr__(self, name, val)


def raw_visibility(inputs: CorrelationInputs) -> Estimate:
    """V = 1 - g_par / g_orth with independent first-order errors."""
    gp, sp = inputs.g2_parallel
    go, so = inputs.g2_orthogonal
    if go <= 0:
        raise DomainError("orthogonal-polarization g2 must be > 0")
    v = 1.0 - gp / go
    # sigma_V^2 = (s_par / g_orth)^2 + (g_par s_orth / g_orth^2)^2, finite at g_par = 0
    sigma = math.hypot(sp / go, gp * so / go**2)
    return Estimate(v, sigma)


def corrected_visibility(v_raw: Estimate, g2_hbt: Estimate) -> Estimate:
    """(1 + 2 g2_HBT) V with first-order propagation of both errors."""
    v, sv = map(float, v_raw)
    g, sg = map(float, g2_hbt)
    if g < 0 or sg < 0 or sv < 0:
        raise DomainError("g2_hbt and the errors must be non-negative")
    return Estimate((1.0 + 2.0 * g) * v, math.hypot((1.0 + 2.0 * g) * sv, 2.0 * v * sg))


@dataclass(frozen=True)
class PurcellResult:
    f_p: float
    t1_eff: float
    visibility: float


def _check_times(t1, t2_star):
    if not (t1 > 0 and math.isfinite(t1)):
        raise DomainError(f"t1 must be finite and > 0, got {t1!r}")
    if not t2_star > 0:
        raise DomainError(f"t2_star must be > 0, got {t2_star!r}")


def purcell_visibility(t1: float, t2_star: float, f_p: float, allow_inhibition: bool = False) -> PurcellResult:
    """Non-post-selected indistinguishability when the lifetime becomes T1 / F_p."""
    _check_times(t1, t2_star)
    if not (f_p > 0 and math.isfinite(f_p)):
        raise DomainError(f"Purcell factor must be finite and > 0, got {f_p!r}")
    if f_p < 1 and not allow_inhibition:
        raise DomainError("Purcell factor < 1 (inhibited emission) requires allow_inhibition=True")
    rate = f_p / t1
    gamma_star = 0.0 if math.isinf(t2_star) else 1.0 / t2_star
    return PurcellResult(f_p=f_p, t1_eff=t1 / f_p, visibility=rate / (rate + 2.0 * gamma_star))


def required_purcell(t1: float, t2_star: float, v_target: float) -> float:
    """Purcell factor at which purcell_visibility reaches ``v_target``."""
    _check_times(t1, t2_star)
    if v_target >= 1:
        raise UnreachableError("unit visibility is only reached for F_p -> infinity")
    if not v_target > 0:
        raise DomainError("target visibility must be > 0")
    gamma_star = 0.0 if math.isinf(t2_star) else 1.0 / t2_star
    return 2.0 * gamma_star * v_target * t1 / (1.0 - v_target)
