"""Two-time coherence and the post-selected HOM correlation.

``g1_grid`` evaluates G1(t, t') = <sigma_+(t) sigma_-(t')> on a uniform grid
through the quantum regression theorem: for t <= t',

    G1(t, t') = Tr[sigma_- exp(L (t' - t)) (rho(t) sigma_+)]

and G1(t', t) = conj(G1(t, t')). The HOM coincidence probability of an ideal
source for detections post-selected inside the window is

    g2_hom = (1 - I / N^2) / 2,   I = iint |G1|^2,   N = int rho_ee.

The integrand |G1|^2 has a kink on the diagonal, so the double integral is
done with composite Simpson rules on the two triangles t <= t' and t >= t'
separately. What is actually integrated is the Cauchy-Schwarz deficit
G1(t,t) G1(t',t') - |G1(t,t')|^2, whose integral is N^2 - I; this keeps
full relative accuracy when the visibility is close to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .emitter import (
    OPS,
    EmitterParams,
    build_generator,
    exact_propagator,
    initial_state_after_pulse,
    rk4_max_step,
    rk4_step_matrix,
    unvec,
    vec,
)
from .errors import AccuracyError, GridError, ParameterError

MIN_GRID = 16
DEFAULT_GRID = 256


@dataclass(frozen=True)
class PostSelectionWindow:
    """Detection gate [start, start + width) after each excitation pulse, in ns."""

    width: float
    start: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.width) and self.width > 0):
            raise ParameterError(f"window width must be finite and > 0, got {self.width!r}")
        if not (math.isfinite(self.start) and self.start >= 0):
            raise ParameterError(f"window start must be finite and >= 0, got {self.start!r}")

    @property
    def end(self) -> float:
        return self.start + self.width


@dataclass(frozen=True, eq=False)
class CoherenceGrid:
    times: np.ndarray
    values: np.ndarray

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def populations(self) -> np.ndarray:
        return self.values.diagonal().real

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.values - self.values.conj().T)))

    def cauchy_schwarz_excess(self) -> float:
        """max of |G(i,j)|^2 - G(i,i) G(j,j); <= 0 for a valid grid."""
        p = self.populations
        return float(np.max(np.abs(self.values) ** 2 - np.outer(p, p)))


@dataclass(frozen=True)
class HomCorrelation:
    g2_hom: float
    overlap_ratio: float
    norm_N: float
    grid_size: int = 0

    @property
    def visibility(self) -> float:
        return 1.0 - 2.0 * self.g2_hom


@dataclass(frozen=True, eq=False)
class VisibilityCurve:
    """V_HOM sampled at increasing post-selection widths (ns)."""

    dt_values: np.ndarray
    v_values: np.ndarray
    v_errors: np.ndarray | None = None

    def __post_init__(self):
        dt = np.asarray(self.dt_values, dtype=float)
        v = np.asarray(self.v_values, dtype=float)
        if dt.ndim != 1 or dt.shape != v.shape:
            raise ParameterError("dt_values and v_values must be 1-D and of equal length")
        if np.any(np.diff(dt) <= 0):
            raise ParameterError("dt_values must be strictly increasing")
        if np.any((v < -0.05) | (v > 1.05)) or not np.all(np.isfinite(v)):
            raise ParameterError("visibilities must lie in [-0.05, 1.05]")
        object.__setattr__(self, "dt_values", dt)
        object.__setattr__(self, "v_values", v)
        if self.v_errors is not None:
            err = np.asarray(self.v_errors, dtype=float)
            if err.shape != v.shape or np.any(err <= 0):
                raise ParameterError("v_errors must be positive and match v_values")
            object.__setattr__(self, "v_errors", err)

    def __len__(self):
        return len(self.dt_values)


def simpson_weights(m: int) -> np.ndarray:
    """Composite Simpson weights for m unit intervals (m + 1 points).

    Odd m closes with the 3/8 rule on the last three intervals; m = 1 falls
    back to the trapezoid rule.
    """
    w = np.zeros(m + 1)
    if m == 0:
        return w
    if m == 1:
        w[:] = 0.5
        return w
    k = m if m % 2 == 0 else m - 3
    if k > 0:
        w[0:k + 1:2] += 2.0 / 3.0
        w[1:k:2] += 4.0 / 3.0
        w[0] -= 1.0 / 3.0
        w[k] -= 1.0 / 3.0
    if k != m:
        w[k:] += np.array([3.0, 9.0, 9.0, 3.0]) / 8.0
    return w


def _shear(rows: np.ndarray) -> np.ndarray:
    """Place rows[i, k] at (i, i + k); entries below the diagonal are junk."""
    n = rows.shape[0]
    buf = np.zeros((n, n + 1), dtype=rows.dtype)
    buf[:, :n] = rows
    return buf.ravel()[: n * n].reshape(n, n)


@lru_cache(maxsize=6)
def triangle_weights(n: int) -> np.ndarray:
    """Unit-step weights integrating f over {t_i <= t_j} on an n-point grid.

    Inner Simpson along each row j >= i, outer Simpson over i.
    """
    rows = np.zeros((n, n))
    for i in range(n):
        m = n - 1 - i
        rows[i, : m + 1] = simpson_weights(m)
    w = np.triu(_shear(rows)) * simpson_weights(n - 1)[:, None]
    w.setflags(write=False)
    return w


def _lag_propagators(params: EmitterParams, h: float, n: int, method: str) -> np.ndarray:
    if method == "exact":
        return exact_propagator(params, h * np.arange(n))
    if method == "rk4":
        sub = max(1, math.ceil(h / rk4_max_step(params)))
        step = np.linalg.matrix_power(rk4_step_matrix(build_generator(params), h / sub), sub)
        out = np.empty((n, 4, 4), dtype=complex)
        out[0] = np.eye(4)
        for k in range(1, n):
            out[k] = step @ out[k - 1]
        return out
    raise ParameterError(f"unknown propagation method {method!r}")


def g1_grid(params: EmitterParams, window: PostSelectionWindow, n: int = DEFAULT_GRID,
            method: str = "exact") -> CoherenceGrid:
    """G1 on an n x n uniform grid over the window, emitter starting in |e> at t = 0."""
    if n < MIN_GRID:
        raise GridError(f"grid size must be >= {MIN_GRID}, got {n}")
    times = np.linspace(window.start, window.end, n)
    h = window.width / (n - 1)
    lags = _lag_propagators(params, h, n, method)

    if method == "exact":
        to_start = exact_propagator(params, window.start)
    else:
        to_start = _lag_propagators(params, window.start, 2, method)[1] if window.start > 0 else np.eye(4)
    rho_start = to_start @ vec(initial_state_after_pulse().elements)
    rho = (lags @ rho_start).reshape(n, 4)  # vec(rho(t_i)), lag i from the window start

    x = vec(unvec(rho) @ OPS.sigma_plus)  # vec(rho(t_i) sigma_+)
    q = vec(OPS.sigma_minus.T) @ lags  # q[k] . vec(Y) = Tr[sigma_- exp(L tau_k) Y]
    upper = np.triu(_shear(x @ q.T))
    values = upper + np.triu(upper, 1).conj().T
    values.setflags(write=False)
    times.setflags(write=False)
    return CoherenceGrid(times, values)


def norm_N(params: EmitterParams, window: PostSelectionWindow, rtol: float = 1e-13,
           n_max: int = 2**22 + 1) -> float:
    """Integral of rho_ee(t) over the window (expected photon number).

    Composite Simpson on the propagated population, refined by grid doubling.
    """
    rho0 = vec(initial_state_after_pulse().elements)
    n = 257
    prev = None
    while True:
        t = np.linspace(window.start, window.end, n)
        pop = (exact_propagator(params, t) @ rho0)[:, 3].real
        val = float(simpson_weights(n - 1) @ pop) * window.width / (n - 1)
        if prev is not None and abs(val - prev) <= rtol * abs(val):
            return val
        if 2 * n - 1 > n_max:
            raise AccuracyError(f"norm integral did not converge with {n} points")
        prev, n = val, 2 * n - 1


def distinguishability_integral(grid: CoherenceGrid) -> float:
    """Integral of G(t,t) G(t',t') - |G(t,t')|^2 over the window square."""
    p = grid.populations
    deficit = np.outer(p, p) - np.abs(grid.values) ** 2
    n = len(p)
    return 2.0 * float(np.sum(triangle_weights(n) * deficit)) * grid.step**2


def g2_hom_postselected(params: EmitterParams, window: PostSelectionWindow, n: int = DEFAULT_GRID,
                        rtol: float = 1e-7, n_max: int = 4097, method: str = "exact") -> HomCorrelation:
    """Post-selected HOM coincidence probability for an ideal single-photon source.

    Starts from an ``n``-point grid and doubles the resolution until the
    integral changes by less than ``rtol`` (relative).
    """
    if n < MIN_GRID:
        raise GridError(f"grid size must be >= {MIN_GRID}, got {n}")
    big_n = norm_N(params, window)
    atol = 1e-15 * big_n**2
    prev = None
    while True:
        d = distinguishability_integral(g1_grid(params, window, n, method))
        if prev is not None and abs(d - prev) <= rtol * abs(d) + atol:
            break
        if 2 * n - 1 > n_max:
            raise AccuracyError(
                f"HOM integral not converged at n={n}: change {abs(d - prev):.3g} (rtol {rtol})")
        prev, n = d, 2 * n - 1
    d = max(d, 0.0)
    return HomCorrelation(g2_hom=0.5 * d / big_n**2, overlap_ratio=1.0 - d / big_n**2, norm_N=big_n,
                          grid_size=n)


def visibility_curve(params: EmitterParams, windows, n: int = DEFAULT_GRID, start: float = 0.0,
                     **kwargs) -> VisibilityCurve:
    """V_HOM = 1 - 2 g2_hom for each post-selection width in ``windows`` (ns)."""
    dts = np.asarray(windows, dtype=float)
    if dts.ndim != 1 or len(dts) == 0:
        raise ParameterError("windows must be a non-empty 1-D sequence")
    if np.any(dts <= 0) or np.any(np.diff(dts) <= 0):
        raise ParameterError("window widths must be > 0 and strictly increasing")
    v = [g2_hom_postselected(params, PostSelectionWindow(float(w), start), n, **kwargs).visibility
         for w in dts]
    return VisibilityCurve(dts, np.array(v))
