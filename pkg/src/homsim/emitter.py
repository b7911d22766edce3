"""Dissipative two-level emitter under the Lindblad master equation.

The emitter has a ground state |g> and an excited state |e>, no coherent
drive, spontaneous emission at rate ``gamma_sp`` (collapse operator
sqrt(gamma_sp) sigma_-) and pure dephasing at rate ``gamma_star`` (collapse
operator sqrt(gamma_star / 2) sigma_z).

Conventions
-----------
* basis ordering is (|g>, |e>), so ``rho[0, 1]`` is rho_ge;
* matrices are vectorized column-major, ``vec(X)[i + 2 j] = X[i, j]``, which
  gives ``vec(A X B) = (B.T kron A) vec(X)``;
* times are in ns and rates in 1/ns.

Two propagation paths are provided. The exact propagator uses the closed
form of this (upper-triangular) generator and is the default; fixed-step
RK4 on the vectorized generator is kept as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, IntegrationAccuracyError, ParameterError

RK4_STEPS_PER_TIMESCALE = 200
TRACE_DRIFT_TOL = 1e-8


@dataclass(frozen=True)
class EmitterParams:
    """Rates of the two-level emitter, in 1/ns."""

    gamma_sp: float
    gamma_star: float = 0.0

    def __post_init__(self):
        gsp = float(self.gamma_sp)
        gst = float(self.gamma_star)
        if not math.isfinite(gsp) or gsp <= 0:
            raise ParameterError(f"gamma_sp must be finite and > 0, got {self.gamma_sp!r}")
        if not math.isfinite(gst) or gst < 0:
            raise ParameterError(f"gamma_star must be finite and >= 0, got {self.gamma_star!r}")
        object.__setattr__(self, "gamma_sp", gsp)
        object.__setattr__(self, "gamma_star", gst)

    @classmethod
    def from_times(cls, t1: float, t2_star: float = math.inf) -> "EmitterParams":
        """Build from the lifetime T1 and pure-dephasing time T2* (ns).

        ``t2_star = inf`` means no pure dephasing.
        """
        if not t1 > 0 or not math.isfinite(t1):
            raise ParameterError(f"t1 must be finite and > 0, got {t1!r}")
        if not t2_star > 0:
            raise ParameterError(f"t2_star must be > 0, got {t2_star!r}")
        return cls(1.0 / t1, 0.0 if math.isinf(t2_star) else 1.0 / t2_star)

    @property
    def t1(self) -> float:
        return 1.0 / self.gamma_sp

    @property
    def t2_star(self) -> float:
        return math.inf if self.gamma_star == 0 else 1.0 / self.gamma_star

    @property
    def gamma(self) -> float:
        """Total coherence decay rate gamma_sp / 2 + gamma_star."""
        return 0.5 * self.gamma_sp + self.gamma_star

    @property
    def t2(self) -> float:
        return 1.0 / self.gamma

    @property
    def indistinguishability(self) -> float:
        """Non-post-selected HOM visibility T2 / 2 T1."""
        return self.gamma_sp / (self.gamma_sp + 2.0 * self.gamma_star)

    def normalized(self) -> "EmitterParams":
        """Same physics in units where gamma_sp = 1."""
        return EmitterParams(1.0, self.gamma_star / self.gamma_sp)


@dataclass(frozen=True, eq=False)
class TwoLevelOperators:
    sigma_minus: np.ndarray
    sigma_plus: np.ndarray
    sigma_z: np.ndarray
    excited_projector: np.ndarray
    identity: np.ndarray


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def two_level_operators() -> TwoLevelOperators:
    sm = _frozen([[0, 1], [0, 0]])  # |g><e|
    return TwoLevelOperators(
        sigma_minus=sm,
        sigma_plus=_frozen(sm.conj().T),
        sigma_z=_frozen([[-1, 0], [0, 1]]),
        excited_projector=_frozen([[0, 0], [0, 1]]),
        identity=_frozen(np.eye(2)),
    )


OPS = two_level_operators()


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stack the trailing 2x2 axes."""
    x = np.asarray(x)
    return np.swapaxes(x, -1, -2).reshape(*x.shape[:-2], 4)


def unvec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    return np.swapaxes(v.reshape(*v.shape[:-1], 2, 2), -1, -2)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """2x2 density matrix over (|g>, |e>)."""

    elements: np.ndarray

    def __post_init__(self):
        rho = np.array(self.elements, dtype=complex)
        if rho.shape != (2, 2):
            raise ParameterError(f"density matrix must be 2x2, got shape {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "elements", rho)

    @classmethod
    def from_components(cls, p_excited: float, coherence: complex = 0.0) -> "DensityMatrix":
        """State with rho_ee = p_excited and rho_ge = coherence."""
        return cls([[1.0 - p_excited, coherence], [np.conj(coherence), p_excited]])

    @property
    def rho_gg(self) -> float:
        return float(self.elements[0, 0].real)

    @property
    def rho_ee(self) -> float:
        return float(self.elements[1, 1].real)

    @property
    def rho_ge(self) -> complex:
        return complex(self.elements[0, 1])

    @property
    def rho_eg(self) -> complex:
        return complex(self.elements[1, 0])

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.elements))

    def violations(self, herm_tol=1e-12, trace_tol=1e-10, eig_tol=1e-10) -> list[str]:
        rho = self.elements
        out = []
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        if herm > herm_tol:
            out.append(f"hermiticity residual {herm:.3g} > {herm_tol}")
        if abs(self.trace - 1.0) > trace_tol:
            out.append(f"trace {self.trace} differs from 1 by more than {trace_tol}")
        lam = float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))))
        if lam < -eig_tol:
            out.append(f"minimum eigenvalue {lam:.3g} < -{eig_tol}")
        if abs(rho[0, 1]) > math.sqrt(max(self.rho_gg * self.rho_ee, 0.0)) + eig_tol:
            out.append("coherence exceeds sqrt(rho_gg rho_ee)")
        return out

    def check(self) -> "DensityMatrix":
        bad = self.violations()
        if bad:
            raise ParameterError("invalid density matrix: " + "; ".join(bad))
        return self


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Linear map on column-stacked 2x2 matrices."""

    matrix: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(np.asarray(x, dtype=complex)))


def _dissipator(c: np.ndarray) -> np.ndarray:
    eye = np.eye(2)
    cdc = c.conj().T @ c
    return np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)


def build_generator(params: EmitterParams) -> Superoperator:
    """Vectorized Lindblad generator, zero Hamiltonian."""
    if not isinstance(params, EmitterParams):
        raise ParameterError("build_generator expects EmitterParams")
    m = _dissipator(math.sqrt(params.gamma_sp) * OPS.sigma_minus)
    if params.gamma_star > 0:
        m = m + _dissipator(math.sqrt(params.gamma_star / 2.0) * OPS.sigma_z)
    m = np.asarray(m, dtype=complex)
    m.setflags(write=False)
    return Superoperator(m)


def exact_propagator(params: EmitterParams, t) -> np.ndarray:
    """exp(L t) in closed form; ``t`` may be a scalar or an array.

    Returns shape (4, 4) or (*t.shape, 4, 4).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("propagation time must be >= 0")
    pop = np.exp(-params.gamma_sp * t)
    coh = np.exp(-params.gamma * t)
    p = np.zeros(t.shape + (4, 4), dtype=complex)
    # vec index: 0 = gg, 1 = eg, 2 = ge, 3 = ee
    p[..., 0, 0] = 1.0
    p[..., 0, 3] = -np.expm1(-params.gamma_sp * t)
    p[..., 1, 1] = coh
    p[..., 2, 2] = coh
    p[..., 3, 3] = pop
    return p


def rk4_step_matrix(generator: Superoperator, h: float) -> np.ndarray:
    """One classical RK4 step for dx/dt = L x, written as a matrix."""
    a = generator.matrix * h
    eye = np.eye(4, dtype=complex)
    a2 = a @ a
    return eye + a + a2 / 2.0 + (a2 @ a) / 6.0 + (a2 @ a2) / 24.0


def rk4_max_step(params: EmitterParams) -> float:
    return min(params.t1, params.t2) / RK4_STEPS_PER_TIMESCALE


def rk4_propagator(params: EmitterParams, t: float) -> np.ndarray:
    """RK4 approximation of exp(L t) with step <= min(T1, T2) / 200."""
    if t < 0:
        raise DomainError("propagation time must be >= 0")
    if t == 0:
        return np.eye(4, dtype=complex)
    n_steps = math.ceil(t / rk4_max_step(params))
    step = rk4_step_matrix(build_generator(params), t / n_steps)
    return np.linalg.matrix_power(step, n_steps)


def propagate(params: EmitterParams, x: np.ndarray, t: float, method: str = "exact") -> np.ndarray:
    """Apply exp(L t) to an arbitrary 2x2 operator (not only to states)."""
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if method == "exact":
        p = exact_propagator(params, t)
    elif method == "rk4":
        p = rk4_propagator(params, t)
    else:
        raise ParameterError(f"unknown propagation method {method!r}")
    return unvec(p @ vec(np.asarray(x, dtype=complex)))


def evolve(params: EmitterParams, rho0: DensityMatrix, t: float, method: str = "exact") -> DensityMatrix:
    """rho(t) from rho(0) = rho0."""
    if not t >= 0:
        raise DomainError(f"t must be >= 0, got {t}")
    rho = propagate(params, rho0.elements, t, method)
    if method == "rk4":
        drift = abs(np.trace(rho) - np.trace(rho0.elements))
        if drift > TRACE_DRIFT_TOL:
            raise IntegrationAccuracyError(f"trace drift {drift:.3g} after RK4 integration to t={t}")
    return DensityMatrix(rho)


def initial_state_after_pulse() -> DensityMatrix:
    """The emitter right after the non-resonant pulse: |e><e|."""
    return DensityMatrix([[0, 0], [0, 1]])
