"""Reference computations that share no code path with the package."""

import numpy as np
from scipy.integrate import dblquad, solve_ivp

SM = np.array([[0, 1], [0, 0]], dtype=complex)
SP = SM.conj().T
SZ = np.diag([-1.0, 1.0]).astype(complex)


def lindblad_rhs(gamma_sp, gamma_star, rho):
    """Explicit Lindblad sum, written out term by term."""
    out = np.zeros((2, 2), dtype=complex)
    for c in (np.sqrt(gamma_sp) * SM, np.sqrt(gamma_star / 2) * SZ):
        cd = c.conj().T
        out += c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c)
    return out


def integrate(gamma_sp, gamma_star, x0, t):
    """Fine-tolerance ODE integration of dX/dt = L X for any 2x2 operator X."""
    x0 = np.asarray(x0, dtype=complex)
    if t == 0:
        return x0.copy()

    def f(_, y):
        return lindblad_rhs(gamma_sp, gamma_star, y.reshape(2, 2)).ravel()

    sol = solve_ivp(f, (0, t), x0.ravel(), method="DOP853", rtol=1e-12, atol=1e-14)
    return sol.y[:, -1].reshape(2, 2)


def g1_qrt(gamma_sp, gamma_star, t, tp):
    """<sigma_+(t) sigma_-(t')> by brute-force regression from |e><e|.

    For t >= t': evolve to t', apply sigma_- from the left, evolve the
    operator for t - t', take <sigma_+ .>. The other ordering follows from
    conjugation.
    """
    if t < tp:
        return np.conj(g1_qrt(gamma_sp, gamma_star, tp, t))
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    rho_tp = integrate(gamma_sp, gamma_star, rho0, tp)
    x = integrate(gamma_sp, gamma_star, SM @ rho_tp, t - tp)
    return np.trace(SP @ x)


def hom_dblquad(gamma_sp, gamma_star, width, start=0.0):
    """(g2_hom, overlap) by adaptive 2-D quadrature of the closed-form |G1|^2."""
    g = gamma_sp / 2 + gamma_star

    def f(tp, t):  # t < tp triangle
        return np.exp(-2 * gamma_sp * t - 2 * g * (tp - t))

    end = start + width
    i_tri, _ = dblquad(f, start, end, lambda t: t, lambda t: end, epsabs=1e-14, epsrel=1e-12)
    n = (np.exp(-gamma_sp * start) - np.exp(-gamma_sp * end)) / gamma_sp
    ratio = 2 * i_tri / n**2
    return 0.5 * (1 - ratio), ratio


def random_density_matrix(rng):
    p = rng.uniform(0, 1)
    r = rng.uniform(0, 1) * np.sqrt(p * (1 - p))
    phi = rng.uniform(0, 2 * np.pi)
    c = r * np.exp(1j * phi)
    return np.array([[1 - p, c], [np.conj(c), p]])


def pair_delays(channels, timestamps, limit):
    """Every t(ch1) - t(ch0) with |delay| <= limit, by brute force over all pairs."""
    ch = np.asarray(channels)
    ts = np.asarray(timestamps, dtype=np.int64)
    d = ts[ch == 1][None, :] - ts[ch == 0][:, None]
    return d[np.abs(d) <= limit]


def hom_pair_enumeration(c):
    """Coincidence weights for one photon per pulse through a one-period delayed Mach-Zehnder.

    Walks the 2 x 2 arm choices of two photons j pulses apart and counts the
    probability that the earlier-slot detection is on channel 0 and the other
    on channel 1, at slot separation n. c is the mean same-port excess when
    the photons meet. Returns {n: weight} for n in -3..3.
    """
    out = {}
    for j in range(-4, 5):
        if j == 0:
            continue
        for arm_a in (0, 1):
            for arm_b in (0, 1):
                n = j + arm_b - arm_a
                meet = n == 0
                p_cross = 0.5 * (1 - c) if meet else 0.5  # photons leave through different ports
                # half of the cross-port events put photon a on channel 0
                out[n] = out.get(n, 0.0) + 0.25 * 0.5 * p_cross
    return {n: w for n, w in out.items() if abs(n) <= 3}
