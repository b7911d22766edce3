"""Closed-form expressions for the dephasing two-level emitter.

These are the reference values the numerical paths are checked against:

    rho_ee(t)   = exp(-gamma_sp t)
    G1(t, t')   = exp(-gamma_sp min(t, t')) exp(-(gamma_sp/2 + gamma_star) |t - t'|)
    |G1|^2      = rho_ee(t) rho_ee(t') exp(-2 gamma_star |t - t'|)

for an emitter prepared in |e> at t = 0. None of this module depends on the
propagators in :mod:`homsim.emitter`.
"""

from __future__ import annotations

import math

import numpy as np


def exp_integral(rate: float, lo: float, hi: float) -> float:
    """Integral of exp(-rate t) over [lo, hi]; finite as rate -> 0."""
    if rate == 0:
        return hi - lo
    return math.exp(-rate * lo) * -math.expm1(-rate * (hi - lo)) / rate


def population(params, t):
    return np.exp(-params.gamma_sp * np.asarray(t, dtype=float))


def g1(params, t, tp):
    t = np.asarray(t, dtype=float)
    tp = np.asarray(tp, dtype=float)
    return np.exp(-params.gamma_sp * np.minimum(t, tp) - params.gamma * np.abs(t - tp))


def norm(params, start: float, width: float) -> float:
    return exp_integral(params.gamma_sp, start, start + width)


def overlap_integral(params, start: float, width: float) -> float:
    """Double integral of |G1(t, t')|^2 over the window square."""
    gsp, gst = params.gamma_sp, params.gamma_star
    a = gsp + 2.0 * gst
    b = gsp - 2.0 * gst
    end = start + width
    # twice the t < t' triangle; the inner t' integral is done analytically
    return (2.0 / a) * (exp_integral(2.0 * gsp, start, end) - math.exp(-a * end) * exp_integral(b, start, end))


def hom(params, start: float, width: float) -> tuple[float, float, float]:
    """(g2_hom, overlap_ratio, N) for an ideal source, closed form."""
    n = norm(params, start, width)
    ratio = overlap_integral(params, start, width) / n**2
    return 0.5 * (1.0 - ratio), ratio, n


def visibility(params, width: float, start: float = 0.0) -> float:
    return hom(params, start, width)[1]
