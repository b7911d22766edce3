import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homsim import analytic
from homsim.correlators import VisibilityCurve, visibility_curve
from homsim.emitter import EmitterParams
from homsim.errors import (
    DomainError,
    ExtrapolationError,
    FitDegenerateError,
    MapConstructionError,
    ParameterError,
    UnreachableError,
)
from homsim.inference import (
    DEFAULT_DT_GRID,
    CorrelationInputs,
    Estimate,
    build_dephasing_map,
    corrected_visibility,
    fit_visibility_decay,
    invert_dephasing,
    purcell_visibility,
    raw_visibility,
    required_purcell,
)

T1, T2_STAR = 1.9, 2.4
LOG_DT = np.geomspace(0.005, 10, 40)


def model_curve(v_inf, tau, dts):
    return VisibilityCurve(dts, v_inf + (1 - v_inf) * np.exp(-np.asarray(dts) / tau))


def closed_form_curve(params, dts):
    return VisibilityCurve(dts, [analytic.visibility(params, d) for d in dts])


@pytest.fixture(scope="module")
def default_map():
    return build_dephasing_map()


def test_fit_recovers_generating_model():
    fit = fit_visibility_decay(model_curve(0.3, 2.0, np.linspace(0.2, 8, 15)))
    assert fit.v_inf == pytest.approx(0.3, abs=1e-6)
    assert fit.tau_v == pytest.approx(2.0, abs=1e-6)
    assert fit.residual_norm < 1e-8
    assert fit(0.0) == 1.0


@given(v_inf=st.floats(0.0, 0.95), tau=st.floats(0.2, 20.0))
def test_fit_recovery_noiseless(v_inf, tau):
    dts = np.linspace(0.05, 5, 25) * tau
    fit = fit_visibility_decay(model_curve(v_inf, tau, dts))
    assert fit.tau_v == pytest.approx(tau, rel=1e-6)
    assert fit.v_inf == pytest.approx(v_inf, abs=1e-6)


def test_fit_degenerate_and_too_short():
    with pytest.raises(FitDegenerateError):
        fit_visibility_decay(VisibilityCurve([1, 2, 3, 4], [1.0, 1.0, 1.0, 1.0]))
    with pytest.raises(ParameterError):
        fit_visibility_decay(VisibilityCurve([1, 2], [0.9, 0.8]))


def test_fit_tolerates_non_monotone_noise():
    rng = np.random.default_rng(4)
    dts = np.linspace(0.2, 8, 20)
    v = 0.35 + 0.65 * np.exp(-dts / 1.5) + rng.normal(0, 0.02, dts.size)
    fit = fit_visibility_decay(VisibilityCurve(dts, v, np.full(dts.size, 0.02)))
    assert fit.tau_v == pytest.approx(1.5, rel=0.2)
    assert 0 <= fit.v_inf <= 1


def test_fit_weighting_ignores_uncertain_point():
    dts = np.linspace(0.2, 8, 12)
    v = 0.4 + 0.6 * np.exp(-dts / 2.0)
    v[5] += 0.3
    err = np.full(dts.size, 1e-3)
    err[5] = 1e3
    fit = fit_visibility_decay(VisibilityCurve(dts, v, err))
    assert fit.tau_v == pytest.approx(2.0, rel=1e-4)


def test_fit_simulated_reference_curve_regression():
    params = EmitterParams.from_times(T1, T2_STAR)
    dts = DEFAULT_DT_GRID * T1
    fit = fit_visibility_decay(visibility_curve(params, dts))
    oracle = fit_visibility_decay(closed_form_curve(params, dts))
    assert fit.tau_v == pytest.approx(oracle.tau_v, rel=1e-5)
    assert fit.tau_v == pytest.approx(2.1384347336015366, rel=1e-5)


def test_fit_simulated_reference_curve_in_bracket():
    params = EmitterParams.from_times(T1, T2_STAR)
    fit = fit_visibility_decay(visibility_curve(params, DEFAULT_DT_GRID * T1))
    assert 1.7 <= fit.tau_v <= 2.0


def test_default_map_strictly_decreasing(default_map):
    assert np.all(np.diff(default_map.tau_v_values) < 0)
    assert default_map.gamma_star_values[0] == pytest.approx(0.05)
    assert default_map.gamma_star_values[-1] == pytest.approx(5.0)


@given(st.floats(math.log(0.05), math.log(0.5)),
       st.lists(st.floats(math.log(1.2), math.log(3.0)), min_size=1, max_size=3))
def test_map_monotone_on_random_grids(log_first, log_steps):
    gammas = np.exp(log_first + np.cumsum([0.0, *log_steps]))
    m = build_dephasing_map(gammas, np.linspace(0.1, 6.0, 12), n=64, rtol=1e-5)
    assert np.all(np.diff(m.tau_v_values) < 0)
    assert np.all(m.tau_v_values > 0)


def test_single_point_map():
    m = build_dephasing_map([1.0], DEFAULT_DT_GRID)
    assert len(m) == 1
    est = invert_dephasing(m, m.tau_v_values[0], 1.0)
    assert est.gamma_star == pytest.approx(1.0)


def test_map_dynamic_range_against_oracle_chain():
    ratio_oracle = (fit_visibility_decay(closed_form_curve(EmitterParams(1.0, 0.1), LOG_DT)).tau_v
                    / fit_visibility_decay(closed_form_curve(EmitterParams(1.0, 10.0), LOG_DT)).tau_v)
    assert ratio_oracle == pytest.approx(12.572919993761047, rel=1e-8)
    m = build_dephasing_map([0.1, 10.0], LOG_DT)
    ratio = m.tau_v_values[0] / m.tau_v_values[1]
    assert ratio > 5
    assert ratio == pytest.approx(ratio_oracle, rel=1e-5)


def test_map_rejects_bad_grids():
    with pytest.raises(ParameterError):
        build_dephasing_map([], DEFAULT_DT_GRID)
    with pytest.raises(ParameterError):
        build_dephasing_map([0.0, 1.0], DEFAULT_DT_GRID)
    with pytest.raises(ParameterError):
        build_dephasing_map([1.0, 0.5], DEFAULT_DT_GRID)


def test_map_construction_error_for_unresolved_decay():
    # widths far beyond every decay: all curves sit on their asymptotes and the fit cannot bracket tau
    with pytest.raises(MapConstructionError):
        build_dephasing_map([0.5, 1.0], [40.0, 45.0, 50.0])


def test_round_trip_half_gamma(default_map):
    params = EmitterParams(1.0, 0.5)
    tau = fit_visibility_decay(visibility_curve(params, DEFAULT_DT_GRID)).tau_v
    est = invert_dephasing(default_map, tau, 1.0)
    assert est.gamma_star == pytest.approx(0.5, rel=0.01)


def test_round_trip_across_interior(default_map):
    gs = np.geomspace(0.07, 4.0, 9)
    for g in gs:
        tau = fit_visibility_decay(closed_form_curve(EmitterParams(1.0, g), DEFAULT_DT_GRID)).tau_v
        assert invert_dephasing(default_map, tau, 1.0).gamma_star == pytest.approx(g, rel=0.01)


def test_inversion_rescales_units(default_map):
    k = 7
    g_sp = 1 / T1
    est = invert_dephasing(default_map, default_map.tau_v_values[k] * T1, g_sp)
    assert est.gamma_star == pytest.approx(default_map.gamma_star_values[k] * g_sp, rel=1e-12)
    assert est.t2_star == pytest.approx(1 / est.gamma_star)
    assert est.t2 == pytest.approx(1 / (g_sp / 2 + est.gamma_star))
    assert est.t1 == pytest.approx(T1)


@pytest.mark.parametrize("tau_v", [1.7, 2.0])
def test_inversion_reference_bracket(default_map, tau_v):
    est = invert_dephasing(default_map, tau_v, 1 / T1)
    assert abs(est.t2_star - 2.4) <= 0.7
    assert abs(est.t2 - 1.5) <= 0.2


def test_inversion_out_of_range(default_map):
    lo, hi = default_map.tau_range
    with pytest.raises(ExtrapolationError):
        invert_dephasing(default_map, 0.5 * lo, 1.0)
    with pytest.raises(ExtrapolationError):
        invert_dephasing(default_map, 2 * hi, 1.0)
    with pytest.raises(DomainError):
        invert_dephasing(default_map, 1.0, 0.0)


def test_raw_visibility_reference_numbers():
    inputs = CorrelationInputs((0.14, 0.03), (0.32, 0.05), (0.58, 0.07))
    v = raw_visibility(inputs)
    assert v.value == pytest.approx(0.448, abs=1e-3)
    assert v.sigma == pytest.approx(0.109, abs=1e-3)
    # spelled-out first-order formula
    ratio = 0.32 / 0.58
    assert v.sigma == pytest.approx(ratio * math.hypot(0.05 / 0.32, 0.07 / 0.58), rel=1e-12)


def test_raw_visibility_limits():
    assert raw_visibility(CorrelationInputs((0, 0), (0.5, 0.05), (0.5, 0.05))).value == 0.0
    v = raw_visibility(CorrelationInputs((0, 0), (0.0, 0.05), (0.6, 0.07)))
    assert v.value == 1.0
    assert v.sigma == pytest.approx(0.05 / 0.6)
    with pytest.raises(DomainError):
        raw_visibility(CorrelationInputs((0, 0), (0.1, 0.01), (0.0, 0.01)))
    with pytest.raises(DomainError):
        CorrelationInputs((0, 0), (-0.1, 0.01), (0.5, 0.01))


def test_corrected_visibility():
    v = corrected_visibility(Estimate(0.448, 0.109), Estimate(0.14, 0.03))
    assert v.value == pytest.approx(0.573, abs=1e-3)
    assert abs(v.value - 0.56) <= 0.02
    assert v.sigma == pytest.approx(math.hypot(1.28 * 0.109, 2 * 0.448 * 0.03), rel=1e-12)
    assert corrected_visibility(Estimate(0.5, 0.1), Estimate(0.0, 0.0)) == (0.5, 0.1)
    assert corrected_visibility(Estimate(0.0, 0.1), Estimate(0.2, 0.03)).value == 0.0
    with pytest.raises(DomainError):
        corrected_visibility(Estimate(0.5, 0.1), Estimate(-0.1, 0.03))


def test_purcell_reference_rows():
    assert purcell_visibility(T1, T2_STAR, 7).visibility == pytest.approx(0.80, abs=0.02)
    assert purcell_visibility(T1, T2_STAR, 15).visibility == pytest.approx(0.90, abs=0.01)
    r = purcell_visibility(T1, T2_STAR, 1)
    assert r.visibility == pytest.approx(0.396, abs=0.01)
    assert r.t1_eff == T1


def test_purcell_result_invariant():
    for fp in (1, 2.5, 7, 40):
        r = purcell_visibility(T1, T2_STAR, fp)
        t2_eff = 1 / (fp / T1 / 2 + 1 / T2_STAR)
        assert r.t1_eff == pytest.approx(T1 / fp)
        assert r.visibility == pytest.approx(t2_eff / (2 * r.t1_eff), rel=1e-12)


def test_purcell_domain():
    with pytest.raises(DomainError):
        purcell_visibility(0.0, T2_STAR, 2)
    with pytest.raises(DomainError):
        purcell_visibility(T1, -1.0, 2)
    with pytest.raises(DomainError):
        purcell_visibility(T1, T2_STAR, 0.5)
    assert purcell_visibility(T1, T2_STAR, 0.5, allow_inhibition=True).visibility < purcell_visibility(
        T1, T2_STAR, 1).visibility


@given(a=st.floats(1, 1e3), b=st.floats(1, 1e3))
def test_purcell_monotone(a, b):
    if a == b:
        return
    lo, hi = sorted((a, b))
    assert purcell_visibility(T1, T2_STAR, lo).visibility < purcell_visibility(T1, T2_STAR, hi).visibility


def test_purcell_limit():
    assert purcell_visibility(T1, T2_STAR, 1e12).visibility == pytest.approx(1.0, abs=1e-9)


def test_required_purcell_reference_values():
    assert abs(required_purcell(T1, T2_STAR, 0.80) - 7) <= 0.5


def test_required_purcell_ninety_percent():
    assert abs(required_purcell(T1, T2_STAR, 0.90) - 15) <= 1


def test_required_purcell_round_trip():
    v = purcell_visibility(T1, T2_STAR, 3).visibility
    assert required_purcell(T1, T2_STAR, v) == pytest.approx(3, abs=1e-12)
    with pytest.raises(UnreachableError):
        required_purcell(T1, T2_STAR, 1.0)
    with pytest.raises(DomainError):
        required_purcell(T1, T2_STAR, 0.0)


@given(t1=st.floats(0.1, 10), t2s=st.floats(0.1, 10), fp=st.floats(1, 100))
def test_required_purcell_inverts(t1, t2s, fp):
    v = purcell_visibility(t1, t2s, fp).visibility
    if v < 1 - 1e-9:
        assert required_purcell(t1, t2s, v) == pytest.approx(fp, rel=1e-9)
