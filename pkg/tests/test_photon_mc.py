import math
import warnings

import numpy as np
import pytest
import sympy as sp

from homsim import analytic
from homsim.analysis import AnalysisSettings, coincidence_histogram, g2_from_peaks, hom_analysis, peak_areas
from homsim.correlators import PostSelectionWindow, g2_hom_postselected
from homsim.emitter import EmitterParams
from homsim.errors import DomainError, ParameterError
from homsim.photon_mc import (
    McConfig,
    Mode,
    background_for_g2,
    background_ratio,
    expected_peak_pattern,
    generate_stream,
)

from oracles import hom_pair_enumeration

REF_EMITTER = EmitterParams.from_times(1.9, 2.4)


def config(mode="HBT", n=10**5, seed=1, **kw):
    kw.setdefault("rep_period", 50.0)
    return McConfig(REF_EMITTER if "emitter" not in kw else kw.pop("emitter"), n, mode, seed, **kw)


def test_kernel_identity_symbolic():
    t, tp, g, gs = sp.symbols("t t_p Gamma gamma_s", positive=True)
    rho = lambda x: sp.exp(-g * x)  # noqa: E731
    gamma = g / 2 + gs
    # G1 for t <= t' and its mirror
    g1_lo = sp.exp(-g * t) * sp.exp(-gamma * (tp - t))
    g1_hi = sp.exp(-g * tp) * sp.exp(-gamma * (t - tp))
    assert sp.simplify(g1_lo**2 / (rho(t) * rho(tp)) - sp.exp(-2 * gs * (tp - t))) == 0
    assert sp.simplify(g1_hi**2 / (rho(t) * rho(tp)) - sp.exp(-2 * gs * (t - tp))) == 0
    # averaged kernel over a window equals the closed-form overlap ratio
    w = sp.Rational(3)
    vals = {g: sp.Rational(10, 19), gs: sp.Rational(5, 12)}
    inner = sp.integrate((rho(t) * rho(tp) * sp.exp(-2 * gs * (tp - t))).subs(vals), (tp, t, w))
    overlap = 2 * sp.integrate(inner, (t, 0, w))
    norm = sp.integrate(rho(t).subs(vals), (t, 0, w))
    ratio = float(overlap / norm**2)
    assert ratio == pytest.approx(analytic.hom(REF_EMITTER, 0.0, 3.0)[1], rel=1e-12)


def test_config_validation():
    with pytest.raises(ParameterError):
        config(p_background=1.5)
    with pytest.raises(ParameterError):
        config(loss=0.0)
    with pytest.raises(ParameterError):
        config(mode="HOM")
    with pytest.raises(ParameterError):
        config(seed=-1)
    with pytest.raises(ParameterError):
        config(rep_period=12.5004)
    with pytest.warns(UserWarning):
        config(rep_period=12.5)


@pytest.mark.parametrize("mode", list(Mode))
def test_determinism(mode):
    a = generate_stream(config(mode, 3 * 10**4, seed=99, p_background=0.1, detector_jitter_sigma=0.05, loss=0.7))
    b = generate_stream(config(mode, 3 * 10**4, seed=99, p_background=0.1, detector_jitter_sigma=0.05, loss=0.7))
    c = generate_stream(config(mode, 3 * 10**4, seed=100, p_background=0.1, detector_jitter_sigma=0.05, loss=0.7))
    assert a.equals(b)
    assert not a.equals(c)
    assert a.seed == 99 and a.mode == mode.value and "PCG64DXSM" in a.source


def test_multi_block_streams_are_deterministic():
    n = 2**20 + 5000
    a = generate_stream(config("HOM_parallel", n, seed=5))
    b = generate_stream(config("HOM_parallel", n, seed=5))
    assert a.equals(b) and len(a) == n


@pytest.mark.parametrize("p_bg,loss", [(0.0, 1.0), (0.08, 1.0), (0.2, 0.6), (0.0, 0.3)])
def test_total_counts(p_bg, loss):
    n = 2 * 10**5
    s = generate_stream(config("HOM_orthogonal", n, seed=3, p_background=p_bg, loss=loss))
    expected = n * (1 + p_bg) * loss
    assert abs(len(s) - expected) <= 4 * math.sqrt(expected)


def test_emission_delay_is_exponential():
    s = generate_stream(config("HBT", 10**6, seed=11))
    counts, edges = np.histogram(s.phase / 1000.0, bins=80, range=(0, 8))
    centres = 0.5 * (edges[1:] + edges[:-1])
    slope = np.polyfit(centres, np.log(counts), 1, w=np.sqrt(counts))[0]
    assert -slope == pytest.approx(REF_EMITTER.gamma_sp, rel=0.02)


def test_jitter_spreads_timestamps_only():
    a = generate_stream(config("HBT", 10**5, seed=8))
    b = generate_stream(config("HBT", 10**5, seed=8, detector_jitter_sigma=0.2))
    assert len(a) == len(b)
    assert np.std((b.timestamps - a.timestamps) / 1000.0) > 0


def test_perfect_coalescence_empty_centre():
    s = generate_stream(config("HOM_parallel", 10**6, seed=2, emitter=EmitterParams(REF_EMITTER.gamma_sp, 0.0)))
    areas = peak_areas(coincidence_histogram(s, 5, 100), 24_900)
    g = g2_from_peaks(areas)
    # only emission tails longer than half a period can leak into the centre
    assert g.value <= 3 * g.sigma
    assert areas[1].area > 0


def test_orthogonal_equals_fully_dephased_parallel():
    em = EmitterParams(REF_EMITTER.gamma_sp, 1e6)
    g = []
    for mode, seed in (("HOM_parallel", 4), ("HOM_orthogonal", 5)):
        s = generate_stream(config(mode, 5 * 10**5, seed=seed, emitter=em))
        g.append(g2_from_peaks(peak_areas(coincidence_histogram(s, 5, 100), 24_900)))
    assert abs(g[0].value - g[1].value) <= 3 * math.hypot(g[0].sigma, g[1].sigma)
    assert g[1].value == pytest.approx(0.5, abs=4 * g[1].sigma)


def test_mc_matches_quadrature_reference_window():
    window = PostSelectionWindow(3.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        par = generate_stream(McConfig(REF_EMITTER, 10**6, "HOM_parallel", 21))
        orth = generate_stream(McConfig(REF_EMITTER, 10**6, "HOM_orthogonal", 22))
    rep = hom_analysis(par, orth, window, AnalysisSettings(integration_halfwidth=6000), g2_hbt=(0.0, 0.0))
    predicted = g2_hom_postselected(REF_EMITTER, window).visibility
    assert abs(rep.corrected.value - predicted) <= 3 * rep.corrected.sigma


def test_expected_pattern_examples():
    hbt = dict(expected_peak_pattern("HBT", config()))
    assert hbt[0] == 0 and all(hbt[n] == 1 for n in hbt if n)
    orth = dict(expected_peak_pattern("HOM_orthogonal", config()))
    assert orth[0] == pytest.approx(0.5)
    assert orth[1] == orth[-1] == pytest.approx(0.75)
    par = dict(expected_peak_pattern("HOM_parallel", config(emitter=EmitterParams(1.0, 0.0))))
    assert par[0] == 0


@pytest.mark.parametrize("c", [0.0, 0.3, 1.0])
def test_expected_pattern_against_pair_enumeration(c):
    oracle = hom_pair_enumeration(c)
    far = oracle[3]
    # gamma_star chosen so the non-post-selected coherence factor equals c
    gs = 0.5 * (1 / c - 1) if c > 0 else 1e12
    mode = "HOM_parallel" if c > 0 else "HOM_orthogonal"
    pattern = dict(expected_peak_pattern(mode, config(emitter=EmitterParams(1.0, gs))))
    for n in range(-2, 3):
        assert pattern[n] == pytest.approx(oracle[n] / far, abs=1e-12)


def test_expected_pattern_post_selection():
    w = PostSelectionWindow(3.0)
    par = dict(expected_peak_pattern("HOM_parallel", config(), w))
    assert par[0] == pytest.approx(0.5 * (1 - analytic.hom(REF_EMITTER, 0, 3.0)[1]))
    with pytest.raises(DomainError):
        background_ratio(config(p_background=0.1), PostSelectionWindow(60.0))


def test_background_for_g2():
    p = background_for_g2(0.14)
    assert 2 * p / (1 + p) ** 2 == pytest.approx(0.14, rel=1e-10)
    assert background_for_g2(0.0) == 0.0
    with pytest.raises(DomainError):
        background_for_g2(0.6)


def test_hbt_background_matches_pattern():
    p = background_for_g2(0.14)
    s = generate_stream(config("HBT", 10**6, seed=17, p_background=p))
    g = g2_from_peaks(peak_areas(coincidence_histogram(s, 5, 100), 24_900))
    assert abs(g.value - 0.14) <= 3 * g.sigma


def test_jitter_invariance_of_centre_peak():
    em = EmitterParams.from_times(1.9, 2.4)
    out = []
    for jitter, seed in ((0.0, 31), (0.19, 32)):
        s = generate_stream(config("HOM_parallel", 10**6, seed=seed, emitter=em, detector_jitter_sigma=jitter))
        out.append(g2_from_peaks(peak_areas(coincidence_histogram(s, 5, 100), 24_900)))
    assert abs(out[0].value - out[1].value) <= 3 * math.hypot(out[0].sigma, out[1].sigma)
