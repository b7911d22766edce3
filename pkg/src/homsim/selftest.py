"""Internal oracle checks behind ``homsim validate``.

Quadrature against the closed form, Monte Carlo against theory at reduced
statistics, and the tag-file and map round trips. Each check returns a
``Check``; none raises on a mismatch.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import analytic
from .analysis import AnalysisSettings, arrival_histogram, fit_lifetime, hbt_analysis, hom_analysis
from .correlators import PostSelectionWindow, g2_hom_postselected, visibility_curve
from .emitter import EmitterParams
from .inference import build_dephasing_map, fit_visibility_decay, invert_dephasing
from .photon_mc import McConfig, Mode, expected_peak_pattern, generate_stream
from .tagfile import parse_tags, write_tags


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def check_quadrature() -> Check:
    worst = 0.0
    for gsp, gs, dt in itertools.product((0.5, 1.0, 2.0), (0.0, 0.3, 1.0), (0.5, 1.0, 4.0)):
        p = EmitterParams(gsp, gs)
        num = g2_hom_postselected(p, PostSelectionWindow(dt)).g2_hom
        ref = analytic.hom(p, 0.0, dt)[0]
        worst = max(worst, abs(num - ref) / max(abs(ref), 1e-6))
    return Check("quadrature vs closed form", worst < 1e-6,
                 f"max deviation {worst:.2e} relative to max(g2, 1e-6) (limit 1e-6)")


def check_asymptote() -> Check:
    worst = 0.0
    for gsp, gs in ((1.0, 0.25), (0.5, 1.0), (2.0, 0.1)):
        p = EmitterParams(gsp, gs)
        v = g2_hom_postselected(p, PostSelectionWindow(20 * max(p.t1, p.t2))).visibility
        worst = max(worst, abs(v - p.indistinguishability))
    return Check("long-window visibility", worst < 1e-3, f"max |V - T2/2T1| {worst:.2e} (limit 1e-3)")


def check_tag_roundtrip(seed: int) -> Check:
    cfg = McConfig(EmitterParams.from_times(1.9, 2.4), 20_000, Mode.HOM_PARALLEL, seed, rep_period=50.0,
                   p_background=0.05, detector_jitter_sigma=0.03)
    stream = generate_stream(cfg)
    data = write_tags(stream)
    ok = parse_tags(data).equals(stream) and write_tags(parse_tags(data)) == data
    return Check("tag-file round trip", ok, f"{len(stream)} records")


def _pull(measured, sigma, expected) -> float:
    diff = abs(measured - expected)
    if sigma > 0:
        return diff / sigma
    return np.inf if diff else 0.0


def check_mc_hbt(seed: int) -> Check:
    cfg = McConfig(EmitterParams.from_times(1.9), 400_000, Mode.HBT, seed, rep_period=50.0, p_background=0.1)
    rep = hbt_analysis(generate_stream(cfg), settings=AnalysisSettings(integration_halfwidth=24_900))
    expected = dict(expected_peak_pattern(Mode.HBT, cfg))[0]
    z = _pull(rep.g2.value, rep.g2.sigma, expected)
    return Check("Monte Carlo HBT g2(0)", z < 4.0,
                 f"{rep.g2.value:.4f} +/- {rep.g2.sigma:.4f} vs {expected:.4f} ({z:.1f} sigma, limit 4)")


def check_mc_hom(seed: int) -> Check:
    emitter = EmitterParams.from_times(1.9, 2.4)
    window = PostSelectionWindow(3.0)
    runs = [generate_stream(McConfig(emitter, 1_000_000, mode, seed + i, rep_period=50.0))
            for i, mode in enumerate((Mode.HOM_PARALLEL, Mode.HOM_ORTHOGONAL))]
    rep = hom_analysis(*runs, window, AnalysisSettings(integration_halfwidth=24_900), g2_hbt=(0.0, 0.0))
    expected = g2_hom_postselected(emitter, window).visibility
    z = _pull(rep.visibility.value, rep.visibility.sigma, expected)
    return Check("Monte Carlo HOM visibility", z < 4.0,
                 f"{rep.visibility.value:.4f} +/- {rep.visibility.sigma:.4f} vs {expected:.4f} "
                 f"({z:.1f} sigma, limit 4)")


def check_lifetime(seed: int) -> Check:
    cfg = McConfig(EmitterParams.from_times(1.9), 200_000, Mode.HBT, seed, rep_period=50.0)
    t1, sigma = fit_lifetime(arrival_histogram(generate_stream(cfg), 100))
    z = _pull(t1, sigma, 1.9)
    return Check("lifetime fit", z < 4.0, f"{t1:.4f} +/- {sigma:.4f} ns vs 1.9 ({z:.1f} sigma, limit 4)")


def check_map_roundtrip() -> Check:
    dts = np.linspace(0.1, 6.0, 30)
    dmap = build_dephasing_map(np.geomspace(0.1, 2.0, 7), dts, n=128)
    g = 0.37
    tau = fit_visibility_decay(visibility_curve(EmitterParams(1.0, g), dts, 128)).tau_v
    err = abs(invert_dephasing(dmap, tau, 1.0).gamma_star / g - 1.0)
    return Check("dephasing map round trip", err < 0.01, f"relative error {err:.2e} (limit 1e-2)")


def run_checks(seed: int = 20240601) -> list[Check]:
    return [check_quadrature(), check_asymptote(), check_tag_roundtrip(seed), check_mc_hbt(seed),
            check_mc_hom(seed), check_lifetime(seed), check_map_roundtrip()]
