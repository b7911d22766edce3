"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data or parse error,
4 numerical-accuracy error, 5 self-test failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings

import numpy as np

from . import config as cfgmod
from .analysis import (
    AnalysisSettings,
    arrival_histogram,
    fit_lifetime,
    hbt_analysis,
    hom_analysis,
    hom_from_values,
)
from .correlators import PostSelectionWindow, visibility_curve
from .emitter import EmitterParams
from .errors import ConfigError, DataError, HomsimError, SelfTestFailure
from .inference import (
    DEFAULT_DT_GRID,
    DEFAULT_GAMMA_STAR_GRID,
    Estimate,
    build_dephasing_map,
    fit_visibility_decay,
    invert_dephasing,
    purcell_visibility,
    required_purcell,
)
from .photon_mc import McConfig, generate_stream
from .tagfile import parse_tags, write_tags


# ---------------------------------------------------------------- output helpers

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def csv_text(columns, rows) -> str:
    lines = ["# " + ",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _emit(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _plain(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _est(e: Estimate) -> dict:
    return {"value": float(e.value), "sigma": float(e.sigma)}


# ---------------------------------------------------------------- config plumbing

def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_section_flags(parser, section, skip=()):
    for key, spec in cfgmod.SCHEMA[section].items():
        if key in skip:
            continue
        dest = f"{section}.{key}"
        kw = {"dest": dest, "default": argparse.SUPPRESS, "help": spec.help or None}
        if spec.kind == "bool":
            parser.add_argument(_flag(key), action=argparse.BooleanOptionalAction, **kw)
        elif spec.kind in ("floats", "ints"):
            parser.add_argument(_flag(key), nargs="+", type=float if spec.kind == "floats" else int,
                                metavar="X", **kw)
        else:
            parser.add_argument(_flag(key), type={"float": float, "int": int, "str": str}[spec.kind], **kw)


def _resolve(args) -> dict:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.defaults()
    overrides: dict = {}
    for dest, value in vars(args).items():
        if "." in dest:
            section, key = dest.split(".", 1)
            overrides.setdefault(section, {})[key] = value
    return cfgmod.merge(cfg, overrides, "command line")


def _emitter(cfg) -> EmitterParams:
    e = cfg["emitter"]
    t2s = e["t2_star_ns"] if e["t2_star_ns"] is not None else math.inf
    return EmitterParams.from_times(e["t1_ns"], t2s)


def _read_stream(path):
    try:
        return parse_tags(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc


def _analysis_settings(cfg) -> tuple[AnalysisSettings, PostSelectionWindow | None]:
    a = cfg["analysis"]
    settings = AnalysisSettings(bin_width=a["bin_width_ps"], max_delay_periods=a["max_delay_periods"],
                                integration_halfwidth=a["integration_halfwidth_ps"],
                                normalization_set=tuple(a["normalization_peaks"]),
                                jitter_sigma=a["jitter_sigma_ns"], t1=a["t1_ns"])
    window = None
    if a["window_width_ns"] is not None:
        window = PostSelectionWindow(a["window_width_ns"], a["window_start_ns"])
    return settings, window


# ---------------------------------------------------------------- commands

def cmd_simulate_visibility(cfg, args):
    base = _emitter(cfg)
    v = cfg["visibility"]
    dts = v["dt_ns"] if v["dt_ns"] is not None else list(DEFAULT_DT_GRID * base.t1)
    t2s_list = v["t2_star_sweep_ns"] if v["t2_star_sweep_ns"] is not None else [base.t2_star]
    rows = []
    for t2s in t2s_list:
        params = EmitterParams.from_times(base.t1, t2s)
        curve = visibility_curve(params, dts, v["grid_points"], rtol=v["rtol"])
        rows += [(params.gamma_star, dt, val) for dt, val in zip(curve.dt_values, curve.v_values)]
    _emit(csv_text(["gamma_star_per_ns", "dt_ns", "v_hom"], rows), args.output)


def _map_from_cfg(cfg):
    m = cfg["map"]
    gs = m["gamma_star_over_gamma_sp"] if m["gamma_star_over_gamma_sp"] is not None else DEFAULT_GAMMA_STAR_GRID
    dts = m["dt_over_t1"] if m["dt_over_t1"] is not None else DEFAULT_DT_GRID
    return build_dephasing_map(gs, dts, m["grid_points"], m["rtol"], m["workers"])


def _inversion_rows(dmap, taus, t1):
    out = []
    for tau in taus:
        est = invert_dephasing(dmap, tau, 1.0 / t1)
        out.append({"tau_v_ns": tau, "gamma_star_per_ns": est.gamma_star, "t2_star_ns": est.t2_star,
                    "t2_ns": est.t2, "t2_limit_ns": 2.0 * t1, "t2_over_limit": est.t2 / (2.0 * t1)})
    return out


def _self_test(dmap, cfg) -> dict:
    """Invert tau_V of fresh curves at geometric midpoints of the map grid."""
    m = cfg["map"]
    gs = dmap.gamma_star_values
    worst = 0.0
    for g in np.sqrt(gs[1:] * gs[:-1]):
        curve = visibility_curve(EmitterParams(1.0, float(g)), dmap.dt_grid, m["grid_points"], rtol=m["rtol"])
        back = invert_dephasing(dmap, fit_visibility_decay(curve).tau_v, 1.0).gamma_star
        worst = max(worst, abs(back / g - 1.0))
    result = {"max_relative_error": worst, "tolerance": 0.01, "passed": worst <= 0.01}
    if not result["passed"]:
        raise SelfTestFailure(f"map round trip error {worst:.3%} exceeds 1 %")
    return result


def cmd_simulate_map(cfg, args):
    t1 = cfg["emitter"]["t1_ns"]
    dmap = _map_from_cfg(cfg)
    rows = [(g, tau, g / t1, tau * t1) for g, tau in zip(dmap.gamma_star_values, dmap.tau_v_values)]
    _emit(csv_text(["gamma_star_over_gamma_sp", "tau_v_over_t1", "gamma_star_per_ns", "tau_v_ns"], rows),
          args.output)
    report = {}
    if cfg["map"]["self_test"]:
        report["self_test"] = _self_test(dmap, cfg)
    if cfg["map"]["tau_v_ns"]:
        report["inversions"] = _inversion_rows(dmap, cfg["map"]["tau_v_ns"], t1)
    if report:
        if args.report:
            _emit(_json(report), args.report)
        else:
            sys.stderr.write(_json(report))


def cmd_infer_dephasing(cfg, args):
    taus = cfg["map"]["tau_v_ns"]
    if not taus:
        raise ConfigError("map.tau_v_ns: at least one measured decay time is required")
    t1 = cfg["emitter"]["t1_ns"]
    dmap = _map_from_cfg(cfg)
    rows = _inversion_rows(dmap, taus, t1)
    cols = ["tau_v_ns", "gamma_star_per_ns", "t2_star_ns", "t2_ns", "t2_limit_ns", "t2_over_limit"]
    _emit(csv_text(cols, [[r[c] for c in cols] for r in rows]), args.output)
    if cfg["map"]["self_test"]:
        sys.stderr.write(_json({"self_test": _self_test(dmap, cfg)}))


def cmd_purcell(cfg, args):
    e = cfg["emitter"]
    t1, t2s = e["t1_ns"], e["t2_star_ns"] if e["t2_star_ns"] is not None else math.inf
    p = cfg["purcell"]
    rows = []
    for fp in p["f_p"]:
        r = purcell_visibility(t1, t2s, fp, allow_inhibition=p["allow_inhibition"])
        rows.append((r.f_p, r.t1_eff, r.visibility))
    for v in p["v_target"]:
        fp = required_purcell(t1, t2s, v)
        r = purcell_visibility(t1, t2s, fp, allow_inhibition=True)
        rows.append((fp, r.t1_eff, r.visibility))
    _emit(csv_text(["f_p", "t1_eff_ns", "visibility"], rows), args.output)


def cmd_generate(cfg, args):
    g = cfg["generate"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        mc = McConfig(_emitter(cfg), g["n_pulses"], g["mode"], g["seed"], rep_period=g["rep_period_ns"],
                      p_background=g["p_background"], detector_jitter_sigma=g["detector_jitter_sigma_ns"],
                      loss=g["loss"])
        stream = generate_stream(mc)
    for w in caught:
        sys.stderr.write(f"warning: {w.message}\n")
    write_tags(stream, args.output)
    summary = {"path": args.output, "records": len(stream), "mode": mc.mode.value, "seed": mc.seed,
               "n_pulses": mc.n_pulses,
               "expected_records": mc.n_pulses * (1 + mc.p_background) * mc.loss}
    sys.stdout.write(_json(summary))


def _histogram_csv(report, path):
    if path:
        h = report.histogram
        _emit(csv_text(["delay_ps", "counts"], zip(h.delays_ps, h.counts)), path)


def _correlation_json(rep) -> dict:
    return {"g2_0": _est(rep.g2), "n_events": rep.n_events,
            "peaks": [{"n": e.n, "area": e.area, "sigma": e.sigma, "regularized": e.regularized}
                      for e in rep.areas.entries]}


def _window_json(window):
    return None if window is None else {"start_ns": window.start, "width_ns": window.width}


def cmd_analyze_hbt(cfg, args):
    settings, window = _analysis_settings(cfg)
    rep = hbt_analysis(_read_stream(args.stream), window, settings)
    out = {"window": _window_json(window), "integration_halfwidth_ps": rep.halfwidth, "t1_ns": rep.t1,
           **_correlation_json(rep.correlation)}
    _histogram_csv(rep.correlation, args.histogram_csv)
    _emit(_json(out), args.output)


def cmd_analyze_hom(cfg, args):
    values = (args.g2_parallel, args.g2_orthogonal)
    if all(v is not None for v in values) and args.parallel is None and args.orthogonal is None:
        if args.g2_hbt is None:
            raise ConfigError("--g2-hbt is required with --g2-parallel/--g2-orthogonal")
        v, v_corr = hom_from_values(tuple(args.g2_parallel), tuple(args.g2_orthogonal), tuple(args.g2_hbt))
        out = {"g2_parallel": _est(Estimate(*args.g2_parallel)),
               "g2_orthogonal": _est(Estimate(*args.g2_orthogonal)),
               "g2_hbt": _est(Estimate(*args.g2_hbt)), "visibility": _est(v), "corrected_visibility": _est(v_corr)}
        _emit(_json(out), args.output)
        return
    if args.parallel is None or args.orthogonal is None:
        raise ConfigError("analyze hom needs --parallel and --orthogonal streams (or --g2-* values)")
    settings, window = _analysis_settings(cfg)
    if window is None:
        raise ConfigError("analysis.window_width_ns: a post-selection window is required for HOM analysis")
    hbt_stream = _read_stream(args.hbt) if args.hbt else None
    if args.g2_hbt is None and hbt_stream is None:
        raise ConfigError("give --g2-hbt VALUE SIGMA or an --hbt stream for the purity correction")
    rep = hom_analysis(_read_stream(args.parallel), _read_stream(args.orthogonal), window, settings,
                       g2_hbt=tuple(args.g2_hbt) if args.g2_hbt else None, hbt_stream=hbt_stream)
    out = {"window": _window_json(window), "integration_halfwidth_ps": rep.halfwidth, "t1_ns": rep.t1,
           "parallel": _correlation_json(rep.parallel), "orthogonal": _correlation_json(rep.orthogonal),
           "g2_hbt": _est(rep.g2_hbt), "visibility": _est(rep.visibility),
           "corrected_visibility": _est(rep.corrected)}
    if rep.hbt is not None:
        out["hbt"] = _correlation_json(rep.hbt.correlation)
    _histogram_csv(rep.parallel, args.histogram_csv)
    _emit(_json(out), args.output)


def cmd_fit_lifetime(cfg, args):
    lt = cfg["lifetime"]
    hist = arrival_histogram(_read_stream(args.stream), lt["bin_width_ps"])
    rng = lt["fit_range_ns"]
    if rng is not None and len(rng) != 2:
        raise ConfigError("lifetime.fit_range_ns: expected [t_lo, t_hi]")
    t1, sigma = fit_lifetime(hist, rng, lt["jitter_sigma_ns"])
    if args.histogram_csv:
        _emit(csv_text(["time_ns", "counts"], zip(hist.bin_centers_ns, hist.counts)), args.histogram_csv)
    _emit(_json({"t1_ns": t1, "sigma_ns": sigma, "records": int(np.sum(hist.counts)),
                 "bin_width_ps": hist.bin_width}), args.output)


def cmd_validate(cfg, args):
    from .selftest import run_checks

    results = run_checks(seed=args.seed)
    failed = [r for r in results if not r.passed]
    for r in results:
        sys.stdout.write(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}\n")
    if failed:
        raise SelfTestFailure(f"{len(failed)} of {len(results)} checks failed")


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration (flags override it)")
    common.add_argument("-o", "--output", help="output path (default stdout)")

    parser = argparse.ArgumentParser(prog="homsim", description=(
        "Post-selected HOM visibility of a dephasing two-level emitter: simulation, inference, "
        "synthetic time tags and their analysis."))
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="master-equation simulations").add_subparsers(dest="what", required=True)
    p = sim.add_parser("visibility", parents=[common], help="V_HOM versus post-selection width (CSV)")
    _add_section_flags(p, "emitter")
    _add_section_flags(p, "visibility")
    p.set_defaults(func=cmd_simulate_visibility)

    p = sim.add_parser("map", parents=[common], help="tau_V versus gamma_star table (CSV)")
    _add_section_flags(p, "emitter", skip=("t2_star_ns",))
    _add_section_flags(p, "map")
    p.add_argument("--report", help="JSON path for the inversion/self-test report (default stderr)")
    p.set_defaults(func=cmd_simulate_map)

    inf = sub.add_parser("infer", help="inference from measured quantities").add_subparsers(dest="what",
                                                                                              required=True)
    p = inf.add_parser("dephasing", parents=[common], help="gamma_star, T2*, T2 from measured tau_V (CSV)")
    _add_section_flags(p, "emitter", skip=("t2_star_ns",))
    _add_section_flags(p, "map")
    p.set_defaults(func=cmd_infer_dephasing)

    p = sub.add_parser("purcell", parents=[common], help="visibility versus Purcell factor (CSV)")
    _add_section_flags(p, "emitter")
    _add_section_flags(p, "purcell")
    p.set_defaults(func=cmd_purcell)

    p = sub.add_parser("generate", parents=[common], help="synthetic time-tag file")
    _add_section_flags(p, "emitter")
    _add_section_flags(p, "generate", skip=("seed",))
    p.add_argument("--seed", dest="generate.seed", type=int, required=True, help="64-bit RNG seed")
    p.set_defaults(func=cmd_generate)

    ana = sub.add_parser("analyze", help="correlation analysis of time-tag files").add_subparsers(
        dest="what", required=True)
    p = ana.add_parser("hbt", parents=[common], help="g2(0) of a single-input run (JSON)")
    p.add_argument("stream")
    p.add_argument("--histogram-csv", help="also write the coincidence histogram")
    _add_section_flags(p, "analysis")
    p.set_defaults(func=cmd_analyze_hbt)

    p = ana.add_parser("hom", parents=[common], help="raw and corrected HOM visibility (JSON)")
    p.add_argument("--parallel", help="time-tag file, parallel polarizations")
    p.add_argument("--orthogonal", help="time-tag file, orthogonal polarizations")
    p.add_argument("--hbt", help="time-tag file of an HBT run for the purity correction")
    for name in ("g2-hbt", "g2-parallel", "g2-orthogonal"):
        p.add_argument(f"--{name}", nargs=2, type=float, metavar=("VALUE", "SIGMA"))
    p.add_argument("--histogram-csv", help="also write the parallel-run coincidence histogram")
    _add_section_flags(p, "analysis")
    p.set_defaults(func=cmd_analyze_hom)

    fit = sub.add_parser("fit", help="fits to time-tag data").add_subparsers(dest="what", required=True)
    p = fit.add_parser("lifetime", parents=[common], help="T1 from the arrival histogram (JSON)")
    p.add_argument("stream")
    p.add_argument("--histogram-csv", help="also write the arrival histogram")
    _add_section_flags(p, "lifetime")
    p.set_defaults(func=cmd_fit_lifetime)

    p = sub.add_parser("validate", parents=[common], help="run the internal oracle checks")
    p.add_argument("--seed", type=int, default=20240601, help="seed for the Monte Carlo checks")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        args.func(cfg, args)
    except HomsimError as exc:
        sys.stdout.flush()
        sys.stderr.write(f"homsim: error: {exc}\n")
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
