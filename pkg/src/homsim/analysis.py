"""Histogramming and correlation analysis of time-tag streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .correlators import PostSelectionWindow
from .errors import AnalysisError, BinningError, DomainError, FitError
from .inference import CorrelationInputs, Estimate, corrected_visibility, raw_visibility
from .tagfile import TagStream

DEFAULT_NORMALIZATION = (-5, -4, -3, -2, 2, 3, 4, 5)


def _window_ps(window: PostSelectionWindow) -> tuple[int, int]:
    return int(round(window.start * 1000)), int(round(window.end * 1000))


def postselect(stream: TagStream, window: PostSelectionWindow) -> TagStream:
    """Keep records whose time after the last sync lies in [start, start + width)."""
    lo, hi = _window_ps(window)
    if hi > stream.sync_period_ps:
        raise DomainError(f"window [{window.start}, {window.end}) ns exceeds the "
                          f"{stream.sync_period_ps / 1000:g} ns sync period")
    phase = stream.phase
    return stream.select((phase >= lo) & (phase < hi))


@dataclass(frozen=True, eq=False)
class ArrivalHistogram:
    bin_width: int
    counts: np.ndarray
    n_periods_folded: int

    @property
    def bin_centers_ns(self) -> np.ndarray:
        return (np.arange(len(self.counts)) + 0.5) * self.bin_width / 1000.0

    @property
    def sync_period_ps(self) -> int:
        return self.bin_width * len(self.counts)


def arrival_histogram(stream: TagStream, bin_width: int) -> ArrivalHistogram:
    """Fold every timestamp modulo the sync period into bins of ``bin_width`` ps."""
    if bin_width <= 0 or stream.sync_period_ps % bin_width:
        raise BinningError(f"bin width {bin_width} ps does not divide the {stream.sync_period_ps} ps period")
    nbins = stream.sync_period_ps // bin_width
    counts = np.bincount(stream.phase // bin_width, minlength=nbins)
    periods = int(stream.pulse_index[-1] - stream.pulse_index[0] + 1) if len(stream) else 0
    return ArrivalHistogram(bin_width, counts, periods)


def fit_lifetime(hist: ArrivalHistogram, fit_range=None, jitter_sigma: float = 0.0) -> Estimate:
    """Decay time (ns) from a weighted log-linear fit of the arrival histogram.

    ``fit_range`` is (t_lo, t_hi) in ns within the period. By default it
    starts two jitter widths after the histogram maximum and runs to the end
    of the period. Bins are weighted by their counts (the Poisson variance of
    log n is 1/n).
    """
    t = hist.bin_centers_ns
    counts = np.asarray(hist.counts, dtype=float)
    if fit_range is None:
        lo = t[int(np.argmax(counts))] + 2.0 * jitter_sigma
        hi = hist.sync_period_ps / 1000.0
    else:
        lo, hi = map(float, fit_range)
        if not 0 <= lo < hi <= hist.sync_period_ps / 1000.0 + 1e-12:
            raise DomainError(f"fit range {fit_range} not within the period")
    sel = (t >= lo) & (t <= hi) & (counts > 0)
    if np.count_nonzero(sel) < 5:
        raise FitError(f"only {np.count_nonzero(sel)} non-empty bins in the fit range (need 5)")
    x, y, w = t[sel], np.log(counts[sel]), counts[sel]
    xm = np.sum(w * x) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * y) / sxx
    resid = y - (np.sum(w * y) / np.sum(w) + slope * (x - xm))
    dof = len(x) - 2
    # scale by the reduced chi-square when the scatter exceeds Poisson expectations
    chi2 = float(np.sum(w * resid**2)) / dof if dof > 0 else 0.0
    slope_sigma = math.sqrt(max(chi2, 1.0) / sxx)
    if not slope < -2.0 * slope_sigma:
        raise FitError(f"no significant decay (slope {slope:.3g} +- {slope_sigma:.2g} per ns)")
    slope = float(slope)
    return Estimate(-1.0 / slope, slope_sigma / slope**2)


@dataclass(frozen=True, eq=False)
class CoincidenceHistogram:
    """All-pairs histogram of t(channel 1) - t(channel 0); bin k is centred on k * bin_width."""

    bin_width: int
    max_delay_periods: int
    sync_period_ps: int
    counts: np.ndarray

    @property
    def half_bins(self) -> int:
        return (len(self.counts) - 1) // 2

    @property
    def delays_ps(self) -> np.ndarray:
        return (np.arange(len(self.counts)) - self.half_bins) * self.bin_width

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _half_bins(sync_period_ps: int, max_delay_periods: int, bin_width: int) -> int:
    # reach to half a period beyond the outermost peak, so every peak window fits
    return (2 * max_delay_periods * sync_period_ps + sync_period_ps - bin_width) // (2 * bin_width)


def coincidence_histogram(stream: TagStream, max_delay_periods: int, bin_width: int) -> CoincidenceHistogram:
    """Start-multi-stop histogram over every cross-channel pair within range."""
    if bin_width <= 0:
        raise BinningError("bin width must be positive")
    if max_delay_periods < 0:
        raise DomainError("max_delay_periods must be >= 0")
    ch = stream.channels
    if len(stream) == 0 or np.all(ch == ch[0]):
        raise AnalysisError("coincidence histogram needs events on both channels")
    k_max = _half_bins(stream.sync_period_ps, max_delay_periods, bin_width)
    half = bin_width // 2
    limit = k_max * bin_width + (bin_width - half)
    counts = np.zeros(2 * k_max + 1, dtype=np.int64)
    t = stream.timestamps
    signed = ch.astype(np.int8) * 2 - 1  # -1 for channel 0, +1 for channel 1
    lag = 1
    while lag < len(t):
        d = t[lag:] - t[:-lag]
        if d.min() > limit:
            break
        # pair (earlier i, later j): channel 0 then 1 gives +d, channel 1 then 0 gives -d
        cross = signed[lag:] != signed[:-lag]
        delay = np.where(signed[lag:] > 0, d, -d)[cross & (d <= limit)]
        k = (delay + half) // bin_width
        k = k[np.abs(k) <= k_max]
        counts += np.bincount(k + k_max, minlength=len(counts))
        lag += 1
    return CoincidenceHistogram(bin_width, max_delay_periods, stream.sync_period_ps, counts)


@dataclass(frozen=True)
class PeakArea:
    n: int
    area: float
    sigma: float

    @property
    def regularized(self) -> bool:
        """True when the Poisson error was set to 1 for an empty peak."""
        return self.area == 0


@dataclass(frozen=True)
class PeakAreas:
    entries: tuple
    halfwidth: int

    def __getitem__(self, n: int) -> PeakArea:
        for e in self.entries:
            if e.n == n:
                return e
        raise KeyError(n)

    def indices(self) -> list[int]:
        return [e.n for e in self.entries]

    def as_dict(self) -> dict:
        return {e.n: e.area for e in self.entries}


def poisson_area(n: int, area: float) -> PeakArea:
    return PeakArea(n, float(area), math.sqrt(area) if area > 0 else 1.0)


def peak_areas(hist: CoincidenceHistogram, integration_halfwidth: int) -> PeakAreas:
    """Integrate bins whose extent reaches within ``integration_halfwidth`` ps of n * period."""
    period = hist.sync_period_ps
    if not 0 <= integration_halfwidth < period / 2:
        raise DomainError("integration halfwidth must be >= 0 and < half the sync period")
    centres = hist.delays_ps
    reach = integration_halfwidth + hist.bin_width / 2.0
    owner = np.full(len(centres), np.iinfo(np.int64).min)
    entries = []
    for n in range(-hist.max_delay_periods, hist.max_delay_periods + 1):
        inside = np.abs(centres - n * period) <= reach
        if np.any(owner[inside] != np.iinfo(np.int64).min):
            raise DomainError(f"peak windows overlap at n = {n}; reduce the halfwidth")
        owner[inside] = n
        entries.append(poisson_area(n, int(hist.counts[inside].sum())))
    return PeakAreas(tuple(entries), int(integration_halfwidth))


def g2_from_peaks(areas: PeakAreas, normalization_set=DEFAULT_NORMALIZATION) -> Estimate:
    """Centre-peak area over the mean of the normalization peaks, with Poisson errors."""
    norm_ids = list(normalization_set)
    if not norm_ids or 0 in norm_ids:
        raise DomainError("normalization set must be non-empty and exclude n = 0")
    try:
        ref = [areas[n] for n in norm_ids]
        centre = areas[0]
    except KeyError as exc:
        raise DomainError(f"peak {exc.args[0]} not in the histogram") from exc
    mean = sum(e.area for e in ref) / len(ref)
    if mean <= 0:
        raise DomainError("normalization peaks are empty")
    mean_sigma = math.sqrt(sum(e.sigma**2 for e in ref)) / len(ref)
    g = centre.area / mean
    return Estimate(g, math.hypot(centre.sigma / mean, centre.area * mean_sigma / mean**2))


@dataclass(frozen=True)
class AnalysisSettings:
    """bin_width and integration_halfwidth in ps; halfwidth None picks min(3 T1, period/2 - bin)."""

    bin_width: int = 100
    max_delay_periods: int = 5
    integration_halfwidth: int | None = None
    normalization_set: tuple = DEFAULT_NORMALIZATION
    jitter_sigma: float = 0.0
    t1: float | None = None

    def __post_init__(self):
        if self.bin_width <= 0 or self.max_delay_periods < 2:
            raise DomainError("bin_width must be > 0 and max_delay_periods >= 2")


def default_halfwidth(stream: TagStream, settings: AnalysisSettings) -> tuple[int, float]:
    """(halfwidth ps, T1 ns) with T1 from the settings or from a fit to the stream."""
    t1 = settings.t1
    if t1 is None:
        bw = math.gcd(settings.bin_width, stream.sync_period_ps)
        t1 = fit_lifetime(arrival_histogram(stream, bw), jitter_sigma=settings.jitter_sigma).value
    cap = stream.sync_period_ps // 2 - settings.bin_width
    return int(min(round(3 * t1 * 1000), cap)), t1


@dataclass(frozen=True)
class CorrelationReport:
    g2: Estimate
    areas: PeakAreas
    histogram: CoincidenceHistogram = field(repr=False)
    n_events: int


def _correlate(stream: TagStream, settings: AnalysisSettings, halfwidth: int) -> CorrelationReport:
    hist = coincidence_histogram(stream, settings.max_delay_periods, settings.bin_width)
    areas = peak_areas(hist, halfwidth)
    return CorrelationReport(g2_from_peaks(areas, settings.normalization_set), areas, hist, len(stream))


@dataclass(frozen=True)
class HbtReport:
    window: PostSelectionWindow | None
    halfwidth: int
    t1: float
    correlation: CorrelationReport

    @property
    def g2(self) -> Estimate:
        return self.correlation.g2


def hbt_analysis(stream: TagStream, window: PostSelectionWindow | None = None,
                 settings: AnalysisSettings = AnalysisSettings()) -> HbtReport:
    _require_events(stream, "HBT")
    halfwidth, t1 = _halfwidth(stream, settings)
    selected = postselect(stream, window) if window is not None else stream
    return HbtReport(window, halfwidth, t1, _correlate(selected, settings, halfwidth))


def _require_events(stream: TagStream, label: str) -> None:
    if len(stream) == 0:
        raise AnalysisError(f"{label} stream holds no detection events")


def _halfwidth(stream, settings):
    if settings.integration_halfwidth is not None:
        return settings.integration_halfwidth, settings.t1 if settings.t1 is not None else math.nan
    return default_halfwidth(stream, settings)


@dataclass(frozen=True)
class HomReport:
    window: PostSelectionWindow
    halfwidth: int
    t1: float
    parallel: CorrelationReport
    orthogonal: CorrelationReport
    g2_hbt: Estimate
    visibility: Estimate
    corrected: Estimate
    hbt: HbtReport | None = None


def hom_from_values(g2_parallel, g2_orthogonal, g2_hbt) -> tuple[Estimate, Estimate]:
    """(V, V_corr) from the three correlation values, each a (value, sigma) pair."""
    inputs = CorrelationInputs(g2_hbt=g2_hbt, g2_parallel=g2_parallel, g2_orthogonal=g2_orthogonal)
    v = raw_visibility(inputs)
    return v, corrected_visibility(v, inputs.g2_hbt)


def hom_analysis(parallel: TagStream, orthogonal: TagStream, window: PostSelectionWindow,
                 settings: AnalysisSettings = AnalysisSettings(), g2_hbt=None,
                 hbt_stream: TagStream | None = None) -> HomReport:
    """Post-selected HOM visibility from a parallel/orthogonal pair of runs.

    The purity correction uses ``g2_hbt`` (value, sigma) when given, otherwise
    an HBT analysis of ``hbt_stream`` under the same window.
    """
    _require_events(parallel, "parallel")
    _require_events(orthogonal, "orthogonal")
    if parallel.sync_period_ps != orthogonal.sync_period_ps:
        raise AnalysisError("parallel and orthogonal runs have different sync periods")
    hbt = None
    if g2_hbt is None:
        if hbt_stream is None:
            raise AnalysisError("either g2_hbt or an HBT stream is required for the purity correction")
        hbt = hbt_analysis(hbt_stream, window, settings)
        g2_hbt = hbt.g2
    g2_hbt = Estimate(*map(float, g2_hbt))
    halfwidth, t1 = _halfwidth(parallel, settings)
    par = _correlate(postselect(parallel, window), settings, halfwidth)
    orth = _correlate(postselect(orthogonal, window), settings, halfwidth)
    v, v_corr = hom_from_values(par.g2, orth.g2, g2_hbt)
    return HomReport(window, halfwidth, t1, par, orth, g2_hbt, v, v_corr, hbt)
