"""Synthetic time-tag generator for pulsed HBT and delayed Mach-Zehnder HOM runs.

Each pulse k at k * rep_period releases exactly one signal photon with an
exponentially distributed delay (rate gamma_sp) and, with probability
p_background, one uncorrelated photon uniform over the period.

In the HOM modes every photon picks the short or the long arm (delay one
period) of the interferometer. A long-arm photon from pulse k and a
short-arm photon from pulse k + 1 share a slot and meet on the output
splitter; they leave through the same port with probability (1 + c) / 2,
where c = exp(-2 gamma_star |delta|) for parallel polarizations and c = 0
for orthogonal ones. delta is the difference of the two emission delays.
Averaged over the post-selection window this kernel reproduces
|G1(t, t')|^2 / (rho_ee(t) rho_ee(t')) exactly, so the Monte Carlo is an
independent check of the quadrature. Background photons never interfere.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.optimize import brentq

from . import analytic
from .correlators import PostSelectionWindow
from .emitter import EmitterParams
from .errors import DomainError, ParameterError
from .tagfile import TagStream

RNG_ALGORITHM = "PCG64DXSM"
BLOCK_PULSES = 1 << 20


class Mode(str, enum.Enum):
    HBT = "HBT"
    HOM_PARALLEL = "HOM_parallel"
    HOM_ORTHOGONAL = "HOM_orthogonal"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, cls):
            return value
        for m in cls:
            if str(value).lower() == m.value.lower():
                return m
        raise ParameterError(f"unknown mode {value!r}; expected one of {[m.value for m in cls]}")

    @property
    def is_hom(self) -> bool:
        return self is not Mode.HBT


@dataclass(frozen=True)
class McConfig:
    emitter: EmitterParams
    n_pulses: int
    mode: Mode
    seed: int
    rep_period: float = 12.5
    p_background: float = 0.0
    detector_jitter_sigma: float = 0.0
    loss: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        if not isinstance(self.n_pulses, (int, np.integer)) or self.n_pulses < 0:
            raise ParameterError(f"n_pulses must be a non-negative integer, got {self.n_pulses!r}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if not (math.isfinite(self.rep_period) and self.rep_period > 0):
            raise ParameterError("rep_period must be finite and > 0")
        if abs(self.rep_period * 1000 - round(self.rep_period * 1000)) > 1e-6:
            raise ParameterError("rep_period must be a whole number of picoseconds")
        if not 0 <= self.p_background <= 1:
            raise ParameterError("p_background must lie in [0, 1]")
        if not (math.isfinite(self.detector_jitter_sigma) and self.detector_jitter_sigma >= 0):
            raise ParameterError("detector_jitter_sigma must be finite and >= 0")
        if not 0 < self.loss <= 1:
            raise ParameterError("loss (survival probability) must lie in (0, 1]")
        if self.rep_period <= 10 * self.emitter.t1:
            warnings.warn(f"rep_period {self.rep_period} ns is not > 10 T1 = {10 * self.emitter.t1:.3g} ns; "
                          "emission tails will spill into the next period", stacklevel=3)

    @property
    def rep_period_ps(self) -> int:
        return int(round(self.rep_period * 1000))

    def source_tag(self) -> str:
        return (f"homsim.photon_mc rng={RNG_ALGORITHM} t1_ns={self.emitter.t1:.17g} "
                f"gamma_star_per_ns={self.emitter.gamma_star:.17g} n_pulses={self.n_pulses} "
                f"p_background={self.p_background:.17g} jitter_ns={self.detector_jitter_sigma:.17g} "
                f"loss={self.loss:.17g}")


def _block_draws(config: McConfig):
    """Per-block random draws from independent child seeds; the result does not depend on threading."""
    n_blocks = max(1, -(-config.n_pulses // BLOCK_PULSES))
    *children, aux = np.random.SeedSequence(config.seed).spawn(n_blocks + 1)
    fields = {"delay": [], "arm": [], "port": [], "u_pair": [], "has_bg": []}
    for b, child in enumerate(children):
        rng = np.random.Generator(np.random.PCG64DXSM(child))
        m = min(BLOCK_PULSES, config.n_pulses - b * BLOCK_PULSES)
        fields["delay"].append(rng.exponential(config.emitter.t1, m))
        fields["arm"].append(rng.integers(0, 2, m, dtype=np.int8))
        fields["port"].append(rng.integers(0, 2, m, dtype=np.int8))
        fields["u_pair"].append(rng.random(m))
        fields["has_bg"].append(rng.random(m) < config.p_background)
    return {k: np.concatenate(v) for k, v in fields.items()}, aux


def _arrival_ps(pulse, offset_ns, period_ps):
    return pulse.astype(np.int64) * period_ps + np.rint(offset_ns * 1000.0).astype(np.int64)


def generate_stream(config: McConfig) -> TagStream:
    """Simulate the detector events for ``config``; identical seeds give identical streams."""
    n = config.n_pulses
    period = config.rep_period
    draws, aux = _block_draws(config)
    delay, arm, port = draws["delay"], draws["arm"], draws["port"]
    pulse = np.arange(n, dtype=np.int64)

    if config.mode.is_hom:
        # long-arm photon of pulse k meets the short-arm photon of pulse k + 1
        meet = np.nonzero((arm[:-1] == 1) & (arm[1:] == 0))[0]
        if config.mode is Mode.HOM_PARALLEL:
            c = np.exp(-2.0 * config.emitter.gamma_star * np.abs(delay[meet] - delay[meet + 1]))
        else:
            c = np.zeros(len(meet))
        same = draws["u_pair"][meet] < 0.5 * (1.0 + c)
        port[meet + 1] = np.where(same, port[meet], 1 - port[meet])
    else:
        arm = np.zeros_like(arm)

    # background, loss and jitter come from a separate child seed
    rng = np.random.Generator(np.random.PCG64DXSM(aux))
    bg_pulse = pulse[draws["has_bg"]]
    nb = len(bg_pulse)
    bg_offset = rng.uniform(0.0, period, nb)
    bg_arm = rng.integers(0, 2, nb, dtype=np.int8) if config.mode.is_hom else np.zeros(nb, dtype=np.int8)
    bg_port = rng.integers(0, 2, nb, dtype=np.int8)

    all_pulse = np.concatenate([pulse, bg_pulse])
    offset = np.concatenate([delay + arm * period, bg_offset + bg_arm * period])
    channel = np.concatenate([port, bg_port]).astype(np.uint8)

    keep = rng.random(len(all_pulse)) < config.loss
    if config.detector_jitter_sigma > 0:
        offset = offset + rng.normal(0.0, config.detector_jitter_sigma, len(offset))
    ts = _arrival_ps(all_pulse, offset, config.rep_period_ps)
    keep &= ts >= 0  # jitter can push an event of the first pulse before the start of acquisition
    return TagStream.from_unsorted(config.rep_period_ps, channel[keep], ts[keep], source=config.source_tag(),
                                   seed=int(config.seed), mode=config.mode.value)


def coherence_factor(emitter: EmitterParams, window: PostSelectionWindow | None = None) -> float:
    """Mean of exp(-2 gamma_star |t - t'|) over two photons detected inside ``window``."""
    if window is None:
        return emitter.indistinguishability
    return analytic.hom(emitter, window.start, window.width)[1]


def background_ratio(config: McConfig, window: PostSelectionWindow | None = None) -> float:
    """Background photons per signal photon among detections kept by ``window``."""
    if window is None:
        return config.p_background
    if window.end > config.rep_period * (1 + 1e-12):
        raise DomainError("post-selection window exceeds the repetition period")
    signal = analytic.norm(config.emitter, window.start, window.width)
    return config.p_background * (window.width / config.rep_period) / signal


def _photon_paths(is_hom: bool):
    arms = (0, 1) if is_hom else (0,)
    return [(a, p, 1.0 / (2 * len(arms))) for a in arms for p in (0, 1)]


def expected_peak_pattern(mode, config: McConfig, window: PostSelectionWindow | None = None,
                          max_peak: int = 5) -> list[tuple[int, float]]:
    """Expected coincidence areas per peak, normalized to the far (|n| >= 2) peaks.

    Assumes peaks that do not overlap (rep_period well above T1, or a
    post-selection window) and integration over the full period, so that
    uncorrelated background lands in the peaks in proportion to its rate.
    Enumerates every routing path (arm, output port) of every ordered pair
    of photons from pulses up to ``max_peak + 1`` apart; no sampling. A pulse
    holds one signal photon and, with weight q (background per signal
    photon in the window), one background photon.
    """
    mode = Mode.parse(mode)
    q = background_ratio(config, window)
    c_mean = coherence_factor(config.emitter, window) if mode is Mode.HOM_PARALLEL else 0.0
    paths = _photon_paths(mode.is_hom)
    photons = [("s", 1.0), ("b", q)]
    area = {n: 0.0 for n in range(-max_peak, max_peak + 1)}

    for m in range(-(max_peak + 1), max_peak + 2):
        for (kind_a, wa), (kind_b, wb) in product(photons, photons):
            if m == 0 and kind_a == kind_b:
                continue  # at most one photon of each kind per pulse
            weight = wa * wb
            if weight == 0:
                continue
            for (arm_a, port_a, pa), (arm_b, port_b, pb) in product(paths, paths):
                slot_a, slot_b = arm_a, m + arm_b
                n = slot_b - slot_a
                if n not in area:
                    continue
                prob = pa * pb
                meets = kind_a == kind_b == "s" and slot_a == slot_b
                if meets:
                    # coalescence: re-weight the independent port choice
                    prob *= (1.0 + c_mean) if port_a == port_b else (1.0 - c_mean)
                if port_a == 0 and port_b == 1:
                    area[n] += weight * prob

    far = [area[n] for n in area if abs(n) >= 2]
    ref = float(np.mean(far)) if far else area[max(area, key=abs)]
    return [(n, area[n] / ref) for n in sorted(area)]


def background_for_g2(g2_target: float) -> float:
    """Background probability per pulse giving HBT g2(0) = g2_target (no post-selection)."""
    if not 0 <= g2_target < 0.5:
        raise DomainError("target g2 must lie in [0, 0.5) for at most one background photon per pulse")
    if g2_target == 0:
        return 0.0

    def centre(p):
        cfg = McConfig(EmitterParams(1.0), 0, Mode.HBT, 0, rep_period=100.0, p_background=p)
        return dict(expected_peak_pattern(Mode.HBT, cfg))[0] - g2_target

    return brentq(centre, 0.0, 1.0, xtol=1e-14)
