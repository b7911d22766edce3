"""Post-selected two-photon interference from a dephasing two-level emitter.

Master-equation visibility, dephasing inference, Purcell what-if analysis
and a synthetic time-tag pipeline for checking correlation analysis.
"""

from .analysis import (
    AnalysisSettings,
    arrival_histogram,
    coincidence_histogram,
    fit_lifetime,
    g2_from_peaks,
    hbt_analysis,
    hom_analysis,
    hom_from_values,
    peak_areas,
    postselect,
)
from .correlators import (
    HomCorrelation,
    PostSelectionWindow,
    VisibilityCurve,
    g1_grid,
    g2_hom_postselected,
    norm_N,
    visibility_curve,
)
from .emitter import DensityMatrix, EmitterParams, build_generator, evolve, initial_state_after_pulse
from .errors import (
    AnalysisError,
    ConfigError,
    DataError,
    DomainError,
    ExtrapolationError,
    HomsimError,
    NumericalError,
    ParameterError,
    ParseError,
)
from .inference import (
    CorrelationInputs,
    DephasingMap,
    Estimate,
    build_dephasing_map,
    corrected_visibility,
    fit_visibility_decay,
    invert_dephasing,
    purcell_visibility,
    raw_visibility,
    required_purcell,
)
from .photon_mc import McConfig, Mode, expected_peak_pattern, generate_stream
from .tagfile import TagStream, parse_tags, write_tags

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
