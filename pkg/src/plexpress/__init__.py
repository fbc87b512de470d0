"""Expressivity toolkit for deep piecewise-linear networks."""

__version__ = "0.1.0"

from .netcore import (  # noqa: F401
    Activation,
    Architecture,
    InitSpec,
    LayerCapture,
    Network,
    NeuronState,
    PRNG_ID,
    apply_activation,
    forward_capture,
    from_explicit,
    load_network,
    sample_network,
    save_network,
)
from .trajkit import (  # noqa: F401
    GrowthStats,
    LengthProfile,
    RefinePolicy,
    Trajectory,
    arc_length,
    circular_interpolation,
    growth_sweep,
    layer_length_profile,
    segment_interpolation,
    theorem1_bound,
    theorem1_factor,
)
