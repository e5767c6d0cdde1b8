"""Photoacoustic beamforming: DAS, DMAS and two-stage DMAS with optional coherence-factor weighting."""

from .beamform import (
    METHODS,
    MethodSpec,
    beamform_image,
    coherence_factor,
    das_pixel,
    dmas_pixel,
    envelope,
    gather_delayed,
    log_compress,
    mdmas_pixel,
    reconstruct,
    sample_at,
    signed_sqrt,
    time_of_flight,
)
from .core import (
    Absorber,
    AlignedSamples,
    ArrayGeometry,
    BeamformedImage,
    ImageGrid,
    PabeamError,
    Phantom,
    RfFrame,
    build_grid,
    build_linear_array,
    validate_frame,
)
from .forward import NoiseSpec, PulseSpec, add_gaussian_noise, preset_phantom, pulse_waveform, simulate_frame

__version__ = "0.1.0"
