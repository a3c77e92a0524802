"""Phase correction for complex-valued diffusion MRI.

Core pieces: volumetric containers with bit-exact file I/O, three
background-phase filters (total variation, Gaussian curvature filtering,
Marchenko-Pastur PCA), complex rotation with quadrant-based noise-floor
calibration, a synthetic tensor phantom, diffusion tensor / FA fitting, and
an evaluation pipeline driven by a JSON experiment config.
"""

__version__ = "0.1.0"

from .correction import (
    CorrectionDiagnostics,
    CorrectionResult,
    PhaseCorrector,
    background_phase,
    calibrate_rotation,
    flip_to_right,
    is_noise_floor,
    measured_phase,
    phase_correct,
    rotate,
    rotation_angle,
)
from .errors import (
    ConfigError,
    DataError,
    DimsMismatchError,
    DwipcError,
    InvalidDataError,
    MissingFileError,
    TruncatedPayloadError,
)
from .filters import (
    CurvatureFilter,
    FilterConfig,
    MarchenkoPasturDenoiser,
    TotalVariationDenoiser,
    cf_denoise,
    filter_series,
    make_filter,
    mppca_denoise,
    tv_denoise,
)
from .io import load_gradients, load_mask, load_volume, save_gradients, save_mask, save_volume
from .metrics import (
    MetricSeries,
    error_map,
    mae_per_volume,
    me_per_slice,
    render_slice,
    write_metrics_csv,
)
from .phantom import (
    BackgroundPhaseSpec,
    NoiseSpec,
    PhantomSpec,
    Region,
    add_complex_noise,
    build_phantom,
    default_phantom_spec,
    make_gradient_table,
    simulate_dwi,
    synth_background_phase,
)
from .tensor import (
    DiffusionTensorModel,
    TensorField,
    eig3_sym,
    fa,
    fa_map,
    fit_tensor,
)
from .volume import (
    ComplexVolume3,
    DwiSeries,
    GradientTable,
    Mask,
    PhaseField,
    Quadrant,
    SigmaMap,
    Volume3,
    opposite_diagonal,
    quadrant_of,
    wrap_angle,
)

__all__ = [
    "__version__",
    # containers
    "Volume3", "Mask", "ComplexVolume3", "PhaseField", "Quadrant",
    "GradientTable", "DwiSeries", "SigmaMap", "TensorField",
    # angle/quadrant algebra
    "wrap_angle", "quadrant_of", "opposite_diagonal",
    # I/O
    "load_volume", "save_volume", "load_mask", "save_mask",
    "load_gradients", "save_gradients",
    # filters
    "FilterConfig", "tv_denoise", "cf_denoise", "mppca_denoise",
    "filter_series", "make_filter",
    "TotalVariationDenoiser", "CurvatureFilter", "MarchenkoPasturDenoiser",
    # correction
    "measured_phase", "background_phase", "rotation_angle", "rotate",
    "flip_to_right", "is_noise_floor", "calibrate_rotation", "phase_correct",
    "CorrectionResult", "CorrectionDiagnostics", "PhaseCorrector",
    # phantom
    "PhantomSpec", "Region", "NoiseSpec", "BackgroundPhaseSpec",
    "default_phantom_spec", "build_phantom", "simulate_dwi",
    "synth_background_phase", "add_complex_noise", "make_gradient_table",
    # tensor / FA
    "fit_tensor", "eig3_sym", "fa", "fa_map", "DiffusionTensorModel",
    # metrics
    "MetricSeries", "mae_per_volume", "me_per_slice", "error_map",
    "render_slice", "write_metrics_csv",
    # errors
    "DwipcError", "ConfigError", "DataError", "MissingFileError",
    "DimsMismatchError", "TruncatedPayloadError", "InvalidDataError",
]
