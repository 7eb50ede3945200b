"""riserop: strain-field reconstruction, forecasting and sensor placement
for vibrating risers with a branch/trunk neural operator."""

__version__ = "0.1.0"

from .dataflow import (
    SampleBatch,
    SensorLayout,
    StrainField,
    WindowSpec,
    build_forecast_batch,
    build_reconstruction_batch,
    load_strain_field,
    normalize,
    normalized_coords,
    sample_at,
    save_strain_field,
    split_windows,
)
from .deeponet import (
    DeepONetModel,
    TrainConfig,
    build_model,
    fine_tune,
    forward,
    load_checkpoint,
    loss_and_grads,
    loss_mse,
    predict_batch,
    save_checkpoint,
    train,
)
from .diagnostics import mse, nmse, rms_profile, spectrum
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    DivergenceError,
    RiseropError,
)
from .placement import (
    AlternationSchedule,
    LocationDistribution,
    init_distribution,
    make_placement_dataset,
    optimize_placement,
    placement_grad,
    placement_loss,
)
from .pod import build_snapshot_matrix, mode_extrema, pod_decompose, pod_placement
from .riser import (
    ForcingSpec,
    RiserConfig,
    default_window_spec,
    make_ndp_like_case,
    modal_frequencies,
    shear_forcing,
    simulate,
)

__all__ = [
    "__version__",
    # errors
    "RiseropError",
    "ConfigError",
    "DataError",
    "DivergenceError",
    "CheckpointError",
    # synthetic data
    "RiserConfig",
    "ForcingSpec",
    "simulate",
    "shear_forcing",
    "modal_frequencies",
    "make_ndp_like_case",
    "default_window_spec",
    # data handling
    "StrainField",
    "SensorLayout",
    "WindowSpec",
    "SampleBatch",
    "save_strain_field",
    "load_strain_field",
    "normalize",
    "split_windows",
    "sample_at",
    "normalized_coords",
    "build_reconstruction_batch",
    "build_forecast_batch",
    # operator network
    "DeepONetModel",
    "TrainConfig",
    "build_model",
    "forward",
    "predict_batch",
    "loss_mse",
    "loss_and_grads",
    "train",
    "fine_tune",
    "save_checkpoint",
    "load_checkpoint",
    # POD
    "build_snapshot_matrix",
    "pod_decompose",
    "mode_extrema",
    "pod_placement",
    # placement
    "LocationDistribution",
    "AlternationSchedule",
    "init_distribution",
    "make_placement_dataset",
    "placement_loss",
    "placement_grad",
    "optimize_placement",
    # diagnostics
    "mse",
    "nmse",
    "rms_profile",
    "spectrum",
]
