"""Memory neuron network toolkit for spatio-temporal look-ahead trajectory prediction.

A small recurrent network in which every neuron carries a memory neuron
(an exponentially weighted history of its activation), trained online one
sample at a time, plus the surrounding machinery: trajectory differencing,
closed-loop multi-horizon rollout, NGSIM-shaped CSV ingestion, synthetic
scenario generation, and per-horizon RMSE reporting.
"""

from .errors import (
    ConfigurationError,
    DataError,
    InputError,
    MNNError,
    NumericError,
    SchemaError,
)
from .network import (
    ForwardTrace,
    NetworkParameters,
    NetworkState,
    Topology,
    forward_step,
    init_parameters,
    load_parameters,
    reset_state,
    save_parameters,
    update_memory,
)
from .training import (
    LearningConfig,
    StepGradients,
    TrainingLog,
    apply_gradients,
    compute_gradients,
    evaluate_sequence_error,
    step_error,
    train_dataset,
    train_on_sequence,
)
from .reference import reference_gradients
from .pipeline import (
    DifferentialTrajectory,
    PredictionRequest,
    Trajectory,
    constant_velocity_baseline,
    differentiate,
    predict,
    predicted_positions,
    reconstruct,
)
from .dataio import (
    SplitSpec,
    TrajectoryDatabase,
    load_csv,
    resample,
    save_csv,
    save_manifest,
    split,
    to_differentials,
)
from .synth import ScenarioSpec, generate, generate_fleet, max_axis_speed
from .evaluation import (
    HorizonReport,
    NGSIM_REFERENCE_RMSE,
    emit_overlay,
    emit_report,
    horizon_table,
    instantaneous_error,
    load_report,
    rmse,
)

__version__ = "0.1.0"
