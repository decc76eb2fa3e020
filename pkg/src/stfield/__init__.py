"""Spatio-temporal field interpolation from irregular station networks.

The pipeline: decompose station time series into orthonormal temporal bases
and spatial coefficients (`eof`), learn all coefficients jointly from spatial
covariates with a multi-output network whose loss is computed on the
recomposed field (`model`), predict on a regular grid, and diagnose the
extracted structure with spatio-temporal semivariograms (`variogram`).
`dataset` owns ingestion/cleaning/splitting, `simulate` generates the
synthetic benchmark, and `cli` orchestrates everything from a config file.
"""

from .dataset import (
    CenteredDataset,
    SplitSpec,
    StationDataset,
    center,
    concat_stations,
    impute_missing,
    load_csv,
    load_grid_csv,
    make_split,
    split_stations,
    write_measurements_csv,
    write_stations_csv,
)
from .eof import (
    EofBasis,
    TruncatedBasis,
    decompose,
    explained_variance,
    load_basis,
    project,
    reconstruct,
    save_basis,
    truncate,
)
from .errors import (
    CapabilityError,
    ConfigurationError,
    DiagnosticError,
    DuplicateKeyError,
    ImputationError,
    NumericError,
    ParseError,
    PreconditionError,
    ReferentialError,
    ShapeError,
    StfieldError,
    TrainingError,
)
from .model import (
    MlpConfig,
    MlpModel,
    SingleOutputModel,
    TrainReport,
    baseline_forward,
    evaluate_mae,
    forward,
    load_model,
    loss_and_gradients,
    one_cycle_lr,
    predict_grid,
    save_model,
    train,
    train_single_output_baseline,
)
from .simulate import (
    GridSpec,
    GrfSampler,
    SyntheticTruth,
    ar1_series,
    gaussian_random_field,
    grid_from_cells,
    sample_stations,
    synthesize,
)
from .variogram import (
    NuggetSillSummary,
    VariogramSurface,
    empirical_semivariogram,
    flatness_ratio,
    nugget_and_sill_summary,
    residual_dataset,
    save_variogram_csv,
)

__version__ = "0.1.0"
