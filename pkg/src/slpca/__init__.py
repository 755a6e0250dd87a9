"""Batch and sequential logistic PCA for streaming multivariate binary data."""
from .batch import BatchFitReport, batch_loss, fit_batch
from .diagnostics import (
    BoundCheckReport,
    EvaluationReport,
    check_all_bounds,
    evaluate,
    phase_curves,
    regret,
    sequential_loss,
    surrogate_loss,
    theorem2_gap_bound,
)
from .loss import (
    RowLossGradients,
    SurrogateAnchor,
    bregman_loss,
    default_curvature,
    row_gradients,
    row_loss,
    surrogate_value,
)
from .model import (
    BinaryMatrix,
    DomainError,
    FactorModel,
    Hyperparams,
    ScheduleKind,
    StepSchedule,
    natural_parameters,
    signed_transform,
    step_size,
)
from .newton import NewtonReport, SolverError, solve_row, solve_rows
from .reconstruct import Pairing, ReconstructionSeries, hamming_error, reconstruct
from .stream import StreamState, StreamTrace, init_stream, process_row, run_stream

__version__ = "0.1.0"
