"""Data-driven identification of switched systems with extreme learning machines."""

import json
from importlib import resources

from .detection import (
    Aggregation,
    DetectionConfig,
    SwitchingSet,
    detect_switchings,
    finite_difference,
    segment_traces,
    switching_statistic,
)
from .elm import (
    Activation,
    ElmModel,
    HiddenLayer,
    compute_hidden_matrix,
    feature_map,
    init_hidden_layer,
    predict,
    solve_output_weights,
)
from .errors import InputError, StageError
from .kernels import BACKEND
from .modeling import (
    MergeConfig,
    ResidualMode,
    SegmentSet,
    SubsystemLabeling,
    build_training_pairs,
    fit_combined,
    merge_and_model,
)
from .pipeline import (
    EvaluationReport,
    PipelineConfig,
    SwitchedModelEstimate,
    evaluate_model,
    run_pipeline,
)
from .reconstruction import (
    PeriodicLaw,
    SwitchingSequence,
    infer_periodic_law,
    mode_at,
    reconstruct_sequence,
)
from .simulator import (
    DcDcParams,
    LinearMode,
    SimConfig,
    SwitchedLinearSystem,
    batch_simulate,
    dcdc_modes,
    dcdc_switching_law,
    dcdc_system,
    simulate,
)
from .trace import Trace, load_traces, save_traces

__version__ = "0.1.0"


def report_schema() -> dict:
    """The JSON schema every evaluation report validates against."""
    return json.loads(resources.files(__name__).joinpath("schemas/report.schema.json").read_text())
