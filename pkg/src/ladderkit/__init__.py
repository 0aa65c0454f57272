"""Per-scene bitrate ladder construction toolkit.

Builds Pareto fronts and reference ladders from exhaustive CRF sweeps,
fits CRF/log-rate models, predicts full ladders from a handful of entry
CRFs plus a cross-scene calibration, and scores the result with
Bjontegaard-style deltas.
"""
from __future__ import annotations

from .bd import BDResult, RQAnchorSet, bd_quality, bd_rate
from .config import RunConfig, load_config
from .crf_rate import (
    Calibration,
    CalibrationSample,
    CrfQuery,
    CrfRateModel,
    crf_for_bitrate,
    fit_calibration,
    fit_crf_rate,
    load_calibration,
    save_calibration,
)
from .errors import (
    CalibrationUnavailableError,
    EmptySweepError,
    InsufficientAnchorsError,
    LadderError,
    MissingResolutionError,
    PredictionAborted,
    SchemaError,
    ToolError,
    UnderdeterminedFitError,
)
from .ground_truth import (
    BitrateLadder,
    CrossoverRange,
    CrossoverSet,
    HQPoint,
    LadderRung,
    build_reference_ladder,
    extract_crossovers,
    extract_hq_point,
)
from .orchestrator import (
    ComplexityEntry,
    EncodeOrchestrator,
    EncodeRecord,
    SceneManifest,
    ToolSettings,
    load_scene_manifests,
    load_sweep,
    save_sweep,
)
from .predictor import (
    PredictedCrfs,
    PredictionOutcome,
    PreEncodeJob,
    PreEncodePlan,
    ResolutionRange,
    build_predicted_ladder,
    derive_models,
    fallback_first_rung,
    hq_delta_report,
    load_predictions,
    plan_pre_encodes,
    predict_ladder,
    save_predictions,
    select_resolution,
)
from .report import assemble_report, write_report_files
from .rq import (
    CRF_GRID,
    CRF_MAX,
    CRF_MIN,
    RESOLUTIONS,
    ParetoFront,
    Resolution,
    RQPoint,
    RQSweep,
    build_pareto_front,
    nearest_by_bitrate,
)
from .store import load_front, load_ladder, save_front, save_ladder

__version__ = "0.1.0"
