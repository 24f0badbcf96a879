"""Head-impact strain estimation with unsupervised domain adaptation."""

import json
import os

from ._core import (
    ConfigError,
    CycleGanModel,
    Dataset,
    DegenerateTestError,
    DimensionError,
    DivergenceError,
    DrcaConfig,
    DriftConfig,
    FeatureMatrix,
    GanConfig,
    HeadstrainError,
    InputScaling,
    Interval,
    InsufficientSamplesError,
    IoError,
    KmmConfig,
    KmmResult,
    MlhmModel,
    NotPositiveDefiniteError,
    ProjectionModel,
    ReportError,
    SchemaError,
    StageError,
    SymmetryError,
    TrainConfig,
    TTestResult,
    augment_axes,
    cholesky,
    error_metrics,
    evaluate_directory,
    featurize,
    fit_drca,
    generalized_eig,
    kmm_weights,
    load_dataset,
    paired_t_test,
    relative_change,
    save_dataset,
    student_t_cdf,
    synth_dataset,
    train_cyclegan,
    train_mlhm,
)
from . import _core


def _config_text(config):
    if isinstance(config, dict):
        return json.dumps(config)
    with open(os.fspath(config), encoding="utf-8") as f:
        return f.read()


def run(config, seed=None, out=None, threads=None, stop_after="evaluate"):
    """Runs the pipeline from a config dict or JSON file path.

    Returns a dict with the report rows, the report as CSV and text, the
    source test-split MAE per label kind and the output directory.
    """
    if out is not None:
        out = os.fspath(out)
    return _core.run(_config_text(config), seed=seed, out=out, threads=threads, stop_after=stop_after)


def resolve_config(config, seed=None):
    """Fully explicit configuration with defaults and derived seeds filled in."""
    return json.loads(_core.resolve_config(_config_text(config), seed=seed))
