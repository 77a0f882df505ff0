"""Outlier detection for sets of proportions with minimal patterns."""

from .binomial import TWO, UPPER, BinomialSpec, OutlierRegion, outlier_region, upper_tail
from .detector import DetectionResult, DetectorParams, Label, detect
from .errors import InputError, ParameterError, ParseError, PropoutError, ScenarioError
from .ingest import parse_proportions_csv, parse_variant_table, read_table
from .simulation import ScenarioSpec, estimator_mse, generate_scenario, run_experiment, score
from .table import ProportionTable

__all__ = [
    "BinomialSpec",
    "DetectionResult",
    "DetectorParams",
    "InputError",
    "Label",
    "OutlierRegion",
    "ParameterError",
    "ParseError",
    "PropoutError",
    "ProportionTable",
    "ScenarioError",
    "ScenarioSpec",
    "TWO",
    "UPPER",
    "detect",
    "estimator_mse",
    "generate_scenario",
    "outlier_region",
    "parse_proportions_csv",
    "parse_variant_table",
    "read_table",
    "run_experiment",
    "score",
    "upper_tail",
]

__version__ = "0.1.0"
