from .errors import (
    CapabilityError,
    ConfigurationError,
    DeltaQueryError,
    DivergenceError,
    DomainError,
    EstimatorValidityError,
    GMISError,
    ImageIOError,
    InternalInvariantError,
    ParameterError,
    SceneParseError,
    SingularityError,
)
from .mis_core import (
    MisScheme,
    Mixture,
    Normal,
    ProposalSet,
    SelectionStrategy,
    Uniform,
    WeightingFunction,
    analytic_variance,
    mixture_pdf,
    run_estimator,
    select_indices,
    weighting_denominator,
)
from .models import IntegratorConfig, LabConfig, LabReport, RenderStats
from .progressive import render_progressive
from .scene import Scene, fixture_scene, load_scene, parse_scene
from .variance_lab import run_ordering_experiment, run_uniformity_test

__all__ = [
    "MisScheme",
    "Mixture",
    "Normal",
    "ProposalSet",
    "SelectionStrategy",
    "Uniform",
    "WeightingFunction",
    "analytic_variance",
    "mixture_pdf",
    "run_estimator",
    "select_indices",
    "weighting_denominator",
    "IntegratorConfig",
    "LabConfig",
    "LabReport",
    "RenderStats",
    "render_progressive",
    "Scene",
    "fixture_scene",
    "load_scene",
    "parse_scene",
    "run_ordering_experiment",
    "run_uniformity_test",
    "GMISError",
    "ParameterError",
    "DomainError",
    "EstimatorValidityError",
    "CapabilityError",
    "DivergenceError",
    "SingularityError",
    "InternalInvariantError",
    "DeltaQueryError",
    "SceneParseError",
    "ImageIOError",
    "ConfigurationError",
]
