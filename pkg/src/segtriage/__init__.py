"""Uncertainty-based triage for semantic-segmentation predictions.

Aggregates Monte-Carlo dropout stacks into segmentations and entropy
measures, regresses per-image quality on class-wise uncertainties, and
routes the estimated-worst predictions to a human reviewer.
"""

__version__ = "0.1.0"

from .bundle import (
    Bundle,
    BundleError,
    BundleValidationError,
    ClassSpec,
    LabelMap,
    ProbabilityStack,
    read_bundle,
    validate_bundle,
    write_bundle,
)
from .metrics import (
    ClassWeights,
    DiceReport,
    MeanProbabilityMap,
    SegmentationMap,
    argmax_segmentation,
    class_weights,
    dice_report,
    mean_probability,
    weighted_cross_entropy,
)
from .scoring import ImageScore, read_scores, score_bundle, write_scores
from .simulate import (
    SimulationConfig,
    TriageCurve,
    export_curves,
    random_baseline,
    run_simulation,
    run_simulation_report,
)
from .statmodel import (
    CorrelationReport,
    QualityModel,
    correlation_report,
    fit_quality_model,
    pearson,
    predict_quality,
)
from .synth import GeneratorConfig, generate_corpus, write_corpus
from .uncertainty import (
    ClassUncertaintyVector,
    UncertaintyMap,
    class_uncertainties,
    entropy_map,
    entropy_to_grayscale,
    image_mean_entropy,
)

__all__ = [
    "__version__",
    "Bundle",
    "BundleError",
    "BundleValidationError",
    "ClassSpec",
    "LabelMap",
    "ProbabilityStack",
    "read_bundle",
    "validate_bundle",
    "write_bundle",
    "ClassWeights",
    "DiceReport",
    "MeanProbabilityMap",
    "SegmentationMap",
    "argmax_segmentation",
    "class_weights",
    "dice_report",
    "mean_probability",
    "weighted_cross_entropy",
    "ImageScore",
    "read_scores",
    "score_bundle",
    "write_scores",
    "SimulationConfig",
    "TriageCurve",
    "export_curves",
    "random_baseline",
    "run_simulation",
    "run_simulation_report",
    "CorrelationReport",
    "QualityModel",
    "correlation_report",
    "fit_quality_model",
    "pearson",
    "predict_quality",
    "GeneratorConfig",
    "generate_corpus",
    "write_corpus",
    "ClassUncertaintyVector",
    "UncertaintyMap",
    "class_uncertainties",
    "entropy_map",
    "entropy_to_grayscale",
    "image_mean_entropy",
]
