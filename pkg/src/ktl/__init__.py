"""ktl: exact Bayes-error safety calculus and kNN convergence benchmarks."""

__version__ = "0.1.0"

from .data import LabeledDataset
from .errors import (
    DegenerateInputError,
    DomainError,
    GenerationError,
    IngestionError,
    InternalConsistencyError,
    KtlError,
    TrainingError,
    ValidationError,
)
from .finite_dist import (
    FiniteJointDistribution,
    FiniteMap,
    SafetyReport,
    Scorer,
    bayes_error,
    bayes_error_increase,
    conditional_kl,
    mutual_information,
    pushforward,
    safety_report,
)
from .knn import ConvergenceCurve, KnnConfig, error_rate, knn_classify, knn_posterior
