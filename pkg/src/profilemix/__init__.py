"""Model-based clustering of bimodal molecular profiles.

Each subject's per-platform measurements follow a two-component Gaussian
mixture; subjects in the same cluster share which probes sit in which
component.  The package fits those mixtures, agglomerates subjects by a
marginal partition likelihood, refines partitions by EM, classifies new
subjects, and ships a simulator plus an exhaustive small-n oracle for
validation.
"""

from .core import (
    ClusterFit,
    ComponentCollapseError,
    DataError,
    DataSet,
    DegenerateProfileError,
    DegenerateVarianceError,
    DomainError,
    FitConfig,
    FitError,
    Partition,
    PlatformMatrix,
    ProfileMixError,
    SpuriousFitError,
    SubjectParams,
    UnclassifiableError,
    clamp_mixing_weight,
    evaluate_cluster_loglik,
    log_mix_term,
    log_normal_density,
    partition_loglik,
)
from .subject import (
    SubjectFitResult,
    fit_all_subjects,
    fit_subject,
    initial_values,
)
from .cluster import (
    ClusterInit,
    MStepUpdate,
    cluster_e_step,
    cluster_init_from_subject_fits,
    cluster_m_step,
    fit_cluster,
)
from .hier import (
    Dendrogram,
    Merge,
    hierarchical_cluster,
    select_partition,
)
from .refine import (
    RefineResult,
    membership_e_step,
    refine_best,
    refine_partition,
)
from .classify import (
    ClassificationResult,
    Classifier,
    ClassifierCluster,
    DiscriminantFit,
    align_to_classifier,
    classify_all,
    classify_subject,
    discriminant_fit,
    train_classifier,
)
from .simulate import (
    CorrelatedBlocks,
    GroundTruth,
    PlatformSimSpec,
    SimSpec,
    adjusted_rand_index,
    brute_force_best_partition,
    generate_dataset,
    iter_set_partitions,
)
from .dataio import (
    build_dataset,
    read_matrix,
    sd_filter,
    write_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "ClassificationResult",
    "Classifier",
    "ClassifierCluster",
    "ClusterFit",
    "ClusterInit",
    "ComponentCollapseError",
    "CorrelatedBlocks",
    "DataError",
    "DataSet",
    "DegenerateProfileError",
    "DegenerateVarianceError",
    "Dendrogram",
    "DiscriminantFit",
    "DomainError",
    "FitConfig",
    "FitError",
    "GroundTruth",
    "MStepUpdate",
    "Merge",
    "Partition",
    "PlatformMatrix",
    "PlatformSimSpec",
    "ProfileMixError",
    "RefineResult",
    "SimSpec",
    "SpuriousFitError",
    "SubjectFitResult",
    "SubjectParams",
    "UnclassifiableError",
    "adjusted_rand_index",
    "align_to_classifier",
    "brute_force_best_partition",
    "build_dataset",
    "clamp_mixing_weight",
    "classify_all",
    "classify_subject",
    "cluster_e_step",
    "cluster_init_from_subject_fits",
    "cluster_m_step",
    "discriminant_fit",
    "evaluate_cluster_loglik",
    "fit_all_subjects",
    "fit_cluster",
    "fit_subject",
    "generate_dataset",
    "hierarchical_cluster",
    "initial_values",
    "iter_set_partitions",
    "log_mix_term",
    "log_normal_density",
    "membership_e_step",
    "partition_loglik",
    "read_matrix",
    "refine_best",
    "refine_partition",
    "sd_filter",
    "select_partition",
    "train_classifier",
    "write_matrix",
    "__version__",
]
