"""Rigid alignment of weighted point sets under (fractional) Wasserstein distance."""

from wassalign.alignment import (
    AlignmentConfig,
    AlignmentReport,
    align_with_compression,
    alternate_minimize,
    flow_cross_covariance,
    weighted_procrustes,
)
from wassalign.compression import (
    compress,
    gonzalez_adaptive,
    gonzalez_kcenter,
    kcenter_plus,
    kmeans_compress,
    random_compress,
    random_plus_compress,
)
from wassalign.core import (
    CompressionResult,
    ConsistencyError,
    ConvergenceError,
    NumericalError,
    RigidTransform,
    TransportPlan,
    WeightedPointSet,
    apply_transform,
    compose_sequence,
    cost_matrix,
    diameter_estimate,
    random_orthogonal,
)
from wassalign.experiment import (
    ExperimentConfig,
    ExperimentResult,
    GeneratorSpec,
    load_experiment_config,
    run_experiment,
)
from wassalign.fileio import (
    load_compression,
    load_plan,
    load_pointset,
    save_compression,
    save_plan,
    save_pointset,
    save_report,
)
from wassalign.generators import generate_planted
from wassalign.transport import (
    TransportConfig,
    fractional_wasserstein,
    sinkhorn_transport,
    wasserstein_exact,
    wasserstein_sinkhorn,
)

__all__ = [
    "AlignmentConfig",
    "AlignmentReport",
    "CompressionResult",
    "ConsistencyError",
    "ConvergenceError",
    "ExperimentConfig",
    "ExperimentResult",
    "GeneratorSpec",
    "NumericalError",
    "RigidTransform",
    "TransportConfig",
    "TransportPlan",
    "WeightedPointSet",
    "align_with_compression",
    "alternate_minimize",
    "apply_transform",
    "compose_sequence",
    "compress",
    "cost_matrix",
    "diameter_estimate",
    "flow_cross_covariance",
    "fractional_wasserstein",
    "generate_planted",
    "gonzalez_adaptive",
    "gonzalez_kcenter",
    "kcenter_plus",
    "kmeans_compress",
    "load_compression",
    "load_experiment_config",
    "load_plan",
    "load_pointset",
    "random_compress",
    "random_orthogonal",
    "random_plus_compress",
    "run_experiment",
    "save_compression",
    "save_plan",
    "save_pointset",
    "save_report",
    "sinkhorn_transport",
    "wasserstein_exact",
    "wasserstein_sinkhorn",
    "weighted_procrustes",
]
