"""
Similarity of nearly included finite-dimensional amenable operator algebras.

If a unital algebra ``A`` of matrices sits within ``gamma`` of a unital
algebra ``N`` and ``gamma`` is below ``1 / digamma(||P||, ||u||)``, an
invertible ``S`` near the identity satisfies ``S A S^-1`` inside ``N``.
The package builds every object of that statement numerically and
certifies each inequality.
"""

from .errors import (
    ConvergenceError,
    InvalidInputError,
    NearInclusionError,
    PremiseNotCertifiedError,
    RankDeficientError,
    StageError,
    ThresholdError,
)
from .linalg import condition_number, inverse, operator_norm, polar_decompose, trace_norm
from .algebra import (
    BlockModel,
    DistanceResult,
    FdAlgebra,
    block_algebra,
    distance_bracket,
    distance_to,
    full_matrix_algebra,
    generate_closure,
    pattern_algebra,
    sample_unit_ball,
)
from .diagonal import (
    TensorElement,
    module_act,
    multiply,
    projective_norm_upper_bound,
    transport,
    verify_diagonal,
    weyl_diagonal,
    weyl_matrices,
)
from .maps import (
    AlgebraMap,
    Bracket,
    ProjectionOnto,
    compress,
    conjugation_map,
    defect,
    defect_norm,
    frobenius_projection,
    identity_map,
    identity_projection,
    map_from_function,
    map_norm,
    psi_apply,
)
from .johnson import JohnsonBudget, correct_to_homomorphism, delta_threshold
from .similarity import (
    Certificate,
    corollary_bound,
    digamma,
    intertwiner,
    near_inclusion_pipeline,
    unitarize,
)
from .scenario import (
    KKDistanceReport,
    PerturbationScenario,
    ScenarioParams,
    bench,
    estimate_gamma,
    generate_scenario,
    kk_distance,
    run_report,
    run_scenario,
    verify_certificate,
)

__version__ = "0.1.0"
