"""Sparse null-space constraints for structured integer patterns and a
two-level bit-flipping network that corrects additive noise with them."""

from .analysis import (
    DegreeProfile,
    GainRow,
    SingleErrorBound,
    degree_profile,
    per_gain,
    ratio_interval,
    single_error_bound,
    sparsity_ratio,
    wilson_interval,
)
from .dataset import (
    ALL,
    Generator,
    GeneratorSpec,
    NoiseVector,
    PatternMatrix,
    StructureReport,
    build_generator,
    inject_noise,
    synthesize_patterns,
    verify_subspace,
)
from .errors import RuntimeFailure, SubspaceMemoryError, ValidationError
from .learner import (
    PAPER_TABLE,
    THEOREM_SAFE,
    ConstraintGraph,
    LearnParams,
    alpha_schedule,
    iteration_matrix,
    learn_constraint,
    learn_constraint_reference,
    learn_network,
    soft_threshold,
    sparsity_grad,
    sparsity_penalty,
    spectral_norm,
)
from .recall import (
    MultiLevelNetwork,
    RecallOutcome,
    RecallParams,
    backward_pass,
    constraints_satisfied,
    correct,
    forward_pass,
    multilevel_correct,
)

__version__ = "0.1.0"
