"""Random differential systems: generation pipeline and exact labeling oracles."""

from . import cli, errors, linalg, pipeline
from .control import (
    ControlVerdict,
    Linearization,
    closed_loop_decay,
    controllability,
    degenerate_pair,
    feedback_matrix,
    kalman_matrix,
    linearize,
    nonauto_controllability,
    verify_feedback,
)
from .expr import (
    BINARY_OPS,
    UNARY_OPS,
    BinaryOp,
    ConstLeaf,
    Expr,
    IntLeaf,
    UnaryOp,
    VarLeaf,
    constant_fold,
    count_ops,
    differentiate,
    eval_complex,
    free_vars,
    substitute,
)
from .pde import (
    DiffOperator,
    InitialCondition,
    PDEVerdict,
    classify_pde,
    fourier_polynomial,
    min_real_on_support,
    sample_initial_condition,
    sample_operator,
    support_of,
)
from .pipeline import (
    GenJob,
    dedup_filter,
    generate,
    label_input,
    read_shard,
    stats,
    task_config,
    variant_config,
)
from .sampler import (
    DistributionConfig,
    System,
    count_expressions,
    enumerate_trees,
    make_equilibrium,
    problem_space_size,
    sample_system,
    sample_tree,
)
from .stability import StabilityVerdict, classify_stability, jacobian_at
from .tokens import (
    TOKEN_TO_ID,
    VOCAB,
    VOCAB_VERSION,
    decode_float,
    decode_int,
    encode_complex,
    encode_float,
    encode_int,
    parse_prefix,
    to_prefix,
    write_vocab,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
