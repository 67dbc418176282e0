"""Exact, enumeration-backed laboratory for discrete diffusion decoding on
tiny alphabets: forward corruption schedules, exact posterior prediction,
speculative in-step decoding, re-corruption passes, and the bookkeeping to
verify all of it against closed forms.
"""

from .core import (
    Categorical,
    SeededRng,
    Vocabulary,
    categorical_normalize,
    categorical_sample,
    sequence_code,
    sequence_from_code,
    tokens_from_word,
    word_from_tokens,
)
from .decoding import (
    DecodeConfig,
    PredictorPair,
    RoundRecord,
    SpecTrace,
    StaticPredictor,
    decode_independent,
    decode_sequential,
    decode_speculative,
    full_inference,
    low_conf_select,
    residual_distribution,
    reverse_transition,
    speculative_round,
)
from .errors import (
    AllZeroWeights,
    BudgetTooLarge,
    DegenerateFactor,
    EmptySampleSet,
    InvalidAlpha,
    InvalidBeta,
    InvariantError,
    LengthMismatch,
    NoProposals,
    SchemaError,
    SupportMismatch,
    TimeOutOfRange,
    UnseenContext,
    ZeroProbabilityEvent,
    ZeroRejectionMass,
)
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    MetricRow,
    SUITES,
    Table,
    emit_report,
    parse_config,
    parse_config_file,
    run_experiment,
    run_suite,
)
from .forward import (
    KernelSchedule,
    build_absorbing_schedule,
    build_uniform_schedule,
    constant_betas,
    forward_posterior,
    marginal,
    recorrupt_position,
    sample_forward,
)
from .oracle import (
    DataLaw,
    DraftContext,
    ExactPredictor,
    HybridContext,
    clean_posterior_joint,
    draft_law,
    factorized_joint,
    independent_posterior,
    joint_prob,
    prefix_identity_gap,
    prefix_posterior,
    recorruption_conditional,
)
from .stats import (
    CostModel,
    EmpiricalJoint,
    cost_accounting,
    empirical_joint,
    exact_commit_law,
    expected_committed_length,
    ideal_speedup,
    measure_acceptance,
    simulate_committed_length,
    tv_distance,
)
from .training import (
    LearnedPredictor,
    TrainConfig,
    exact_conditional_entropy,
    load_predictor,
    loss_eval,
    predict,
    save_predictor,
    train_position_conditioned,
)

__version__ = "0.1.0"
