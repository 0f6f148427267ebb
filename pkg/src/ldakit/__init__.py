"""Topic-model inference toolkit: collapsed Gibbs sampling with standard and
soft-count parameter recovery, CVB0, a brute-force oracle, Prior-LDA
multi-label classification, and evaluation harnesses."""

from .corpus import (
    Corpus,
    Document,
    Vocabulary,
    from_token_lists,
    load_labels,
    load_plaintext,
    load_sparse_bow,
    save_labels,
    save_plaintext,
    save_sparse_bow,
    split_heldout,
)
from .cvb0 import (
    VariationalState,
    cvb0_estimates,
    cvb0_run,
    cvb0_sweep,
    export_gamma_csv,
    init_variational,
)
from .errors import (
    CheckpointError,
    ConfigError,
    ConstraintError,
    EmptyCorpusError,
    EnumerationCapError,
    FormatError,
    LdakitError,
    NumericError,
)
from .estimators import (
    EstimatorKind,
    average_estimates,
    phi_soft,
    phi_standard,
    recover_estimate,
    soft_counts,
    theta_naive_mc,
    theta_soft,
    theta_standard,
)
from .evaluate import (
    F1Report,
    PerplexityReport,
    TraceRow,
    convergence_trace,
    f1_metrics,
    heldout_perplexity,
    heldout_perplexity_grid,
    log_likelihood,
    word_association,
)
from .model import (
    CountMatrices,
    Hyperparams,
    ParamEstimate,
    SamplerState,
    SoftCounts,
    export_csv,
    load_checkpoint,
    rebuild_counts,
    save_checkpoint,
)
from .oracle import (
    CollapsedEnumeration,
    DenominatorBound,
    EnumerablePosterior,
    exact_collapsed_posterior,
    exact_posterior,
    hard_soft_divergence,
    phi_soft_bound_check,
    theta_finite_resampling,
    theta_marginal,
)
from .priorlda import (
    CardinalityPredictor,
    PriorLdaConfig,
    build_priors,
    predict_labels,
    train_cardinality,
    train_phi,
)
from .sampler import (
    ChainSchedule,
    SamplingMode,
    gibbs_transition,
    init_state,
    mix_chain_seed,
    run_chain,
    sparse_token_distribution,
    sweep,
    sweep_sparse,
)

__version__ = "0.1.0"
