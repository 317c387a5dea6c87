"""Weighted-average-consensus distributed detection under data falsification.

A desk-scale laboratory for studying how falsified sensing statistics degrade
consensus-based detection, how a neighbor-assigned-weight update rule removes
the weight-tampering channel, and how per-node learning of neighbor behaviour
recovers near-optimal fusion weights.
"""

__version__ = "0.1.0"

from .analysis import (
    GlobalStatisticMoments,
    NodeMoments,
    RocCurve,
    TransientMixture,
    WeightAssignment,
    WeightProvenance,
    alpha_blind,
    apply_negative_weight_shift,
    blinding_residual,
    conventional_weights,
    deflection_coefficient,
    equal_gain_weights,
    exclusion_weights,
    global_moments,
    mixture_tail,
    negative_shift_constant,
    optimal_weights,
    pd_at_matched_pf,
    q_function,
    roc_closed_form,
    roc_from_moments,
    statistic_mixture,
    transient_mixture,
    transient_pd_pf,
    vectorized_pd,
    vectorized_tail,
)
from .config import Scenario, load_scenario, scenario_from_mapping
from .consensus import (
    ConsensusMatrix,
    ConsensusRun,
    MatrixKind,
    SpectralReport,
    conventional_perron,
    epsilon_bound,
    matrix_power,
    robust_perron,
    run_consensus,
    spectral_check,
)
from .errors import (
    ConfigError,
    ConsenslabError,
    DegenerateWeightsError,
    EnumerationLimitError,
    EpsilonBoundError,
    InvalidMomentsError,
    InvalidParameterError,
    InvalidTopologyError,
    WeightUndefinedError,
)
from .figures import reproduce_figure
from .learning import (
    GaussianNodeModel,
    HonestEstimate,
    LearningSettings,
    LearningTrace,
    LearningWindow,
    MixtureEstimate,
    NodeVerdict,
    adaptive_weights,
    classify_node,
    em_fit,
    learning_loop,
    mle_update,
    model_optimal_weights,
)
from .montecarlo import MonteCarloResult, TrialRecord, iter_trials, run_monte_carlo
from .sensing import (
    AttackParams,
    H1Variance,
    Hypothesis,
    NodeProfile,
    SensingParams,
    apply_attack,
    apply_attacks,
    gaussian_moments,
    local_snr,
    sample_statistic,
    sample_statistics,
)
from .topology import NetworkGraph, adjacency, build_graph, degrees, is_connected, laplacian
