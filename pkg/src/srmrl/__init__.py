"""Batch reinforcement learning with probabilistic return lower bounds.

Learns a policy and a policy-class size from a fixed batch of episodes by
maximizing a lower bound on true return.  The bound combines a stitched
off-policy return estimate (model-free Monte Carlo), a Lipschitz
discrepancy penalty, Hoeffding confidence terms, and an empirical
Rademacher capacity penalty over a nested structure of policy classes.
"""

from srmrl.core import (
    Episode,
    ReturnRange,
    Transition,
    TransitionDataset,
    empirical_return,
    episode_return,
    normalize_returns,
    reindex_dataset,
    validate_episode_rewards,
)
from srmrl.mfmc import (
    ArtificialEpisode,
    DistanceWeights,
    LipschitzConstants,
    MfmcResult,
    build_artificial_episodes,
    default_n_tilde,
    horizon_coeff,
    mfmc_evaluate,
    stitched_to_dataset,
    transition_distance,
)
from srmrl.bounds import (
    BoundReport,
    ConfidenceParams,
    EvalContext,
    hoeffding_penalty,
    lower_bound_return,
    mfmc_pac_lower_bound,
    omega_penalty,
    rademacher_estimate_generic,
    rademacher_estimate_rl,
)
from srmrl.policies import (
    InvDistPolicyClass,
    Policy,
    PolicyStructure,
    RbfPolicyClass,
    build_structure,
    eval_invdist_policy,
    eval_rbf_policy,
    policy_lipschitz,
    project_to_class,
)
from srmrl.optimize import (
    CandidateResult,
    OptimizerConfig,
    SupOptimizer,
    maximize_penalized_return,
    mr_select,
    rademacher_sup_callback,
    srm_select,
)
from srmrl.domains import (
    DomainSpec,
    collect_random_dataset,
    intruder_spec,
    make_domain,
    pendulum_spec,
    rollout_episodes,
    toy1d_spec,
    true_return_mc,
)

__version__ = "0.1.0"
