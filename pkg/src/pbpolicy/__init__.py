"""Budget-constrained treatment policy estimation via exponentially weighted
linear threshold rules, with tempering SMC samplers, population oracles, and
finite-sample certificate calculators."""

# assigned before the submodule imports because harness reads it back for
# its study manifests
__version__ = "0.1.0"

from pbpolicy.data import (
    Observation,
    Sample,
    IPWScores,
    FeatureMap,
    PolyFeatureMap,
    IdentityFeatureMap,
    LinearPolicy,
    ipw_transform,
    empirical_welfare,
    empirical_cost,
    poly_feature_map,
    load_sample_csv,
)
from pbpolicy.gibbs import (
    GibbsParams,
    IsotropicNormalPrior,
    GridPosterior,
    InfeasibleBudgetError,
    grid_posterior,
    grid_cost_evaluator,
    empirical_budget_curve,
    solve_u_hat,
    grid_kl,
)
from pbpolicy.bounds import (
    BoundInputs,
    BoundReport,
    small_kl,
    small_kl_inverse,
    pinsker_gap,
    bound_report,
)
from pbpolicy.smc import (
    TemperatureLadder,
    WeightedParticles,
    SMCConfig,
    build_default_ladder,
    run_smc,
)
from pbpolicy.rules import (
    GibbsRule,
    MajorityVoteRule,
    BatchCandidates,
    BatchPlan,
    treat_probability,
    mv_decide,
    sample_assignments,
    rule_empirical_cost,
    rule_empirical_welfare,
    batch_assign,
)
from pbpolicy.dgp import (
    DGPSpec,
    SimulatedPopulation,
    generate,
    true_gain_cost,
    true_cate,
    true_catc,
)
from pbpolicy.oracle import (
    KnownDGP,
    OptimalRule,
    known_simulated,
    budget_curve_beta,
    solve_eta_B,
    oracle_decisions,
    oracle_report,
    regret_under_budget,
    mv_loss_L_B,
)
from pbpolicy.persist import (
    FixtureSet,
    save,
    load,
    save_fixture_set,
    load_fixture_set,
)
from pbpolicy.harness import (
    GridSpec,
    CostCurve,
    StudyConfig,
    StudyReport,
    cross_validate_lambda,
    run_study,
)
