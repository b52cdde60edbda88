"""Planning and verification tools for two-stage adaptive trials with a
binary outcome measured at one or more waves.

The package covers the full planning loop: describe a scenario
(design), size it or predict its power in closed form (formulas), simulate
trials from a generative model (simulate), analyze them with weighted
estimating equations (gee), and check the formulas against Monte Carlo at
scale (experiments). A CLI (cli) and an HTTP service (service) wrap the
same functions for scripted and interactive use.
"""
from .design import (
    AI_ORDER,
    AdaptiveIntervention,
    ConditionalScenario,
    ContrastSpec,
    DEFAULT_CONTRAST,
    MarginalScenario,
    ScenarioDocument,
    ScenarioValidationError,
    Violation,
    ai_for_cell,
    canonical_json,
    cells_for_ai,
    document_from_dict,
    document_to_dict,
    dump_document,
    list_violations,
    load_document,
    log_odds_ratio,
    marginalize,
    odds_ratio,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)
from .experiments import (
    DEFAULT_SEED,
    GENERATIVE_GRID,
    PowerEstimate,
    SampleSizeSearch,
    SearchFailureError,
    SimulationFailureError,
    TableDocument,
    estimate_power,
    estimate_power_multi,
    find_sample_size,
    pilot_marginal_correlation,
    run_table3,
    run_table4,
    run_table5,
)
from .formulas import (
    AdjustedVariances,
    NullEffectError,
    PowerResult,
    SampleSizeResult,
    TestSpec,
    adjusted_conditional_variances,
    cpb_n_onewave,
    cpb_n_twowave,
    cpb_sigma2_onewave,
    cpb_sigma2_twowave,
    inflate_for_attrition,
    mpb_n_onewave,
    mpb_n_twowave,
    mpb_sigma2_onewave,
    mpb_sigma2_twowave,
    plan_n,
    power_given_n,
    predicted_power,
    required_n,
)
from .gee import (
    GeeFit,
    ModelSpec,
    NonConvergenceError,
    SeparationError,
    WaldResult,
    contrast_vector,
    estimate_marginal_correlation,
    fit,
    wald_test,
)
from .simulate import (
    AnalysisRows,
    GenParamsThreeWave,
    GenParamsTwoWave,
    PopulationMoments,
    TrialDataset,
    empirical_marginals,
    population_moments,
    simulate_from_scenario,
    simulate_three_wave,
    simulate_two_wave,
    weight_and_replicate,
    write_trial_csv,
)

__version__ = "0.1.0"
