"""Shapley-value ranking of confounders in CEM-adjusted funnel survival ratios.

The library has three layers:

* :mod:`funnelshap.games` and :mod:`funnelshap.sampling` -- coalitional
  games, exact Shapley values, one-step baselines, and permutation-sampled
  estimates with CLT sample sizing;
* :mod:`funnelshap.cem` and :mod:`funnelshap.funnel` -- coarsened exact
  matching and the adjusted funnel survival ratio it feeds;
* :mod:`funnelshap.attribution` -- the pipeline tying them together, with
  a CLI in :mod:`funnelshap.cli` and a synthetic-data generator in
  :mod:`funnelshap.synth`.
"""

__version__ = "0.1.0"

from .attribution import (
    AttributionConfig,
    AttributionReport,
    ConfounderRow,
    EfficiencyCheck,
    attribute,
    attribute_game,
    select_top_k,
    verify_efficiency,
)
from .cem import (
    CategoricalRule,
    CoarseningSpec,
    CutpointRule,
    EqualFrequencyRule,
    EqualWidthRule,
    FrozenCoarsening,
    StratumTable,
    coarsen,
    matching_rate,
    stratify,
    weights,
)
from .errors import (
    DegenerateFunnel,
    EmptyDataset,
    EmptyInput,
    EvaluationFailed,
    FunnelShapError,
    InvalidConfig,
    InvalidK,
    InvalidParameter,
    MissingReport,
    NoMatchedStrata,
    NonNumericForNumericRule,
    ParseError,
    PlayerCapExceeded,
    PlayerNotInPermutation,
    SchemaMismatch,
    UnsatisfiableCoalitions,
)
from .fixtures import FIXTURES, and_game, fixture_report, linear_game, or_game
from .funnel import (
    CONTROL,
    TREATMENT,
    FunnelDataset,
    SurvivalRatio,
    UnitRecord,
    adjusted_survival_ratio,
    characteristic_fn,
    raw_survival_ratio,
)
from .games import (
    EXACT_PLAYER_CAP,
    AttributionVector,
    AxiomReport,
    CoalitionGame,
    add_one,
    check_axioms,
    coalition_of,
    members,
    remove_one,
    shapley_by_permutations,
    shapley_exact,
    shift_to_zero,
)
from .sampling import (
    SampledAttribution,
    SamplingConfig,
    normal_quantile,
    pilot_variance_bound,
    plan_sampling,
    predecessors,
    required_sample_size,
    shapley_sampled,
)
from .synth import ConfounderSpec, GeneratorConfig, generate
