"""skewlab: Monte Carlo construction and verification of skew Brownian motion.

The package builds skew Brownian motion by flipping the excursions of a
driving path with independent Bernoulli signs and verifies every identity the
construction rests on at desk scale: pathwise residuals (Tanaka, balayage,
skew SDE), statistical martingale drift tests under a signed measure, and
distributional tests against the closed-form skew density and the skew random
walk.
"""

__version__ = "0.1.0"

from .excursion import (
    Excursion,
    ExcursionSet,
    LastZeroCurve,
    ZeroMask,
    decompose_excursions,
    last_zero_curve,
)
from .grid_paths import (
    SamplePath,
    SeedSpec,
    TimeGrid,
    make_grid,
    refine_bridge,
    sample_brownian,
    sample_independent_pair,
)
from .localtime import (
    LocalTimeCurve,
    ResidualReport,
    identity_residual,
    ito_sum,
    local_time,
    quadratic_covariation,
)
from .signed_measure import (
    Decomposition,
    HypothesisNotMetError,
    InsufficientSamplesError,
    PROCESS_ZOO,
    SignedMeasureModel,
    TestReport,
    build_model,
    carried_by_check,
    equivalence_suite,
    martingale_drift_test,
    optional_representation_check,
    qp_residual,
    sigma_h_check,
)
from .signflip import (
    AlphaSchedule,
    SignAssignment,
    apply_sign,
    assign_signs,
    build_sign_path,
)
from .skewbm import (
    LawSample,
    SkewBuildSpec,
    SkewLaw,
    birth_frozen_sign_path,
    build_skew,
    harrison_shepp_terminals,
    harrison_shepp_walk,
    law_test,
    recover_driving_noise,
    sde_residual,
    skew_path,
    skew_terminal_sample,
    skew_terminal_samples,
    skew_transition_cdf,
    skew_transition_density,
)

__all__ = [name for name in dir() if not name.startswith("_")]
