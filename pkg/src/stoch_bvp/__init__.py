"""Green-kernel fixed-point solver for second-order stochastic boundary
value problems with a small parameter, plus the machinery to verify its
averaging limits at desk scale."""

from .model import (
    BoundaryKind,
    ConditionViolation,
    ConfigError,
    Grid,
    ProblemSpec,
    load_problem,
    require_valid,
    validate_spec,
)
from .greens import (
    KernelTable,
    certify_green,
    green_dt,
    green_eval,
    sup_norm_diff,
    upsilon,
)
from .stochastic import (
    BrownianPath,
    brownian_bridge_check,
    check_ito_lemma,
    eta,
    ito_integral,
    kappa,
    sample_path,
)
from .solver import (
    B0Function,
    BracketError,
    MaxIterExceeded,
    NoContraction,
    SolutionPath,
    contraction_bound,
    forcing_path,
    invert_B0,
    picard_solve,
    verify_sde,
)
from .experiments import (
    ConvergenceTable,
    converge_constant,
    converge_first_kind,
    decomposition_check,
    deterministic_limit_check,
)

__version__ = "0.1.0"
