"""Exact energy equalities for step-valued semimartingales in intersections of Banach spaces."""

from .exceptions import BlowUpError, BudgetExceededError, DimensionError, UnsupportedError
from .spaces import (
    SpaceDescriptor,
    SpaceFamily,
    dual_norm,
    dual_norm_bruteforce,
    dual_norm_intersection,
    dual_norm_lp,
    duality_pair,
    h_inner,
    h_norm,
    project,
    v_norm,
    v_norm_sum,
)
from .processes import (
    DualStepProcess,
    IncreasingDriver,
    MartingalePath,
    PartitionHierarchy,
    StepFunction,
    TimeChange,
    build_partitions,
    ensemble_martingale_check,
    eval_A,
    eval_A_left,
    kappa,
    lipschitz_check,
    squared_increment_sums,
    step_approximation,
    stieltjes_integral,
    substitution_check,
    time_change_beta,
)
from .scenario import (
    Scenario,
    mixed_scenario,
    normalise_mass,
    one_jump_scenario,
    random_scenario,
    regularity_process,
    scaling_reduce,
)
from .energy import (
    CorrectionStudy,
    EnergyLedger,
    cadlag_modification,
    correction_study,
    energy_ledger,
    hilbert_ito_check,
    homogeneity_check,
    ledger_table,
    telescoping_check,
    weak_jump_check,
)
from .spde import (
    SpdeConfig,
    SpdeRun,
    amplitude_ramp_run,
    euler_run,
    integrability_report,
    p_laplacian,
    power_drift,
)

__version__ = "0.1.0"
