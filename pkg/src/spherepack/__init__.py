"""Refined sphere-packing lower bounds for asymmetric DMCs.

Submodules:
- probability: distributions, channels, divergences, capacity, R_inf
- saddle: the saddle point (rho*, Q*), E_SP(R,P), E_SP(R), rho*_R
- shifted: W^-, r(R,P), cumulants, shifted exponent, Fenchel transforms
- asymptotics: sharp lower bound for sums of independent random variables
- nptest: exact Neyman-Pearson convolution machinery
- bounds: end-to-end refined bound with explicit constants
- cli: the `spherepack` command
"""

from .asymptotics import FiniteSupportRV, SlbReport, slb_bound, solve_eta, tilt_rv
from .bounds import (
    BoundReport,
    ConstantsLedger,
    bound_report_json,
    closed_form_bound,
    constants,
    constants_ledger,
    lagrange_identity_check,
    refined_bound,
    select_nu,
)
from .errors import (
    AlphabetMismatchError,
    AtomBudgetError,
    ConfigError,
    ConvergenceError,
    DomainError,
    InvariantViolationError,
    SpherepackError,
)
from .nptest import (
    LogLrLaw,
    TradeoffPoint,
    alpha_star,
    build_loglr_law,
    np_alpha_for_composition,
    threshold_test_alpha_beta,
)
from .probability import (
    Channel,
    ConditionalChannel,
    Distribution,
    capacity,
    channel_from_json,
    channel_to_json,
    conditional_kl,
    divergence_to_output,
    kl_divergence,
    load_channel,
    mutual_information,
    r_infinity,
    tilted_channel_row,
)
from .saddle import (
    ExponentPoint,
    SaddlePoint,
    esp_of_r,
    esp_primal_oracle,
    esp_value,
    inner_opt_q,
    k_rp,
    lambda_qp,
    rho_star_r,
    saddle_point,
)
from .shifted import (
    CumulantPair,
    ShiftedContext,
    ShiftedExponent,
    cumulants,
    e0,
    esp_q_primal,
    fenchel0,
    fenchel1,
    lambda0,
    lambda1,
    m13,
    r_of,
    shifted_context,
    tilde_esp,
    w_minus,
)

__all__ = [
    "AlphabetMismatchError",
    "AtomBudgetError",
    "BoundReport",
    "Channel",
    "ConditionalChannel",
    "ConfigError",
    "ConstantsLedger",
    "ConvergenceError",
    "CumulantPair",
    "Distribution",
    "DomainError",
    "ExponentPoint",
    "FiniteSupportRV",
    "InvariantViolationError",
    "LogLrLaw",
    "SaddlePoint",
    "ShiftedContext",
    "ShiftedExponent",
    "SlbReport",
    "SpherepackError",
    "TradeoffPoint",
    "alpha_star",
    "bound_report_json",
    "build_loglr_law",
    "capacity",
    "channel_from_json",
    "channel_to_json",
    "closed_form_bound",
    "conditional_kl",
    "constants",
    "constants_ledger",
    "cumulants",
    "divergence_to_output",
    "e0",
    "esp_of_r",
    "esp_primal_oracle",
    "esp_q_primal",
    "esp_value",
    "fenchel0",
    "fenchel1",
    "inner_opt_q",
    "k_rp",
    "kl_divergence",
    "lagrange_identity_check",
    "lambda0",
    "lambda1",
    "lambda_qp",
    "load_channel",
    "m13",
    "mutual_information",
    "np_alpha_for_composition",
    "r_infinity",
    "r_of",
    "refined_bound",
    "rho_star_r",
    "saddle_point",
    "select_nu",
    "shifted_context",
    "slb_bound",
    "solve_eta",
    "threshold_test_alpha_beta",
    "tilt_rv",
    "tilted_channel_row",
    "w_minus",
]
