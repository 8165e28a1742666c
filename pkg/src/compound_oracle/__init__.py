"""Oracle estimators for the compound decision problem.

Computes the best simple symmetric rule and the best permutation-invariant
rule for a known parameter multiset, and estimates their total squared-error
risks by paired Monte Carlo.
"""

from .errors import CapacityError, ConfigError, ContractError, DomainError, OracleError
from .exactcore import EspTable, LogValue, enumerate_posterior, esp_log, permanent_log, permanental_minors_log
from .families import Family, LogLikelihoodMatrix, ParameterMultiset, log_density, loglik_matrix, sample, stream
from .oracles import (
    TwoValuedSpec,
    inclusion_probabilities,
    pi_rule_enum,
    pi_rule_permanent,
    pi_rule_two_valued,
    simple_rule,
    simple_rule_two_valued,
    two_valued_spec,
    weights,
)
from .risklab import (
    ConditionReport,
    GapReport,
    MuGenerator,
    RiskEstimate,
    check_B1,
    check_G1,
    check_G2,
    check_two_valued_condition,
    draw_instance,
    gap_curve,
    mc_gap,
)

__all__ = [
    "CapacityError",
    "ConfigError",
    "ContractError",
    "DomainError",
    "OracleError",
    "EspTable",
    "LogValue",
    "enumerate_posterior",
    "esp_log",
    "permanent_log",
    "permanental_minors_log",
    "Family",
    "LogLikelihoodMatrix",
    "ParameterMultiset",
    "log_density",
    "loglik_matrix",
    "sample",
    "stream",
    "TwoValuedSpec",
    "inclusion_probabilities",
    "pi_rule_enum",
    "pi_rule_permanent",
    "pi_rule_two_valued",
    "simple_rule",
    "simple_rule_two_valued",
    "two_valued_spec",
    "weights",
    "ConditionReport",
    "GapReport",
    "MuGenerator",
    "RiskEstimate",
    "check_B1",
    "check_G1",
    "check_G2",
    "check_two_valued_condition",
    "draw_instance",
    "gap_curve",
    "mc_gap",
]

__version__ = "0.1.0"
