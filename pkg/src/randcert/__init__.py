"""Device-independent randomness certification from Bell-test statistics.

Upper bounds on an adversary's guessing probability are computed with
moment-matrix relaxations of the quantum set (or the no-signaling polytope),
and the dual of each program is returned as a verified Bell expression.
"""
from .bell import (
    Behavior,
    BellExpression,
    BinaryCorrelators,
    Scenario,
    bell_value,
    local_bound,
    min_entropy,
    validate_behavior,
)
from .certificates import Certificate, certified_bound, extract_certificate, verify_certificate
from .digp import GuessingProblem, Solution, Target, solve
from .npa import membership_test
from .nslp import ns_solve

__version__ = "0.1.0"

__all__ = [
    "Behavior", "BellExpression", "BinaryCorrelators", "Scenario", "bell_value", "local_bound",
    "min_entropy", "validate_behavior", "Certificate", "certified_bound", "extract_certificate",
    "verify_certificate", "GuessingProblem", "Solution", "Target", "solve", "membership_test", "ns_solve",
]
