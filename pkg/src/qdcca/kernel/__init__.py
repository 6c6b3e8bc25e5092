"""Dense multi-register simulator and reusable quantum primitives."""

from .oracles import (
    OracleTable,
    add_in_place,
    apply_oracle,
    set_flags,
    subtract_in_place,
    write_function,
)
from .primitives import (
    BoundViolation,
    GroverOperator,
    MaxFindResult,
    PrecisionCapError,
    QpeResult,
    ValueSampler,
    ae_error_bound,
    amplification_rounds,
    amplitude_estimate,
    controlled_rotation,
    controlled_rotation_inverse,
    fixed_point_amplify,
    fixed_point_schedule,
    max_find,
    max_find_query_cap,
    median_boost,
    median_repetitions,
    phase_estimate,
    qpe_distribution,
)
from .registers import (
    Condition,
    EncodingError,
    FixedPointFormat,
    QuantumState,
    QubitCapError,
    Register,
    RegisterLayout,
    apply_register_unitary,
    purification_unitary,
    ranged_uniform_unitary,
    reg_eq,
    reg_ge,
    reg_in,
    support,
)
from .resources import CostModelInputs, ResourceReport, cost_rows, merge_reports

__all__ = [
    "BoundViolation",
    "Condition",
    "CostModelInputs",
    "EncodingError",
    "FixedPointFormat",
    "GroverOperator",
    "MaxFindResult",
    "OracleTable",
    "PrecisionCapError",
    "QpeResult",
    "QuantumState",
    "QubitCapError",
    "Register",
    "RegisterLayout",
    "ResourceReport",
    "ValueSampler",
    "add_in_place",
    "ae_error_bound",
    "amplification_rounds",
    "amplitude_estimate",
    "apply_oracle",
    "apply_register_unitary",
    "controlled_rotation",
    "controlled_rotation_inverse",
    "cost_rows",
    "fixed_point_amplify",
    "fixed_point_schedule",
    "max_find",
    "max_find_query_cap",
    "median_boost",
    "median_repetitions",
    "merge_reports",
    "phase_estimate",
    "purification_unitary",
    "qpe_distribution",
    "ranged_uniform_unitary",
    "reg_eq",
    "reg_ge",
    "reg_in",
    "set_flags",
    "support",
    "subtract_in_place",
    "write_function",
]
