"""Row-mean estimation via the inner-product circuit.

A Hadamard-split flag register interferes the value-rotated column
superposition against an unrotated reference, so the flag's |1> probability
is P = (1 - mean/C)/2 with C the table's magnitude bound.  Amplitude
estimation on that circuit plus median boosting recovers the row mean to
absolute error eps with failure probability at most 2*delta, and the same
machinery fills the coherent-mean and mean-subtraction oracle tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import (
    FixedPointFormat,
    GroverOperator,
    OracleTable,
    PrecisionCapError,
    QuantumState,
    RegisterLayout,
    ResourceReport,
    ae_error_bound,
    amplitude_estimate,
    apply_oracle,
    apply_register_unitary,
    controlled_rotation,
    controlled_rotation_inverse,
    median_boost,
    median_repetitions,
    ranged_uniform_unitary,
    reg_eq,
)
from .kernel.primitives import AE_MAX_BITS, AE_MIN_BITS


@dataclass(frozen=True)
class MeanEstimationConfig:
    """Target error/failure budget and the derived circuit parameters."""

    epsilon: float = 0.05
    delta: float = 0.05
    c_scale: float | None = None  # defaults to the table's max |entry|
    precision_bits: int | None = None
    median_reps: int | None = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")

    def resolve_c(self, table: OracleTable) -> float:
        c = self.c_scale
        table_max = float(np.max(np.abs(table.stored_values()))) if table.values is not None else 0.0
        if c is None:
            c = table_max
        elif c < table_max - 1e-12:
            raise ValueError(f"c_scale={c} below table max |entry| {table_max}")
        return float(c)

    def resolve_bits(self, c: float) -> int:
        if self.precision_bits is not None:
            return self.precision_bits
        target = self.epsilon / (2.0 * max(c, 1e-300))
        for t in range(AE_MIN_BITS, AE_MAX_BITS + 1):
            if ae_error_bound(t) <= target:
                return t
        raise PrecisionCapError(
            f"mean error {self.epsilon} at scale {c} needs more than "
            f"{AE_MAX_BITS} estimation bits"
        )

    def resolve_reps(self) -> int:
        return self.median_reps if self.median_reps is not None else median_repetitions(self.delta)


def uy_layout(d2: int, fmt: FixedPointFormat) -> RegisterLayout:
    col_bits = max(1, math.ceil(math.log2(d2)))
    return RegisterLayout(
        [("flag", 1), ("col", col_bits), ("val", fmt.width, fmt), ("anc", 1)]
    )


@dataclass
class RowMeanCircuit:
    """The estimation circuit for one row (or padded row slice).

    prep/prep_inv act on bare vectors over `layout`; good_mask marks
    flag == |1>.  One prep costs two oracle queries (compute + uncompute).
    """

    layout: RegisterLayout
    grover: GroverOperator
    good_mask: np.ndarray
    c_scale: float
    d2: int
    oracle_name: str = "L"
    queries_per_prep: int = 2


def build_uy(
    table: OracleTable,
    row: int,
    *,
    c_scale: float | None = None,
    col_start: int = 0,
    col_count: int | None = None,
    validate_rotation: bool = True,
) -> RowMeanCircuit:
    """Estimation circuit for the mean of table[row, col_start:col_start+count].

    The column offset realizes the padded-block address arithmetic
    (column j of block i lives at i*n' + j) before the plain table oracle.
    """
    values = table.stored_values()
    d2 = values.shape[1] if col_count is None else col_count
    if not 0 <= row < values.shape[0]:
        raise ValueError(f"row {row} outside table with {values.shape[0]} rows")
    if col_start + d2 > values.shape[1]:
        raise ValueError("column slice extends past the table")
    slice_vals = values[row, col_start : col_start + d2]
    cmax = float(np.max(np.abs(values)))
    c = cmax if c_scale is None else float(c_scale)
    if float(np.max(np.abs(slice_vals), initial=0.0)) > c * (1 + 1e-12):
        raise ValueError(f"row {row} magnitude exceeds scale bound {c}")

    layout = uy_layout(d2, table.fmt)
    uniform = ranged_uniform_unitary(layout.register("col").width, d2)
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
    flag_is_zero = reg_eq("flag", 0)
    addr = lambda j: (np.full_like(j, row), j + col_start)

    def lookup(st):
        return apply_oracle(st, table, ("col",), "val", condition=flag_is_zero, index_map=addr)

    def prep(vec: np.ndarray) -> np.ndarray:
        # H on flag, uniform columns, value lookup, flag-controlled
        # rotation, lookup uncompute, closing H on the flag.
        st = QuantumState(layout, vec, check=False)
        st = apply_register_unitary(st, "flag", h)
        st = apply_register_unitary(st, "col", uniform)
        st = lookup(st)
        st = controlled_rotation(st, "val", "anc", c, condition=flag_is_zero,
                                 validate=validate_rotation)
        st = lookup(st)
        st = apply_register_unitary(st, "flag", h)
        return st.amplitudes

    def prep_inv(vec: np.ndarray) -> np.ndarray:
        st = QuantumState(layout, vec, check=False)
        st = apply_register_unitary(st, "flag", h)
        st = lookup(st)
        st = controlled_rotation_inverse(st, "val", "anc", c, condition=flag_is_zero)
        st = lookup(st)
        st = apply_register_unitary(st, "col", uniform)
        st = apply_register_unitary(st, "flag", h)
        return st.amplitudes

    good = layout.index_component("flag") == 1
    grover = GroverOperator(prep=prep, prep_inv=prep_inv, good_mask=good, dim=layout.dim)
    return RowMeanCircuit(
        layout=layout, grover=grover, good_mask=good, c_scale=c, d2=d2,
        oracle_name=table.name,
    )


def uy_flag_probability(circuit: RowMeanCircuit) -> float:
    """Exact P(flag = 1) of the built circuit (the quantity amplitude
    estimation targets)."""
    phi = circuit.grover.initial_state()
    return float(np.sum(np.abs(phi[circuit.good_mask]) ** 2))


@dataclass
class RowMeanEstimator:
    """Reusable sampler for one row's mean estimate."""

    circuit: RowMeanCircuit
    precision_bits: int
    median_reps: int
    distribution: np.ndarray | None = None

    def _ensure_distribution(self):
        if self.distribution is None:
            _, dist = amplitude_estimate(
                self.circuit.grover, self.circuit.good_mask, self.precision_bits,
                np.random.default_rng(0),
            )
            self.distribution = dist

    def sample(self, rng: np.random.Generator, report: ResourceReport | None = None) -> float:
        self._ensure_distribution()
        estimates = []
        for _ in range(self.median_reps):
            est, _ = amplitude_estimate(
                self.circuit.grover, self.circuit.good_mask, self.precision_bits,
                rng, distribution=self.distribution,
            )
            estimates.append(est)
        p_med = median_boost(estimates, self.median_reps)
        c = self.circuit.c_scale
        mean = c * (1.0 - 2.0 * p_med)
        mean = min(max(mean, -c), c)
        if report is not None:
            self.charge(report)
        return mean

    def charge(self, report: ResourceReport) -> None:
        """Oracle-query accounting for one estimate: l amplitude
        estimations, each one initial prep plus 2^t - 1 Grover iterates of
        two preps, at two queries per prep."""
        grovers = (1 << self.precision_bits) - 1
        preps = self.median_reps * (1 + 2 * grovers)
        report.charge_query(self.circuit.oracle_name, self.circuit.queries_per_prep * preps)
        report.charge_gates(preps)
        report.phase_estimation_bits = max(report.phase_estimation_bits, self.precision_bits)


def make_estimator(
    table: OracleTable,
    row: int,
    config: MeanEstimationConfig,
    *,
    col_start: int = 0,
    col_count: int | None = None,
) -> RowMeanEstimator:
    c = config.resolve_c(table)
    circuit = build_uy(table, row, c_scale=c, col_start=col_start, col_count=col_count)
    return RowMeanEstimator(
        circuit=circuit,
        precision_bits=config.resolve_bits(c),
        median_reps=config.resolve_reps(),
    )


def estimate_row_mean(
    table: OracleTable,
    row: int,
    config: MeanEstimationConfig,
    rng: np.random.Generator,
    *,
    report: ResourceReport | None = None,
    col_start: int = 0,
    col_count: int | None = None,
) -> float:
    """Mean of one table row (or padded slice) to within eps w.p. >= 1-2*delta."""
    c = config.resolve_c(table)
    if c == 0.0:
        return 0.0  # all-zero table: the mean is identically zero
    est = make_estimator(table, row, config, col_start=col_start, col_count=col_count)
    return est.sample(rng, report=report)


def row_mean_table(
    table: OracleTable,
    config: MeanEstimationConfig,
    rng: np.random.Generator,
    *,
    fmt: FixedPointFormat | None = None,
    exact: bool = False,
    report: ResourceReport | None = None,
) -> OracleTable:
    """Coherent-mean oracle table: one seeded estimate per row.

    Estimates are clamped to [-C, C] (true means always satisfy the bound)
    and rounded to the output format's grid; with exact=True the true row
    means are injected instead, for isolating downstream error sources.
    """
    values = table.stored_values()
    rows = values.shape[0]
    if exact:
        means = values.mean(axis=1)
    else:
        means = np.array(
            [estimate_row_mean(table, i, config, rng, report=report) for i in range(rows)]
        )
    if fmt is None:
        fmt = FixedPointFormat.for_values(means, max_frac_bits=10)
    grid = fmt.decode_array(fmt.encode_array(means))
    c = config.resolve_c(table)
    grid = np.clip(grid, -c, c)
    return OracleTable.from_values(f"U_mean[{table.name}]", grid, fmt)


def class_mean_table(
    padded_table: OracleTable,
    n_max: int,
    n_classes: int,
    config: MeanEstimationConfig,
    rng: np.random.Generator,
    *,
    fmt: FixedPointFormat | None = None,
    exact: bool = False,
    report: ResourceReport | None = None,
) -> OracleTable:
    """Padded-block mean oracle: entry (i, k) is the estimated mean of row
    k over block i's n_max columns (address arithmetic i*n_max + j)."""
    values = padded_table.stored_values()
    rows = values.shape[0]
    out = np.zeros((n_classes, rows))
    for i in range(n_classes):
        for k in range(rows):
            if exact:
                out[i, k] = values[k, i * n_max : (i + 1) * n_max].mean()
            else:
                out[i, k] = estimate_row_mean(
                    padded_table, k, config, rng,
                    report=report, col_start=i * n_max, col_count=n_max,
                )
    if fmt is None:
        fmt = FixedPointFormat.for_values(out, max_frac_bits=10)
    grid = fmt.decode_array(fmt.encode_array(out))
    c = config.resolve_c(padded_table)
    grid = np.clip(grid, -c, c)
    return OracleTable.from_values(f"U_clsmean[{padded_table.name}]", grid, fmt)


def coherent_mean(
    state: QuantumState,
    mean_table: OracleTable,
    index_reg: str,
    out_reg: str,
    *,
    condition: np.ndarray | None = None,
    index_map=None,
    report: ResourceReport | None = None,
) -> QuantumState:
    """Write the per-index mean estimate into out_reg as an XOR oracle."""
    return apply_oracle(
        state, mean_table, (index_reg,), out_reg,
        condition=condition, index_map=index_map, report=report,
    )


def qms_oracle(
    table: OracleTable,
    config: MeanEstimationConfig,
    rng: np.random.Generator,
    *,
    fmt: FixedPointFormat | None = None,
    report: ResourceReport | None = None,
) -> OracleTable:
    """Mean-subtraction oracle |i>|j>|0> -> |i>|j>|M_ij - mean_i~>.

    Composes the coherent-mean table with the subtraction arithmetic; each
    output entry matches classical centering to within the configured eps.
    """
    means = row_mean_table(table, config, rng, report=report)
    centered = table.stored_values() - means.stored_values()[:, None]
    if fmt is None:
        fmt = FixedPointFormat.for_values(centered, max_frac_bits=10)
    return OracleTable.from_values(f"QMS[{table.name}]", centered, fmt)
