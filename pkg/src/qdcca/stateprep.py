"""Staged preparation of the three factor states and their density operators.

Each preparation follows the same arc: uniform index registers, coherent
mean lookups, reversible arithmetic assembling the factor-matrix entry in
a value register, a controlled rotation writing that entry into an
ancilla amplitude, uncompute of all scratch in reverse stage order, and
fixed-point amplification of the ancilla's |0> branch.  Register formats
are planned from the values they will actually hold, so the arithmetic is
exact and the dense simulation stays within the qubit cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import classical
from .kernel import (
    FixedPointFormat,
    OracleTable,
    QuantumState,
    RegisterLayout,
    ResourceReport,
    apply_oracle,
    apply_register_unitary,
    controlled_rotation,
    fixed_point_amplify,
    ranged_uniform_unitary,
    reg_eq,
    reg_ge,
    set_flags,
    subtract_in_place,
    add_in_place,
    write_function,
)
from .kernel.registers import DEFAULT_QUBIT_CAP
from .meanest import MeanEstimationConfig, class_mean_table, make_estimator, row_mean_table

DEFAULT_INFIDELITY_TARGET = 1e-4


class DegenerateDataError(ValueError):
    """The factor matrix is identically zero; no state to prepare."""


@dataclass(frozen=True)
class ScalingBounds:
    """Rotation normalizations and the density floor assumption.

    alpha bounds the centered-entry magnitudes, beta the class-sum factor
    entries; m0 is the assumed magnitude floor exceeded by at least half
    of the centered entries.
    """

    alpha: float
    beta: float
    m0: float

    @classmethod
    def from_dataset(cls, data: classical.PairedDataset, m0: float | None = None) -> "ScalingBounds":
        mx = data.max_abs_entry
        if m0 is None:
            centered = classical.mean_center(data).stacked
            mags = np.sort(np.abs(centered).ravel())
            # largest floor exceeded by at least half of the entries
            m0 = float(mags[(mags.size - 1) // 2])
            if m0 <= 0:
                m0 = max(mx * 1e-3, 1e-6)
        return cls(alpha=2.0 * mx, beta=2.0 * data.n_max * mx, m0=float(m0))

    def density_fraction(self, data: classical.PairedDataset) -> float:
        """Fraction of centered entries with |entry| >= m0."""
        centered = classical.mean_center(data).stacked
        return float(np.mean(np.abs(centered) >= self.m0 - 1e-12))

    def class_sum_density_fraction(self, data: classical.PairedDataset) -> float:
        """Fraction of class-sum factor entries exceeding n'' * m0."""
        centered = classical.mean_center(data)
        ops = classical.build_operators(centered, data)
        jf = ops.j_factor
        return float(np.mean(np.abs(jf) >= data.n_min * self.m0 - 1e-12))

    def audit(self, data: classical.PairedDataset, mean_tables: "MeanOracles | None" = None):
        """Exhaustive check that the factor entries obey alpha and beta.

        Uses the oracle-table (estimated, clamped) means when given,
        otherwise exact centering.
        """
        if mean_tables is None:
            centered = classical.mean_center(data)
            ops = classical.build_operators(centered, data)
            e_max = float(np.max(np.abs(ops.e_factor)))
            j_max = float(np.max(np.abs(ops.j_factor)))
        else:
            e_max = float(np.max(np.abs(psi_e_entries(data, mean_tables))))
            j_max = float(np.max(np.abs(psi_j_entries(data, mean_tables))))
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "max_e_factor": e_max,
            "max_j_factor": j_max,
            "alpha_ok": e_max <= self.alpha + 1e-12,
            "beta_ok": j_max <= self.beta + 1e-12,
        }


@dataclass(frozen=True)
class DensityOperator:
    """PSD unit-trace matrix with a record of where it came from."""

    matrix: np.ndarray
    provenance: str

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise ValueError("density operator is not Hermitian within 1e-12")
        if abs(np.trace(m).real - 1.0) > 1e-10:
            raise ValueError(f"density operator trace {np.trace(m).real} != 1")
        if float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]) < -1e-10:
            raise ValueError("density operator has an eigenvalue below -1e-10")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def trace_out_first(state: QuantumState) -> DensityOperator:
    """Partial trace over the first register of a two-register state."""
    if len(state.layout.registers) != 2:
        raise ValueError("trace_out_first expects a two-register layout")
    psi = state.tensor()
    rho = psi.T @ psi.conj()
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    return DensityOperator(matrix=rho, provenance=f"Tr1 of {state.layout.names()}")


# ---------------------------------------------------------------------------
# mean-oracle bundle
# ---------------------------------------------------------------------------


@dataclass
class MeanOracles:
    """Seeded mean-estimate tables shared by the three preparations."""

    m_table: OracleTable          # raw M entries
    padded_table: OracleTable     # raw padded class-block entries
    csize_table: OracleTable      # class sizes, unsigned integers
    row_means: OracleTable        # per-row mean estimates of M
    cls_means: OracleTable        # (class, row) padded-block mean estimates
    config: MeanEstimationConfig
    exact: bool
    population_report: ResourceReport
    max_row_mean_error: float
    max_cls_mean_error: float

    def lemma1_unit_queries(self) -> int:
        """Oracle queries of one coherent mean application (one Lemma-1
        run: l amplitude estimations of 2^t-1 Grover iterates each)."""
        c = self.config.resolve_c(self.m_table)
        if c == 0:
            return 0
        t = self.config.resolve_bits(c)
        l = self.config.resolve_reps()
        return 2 * l * (1 + 2 * ((1 << t) - 1))


def mean_register_format(max_abs: float, frac_bits: int) -> FixedPointFormat:
    """Estimate-register format: frac_bits of resolution, range to max_abs.

    frac_bits trades rounding error (<= 2^-(frac+1), part of the realized
    mean error) against register width and thus simulator footprint.
    """
    res = 2.0**-frac_bits
    int_bits = max(0, math.ceil(math.log2(max_abs + res))) if max_abs > 0 else 0
    return FixedPointFormat(int_bits=int_bits, frac_bits=frac_bits)


def build_mean_oracles(
    data: classical.PairedDataset,
    config: MeanEstimationConfig,
    rng: np.random.Generator,
    *,
    exact: bool = False,
    mean_frac_bits: int = 4,
    injected_row_means: np.ndarray | None = None,
) -> MeanOracles:
    """Estimate (or inject) every mean the staged circuits will look up.

    Table population runs one seeded estimation per index; its queries are
    recorded in a side report, while each coherent application inside a
    preparation charges one Lemma-1 unit (the algorithm applies the mean
    unitary in superposition).
    """
    m = data.m_matrix
    padded = classical.pad_classes(data).padded_matrix
    m_fmt = FixedPointFormat.for_values(m, max_frac_bits=10)
    m_table = OracleTable.from_values("O_M", m, m_fmt)
    padded_table = OracleTable.from_values("O_Mcal", padded, m_fmt)
    csize_fmt = FixedPointFormat(
        int_bits=max(1, math.ceil(math.log2(data.n_max + 1))), frac_bits=0, signed=False
    )
    csize_table = OracleTable.from_values("O_c", np.asarray(data.class_sizes, float), csize_fmt)

    pop_report = ResourceReport(stage="mean-table population")
    est_fmt = mean_register_format(data.max_abs_entry, mean_frac_bits)
    true_row = m.mean(axis=1)
    true_cls = np.stack(
        [padded[:, i * data.n_max : (i + 1) * data.n_max].mean(axis=1) for i in range(data.c)]
    )
    if injected_row_means is not None:
        fmt = FixedPointFormat.for_values(injected_row_means, max_frac_bits=10)
        row_means = OracleTable.from_values("U_mean[O_M]", injected_row_means, fmt)
    else:
        # exact mode still budgets the register grid; non-dyadic means
        # round onto it and the deviation lands in the recorded error
        fmt_row = (
            FixedPointFormat.for_values(true_row, max_frac_bits=mean_frac_bits)
            if exact else est_fmt
        )
        row_means = row_mean_table(
            m_table, config, rng, fmt=fmt_row, exact=exact, report=pop_report,
        )
    fmt_cls = (
        FixedPointFormat.for_values(true_cls, max_frac_bits=mean_frac_bits)
        if exact else est_fmt
    )
    cls_means = class_mean_table(
        padded_table, data.n_max, data.c, config, rng,
        fmt=fmt_cls, exact=exact, report=pop_report,
    )

    return MeanOracles(
        m_table=m_table,
        padded_table=padded_table,
        csize_table=csize_table,
        row_means=row_means,
        cls_means=cls_means,
        config=config,
        exact=exact,
        population_report=pop_report,
        max_row_mean_error=float(np.max(np.abs(row_means.stored_values() - true_row))),
        max_cls_mean_error=float(np.max(np.abs(cls_means.stored_values() - true_cls))),
    )


# ---------------------------------------------------------------------------
# factor entries as the circuits will realize them
# ---------------------------------------------------------------------------


def psi_e_entries(data: classical.PairedDataset, oracles: MeanOracles) -> np.ndarray:
    """(p+q) x 2n factor-entry matrix using the oracle means."""
    m = oracles.m_table.stored_values()
    means = oracles.row_means.stored_values()
    p, q, n = data.p, data.q, data.n
    out = np.zeros((p + q, 2 * n))
    out[:p, :n] = m[:p] - means[:p, None]
    out[p:, n:] = m[p:] - means[p:, None]
    return out


def psi_j_entries(data: classical.PairedDataset, oracles: MeanOracles) -> np.ndarray:
    """(p+q) x c factor entries n' * clsmean_ik - n_i * rowmean_k."""
    cls = oracles.cls_means.stored_values()  # (c, p+q)
    row = oracles.row_means.stored_values()  # (p+q,)
    sizes = np.asarray(data.class_sizes, float)
    return (data.n_max * cls - sizes[:, None] * row[None, :]).T


def psi_k_entries(data: classical.PairedDataset, oracles: MeanOracles) -> np.ndarray:
    """(p+q) x 2c block-routed factor entries (zeros off the two blocks)."""
    j_entries = psi_j_entries(data, oracles)  # (p+q, c)
    p, c = data.p, data.c
    out = np.zeros((data.p + data.q, 2 * c))
    out[:p, :c] = j_entries[:p, :]
    out[p:, c:] = j_entries[p:, :]
    return out


def exact_target_amplitudes(entries: np.ndarray, shape: tuple[int, int], transpose: bool) -> np.ndarray:
    """Unit vector of factor entries laid out on a padded register grid.

    entries is (rows, cols); the state grid is `shape` (dim0, dim1) with
    amplitude entries[r, c] at (c, r) when transpose else (r, c).
    """
    grid = np.zeros(shape)
    if transpose:
        grid[: entries.shape[1], : entries.shape[0]] = entries.T
    else:
        grid[: entries.shape[0], : entries.shape[1]] = entries
    norm = np.linalg.norm(grid)
    if norm <= 0:
        raise DegenerateDataError("factor matrix is identically zero")
    return (grid / norm).reshape(-1)


# ---------------------------------------------------------------------------
# preparation results
# ---------------------------------------------------------------------------


@dataclass
class PrepResult:
    name: str
    state: QuantumState
    compressed: QuantumState
    target: np.ndarray            # exact-mean classical amplitudes
    realized: np.ndarray          # oracle-mean amplitudes (circuit's own limit)
    fidelity: float               # |<compressed|target>|
    state_error: float            # l2 distance of compressed vs target
    good_probability: float       # pre-amplification ancilla success
    postselect_probability: float
    report: ResourceReport
    flags: dict = field(default_factory=dict)

    def density_operator(self) -> DensityOperator:
        return trace_out_first(self.compressed)


def _good_probability(state: QuantumState, cond) -> float:
    idx = np.nonzero(state.amplitudes)[0]
    mask = cond.eval(state.layout, idx)
    return float(np.sum(np.abs(state.amplitudes[idx][mask]) ** 2))


def _uniform(st: QuantumState, reg: str, count: int, report: ResourceReport) -> QuantumState:
    u = ranged_uniform_unitary(st.layout.register(reg).width, count)
    report.charge_gates(1)
    return apply_register_unitary(st, reg, u)


def _compress(state: QuantumState, keep: tuple[str, str], target: np.ndarray):
    """Post-select all non-kept registers on |0> and phase-align."""
    layout = state.layout
    t = state.tensor()
    idx = [slice(None) if r.name in keep else 0 for r in layout.registers]
    sub = t[tuple(idx)]
    kept_axes = [r for r in layout.registers if r.name in keep]
    flat = sub.reshape(-1)
    p_sel = float(np.linalg.norm(flat) ** 2)
    if p_sel <= 0:
        raise DegenerateDataError("post-selection removed all amplitude")
    flat = flat / np.linalg.norm(flat)
    overlap = np.vdot(target, flat)
    if abs(overlap) > 1e-12:
        flat = flat * (overlap.conjugate() / abs(overlap))
    comp_layout = RegisterLayout([(r.name, r.width, r.fmt) for r in kept_axes],
                                 qubit_cap=layout.qubit_cap)
    return QuantumState(comp_layout, flat, check=False), p_sel


def prepare_psi_e(
    data: classical.PairedDataset,
    bounds: ScalingBounds,
    infidelity_target: float = DEFAULT_INFIDELITY_TARGET,
    *,
    oracles: MeanOracles,
    qubit_cap: int = DEFAULT_QUBIT_CAP,
    lambda_bound: str = "measured",
) -> PrepResult:
    """Stages (1.1)-(1.7): the centered-data factor state over |j>|i>."""
    p, q, n = data.p, data.q, data.n
    pq = p + q
    report = ResourceReport(stage="U_E")

    entries = psi_e_entries(data, oracles)
    if np.linalg.norm(entries) <= 0:
        raise DegenerateDataError("degenerate centered data: all factor entries vanish")

    mean_fmt = oracles.row_means.fmt
    m_vals = oracles.m_table.stored_values()
    val_pool = np.concatenate([m_vals.ravel(), entries.ravel(), [0.0]])
    val_fmt = FixedPointFormat.for_values(val_pool, max_frac_bits=10)

    w_j = max(1, math.ceil(math.log2(2 * n)))
    w_i = max(1, math.ceil(math.log2(pq)))
    layout = RegisterLayout(
        [
            ("j", w_j),
            ("i", w_i),
            ("mean", mean_fmt.width, mean_fmt),
            ("val", val_fmt.width, val_fmt),
            ("flags", 2),
            ("anc", 1),
        ],
        qubit_cap=qubit_cap,
    )
    report.observe_qubits(layout.total_qubits)

    st = QuantumState.zero(layout)
    st = _uniform(st, "j", 2 * n, report)
    st = _uniform(st, "i", pq, report)

    flag_bits = [(1, reg_ge("j", n)), (0, reg_ge("i", p))]

    def flags_eq(v):
        return reg_eq("flags", v)

    def compute(st):
        # (1.2) coherent row means; one Lemma-1 unit per application
        st = apply_oracle(st, oracles.row_means, ("i",), "mean", report=report)
        report.charge_query("O_M", oracles.lemma1_unit_queries())
        # (1.3) block flags
        st = set_flags(st, "flags", flag_bits, report=report)
        # (1.4) raw entry lookup on the two diagonal blocks
        st = apply_oracle(
            st, oracles.m_table, ("i", "j"), "val",
            condition=flags_eq(0b00), report=report,
        )
        st = apply_oracle(
            st, oracles.m_table, ("i", "j"), "val",
            condition=flags_eq(0b11),
            index_map=lambda i, j: (i, j - n),
            report=report,
        )
        # (1.5) subtract the mean on the populated blocks
        st = subtract_in_place(
            st, "val", "mean",
            condition=flags_eq(0b00) | flags_eq(0b11), report=report,
        )
        return st

    def uncompute(st):
        st = add_in_place(
            st, "val", "mean",
            condition=flags_eq(0b00) | flags_eq(0b11), report=report,
        )
        st = apply_oracle(
            st, oracles.m_table, ("i", "j"), "val",
            condition=flags_eq(0b11),
            index_map=lambda i, j: (i, j - n), report=report,
        )
        st = apply_oracle(
            st, oracles.m_table, ("i", "j"), "val",
            condition=flags_eq(0b00), report=report,
        )
        st = set_flags(st, "flags", flag_bits, report=report)
        st = apply_oracle(st, oracles.row_means, ("i",), "mean", report=report)
        report.charge_query("O_M", oracles.lemma1_unit_queries())
        return st

    st = compute(st)
    # (1.6) rotation then reverse-stage uncompute
    st = controlled_rotation(st, "val", "anc", bounds.alpha, report=report)
    st = uncompute(st)

    good = reg_eq("anc", 0)
    p_good = _good_probability(st, good)

    lam = p_good if lambda_bound == "measured" else bounds.m0**2 / (4.0 * bounds.alpha**2)
    density = bounds.density_fraction(data)
    flags = {"m0_density": density, "m0_assumption_ok": density >= 0.5}
    if not flags["m0_assumption_ok"]:
        report.notes.append(f"m0 density assumption violated: fraction {density:.3f} < 1/2")
    lam = min(lam, p_good)

    st = fixed_point_amplify(
        st, good, infidelity_target, lambda_lower=lam, report=report
    )

    realized = exact_target_amplitudes(entries, (1 << w_j, 1 << w_i), transpose=True)
    centered = classical.mean_center(data)
    ops = classical.build_operators(centered, data)
    target = exact_target_amplitudes(ops.e_factor, (1 << w_j, 1 << w_i), transpose=True)
    compressed, p_sel = _compress(st, ("j", "i"), target)
    fid = float(abs(np.vdot(target, compressed.amplitudes)))
    err = float(np.linalg.norm(compressed.amplitudes - target))
    flags["max_mean_error"] = oracles.max_row_mean_error
    return PrepResult(
        name="psi_E", state=st, compressed=compressed, target=target,
        realized=realized, fidelity=fid, state_error=err,
        good_probability=p_good, postselect_probability=p_sel,
        report=report, flags=flags,
    )


def _prepare_class_sum_state(
    data: classical.PairedDataset,
    bounds: ScalingBounds,
    infidelity_target: float,
    oracles: MeanOracles,
    qubit_cap: int,
    lambda_bound: str,
    *,
    doubled: bool,
) -> PrepResult:
    """Shared core of the class-sum preparations; doubled=True routes the
    two view blocks onto a 2c-wide index with flag logic."""
    p, q, c = data.p, data.q, data.c
    pq = p + q
    n_max = data.n_max
    name = "psi_K" if doubled else "psi_J"
    report = ResourceReport(stage="U_K" if doubled else "U_J")

    j_entries = psi_j_entries(data, oracles)
    entries = psi_k_entries(data, oracles) if doubled else j_entries
    if np.linalg.norm(entries) <= 0:
        raise DegenerateDataError(f"{name}: class-sum factor is identically zero")

    cls_fmt = oracles.cls_means.fmt
    row_fmt = oracles.row_means.fmt
    csize_fmt = oracles.csize_table.fmt

    cls_vals = oracles.cls_means.stored_values()
    sizes = np.asarray(data.class_sizes, float)
    row_vals = oracles.row_means.stored_values()
    val_pool = np.concatenate(
        [(n_max * cls_vals).ravel(), j_entries.ravel(), [0.0]]
    )
    val_fmt = FixedPointFormat.for_values(val_pool, max_frac_bits=10)

    w_i = max(1, math.ceil(math.log2(2 * c if doubled else c))) if (c > 1 or doubled) else 1
    w_k = max(1, math.ceil(math.log2(pq)))
    regs = [
        ("i", w_i),
        ("k", w_k),
        ("clsmean", cls_fmt.width, cls_fmt),
        ("val", val_fmt.width, val_fmt),
        ("rowmean", row_fmt.width, row_fmt),
        ("csize", csize_fmt.width, csize_fmt),
    ]
    if doubled:
        regs.append(("flags", 2))
    regs.append(("anc", 1))
    layout = RegisterLayout(regs, qubit_cap=qubit_cap)
    report.observe_qubits(layout.total_qubits)

    st = QuantumState.zero(layout)
    st = _uniform(st, "i", 2 * c if doubled else c, report)
    st = _uniform(st, "k", pq, report)

    if doubled:
        flag_bits = [(1, reg_ge("i", c)), (0, reg_ge("k", p))]
        cond_x = reg_eq("flags", 0b00)
        cond_y = reg_eq("flags", 0b11)
        cond_blocks = cond_x | cond_y
    else:
        flag_bits = None
        cond_x = cond_y = cond_blocks = None

    unit = oracles.lemma1_unit_queries()

    def compute(st):
        if doubled:
            st = set_flags(st, "flags", flag_bits, report=report)
            # (3.3) class means on the two routed blocks
            st = apply_oracle(st, oracles.cls_means, ("i", "k"), "clsmean",
                              condition=cond_x, report=report)
            st = apply_oracle(st, oracles.cls_means, ("i", "k"), "clsmean",
                              condition=cond_y,
                              index_map=lambda i, k: (i - c, k), report=report)
        else:
            # (2.2)
            st = apply_oracle(st, oracles.cls_means, ("i", "k"), "clsmean", report=report)
        report.charge_query("O_Mcal", unit)
        # (2.3)/(3.4) val <- n' * clsmean
        st = write_function(st, "clsmean", "val", lambda x: n_max * x,
                            condition=cond_blocks, report=report)
        # (2.4)/(3.5) row means, unconditioned
        st = apply_oracle(st, oracles.row_means, ("k",), "rowmean", report=report)
        report.charge_query("O_M", unit)
        # (2.5)/(3.6) class sizes
        if doubled:
            st = apply_oracle(st, oracles.csize_table, ("i",), "csize",
                              condition=cond_x, report=report)
            st = apply_oracle(st, oracles.csize_table, ("i",), "csize",
                              condition=cond_y,
                              index_map=lambda i: (i - c,), report=report)
        else:
            st = apply_oracle(st, oracles.csize_table, ("i",), "csize", report=report)
        # (2.5)/(3.7) val <- val - n_i * rowmean
        st = subtract_in_place(st, "val", "rowmean", multiplier_reg="csize",
                               condition=cond_blocks, report=report)
        return st

    def uncompute(st):
        st = add_in_place(st, "val", "rowmean", multiplier_reg="csize",
                          condition=cond_blocks, report=report)
        if doubled:
            st = apply_oracle(st, oracles.csize_table, ("i",), "csize",
                              condition=cond_y,
                              index_map=lambda i: (i - c,), report=report)
            st = apply_oracle(st, oracles.csize_table, ("i",), "csize",
                              condition=cond_x, report=report)
        else:
            st = apply_oracle(st, oracles.csize_table, ("i",), "csize", report=report)
        st = apply_oracle(st, oracles.row_means, ("k",), "rowmean", report=report)
        report.charge_query("O_M", unit)
        st = write_function(st, "clsmean", "val", lambda x: n_max * x,
                            condition=cond_blocks, report=report)
        if doubled:
            st = apply_oracle(st, oracles.cls_means, ("i", "k"), "clsmean",
                              condition=cond_y,
                              index_map=lambda i, k: (i - c, k), report=report)
            st = apply_oracle(st, oracles.cls_means, ("i", "k"), "clsmean",
                              condition=cond_x, report=report)
            st = set_flags(st, "flags", flag_bits, report=report)
        else:
            st = apply_oracle(st, oracles.cls_means, ("i", "k"), "clsmean", report=report)
        report.charge_query("O_Mcal", unit)
        return st

    st = compute(st)
    st = controlled_rotation(st, "val", "anc", bounds.beta, report=report)
    st = uncompute(st)

    good = reg_eq("anc", 0)
    p_good = _good_probability(st, good)

    denom = 2.0 if doubled else 1.0
    lam_assumed = (data.n_min * bounds.m0) ** 2 / (2.0 * denom * bounds.beta**2)
    lam = p_good if lambda_bound == "measured" else lam_assumed
    lam = min(lam, p_good)
    density = bounds.class_sum_density_fraction(data)
    flags = {"class_sum_density": density, "class_sum_assumption_ok": density >= 0.5}
    if not flags["class_sum_assumption_ok"]:
        report.notes.append(
            f"class-sum density assumption violated: fraction {density:.3f} < 1/2"
        )

    st = fixed_point_amplify(st, good, infidelity_target, lambda_lower=lam, report=report)

    centered = classical.mean_center(data)
    ops = classical.build_operators(centered, data)
    if doubled:
        exact_entries = np.zeros((pq, 2 * c))
        exact_entries[:p, :c] = ops.j_factor[:p]
        exact_entries[p:, c:] = ops.j_factor[p:]
    else:
        exact_entries = ops.j_factor
    shape = (1 << w_i, 1 << w_k)
    target = exact_target_amplitudes(exact_entries, shape, transpose=True)
    realized = exact_target_amplitudes(entries, shape, transpose=True)
    compressed, p_sel = _compress(st, ("i", "k"), target)
    fid = float(abs(np.vdot(target, compressed.amplitudes)))
    err = float(np.linalg.norm(compressed.amplitudes - target))
    flags["max_mean_error"] = max(oracles.max_row_mean_error, oracles.max_cls_mean_error)
    return PrepResult(
        name=name, state=st, compressed=compressed, target=target,
        realized=realized, fidelity=fid, state_error=err,
        good_probability=p_good, postselect_probability=p_sel,
        report=report, flags=flags,
    )


def prepare_psi_j(
    data: classical.PairedDataset,
    bounds: ScalingBounds,
    infidelity_target: float = DEFAULT_INFIDELITY_TARGET,
    *,
    oracles: MeanOracles,
    qubit_cap: int = DEFAULT_QUBIT_CAP,
    lambda_bound: str = "measured",
) -> PrepResult:
    """Stages (2.1)-(2.7): the class-sum factor state over |i>|k>."""
    return _prepare_class_sum_state(
        data, bounds, infidelity_target, oracles, qubit_cap, lambda_bound, doubled=False
    )


def prepare_psi_k(
    data: classical.PairedDataset,
    bounds: ScalingBounds,
    infidelity_target: float = DEFAULT_INFIDELITY_TARGET,
    *,
    oracles: MeanOracles,
    qubit_cap: int = DEFAULT_QUBIT_CAP,
    lambda_bound: str = "measured",
) -> PrepResult:
    """Stages (3.1)-(3.8): the block-diagonal class-sum state over |i>|k>."""
    return _prepare_class_sum_state(
        data, bounds, infidelity_target, oracles, qubit_cap, lambda_bound, doubled=True
    )


# ---------------------------------------------------------------------------
# error law and trace-ratio estimation
# ---------------------------------------------------------------------------


def state_error_bound(max_entry: float, m0: float, eps1: float) -> float:
    """Closed-form bound on || |psi~_E> - |psi_E> ||_2 under per-entry
    mean error eps1, for datasets meeting the m0 density floor."""
    a = 8.0 * max_entry * eps1 / m0**2
    b = 2.0 * eps1**2 / m0**2
    return math.sqrt(1.0 + a + b) - 1.0 + math.sqrt(2.0) * eps1 / m0


def perturbed_psi_e_error(
    data: classical.PairedDataset, eps1: float, rng: np.random.Generator
) -> tuple[float, float]:
    """Inject +-eps1 on every populated factor entry and measure the state
    error against the exact state; returns (measured, bound)."""
    centered = classical.mean_center(data)
    ops = classical.build_operators(centered, data)
    e_fac = ops.e_factor
    mask = np.zeros_like(e_fac, dtype=bool)
    p, n = data.p, data.n
    mask[:p, :n] = True
    mask[p:, n:] = True
    signs = rng.choice([-1.0, 1.0], size=e_fac.shape)
    perturbed = e_fac + eps1 * signs * mask
    v0 = e_fac.ravel() / np.linalg.norm(e_fac)
    v1 = perturbed.ravel() / np.linalg.norm(perturbed)
    measured = float(np.linalg.norm(v1 - v0))
    m0_bounds = ScalingBounds.from_dataset(data)
    return measured, state_error_bound(data.max_abs_entry, m0_bounds.m0, eps1)


@dataclass(frozen=True)
class TraceRatioEstimate:
    ratio: float
    std_error: float
    p_e: float
    p_j: float
    samples: int
    upper_bound: float

    def within(self, truth: float, n_sigma: float = 3.0) -> bool:
        return abs(self.ratio - truth) <= n_sigma * self.std_error


def estimate_trace_ratio(
    data: classical.PairedDataset,
    bounds: ScalingBounds,
    samples: int,
    rng: np.random.Generator,
    *,
    oracles: MeanOracles,
    report: ResourceReport | None = None,
) -> TraceRatioEstimate:
    """Measure the rotation ancillas of the pre-amplification states of the
    centered-data and class-sum preparations and form the trace ratio."""
    if samples < 100:
        raise ValueError("need at least 100 samples per state")
    pq = data.p + data.q
    e_entries = psi_e_entries(data, oracles)
    j_entries = psi_j_entries(data, oracles)
    p_e = float(np.sum(e_entries**2) / (2 * data.n * pq * bounds.alpha**2))
    p_j = float(np.sum(j_entries**2) / (data.c * pq * bounds.beta**2))

    hits_e = int(rng.binomial(samples, p_e))
    hits_j = int(rng.binomial(samples, p_j))
    if hits_e == 0 or hits_j == 0:
        raise ValueError(
            f"zero ancilla successes at {samples} samples "
            f"(p_E={p_e:.2e}, p_J={p_j:.2e}); increase samples to "
            f">= {int(10 / max(min(p_e, p_j), 1e-12))}"
        )
    est_e = hits_e / samples
    est_j = hits_j / samples
    scale = (data.c * pq * bounds.beta**2) / (2 * data.n * pq * bounds.alpha**2)
    ratio = scale * est_j / est_e
    var_rel = (1 - est_j) / (samples * est_j) + (1 - est_e) / (samples * est_e)
    se = ratio * math.sqrt(max(var_rel, 0.0))
    upper = 2.0 * data.n * data.max_abs_entry**2 / bounds.m0**2
    if report is not None:
        report.charge_query("ancilla_measurements", 2 * samples)
    return TraceRatioEstimate(
        ratio=ratio, std_error=se, p_e=p_e, p_j=p_j, samples=samples, upper_bound=upper
    )
