"""Classical-table-backed oracle unitaries and reversible arithmetic.

All oracles here are basis permutations: a lookup value is XORed into the
output register's fixed-point code, so applying the same oracle twice is
the identity.  Arithmetic updates (in-place add/subtract/multiply-add) use
modular two's-complement arithmetic on the codes, which is exact whenever
the planned formats hold every operand and result.  Every operation acts
on the populated support only, so sparse states stay cheap inside large
register files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .registers import Condition, EncodingError, FixedPointFormat, QuantumState
from .resources import ResourceReport


@dataclass
class OracleTable:
    """Mapping from index tuples to fixed-point codes.

    `shape` declares the index domain; rejection of unrepresentable values
    happens here, at construction time.
    """

    name: str
    shape: tuple[int, ...]
    fmt: FixedPointFormat
    codes: np.ndarray = field(repr=False, default=None)
    values: np.ndarray = field(repr=False, default=None)
    queries: int = 0

    @classmethod
    def from_values(
        cls, name: str, values: np.ndarray, fmt: FixedPointFormat | None = None
    ) -> "OracleTable":
        values = np.asarray(values, dtype=float)
        if fmt is None:
            fmt = FixedPointFormat.for_values(values)
        flat = values.reshape(-1)
        codes = np.empty(flat.size, dtype=np.int64)
        for i, v in enumerate(flat):
            try:
                codes[i] = fmt.encode(v)
            except EncodingError as exc:
                raise EncodingError(f"oracle {name!r}: {exc}") from exc
        return cls(
            name=name,
            shape=values.shape,
            fmt=fmt,
            codes=codes.reshape(values.shape),
            values=values,
        )

    def stored_values(self) -> np.ndarray:
        """Values as the register will actually hold them (post-rounding)."""
        return self.fmt.decode_array(self.codes)

    def codes_for(self, fmt: FixedPointFormat) -> np.ndarray:
        """Codes re-encoded into another register's format (validated)."""
        if fmt == self.fmt:
            return self.codes
        vals = self.stored_values()
        _check_representable(fmt, vals, f"oracle {self.name!r} re-encoding")
        flat = np.array([fmt.encode(v) for v in vals.ravel()], dtype=np.int64)
        return flat.reshape(self.shape)

    def lookup_code(self, *index: int) -> int:
        return int(self.codes[tuple(index)])


def _check_representable(fmt: FixedPointFormat, values: np.ndarray, what: str) -> None:
    for v in np.unique(np.asarray(values, dtype=float)):
        try:
            fmt.encode(v, exact=True)
        except EncodingError as exc:
            raise EncodingError(f"{what}: {exc}") from exc


def _permute_support(state: QuantumState, dest_of) -> QuantumState:
    """Apply a basis permutation given a map from populated indices to
    their destinations."""
    amps = state.amplitudes
    idx = np.nonzero(amps)[0]
    if idx.size == 0:
        return state.copy()
    dest = dest_of(idx)
    out = np.zeros_like(amps)
    out[dest] = amps[idx]
    return state.with_amplitudes(out, check=False)


def _active_mask(layout, idx: np.ndarray, condition: Condition | None) -> np.ndarray:
    if condition is None:
        return np.ones(idx.size, dtype=bool)
    return condition.eval(layout, idx)


def apply_oracle(
    state: QuantumState,
    table: OracleTable,
    in_regs,
    out_reg: str,
    *,
    condition: Condition | None = None,
    index_map=None,
    report: ResourceReport | None = None,
) -> QuantumState:
    """XOR the table value addressed by `in_regs` into `out_reg`.

    condition: optional predicate restricting where the oracle acts (used
        for flag-controlled branches).
    index_map: optional callable mapping the tuple of index-register value
        arrays to table-index arrays (for address arithmetic like j -> j-n).
    """
    layout = state.layout
    if isinstance(in_regs, str):
        in_regs = (in_regs,)
    dst_fmt = layout.register(out_reg).fmt
    codes = table.codes if dst_fmt is None else table.codes_for(dst_fmt)

    def dest_of(idx):
        comps = [layout.component_of(r, idx) for r in in_regs]
        if index_map is not None:
            comps = list(index_map(*comps))
        if len(comps) != len(codes.shape):
            raise ValueError(
                f"oracle {table.name!r} expects {len(codes.shape)} indices, got {len(comps)}"
            )
        active = _active_mask(layout, idx, condition)
        # indices outside the declared domain (padding tails, other flag
        # branches) are left untouched; they carry no amplitude when the
        # branch logic is right
        for comp, extent in zip(comps, codes.shape):
            active &= (comp >= 0) & (comp < extent)
        looked = np.zeros(idx.size, dtype=np.int64)
        clipped = tuple(np.clip(c, 0, e - 1) for c, e in zip(comps, codes.shape))
        looked[active] = codes[tuple(c[active] for c in clipped)]
        out_comp = layout.component_of(out_reg, idx)
        return layout.replace_component(out_reg, idx, out_comp ^ looked)

    out = _permute_support(state, dest_of)
    table.queries += 1
    if report is not None:
        report.charge_query(table.name)
        report.charge_gates(1)
    return out


def write_function(
    state: QuantumState,
    src_reg: str,
    dst_reg: str,
    fn,
    *,
    condition: Condition | None = None,
    report: ResourceReport | None = None,
) -> QuantumState:
    """|x>|z> -> |x>|z xor enc(f(x))> with x decoded from src's format.

    The image of every populated x must be exactly representable in dst's
    format; that is validated against the populated values before acting.
    """
    layout = state.layout
    src_fmt = layout.fmt(src_reg)
    dst_fmt = layout.fmt(dst_reg)

    def dest_of(idx):
        active = _active_mask(layout, idx, condition)
        src_vals = src_fmt.decode_array(layout.component_of(src_reg, idx))
        if np.any(active):
            _check_representable(dst_fmt, fn(np.unique(src_vals[active])), f"U_f into {dst_reg!r}")
        out = dst_fmt.encode_array(fn(src_vals))
        dst_comp = layout.component_of(dst_reg, idx)
        new_dst = np.where(active, dst_comp ^ out, dst_comp)
        return layout.replace_component(dst_reg, idx, new_dst)

    out = _permute_support(state, dest_of)
    if report is not None:
        report.charge_gates(1)
    return out


def _shift_in_place(state, value_reg, amount_reg, multiplier_reg, condition, sign, report):
    layout = state.layout
    v_fmt = layout.fmt(value_reg)
    a_fmt = layout.fmt(amount_reg)

    def dest_of(idx):
        active = _active_mask(layout, idx, condition)
        a_vals = a_fmt.decode_array(layout.component_of(amount_reg, idx))
        if multiplier_reg is not None:
            m_fmt = layout.fmt(multiplier_reg)
            m_vals = m_fmt.decode_array(layout.component_of(multiplier_reg, idx))
        else:
            m_vals = np.ones(idx.size)
        v_comp = layout.component_of(value_reg, idx)
        if sign < 0 and np.any(active):
            # exactness check on the true results of the populated states
            v_vals = v_fmt.decode_array(v_comp)
            results = v_vals[active] - m_vals[active] * a_vals[active]
            _check_representable(v_fmt, results, f"QMA result in {value_reg!r}")
        delta = np.round(m_vals * a_vals * 2**v_fmt.frac_bits).astype(np.int64)
        modulus = 1 << v_fmt.width
        new_v = np.where(active, (v_comp + sign * delta) % modulus, v_comp)
        return layout.replace_component(value_reg, idx, new_v)

    out = _permute_support(state, dest_of)
    if report is not None:
        report.charge_gates(1)
    return out


def subtract_in_place(
    state: QuantumState,
    value_reg: str,
    amount_reg: str,
    *,
    multiplier_reg: str | None = None,
    condition: Condition | None = None,
    report: ResourceReport | None = None,
) -> QuantumState:
    """Reversible v -> v - m*a (m from multiplier_reg, default 1) on the
    value register, in modular two's-complement arithmetic.

    Exactness requires the scaled amount to land on the value register's
    grid and the true result to stay in range; both are checked on the
    populated basis states.
    """
    return _shift_in_place(state, value_reg, amount_reg, multiplier_reg, condition, -1, report)


def add_in_place(
    state: QuantumState,
    value_reg: str,
    amount_reg: str,
    *,
    multiplier_reg: str | None = None,
    condition: Condition | None = None,
    report: ResourceReport | None = None,
) -> QuantumState:
    """Inverse of subtract_in_place."""
    return _shift_in_place(state, value_reg, amount_reg, multiplier_reg, condition, +1, report)


def set_flags(
    state: QuantumState,
    flag_reg: str,
    bits,
    *,
    report: ResourceReport | None = None,
) -> QuantumState:
    """XOR flag bits computed from index predicates.

    bits: sequence of (bit_position, Condition) pairs; classically
    controlled X gates in circuit terms, an involution.
    """
    layout = state.layout
    bits = tuple(bits)

    def dest_of(idx):
        comp = layout.component_of(flag_reg, idx)
        new = comp.copy()
        for bit, cond in bits:
            mask = cond.eval(layout, idx)
            new = np.where(mask, new ^ (1 << bit), new)
        return layout.replace_component(flag_reg, idx, new)

    out = _permute_support(state, dest_of)
    if report is not None:
        report.charge_gates(len(bits))
    return out
