"""Multi-register state vectors and two's-complement fixed-point formats.

A layout names its registers in order; the first register is the most
significant block of the basis index, so amplitudes reshape naturally to
one tensor axis per register.  Arithmetic registers carry a fixed-point
format (sign bit, integer bits, fraction bits) used by the table and
arithmetic oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_QUBIT_CAP = 24
NORM_TOL = 1e-10


class QubitCapError(ValueError):
    """Layout would exceed the simulator's qubit budget."""


class EncodingError(ValueError):
    """A value cannot be represented in the target fixed-point format."""


@dataclass(frozen=True)
class FixedPointFormat:
    """Two's-complement fixed point: value = signed_int(code) / 2^frac_bits."""

    int_bits: int = 4
    frac_bits: int = 7
    signed: bool = True

    @property
    def width(self) -> int:
        return self.int_bits + self.frac_bits + (1 if self.signed else 0)

    @property
    def resolution(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def max_value(self) -> float:
        return (2 ** (self.width - 1) - 1 if self.signed else 2**self.width - 1) * self.resolution

    @property
    def min_value(self) -> float:
        return -(2 ** (self.width - 1)) * self.resolution if self.signed else 0.0

    def encode(self, value: float, *, exact: bool = False) -> int:
        """Code for `value`, rounding to the grid (reject overflow).

        With exact=True, values off the grid are rejected instead of
        rounded.
        """
        scaled = value * 2**self.frac_bits
        code = int(round(scaled))
        if exact and abs(scaled - code) > 1e-9:
            raise EncodingError(f"{value} is not on the 2^-{self.frac_bits} grid")
        lo = -(2 ** (self.width - 1)) if self.signed else 0
        hi = 2 ** (self.width - 1) - 1 if self.signed else 2**self.width - 1
        if code < lo or code > hi:
            raise EncodingError(
                f"{value} overflows fixed-point format "
                f"(sign={self.signed}, int={self.int_bits}, frac={self.frac_bits})"
            )
        return code % (2**self.width)

    def decode(self, code: int) -> float:
        code = int(code) % (2**self.width)
        if self.signed and code >= 2 ** (self.width - 1):
            code -= 2**self.width
        return code * self.resolution

    def encode_array(self, values: np.ndarray) -> np.ndarray:
        """Vectorized encode, wrapping modulo 2^width (no range check)."""
        codes = np.round(np.asarray(values, dtype=float) * 2**self.frac_bits).astype(np.int64)
        return codes % (1 << self.width)

    def decode_array(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64) % (2**self.width)
        if self.signed:
            codes = np.where(codes >= 2 ** (self.width - 1), codes - 2**self.width, codes)
        return codes * self.resolution

    def representable(self, value: float) -> bool:
        try:
            self.encode(value, exact=True)
        except EncodingError:
            return False
        return True

    @classmethod
    def for_values(
        cls,
        values,
        *,
        max_frac_bits: int = 12,
        extra_int_bits: int = 0,
    ) -> "FixedPointFormat":
        """Minimal signed format representing every value exactly.

        Falls back to max_frac_bits of fraction (values then round) when an
        exact grid would be too fine.
        """
        vals = np.atleast_1d(np.asarray(values, dtype=float)).ravel()
        if vals.size == 0:
            return cls(int_bits=1, frac_bits=1)
        frac = 0
        for v in vals:
            f = 0
            x = float(v)
            while f < max_frac_bits and abs(x * 2**f - round(x * 2**f)) > 1e-9:
                f += 1
            frac = max(frac, f)
        top = float(np.max(np.abs(vals)))
        # need 2^int_bits > max scaled magnitude (two's complement headroom)
        int_bits = max(0, math.ceil(math.log2(top + 2.0**-frac))) if top > 0 else 0
        int_bits += extra_int_bits
        if int_bits + frac == 0:
            frac = 1
        return cls(int_bits=int_bits, frac_bits=frac)


@dataclass(frozen=True)
class Register:
    name: str
    width: int
    fmt: FixedPointFormat | None = None  # set for arithmetic registers


class RegisterLayout:
    """Ordered, named registers; first register is most significant."""

    def __init__(self, registers, qubit_cap: int = DEFAULT_QUBIT_CAP):
        regs = []
        for r in registers:
            if isinstance(r, Register):
                regs.append(r)
            else:
                name, width = r[0], int(r[1])
                fmt = r[2] if len(r) > 2 else None
                regs.append(Register(name, width, fmt))
        if any(r.width < 1 for r in regs):
            raise ValueError("register widths must be >= 1")
        names = [r.name for r in regs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate register names in {names}")
        total = sum(r.width for r in regs)
        if total > qubit_cap:
            raise QubitCapError(f"layout needs {total} qubits, cap is {qubit_cap}")
        self.registers = tuple(regs)
        self.qubit_cap = qubit_cap
        self._index = {r.name: i for i, r in enumerate(regs)}

    @property
    def total_qubits(self) -> int:
        return sum(r.width for r in self.registers)

    @property
    def dim(self) -> int:
        return 1 << self.total_qubits

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(1 << r.width for r in self.registers)

    def axis(self, name: str) -> int:
        return self._index[name]

    def register(self, name: str) -> Register:
        return self.registers[self._index[name]]

    def fmt(self, name: str) -> FixedPointFormat:
        f = self.register(name).fmt
        if f is None:
            raise ValueError(f"register {name!r} has no fixed-point format")
        return f

    def names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.registers)

    def shift(self, name: str) -> int:
        ax = self._index[name]
        return sum(r.width for r in self.registers[ax + 1 :])

    def mask(self, name: str) -> int:
        return (1 << self.register(name).width) - 1

    def component_of(self, name: str, indices: np.ndarray) -> np.ndarray:
        """Register value of each given flat basis index."""
        return (indices >> self.shift(name)) & self.mask(name)

    def replace_component(self, name: str, indices: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Flat indices with one register's value swapped out."""
        sh = self.shift(name)
        m = self.mask(name)
        return (indices & ~(m << sh)) | ((values & m) << sh)

    def index_component(self, name: str) -> np.ndarray:
        """Per-basis-state value of register `name` over the flat index."""
        idx = np.arange(self.dim, dtype=np.int64)
        return self.component_of(name, idx)

    def pack(self, **values) -> int:
        """Flat basis index from per-register integer values."""
        idx = 0
        for r in self.registers:
            v = int(values.get(r.name, 0))
            if not 0 <= v < (1 << r.width):
                raise ValueError(f"value {v} out of range for register {r.name}")
            idx = (idx << r.width) | v
        return idx


class QuantumState:
    """Dense complex amplitude vector over a register layout."""

    def __init__(self, layout: RegisterLayout, amplitudes: np.ndarray, *, check: bool = True):
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if amps.size != layout.dim:
            raise ValueError(f"amplitude vector has {amps.size} entries, layout dim {layout.dim}")
        if check:
            norm = np.linalg.norm(amps)
            if abs(norm - 1.0) > NORM_TOL:
                raise ValueError(f"state norm {norm} deviates from 1 beyond {NORM_TOL}")
        self.layout = layout
        self.amplitudes = amps

    @classmethod
    def zero(cls, layout: RegisterLayout) -> "QuantumState":
        amps = np.zeros(layout.dim, dtype=complex)
        amps[0] = 1.0
        return cls(layout, amps, check=False)

    @classmethod
    def from_basis(cls, layout: RegisterLayout, **values) -> "QuantumState":
        amps = np.zeros(layout.dim, dtype=complex)
        amps[layout.pack(**values)] = 1.0
        return cls(layout, amps, check=False)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.shape)

    def with_amplitudes(self, amps: np.ndarray, *, check: bool = True) -> "QuantumState":
        return QuantumState(self.layout, amps, check=check)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self, name: str) -> np.ndarray:
        """Marginal distribution over one register."""
        ax = self.layout.axis(name)
        t = np.abs(self.tensor()) ** 2
        other = tuple(i for i in range(len(self.layout.registers)) if i != ax)
        return t.sum(axis=other)

    def register_values(self, name: str, tol: float = 1e-12) -> np.ndarray:
        """Register codes that carry probability mass above tol."""
        probs = self.probabilities(name)
        return np.nonzero(probs > tol)[0]

    def fidelity(self, other: "QuantumState") -> float:
        return float(abs(np.vdot(self.amplitudes, other.amplitudes)))

    def copy(self) -> "QuantumState":
        return QuantumState(self.layout, self.amplitudes.copy(), check=False)


class Condition:
    """Lazy predicate over basis indices, evaluated on index subsets.

    Composable with &, | and ~ so circuit branch logic stays readable
    without ever materializing full-dimension masks.
    """

    def __init__(self, fn):
        self._fn = fn

    def eval(self, layout: "RegisterLayout", indices: np.ndarray) -> np.ndarray:
        return self._fn(layout, indices)

    def __and__(self, other: "Condition") -> "Condition":
        return Condition(lambda lay, idx: self._fn(lay, idx) & other._fn(lay, idx))

    def __or__(self, other: "Condition") -> "Condition":
        return Condition(lambda lay, idx: self._fn(lay, idx) | other._fn(lay, idx))

    def __invert__(self) -> "Condition":
        return Condition(lambda lay, idx: ~self._fn(lay, idx))


def reg_eq(name: str, value: int) -> Condition:
    return Condition(lambda lay, idx: lay.component_of(name, idx) == value)


def reg_in(name: str, lo: int, hi: int) -> Condition:
    """lo <= register value < hi."""
    return Condition(
        lambda lay, idx: (lay.component_of(name, idx) >= lo) & (lay.component_of(name, idx) < hi)
    )


def reg_ge(name: str, bound: int) -> Condition:
    return Condition(lambda lay, idx: lay.component_of(name, idx) >= bound)


def support(state: "QuantumState") -> np.ndarray:
    """Flat indices carrying nonzero amplitude."""
    return np.nonzero(state.amplitudes)[0]


def ranged_uniform_unitary(width: int, count: int) -> np.ndarray:
    """Householder reflection mapping |0> to the uniform state over the
    first `count` basis indices of a width-qubit register.

    Hermitian, so it is its own inverse.
    """
    dim = 1 << width
    if not 1 <= count <= dim:
        raise ValueError(f"count {count} out of range for {width} qubits")
    target = np.zeros(dim)
    target[:count] = 1.0 / math.sqrt(count)
    e0 = np.zeros(dim)
    e0[0] = 1.0
    w = e0 - target
    nw = np.linalg.norm(w)
    if nw < 1e-15:
        return np.eye(dim)
    w = w / nw
    return np.eye(dim) - 2.0 * np.outer(w, w)


def apply_register_unitary(state: QuantumState, name: str, u: np.ndarray) -> QuantumState:
    """Apply a dense unitary to one register axis.

    Works on the populated support: amplitudes are gathered into a
    (register-dim x distinct-context) block, transformed, and scattered
    back, so sparse states cost far less than a full tensor contraction.
    """
    layout = state.layout
    amps = state.amplitudes
    idx = np.nonzero(amps)[0]
    if idx.size == 0:
        return state.copy()
    reg_dim = 1 << layout.register(name).width
    sh = layout.shift(name)
    m = layout.mask(name)
    rest = idx & ~(np.int64(m) << sh)
    comp = (idx >> sh) & m
    contexts, ctx_of = np.unique(rest, return_inverse=True)
    block = np.zeros((reg_dim, contexts.size), dtype=complex)
    block[comp, ctx_of] = amps[idx]
    block = np.asarray(u, dtype=complex) @ block
    out = np.zeros_like(amps)
    dest = (np.arange(reg_dim, dtype=np.int64)[:, None] << sh) | contexts[None, :]
    out[dest.ravel()] = block.ravel()
    return state.with_amplitudes(out, check=False)


def purification_unitary(amplitudes: np.ndarray) -> np.ndarray:
    """Unitary completion W with W|0> equal to the given unit vector."""
    v = np.asarray(amplitudes, dtype=complex).reshape(-1)
    nv = np.linalg.norm(v)
    if abs(nv - 1.0) > 1e-8:
        raise ValueError(f"purification input has norm {nv}, expected 1")
    v = v / nv
    dim = v.size
    stacked = np.concatenate([v[:, None], np.eye(dim, dtype=complex)], axis=1)
    q, _ = np.linalg.qr(stacked)
    phase = np.vdot(q[:, 0], v)  # unit magnitude since v spans column 0
    q[:, 0] = q[:, 0] * phase
    return q
