"""Reusable quantum primitives over dense state vectors.

Controlled rotation, Grover operators, amplitude estimation (simulated as
the exact phase-estimation circuit on the Grover operator), median
boosting, fixed-point amplitude amplification with Chebyshev-derived phase
sequences, textbook phase estimation, and threshold-search maximum
finding with audited query counters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .registers import QuantumState
from .resources import ResourceReport

AE_MIN_BITS, AE_MAX_BITS = 2, 12
QPE_MIN_BITS, QPE_MAX_BITS = 3, 10


class PrecisionCapError(ValueError):
    """Requested ancilla bits outside the simulator's cost cap."""


class BoundViolation(ValueError):
    """A rotation or amplification precondition failed."""


def _rotate_ancilla(state, value_reg, ancilla, scale, condition, validate, transpose):
    layout = state.layout
    if layout.register(ancilla).width != 1:
        raise ValueError("rotation ancilla must be a single qubit")
    fmt = layout.fmt(value_reg)
    amps = state.amplitudes
    idx = np.nonzero(amps)[0]
    if idx.size == 0:
        return state.copy()
    bit = np.int64(1) << layout.shift(ancilla)
    base = np.unique(idx & ~bit)
    active = np.ones(base.size, dtype=bool) if condition is None else condition.eval(layout, base)
    values = fmt.decode_array(layout.component_of(value_reg, base))
    if validate and np.any(active):
        vmax = float(np.max(np.abs(values[active])))
        if vmax > scale * (1 + 1e-12):
            raise BoundViolation(
                f"populated value {vmax} exceeds rotation scale {scale}; "
                "the normalization bound was mis-chosen"
            )
    cos_t = np.clip(values / scale, -1.0, 1.0)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t**2))
    if transpose:
        sin_t = -sin_t
    a0 = amps[base]
    a1 = amps[base | bit]
    new = amps.copy()
    new[base] = np.where(active, cos_t * a0 - sin_t * a1, a0)
    new[base | bit] = np.where(active, sin_t * a0 + cos_t * a1, a1)
    return state.with_amplitudes(new, check=False)


def controlled_rotation(
    state: QuantumState,
    value_reg: str,
    ancilla: str,
    scale: float,
    *,
    condition=None,
    validate: bool = True,
    report: ResourceReport | None = None,
) -> QuantumState:
    """Rotate `ancilla` to (v/scale)|0> + sqrt(1-(v/scale)^2)|1> per value v.

    The ancilla must be one qubit; v is decoded from the value register's
    fixed-point format.  Rejects when any populated |v| exceeds scale
    (out-of-bound codes clip to a trivial rotation, so the operator stays
    unitary on the full space; validate=False permits that, e.g. when
    materializing the circuit over garbage basis states).
    """
    out = _rotate_ancilla(state, value_reg, ancilla, scale, condition, validate, transpose=False)
    if report is not None:
        report.charge_gates(1)
    return out


def controlled_rotation_inverse(
    state: QuantumState,
    value_reg: str,
    ancilla: str,
    scale: float,
    *,
    condition=None,
    report: ResourceReport | None = None,
) -> QuantumState:
    """Transpose of controlled_rotation (it is real orthogonal)."""
    out = _rotate_ancilla(state, value_reg, ancilla, scale, condition, False, transpose=True)
    if report is not None:
        report.charge_gates(1)
    return out


@dataclass
class GroverOperator:
    """Grover iterate assembled from a state-prep map and a good mask.

    prep/prep_inv act on bare amplitude vectors; good_mask marks the good
    subspace in the computational basis.
    """

    prep: object
    prep_inv: object
    good_mask: np.ndarray
    dim: int
    grover_applications: int = 0
    prep_applications: int = 0

    def initial_state(self) -> np.ndarray:
        e0 = np.zeros(self.dim, dtype=complex)
        e0[0] = 1.0
        self.prep_applications += 1
        return self.prep(e0)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Standard iterate A (2|0><0| - I) A^dag (I - 2 P_good)."""
        w = v.copy()
        w[self.good_mask] *= -1.0
        w = self.prep_inv(w)
        w = -w
        w[0] *= -1.0
        w = self.prep(w)
        self.grover_applications += 1
        return w

    def good_probability(self, v: np.ndarray) -> float:
        return float(np.sum(np.abs(v[self.good_mask]) ** 2))


def qpe_distribution(unitary_apply, initial: np.ndarray, t_bits: int) -> np.ndarray:
    """Exact phase-register distribution of the QPE circuit.

    unitary_apply: map v -> U v.  Returns probabilities over the 2^t_bits
    phase-register outcomes, computed from the full circuit state.
    """
    t = 1 << t_bits
    dim = initial.size
    v = initial.astype(complex)
    stack = np.empty((t, dim), dtype=complex)
    for x in range(t):
        stack[x] = v
        if x + 1 < t:
            v = unitary_apply(v)
    post = np.fft.fft(stack, axis=0) / t
    return np.sum(np.abs(post) ** 2, axis=1)


def amplitude_estimate(
    grover: GroverOperator,
    good_projector: np.ndarray | None,
    precision_bits: int,
    rng: np.random.Generator,
    *,
    distribution: np.ndarray | None = None,
    report: ResourceReport | None = None,
):
    """One amplitude-estimation sample: exact QPE on the Grover operator.

    Returns (estimate, distribution); pass the returned distribution back
    in for repeated sampling without recomputing the circuit.
    """
    if not AE_MIN_BITS <= precision_bits <= AE_MAX_BITS:
        raise PrecisionCapError(
            f"precision_bits={precision_bits} outside [{AE_MIN_BITS}, {AE_MAX_BITS}]"
        )
    if good_projector is not None and grover.good_mask is not None:
        if not np.array_equal(good_projector, grover.good_mask):
            raise ValueError("good projector disagrees with the Grover operator's")
    t = 1 << precision_bits
    if distribution is None:
        phi = grover.initial_state()
        distribution = qpe_distribution(grover.apply, phi, precision_bits)
    if report is not None:
        report.charge_gates(t)
        report.phase_estimation_bits = max(report.phase_estimation_bits, precision_bits)
    y = int(rng.choice(t, p=distribution / distribution.sum()))
    estimate = math.sin(math.pi * y / t) ** 2
    return estimate, distribution


def ae_error_bound(precision_bits: int) -> float:
    """Standard amplitude-estimation additive error at the given bits."""
    t = 1 << precision_bits
    return math.pi / t + (math.pi / t) ** 2


def median_boost(trials, l: int) -> float:
    """Median of the first l trials; l must be odd and >= 1."""
    trials = list(trials)
    if l < 1 or l % 2 == 0:
        raise ValueError(f"median repetitions must be odd and >= 1, got {l}")
    if len(trials) < l:
        raise ValueError(f"need {l} trials, got {len(trials)}")
    return float(np.median(np.asarray(trials[:l], dtype=float)))


def median_repetitions(delta: float) -> int:
    """Smallest odd l with Chernoff failure <= delta for per-run success
    8/pi^2 (the amplitude-estimation success floor)."""
    if not 0 < delta < 0.5:
        raise ValueError(f"failure budget must be in (0, 1/2), got {delta}")
    p = 8 / math.pi**2
    l = math.ceil(math.log(1.0 / delta) / (2 * (p - 0.5) ** 2))
    return l + 1 if l % 2 == 0 else max(l, 1)


# ---------------------------------------------------------------------------
# fixed-point amplitude amplification
# ---------------------------------------------------------------------------


def fixed_point_schedule(lambda_lower: float, target_infidelity: float):
    """Chebyshev phase schedule reaching good probability >= 1 - target
    whenever the true good probability is >= lambda_lower.

    Returns (alphas, betas, delta, L) with L = 2*len(alphas) + 1.
    """
    if lambda_lower <= 0:
        raise BoundViolation("fixed-point search needs a positive good-probability bound")
    if not 0 < target_infidelity < 1:
        raise ValueError("target infidelity must be in (0, 1)")
    delta = math.sqrt(target_infidelity)
    lam = min(lambda_lower, 1.0)
    if lam >= 1.0 - 1e-15:
        return np.zeros(0), np.zeros(0), delta, 1
    # need tanh(acosh(1/delta)/L) <= sqrt(lam)
    need = math.acosh(1.0 / delta) / math.atanh(math.sqrt(lam))
    L = int(math.ceil(need))
    if L % 2 == 0:
        L += 1
    L = max(L, 3)
    l = (L - 1) // 2
    gamma = 1.0 / math.cosh(math.acosh(1.0 / delta) / L)
    sg = math.sqrt(1.0 - gamma * gamma)
    j = np.arange(1, l + 1)
    alphas = 2.0 * np.arctan2(1.0, np.tan(2.0 * np.pi * j / L) * sg)
    betas = -alphas[::-1]
    return alphas, betas, delta, L


def fixed_point_amplify(
    state: QuantumState,
    good_projector: np.ndarray,
    target_infidelity: float,
    *,
    lambda_lower: float | None = None,
    report: ResourceReport | None = None,
    return_trajectory: bool = False,
):
    """Amplify the good-subspace probability to >= 1 - target_infidelity.

    Reflections about the initial state are applied as rank-1 updates on
    the state vector, which is exactly A S0(a) A^dag for the preparation A
    that produced `state`.  lambda_lower defaults to the measured initial
    good probability (its tightest admissible value).  Unlike plain Grover
    iteration the sequence cannot over-rotate: longer schedules keep the
    final probability pinned at >= 1 - target.
    """
    # the sequence never leaves the initial state's support, so run the
    # 2-reflection rounds on the populated subvector
    full = state.amplitudes
    supp = np.nonzero(full)[0]
    psi0 = full[supp]
    if isinstance(good_projector, np.ndarray) and good_projector.dtype == bool:
        good = good_projector[supp]
    else:
        good = good_projector.eval(state.layout, supp)
    p0 = float(np.sum(np.abs(psi0[good]) ** 2))
    if lambda_lower is None:
        lambda_lower = p0
    if p0 <= 0:
        raise BoundViolation("initial good-subspace probability is zero")
    if p0 >= 1.0 - target_infidelity:
        if return_trajectory:
            return state.copy(), [p0]
        return state.copy()
    alphas, betas, _, L = fixed_point_schedule(lambda_lower, target_infidelity)

    v = psi0.copy()
    trajectory = [p0]
    for alpha, beta in zip(alphas, betas):
        # S_chi(beta): phase the good subspace
        v[good] *= np.exp(1j * beta)
        # A S_0(alpha) A^dag: phase the initial-state component (note the
        # conjugate sign relative to the target reflection)
        overlap = np.vdot(psi0, v)
        v = v + (np.exp(-1j * alpha) - 1.0) * overlap * psi0
        trajectory.append(float(np.sum(np.abs(v[good]) ** 2) / np.linalg.norm(v) ** 2))
    rounds = len(alphas)
    if report is not None:
        report.amplification_rounds += rounds
        report.charge_gates(2 * rounds)
        report.notes.append(f"fixed-point search: L={L}, lambda_bound={lambda_lower:.3e}")
    out_full = np.zeros_like(full)
    out_full[supp] = v / np.linalg.norm(v)
    out = state.with_amplitudes(out_full, check=False)
    if return_trajectory:
        return out, trajectory
    return out


def amplification_rounds(lambda_lower: float, target_infidelity: float) -> int:
    alphas, _, _, _ = fixed_point_schedule(lambda_lower, target_infidelity)
    return len(alphas)


# ---------------------------------------------------------------------------
# phase estimation
# ---------------------------------------------------------------------------


@dataclass
class QpeComponent:
    weight: float
    phase_probs: np.ndarray
    posterior: np.ndarray


@dataclass
class QpeResult:
    t_bits: int
    components: list
    unitary_applications: int

    def joint_sample(self, rng: np.random.Generator):
        """Sample (phase in [0,1), posterior state vector)."""
        weights = np.array([c.weight for c in self.components])
        k = int(rng.choice(len(self.components), p=weights / weights.sum()))
        comp = self.components[k]
        t = 1 << self.t_bits
        y = int(rng.choice(t, p=comp.phase_probs / comp.phase_probs.sum()))
        return y / t, comp.posterior

    def phase_distribution(self) -> np.ndarray:
        t = 1 << self.t_bits
        out = np.zeros(t)
        for c in self.components:
            out += c.weight * c.phase_probs
        return out / out.sum()


def phase_estimate(
    unitary: np.ndarray,
    eigenstate_mixture,
    t_bits: int,
    *,
    report: ResourceReport | None = None,
) -> QpeResult:
    """Exact QPE of `unitary` on a mixture of input vectors.

    eigenstate_mixture: list of (weight, vector).  Each component is run
    through the full circuit; sampling the result reproduces the standard
    QPE outcome distribution with its posterior states.
    """
    if not QPE_MIN_BITS <= t_bits <= QPE_MAX_BITS:
        raise PrecisionCapError(f"t_bits={t_bits} outside [{QPE_MIN_BITS}, {QPE_MAX_BITS}]")
    u = np.asarray(unitary, dtype=complex)
    comps = []
    for weight, vec in eigenstate_mixture:
        vec = np.asarray(vec, dtype=complex)
        probs = qpe_distribution(lambda v: u @ v, vec, t_bits)
        comps.append(QpeComponent(weight=float(weight), phase_probs=probs, posterior=vec))
    apps = (1 << t_bits) - 1
    if report is not None:
        report.phase_estimation_bits = max(report.phase_estimation_bits, t_bits)
        report.charge_gates(apps * len(comps))
    return QpeResult(t_bits=t_bits, components=comps, unitary_applications=apps)


# ---------------------------------------------------------------------------
# maximum finding
# ---------------------------------------------------------------------------


def max_find_query_cap(n_items: int) -> float:
    """Query budget of the threshold-search maximum finder."""
    return 22.5 * math.sqrt(n_items) + 1.4 * math.log2(max(n_items, 2)) ** 2


@dataclass
class ValueSampler:
    """Sampling view of the search space.

    draw(rng) -> (index, value) with the measurement distribution;
    exceed_probability(threshold) -> P(value > threshold), which the
    simulator knows exactly for its own distributions and uses to rotate
    the marked-subspace amplitude faithfully.
    """

    draw: object
    exceed_probability: object


@dataclass
class MaxFindResult:
    index: int
    value: float
    queries: int
    tie: bool
    per_run: list = field(default_factory=list)


def max_find(
    sampler: ValueSampler,
    n_items: int,
    repetitions: int,
    rng: np.random.Generator,
    *,
    resolution: float = 0.0,
    report: ResourceReport | None = None,
) -> MaxFindResult:
    """Iterative-threshold maximum search with Grover-counted queries.

    Each run keeps a threshold, simulates the rotated marked-subspace
    measurement exactly, and charges j+1 oracle queries for a j-iteration
    Grover round; the per-run counter never exceeds the published budget.
    Repetitions boost the success probability; ties (several indices
    within `resolution` of the best value) are flagged.
    """
    cap = max_find_query_cap(n_items)
    observed: dict[int, float] = {}
    runs = []
    total_queries = 0

    for _ in range(max(1, repetitions)):
        idx, val = sampler.draw(rng)
        queries = 1
        observed[idx] = max(observed.get(idx, -np.inf), val)
        m_bar = 1.0
        while queries < cap:
            p_exceed = float(sampler.exceed_probability(val))
            if p_exceed <= 1e-15:
                break
            j_max = max(1, int(m_bar))
            j = int(rng.integers(0, j_max))
            j = min(j, int(cap - queries) - 1) if cap - queries > 1 else 0
            queries += j + 1
            theta = math.asin(min(1.0, math.sqrt(p_exceed)))
            if rng.random() < math.sin((2 * j + 1) * theta) ** 2:
                idx, val = _draw_above(sampler, val, rng)
                observed[idx] = max(observed.get(idx, -np.inf), val)
                m_bar = 1.0
            else:
                m_bar = min(m_bar * 1.2, math.sqrt(n_items))
        runs.append((idx, val, queries))
        total_queries += queries

    best_idx, best_val, _ = max(runs, key=lambda r: (r[1], -r[0]))
    # prefer the lowest index among runs that reached the best value
    candidates = [r[0] for r in runs if r[1] >= best_val - 1e-15]
    best_idx = min(candidates)
    tie_indices = {i for i, v in observed.items() if v >= best_val - resolution - 1e-15}
    tie = len(tie_indices) > 1
    if report is not None:
        report.charge_query("max_find", total_queries)
    return MaxFindResult(index=best_idx, value=best_val, queries=total_queries, tie=tie, per_run=runs)


def _draw_above(sampler: ValueSampler, threshold: float, rng: np.random.Generator):
    """Conditional draw given value > threshold (the post-Grover
    measurement lands in the marked subspace with its relative weights)."""
    for _ in range(100000):
        idx, val = sampler.draw(rng)
        if val > threshold:
            return idx, val
    raise RuntimeError("conditional draw failed; exceed probability inconsistent with sampler")
