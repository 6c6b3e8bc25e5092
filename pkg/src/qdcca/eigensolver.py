"""Phase-estimation eigensolver over the encoded pencil operator.

Exponentiates the extracted block exactly (re-Hermitized, spectrum
shifted into the positive phase window), runs textbook phase estimation
on the maximally mixed input, finds the top-d eigenvalues by threshold
search with replacement sampling, rescales phases by the trace ratio, and
applies the inverse-square-root encoding to recover the projection
directions.  Every stage charges both measured counters and the published
cost-row shapes evaluated at the run's parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import classical
from .blockenc import (
    EncodingParams,
    HtildeEncodings,
    block_extract,
    build_htilde,
    params_from_preps,
)
from .kernel import (
    CostModelInputs,
    ResourceReport,
    ValueSampler,
    amplification_rounds,
    cost_rows,
    max_find,
    merge_reports,
    qpe_distribution,
)
from .kernel.primitives import QPE_MAX_BITS, QPE_MIN_BITS
from .kernel.registers import DEFAULT_QUBIT_CAP
from .meanest import MeanEstimationConfig
from .stateprep import (
    MeanOracles,
    PrepResult,
    ScalingBounds,
    build_mean_oracles,
    estimate_trace_ratio,
    prepare_psi_e,
    prepare_psi_j,
    prepare_psi_k,
)


class AliasingError(ValueError):
    """Simulation time too large for the phase window."""


class NullSpaceError(ValueError):
    """Eigenstate has no component in the retained spectrum."""


@dataclass(frozen=True)
class HamiltonianSimSpec:
    """Evolution time, error budget, and phase-register width."""

    t: float
    t_bits: int = 7
    sim_error: float = 1e-10
    d: int = 1
    eps4: float = 0.05

    def __post_init__(self):
        if not QPE_MIN_BITS <= self.t_bits <= QPE_MAX_BITS:
            raise ValueError(f"t_bits={self.t_bits} outside [{QPE_MIN_BITS}, {QPE_MAX_BITS}]")
        if self.t <= 0:
            raise ValueError("simulation time must be positive")


def choose_time(ratio: float, eps4: float, t_bits: int, block_norm: float) -> float:
    """Evolution time targeting eigenvalue accuracy eps4, capped below the
    aliasing limit of the shifted phase window."""
    needed = 2.0 * math.pi * max(ratio, 1e-12) / (eps4 * (1 << t_bits))
    safe = 0.95 * math.pi / max(block_norm * 1.10, 1e-12)
    return min(needed, safe)


@dataclass
class HtildeSimulation:
    """Controlled-unitary family for phase estimation."""

    block: np.ndarray          # Hermitized physical block
    sigma: float               # spectrum shift
    spec: HamiltonianSimSpec
    eigenvalues: np.ndarray    # of the block (ascending from eigh)
    eigenvectors: np.ndarray
    asymmetry: float
    cost_per_qpe: float
    sim_unit_cost: float

    def unitary(self, time: float) -> np.ndarray:
        phases = np.exp(1j * (self.eigenvalues + self.sigma) * time)
        return (self.eigenvectors * phases) @ self.eigenvectors.conj().T

    def controlled_powers(self) -> list:
        return [self.unitary(self.spec.t * (1 << k)) for k in range(self.spec.t_bits)]

    def eigenphase(self, lam: float) -> float:
        """Phase fraction in [0,1) carried by eigenvalue lam of the block."""
        return ((lam + self.sigma) * self.spec.t) / (2.0 * math.pi)

    def decode_bin(self, x: int) -> float:
        """Block eigenvalue at the center of phase bin x."""
        return (2.0 * math.pi * x / (1 << self.spec.t_bits)) / self.spec.t - self.sigma


def simulate_htilde(
    encodings: HtildeEncodings,
    spec: HamiltonianSimSpec,
    physical_dim: int,
    cost_inputs: CostModelInputs,
    *,
    report: ResourceReport | None = None,
) -> HtildeSimulation:
    """Exact exponentials of the extracted block, with the block-Hamiltonian
    simulation cost shape charged per application."""
    raw = block_extract(encodings.htilde)
    phys = raw[:physical_dim, :physical_dim]
    asym = float(np.max(np.abs(phys - phys.conj().T))) if phys.size else 0.0
    block = 0.5 * (phys + phys.conj().T)
    norm = float(np.linalg.norm(block, ord=2)) if physical_dim else 0.0
    sigma = norm * 1.10 + 1e-12
    if 2.0 * sigma * spec.t >= 2.0 * math.pi:
        raise AliasingError(
            f"time {spec.t} aliases the phase window; suggest t <= "
            f"{0.95 * math.pi / sigma:.4g}"
        )
    vals, vecs = np.linalg.eigh(block)

    rows = cost_rows(cost_inputs)
    sim_unit = rows["T_E_tilde"] + rows["T_J"] + rows["T_K"]
    kappa = cost_inputs.kappa
    eps_ht = max(cost_inputs.eps_htilde, 1e-300)

    def exp_cost(tau: float) -> float:
        log_arg = 1.0 / (2.0 * tau * eps_ht)
        return (8.0 * kappa * tau + max(0.0, math.log2(log_arg) if log_arg > 1 else 0.0)) * sim_unit

    cost_per_qpe = sum(exp_cost(spec.t * (1 << k)) for k in range(spec.t_bits))
    sim = HtildeSimulation(
        block=block, sigma=sigma, spec=spec, eigenvalues=vals, eigenvectors=vecs,
        asymmetry=asym, cost_per_qpe=cost_per_qpe, sim_unit_cost=sim_unit,
    )
    if report is not None:
        report.phase_estimation_bits = max(report.phase_estimation_bits, spec.t_bits)
        report.notes.append(f"block asymmetry {asym:.2e}, shift {sigma:.4g}")
    return sim


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    d: int | None = None
    t_bits: int = 7
    eps1: float = 0.05
    eps2: float = 0.05
    eps3: float = 0.05
    eps4: float = 0.05
    delta1: float = 0.05
    delta2: float = 0.05
    infidelity_target: float = 1e-4
    mean_frac_bits: int = 4
    qubit_cap: int = DEFAULT_QUBIT_CAP
    exact_trace_ratio: bool = True
    inject_exact_means: bool = True
    trace_ratio_samples: int = 10000
    max_find_repetitions: int = 5
    qpe_readout_reps: int = 7  # odd; median-boosts each phase readout
    kappa_config: float | None = None
    lambda_bound: str = "measured"
    m0: float | None = None


@dataclass
class EigenComparison:
    classical_value: float
    quantum_value: float
    gap: float
    fidelity: float
    ambiguous: bool


@dataclass
class QdccaResult:
    eigenvalues_h: np.ndarray
    eigenstates: np.ndarray            # columns
    projections: np.ndarray            # columns, normalized inverse-sqrt images
    resources: ResourceReport
    comparison: list
    trace_ratio: float
    trace_ratio_exact: float
    grid_resolution: float
    classical: classical.SpectralResult
    encodings: HtildeEncodings = None
    simulation: HtildeSimulation = None
    preps: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)


def _qpe_bin_distributions(sim: HtildeSimulation, physical_dim: int) -> np.ndarray:
    """Per-eigencomponent exact QPE outcome distributions."""
    t_bits = sim.spec.t_bits
    dists = np.zeros((physical_dim, 1 << t_bits))
    for k in range(physical_dim):
        phase = np.exp(2j * math.pi * sim.eigenphase(sim.eigenvalues[k]))
        dists[k] = qpe_distribution(lambda v: phase * v, np.ones(1, dtype=complex), t_bits)
    return dists


def run_qpe_pipeline(
    data: classical.PairedDataset,
    config: PipelineConfig,
    rng: np.random.Generator,
    *,
    oracles: MeanOracles | None = None,
) -> QdccaResult:
    """End-to-end quantum pipeline with classical-oracle comparison."""
    p, q, c = data.p, data.q, data.c
    pq = p + q
    d = config.d if config.d is not None else min(p, q, c)
    if d > min(p, q) or d > c:
        raise classical.DimensionError(f"d={d} violates d <= min(p,q,c)")

    # classical ground truth
    centered = classical.mean_center(data)
    ops = classical.build_operators(centered, data)
    spectral = classical.solve_dcca(ops, d, p=p, q=q, c=c)
    ratio_exact = float(np.trace(ops.j_matrix) / np.trace(ops.e_matrix))

    bounds = ScalingBounds.from_dataset(data, m0=config.m0)
    mean_cfg = MeanEstimationConfig(epsilon=config.eps1, delta=config.delta1)
    if oracles is None:
        oracles = build_mean_oracles(
            data, mean_cfg, rng,
            exact=config.inject_exact_means, mean_frac_bits=config.mean_frac_bits,
        )

    prep_e = prepare_psi_e(data, bounds, config.infidelity_target,
                           oracles=oracles, qubit_cap=config.qubit_cap,
                           lambda_bound=config.lambda_bound)
    prep_j = prepare_psi_j(data, bounds, config.infidelity_target,
                           oracles=oracles, qubit_cap=config.qubit_cap,
                           lambda_bound=config.lambda_bound)
    prep_k = prepare_psi_k(data, bounds, config.infidelity_target,
                           oracles=oracles, qubit_cap=config.qubit_cap,
                           lambda_bound=config.lambda_bound)

    ratio_report = ResourceReport(stage="trace-ratio")
    if config.exact_trace_ratio:
        ratio = ratio_exact
    else:
        est = estimate_trace_ratio(
            data, bounds, config.trace_ratio_samples, rng,
            oracles=oracles, report=ratio_report,
        )
        ratio = est.ratio

    params = params_from_preps(prep_e, prep_j, prep_k, eps3=config.eps3,
                               kappa_config=config.kappa_config)
    encodings = build_htilde(prep_e, prep_j, prep_k, params)

    cost_inputs = CostModelInputs(
        n=data.n, p=p, q=q, c=c, n_max=data.n_max, d=d,
        max_abs_entry=data.max_abs_entry, m0=bounds.m0,
        eps1=config.eps1, eps2=config.eps2, eps3=config.eps3, eps4=config.eps4,
        delta1=config.delta1, delta2=config.delta2,
        kappa=params.kappa, a_e=params.a_e, s=params.s,
        eps_htilde=params.eps_htilde,
    )

    block_norm = float(np.linalg.norm(
        block_extract(encodings.htilde)[:pq, :pq], ord=2))
    t = choose_time(ratio, config.eps4, config.t_bits, block_norm)
    spec = HamiltonianSimSpec(t=t, t_bits=config.t_bits, d=d, eps4=config.eps4)
    step3_report = ResourceReport(stage="step3")
    sim = simulate_htilde(encodings, spec, pq, cost_inputs, report=step3_report)

    grid = ratio * 2.0 * math.pi / (t * (1 << config.t_bits))
    dists = _qpe_bin_distributions(sim, pq)
    t_dim = 1 << config.t_bits
    bin_values = ratio * (2.0 * math.pi * np.arange(t_dim) / t_dim / t - sim.sigma)

    qpe_runs = 0
    readout_reps = config.qpe_readout_reps
    if readout_reps < 1 or readout_reps % 2 == 0:
        raise ValueError("qpe_readout_reps must be odd and >= 1")

    def make_sampler(excluded: set) -> ValueSampler:
        # each draw collapses the mixed input onto one eigencomponent and
        # median-boosts its phase readout over repeated estimations, which
        # suppresses the spectral-leakage tails a raw threshold search
        # would otherwise chase
        live = [k for k in range(pq) if k not in excluded]

        def draw(rng_):
            nonlocal qpe_runs
            qpe_runs += readout_reps
            k = live[int(rng_.integers(0, len(live)))]
            xs = rng_.choice(t_dim, size=readout_reps, p=dists[k] / dists[k].sum())
            return k, float(np.median(bin_values[xs]))

        def exceed(threshold):
            # exact tail of the median-of-R readout, averaged over the
            # uniformly drawn live components
            need = (readout_reps + 1) // 2
            total = 0.0
            for k in live:
                p_one = float(np.sum(dists[k][bin_values > threshold]))
                total += _binomial_tail(readout_reps, need, p_one)
            return total / len(live)

        return ValueSampler(draw=draw, exceed_probability=exceed)

    found: list[tuple[int, float, bool]] = []
    excluded: set[int] = set()
    for _ in range(d):
        sampler = make_sampler(excluded)
        res = max_find(sampler, pq - len(excluded), config.max_find_repetitions, rng,
                       resolution=grid, report=step3_report)
        found.append((res.index, res.value, res.tie))
        excluded.add(res.index)
    step3_report.cost_terms["step3_controlled_unitary"] = qpe_runs * sim.cost_per_qpe
    step3_report.cost_terms["controlled_unitary_per_qpe"] = sim.cost_per_qpe
    step3_report.charge_query("qpe_runs", qpe_runs)

    # postprocessing: inverse-square-root image of each found eigenstate
    step4_report = ResourceReport(stage="step4")
    inv_block = block_extract(encodings.inv_sqrt)
    projections = []
    eigvals_q = []
    eigvecs_q = []
    for k, lam_est, _tie in found:
        v = sim.eigenvectors[:, k]
        w = postprocess_projection(encodings, v, report=step4_report)
        projections.append(w)
        eigvals_q.append(lam_est)
        eigvecs_q.append(v)
    rows = cost_rows(cost_inputs)
    step4_report.cost_terms["step4"] = rows["step4"]

    # order by recovered eigenvalue, descending
    order = np.argsort(eigvals_q)[::-1]
    eigvals_q = np.array([eigvals_q[i] for i in order])
    eigvecs_q = np.stack([eigvecs_q[i] for i in order], axis=1)
    projections = np.stack([projections[i] for i in order], axis=1)
    ties = [found[i][2] for i in order]

    comparison = []
    for i in range(d):
        lam_c = float(spectral.eigenvalues[i])
        lam_q = float(eigvals_q[i])
        fid = _eigvec_fidelity(spectral, eigvecs_q, i, grid)
        comparison.append(EigenComparison(
            classical_value=lam_c, quantum_value=lam_q,
            gap=abs(lam_c - lam_q), fidelity=fid,
            ambiguous=bool(ties[i]) or spectral.degenerate,
        ))

    total = merge_reports(
        [prep_e.report, prep_j.report, prep_k.report, ratio_report,
         step3_report, step4_report],
        stage="pipeline",
    )
    for key, val in rows.items():
        total.cost_terms[f"row_{key}"] = val

    return QdccaResult(
        eigenvalues_h=eigvals_q,
        eigenstates=eigvecs_q,
        projections=projections,
        resources=total,
        comparison=comparison,
        trace_ratio=ratio,
        trace_ratio_exact=ratio_exact,
        grid_resolution=grid,
        classical=spectral,
        encodings=encodings,
        simulation=sim,
        preps={"psi_E": prep_e, "psi_J": prep_j, "psi_K": prep_k},
        flags={
            "ambiguous_boundary": _ambiguous_boundary(sim, ratio, d, grid, pq),
            "qpe_runs": qpe_runs,
        },
    )


def _binomial_tail(n: int, k_min: int, p: float) -> float:
    """P(Binomial(n, p) >= k_min)."""
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    total = 0.0
    for k in range(k_min, n + 1):
        total += math.comb(n, k) * p**k * (1.0 - p) ** (n - k)
    return total


def _ambiguous_boundary(sim, ratio, d, grid, pq) -> bool:
    lams = np.sort(sim.eigenvalues)[::-1] * ratio
    if d >= pq:
        return False
    return bool(abs(lams[d - 1] - lams[d]) <= grid)


def _eigvec_fidelity(spectral, eigvecs_q, i, grid) -> float:
    """Overlap with the classical eigenvector, or with the full eigenspace
    within twice the phase-grid resolution when eigenvalues cluster
    (eigenvector identity is ill-posed under degeneracy)."""
    v_q = eigvecs_q[:, i]
    v_c = spectral.eigenvectors[:, i]
    lam = float(spectral.eigenvalues[i])
    scale = max(abs(float(spectral.eigenvalues[0])), 1.0)
    tol = max(2.0 * grid, 1e-8 * scale)
    basis = spectral.eigenspace_basis(lam, tol)
    if basis.shape[1] > 1:
        return float(np.linalg.norm(basis.T.conj() @ v_q))
    return float(abs(np.vdot(v_q, v_c)))


def postprocess_projection(
    encodings: HtildeEncodings,
    eigenstate: np.ndarray,
    *,
    report: ResourceReport | None = None,
) -> np.ndarray:
    """Apply the inverse-square-root encoding and renormalize.

    The ancilla post-selection succeeds with probability ||block v||^2;
    the charged amplification rounds follow the fixed-point schedule at
    that success probability.
    """
    v = np.asarray(eigenstate, dtype=complex)
    if abs(np.linalg.norm(v) - 1.0) > 1e-8:
        raise ValueError("eigenstate must be unit norm")
    inv_block = block_extract(encodings.inv_sqrt) / encodings.inv_sqrt.norm_factor
    dim = inv_block.shape[0]
    vv = np.zeros(dim, dtype=complex)
    vv[: v.size] = v
    w = inv_block @ vv
    p_succ = float(np.linalg.norm(w) ** 2)
    if p_succ < 1e-14:
        raise NullSpaceError("eigenstate lies in the null space of the reference operator")
    if report is not None:
        report.amplification_rounds += amplification_rounds(min(p_succ, 1.0), 1e-4)
        report.charge_query("inverse_sqrt_applications", 1)
    return (w / np.linalg.norm(w))[: v.size]


def resource_summary(result: QdccaResult, cost_inputs: CostModelInputs | None = None) -> dict:
    """Side-by-side measured counters and cost-row values."""
    res = result.resources
    rows = {k[len("row_"):]: v for k, v in res.cost_terms.items() if k.startswith("row_")}
    measured = {
        "oracle_queries": dict(sorted(res.oracle_queries.items())),
        "elementary_gates": res.elementary_gates,
        "amplification_rounds": res.amplification_rounds,
        "ancilla_high_water": res.ancilla_high_water,
        "phase_estimation_bits": res.phase_estimation_bits,
        "qpe_runs": result.flags.get("qpe_runs", 0),
        "step3_controlled_unitary": res.cost_terms.get("step3_controlled_unitary", 0.0),
        "controlled_unitary_per_qpe": res.cost_terms.get("controlled_unitary_per_qpe", 0.0),
    }
    preparations = {
        name: {
            "queries": prep.report.total_queries(),
            "rounds": prep.report.amplification_rounds,
        }
        for name, prep in result.preps.items()
    }
    return {
        "formula_rows": rows,
        "measured": measured,
        "preparations": preparations,
    }
