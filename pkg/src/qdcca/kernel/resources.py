"""Resource accounting for the simulated pipeline.

Two kinds of bookkeeping live side by side: raw counters measured from the
simulator (oracle queries by name, structured-op counts, amplification
rounds, phase-estimation ancilla bits, ancilla high-water marks) and
evaluated cost-model terms mirroring the published per-step complexity
rows (T_E, T_J, T_K, T~_E, step totals).  Counters are non-negative and
add across composed stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass
class ResourceReport:
    stage: str = ""
    oracle_queries: dict = field(default_factory=dict)
    elementary_gates: int = 0
    ancilla_high_water: int = 0
    amplification_rounds: int = 0
    phase_estimation_bits: int = 0
    cost_terms: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def charge_query(self, oracle_name: str, count: int = 1) -> None:
        if count < 0:
            raise ValueError("query counts are non-negative")
        self.oracle_queries[oracle_name] = self.oracle_queries.get(oracle_name, 0) + count

    def charge_gates(self, count: int = 1) -> None:
        self.elementary_gates += count

    def observe_qubits(self, live_qubits: int) -> None:
        self.ancilla_high_water = max(self.ancilla_high_water, live_qubits)

    def total_queries(self) -> int:
        return sum(self.oracle_queries.values())

    def merged(self, other: "ResourceReport", stage: str | None = None) -> "ResourceReport":
        out = ResourceReport(stage=stage or self.stage)
        for src in (self, other):
            for k, v in src.oracle_queries.items():
                out.charge_query(k, v)
            out.elementary_gates += src.elementary_gates
            out.ancilla_high_water = max(out.ancilla_high_water, src.ancilla_high_water)
            out.amplification_rounds += src.amplification_rounds
            out.phase_estimation_bits = max(out.phase_estimation_bits, src.phase_estimation_bits)
            for k, v in src.cost_terms.items():
                out.cost_terms[k] = out.cost_terms.get(k, 0.0) + v
            out.notes.extend(src.notes)
        return out

    def as_dict(self) -> dict:
        return {
            "stage": self.stage,
            "oracle_queries": dict(sorted(self.oracle_queries.items())),
            "elementary_gates": self.elementary_gates,
            "ancilla_high_water": self.ancilla_high_water,
            "amplification_rounds": self.amplification_rounds,
            "phase_estimation_bits": self.phase_estimation_bits,
            "cost_terms": {k: self.cost_terms[k] for k in sorted(self.cost_terms)},
            "notes": list(self.notes),
        }


def merge_reports(reports, stage: str = "total") -> ResourceReport:
    out = ResourceReport(stage=stage)
    for r in reports:
        out = out.merged(r, stage=stage)
    return out


@dataclass(frozen=True)
class CostModelInputs:
    """Run parameters the published per-step cost rows are evaluated at."""

    n: int
    p: int
    q: int
    c: int
    n_max: int
    d: int
    max_abs_entry: float
    m0: float
    eps1: float
    eps2: float
    eps3: float
    eps4: float
    delta1: float
    delta2: float
    kappa: float
    a_e: int
    s: int
    eps_htilde: float
    t: float = 1.0

    @property
    def pq(self) -> int:
        return self.p + self.q


def _log2(x: float) -> float:
    return math.log2(max(x, 2.0))


def cost_rows(ci: CostModelInputs) -> dict:
    """Evaluate the per-step cost formulas at the run's parameters.

    Constants are taken as 1 and logs as base-2, so the values are shape
    surrogates, not gate counts; the K row reuses the J row by definition.
    """
    mx = max(ci.max_abs_entry, 1e-12)
    m0 = max(ci.m0, 1e-12)
    t_e = (mx**2) * _log2(ci.n * ci.pq) * _log2(1.0 / ci.delta1) / (m0 * ci.eps1)
    t_j = (
        (mx**3)
        * _log2(ci.n * ci.pq)
        * _log2(ci.c * ci.n_max * ci.pq)
        * _log2(1.0 / ci.delta1)
        * _log2(1.0 / ci.delta2)
        / (m0 * ci.eps1 * ci.eps2)
    )
    t_k = t_j
    t_e_tilde = ci.kappa * (ci.a_e + ci.s + t_e) * _log2(ci.kappa**1.5 / ci.eps3) ** 2
    sim_unit = t_e_tilde + t_j + t_k
    qpe_factor = (ci.n * mx**2 * ci.kappa) / (m0**2 * ci.eps4)
    log_arg = (m0**2 * ci.eps4) / (ci.n * mx**2 * max(ci.eps_htilde, 1e-300))
    step3 = ci.d * math.sqrt(ci.pq) * (qpe_factor + max(0.0, math.log2(log_arg) if log_arg > 1 else 0.0)) * sim_unit
    t_1_3 = t_e + t_j + t_k + sim_unit + step3
    step4 = ci.kappa * t_1_3 * _log2(ci.kappa)
    return {
        "T_E": t_e,
        "T_J": t_j,
        "T_K": t_k,
        "T_E_tilde": t_e_tilde,
        "step3": step3,
        "step4": step4,
        "total": t_1_3 + step4,
    }
