"""Classical-vs-quantum comparison runs and their serialized reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import classical
from .config import RunConfig
from .datasets import GeneratorSpec, generate_dataset, load_dataset
from .eigensolver import PipelineConfig, QdccaResult, resource_summary, run_qpe_pipeline

SCHEMA_VERSION = 1


def dataset_from_config(config: RunConfig) -> classical.PairedDataset:
    if config.dataset:
        return load_dataset(config.dataset)
    return generate_dataset(GeneratorSpec(
        p=config.p, q=config.q, class_sizes=config.class_sizes, seed=config.seed,
        value_range=config.value_range, separation=config.separation,
        grid_bits=config.grid_bits, m0_mode=config.m0_mode,
        m0_target=config.m0_target, center_rows=config.center_rows,
    ))


def pipeline_config(config: RunConfig) -> PipelineConfig:
    return PipelineConfig(
        d=config.d, t_bits=config.t_bits,
        eps1=config.eps1, eps2=config.eps2, eps3=config.eps3, eps4=config.eps4,
        delta1=config.delta1, delta2=config.delta2,
        infidelity_target=config.infidelity_target,
        mean_frac_bits=config.mean_frac_bits,
        qubit_cap=config.max_qubits,
        exact_trace_ratio=config.exact_trace_ratio,
        inject_exact_means=config.inject_exact_means,
        trace_ratio_samples=config.trace_ratio_samples,
    )


@dataclass
class ComparisonReport:
    payload: dict
    passed: bool
    result: QdccaResult = field(repr=False, default=None)

    def to_json(self) -> str:
        return json.dumps(self.payload, sort_keys=True, indent=2)

    def table(self) -> str:
        lines = [
            f"{'pair':>4} {'classical':>12} {'quantum':>12} {'gap':>10} "
            f"{'tolerance':>10} {'fidelity':>9} {'ok':>3}"
        ]
        for row in self.payload["eigenpairs"]:
            lines.append(
                f"{row['index']:>4} {row['classical']:>12.6f} {row['quantum']:>12.6f} "
                f"{row['gap']:>10.6f} {row['tolerance']:>10.6f} {row['fidelity']:>9.4f} "
                f"{'ok' if row['pass'] else 'NO':>3}"
            )
        lines.append(
            f"trace ratio: quantum={self.payload['trace_ratio']['estimate']:.6f} "
            f"exact={self.payload['trace_ratio']['exact']:.6f}"
        )
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def run_compare(config: RunConfig) -> ComparisonReport:
    """Classical reference vs the simulated quantum pipeline."""
    data = dataset_from_config(config)
    rng = np.random.default_rng(config.seed)
    result = run_qpe_pipeline(data, pipeline_config(config), rng)

    tol = config.eps4 + result.grid_resolution
    rows = []
    all_ok = True
    for i, comp in enumerate(result.comparison):
        w_cl = result.classical.w_raw[:, i]
        norm = np.linalg.norm(w_cl)
        if norm > 0:
            w_fid = float(abs(np.vdot(result.projections[:, i], w_cl / norm)))
        else:
            w_fid = 0.0
        ok = comp.gap <= tol and (comp.ambiguous or comp.fidelity >= 0.99)
        all_ok &= ok
        rows.append({
            "index": i,
            "classical": comp.classical_value,
            "quantum": comp.quantum_value,
            "gap": comp.gap,
            "tolerance": tol,
            "fidelity": comp.fidelity,
            "projection_fidelity": w_fid,
            "ambiguous": comp.ambiguous,
            "pass": bool(ok),
        })

    payload = {
        "schema_version": SCHEMA_VERSION,
        "seed": config.seed,
        "dataset": {
            "p": data.p, "q": data.q, "n": data.n,
            "class_sizes": list(data.class_sizes),
            "max_abs_entry": data.max_abs_entry,
        },
        "tolerances": {
            "eps1": config.eps1, "eps2": config.eps2,
            "eps3": config.eps3, "eps4": config.eps4,
            "delta1": config.delta1, "delta2": config.delta2,
        },
        "grid_resolution": result.grid_resolution,
        "t_bits": config.t_bits,
        "eigenpairs": rows,
        "trace_ratio": {
            "estimate": result.trace_ratio,
            "exact": result.trace_ratio_exact,
            "mode": "exact" if config.exact_trace_ratio else "measured",
        },
        "flags": {
            "ambiguous_boundary": bool(result.flags.get("ambiguous_boundary", False)),
            "degenerate_classical": bool(result.classical.degenerate),
            "inject_exact_means": config.inject_exact_means,
        },
        "resources": resource_summary(result),
    }
    return ComparisonReport(payload=_jsonable(payload), passed=bool(all_ok), result=result)


def run_classical(config: RunConfig) -> dict:
    data = dataset_from_config(config)
    centered = classical.mean_center(data)
    ops = classical.build_operators(centered, data)
    spectral = classical.solve_dcca(
        ops, config.d, p=data.p, q=data.q, c=data.c
    )
    return _jsonable({
        "schema_version": SCHEMA_VERSION,
        "seed": config.seed,
        "dataset": {"p": data.p, "q": data.q, "n": data.n,
                    "class_sizes": list(data.class_sizes)},
        "eigenvalues": [float(v) for v in spectral.eigenvalues],
        "degenerate": bool(spectral.degenerate),
        "e_rank": spectral.e_rank,
        "projections": [
            {"w_x": [float(v) for v in wx], "w_y": [float(v) for v in wy]}
            for wx, wy in spectral.projections
        ],
    })


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
