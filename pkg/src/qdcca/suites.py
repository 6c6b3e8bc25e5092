"""Named verification suites driving every acceptance property.

Each suite returns a SuiteResult with per-case records and an overall
verdict; the acceptance tests and the CLI `suite` subcommand both run
these.  Cases fan out across worker threads with per-case seeds, so
results are reproducible from (suite, seed).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import classical
from .blockenc import (
    block_extract,
    build_htilde,
    density_encoding,
    params_from_preps,
    verify_encoding,
)
from .datasets import GeneratorSpec, generate_dataset
from .eigensolver import PipelineConfig, choose_time, run_qpe_pipeline
from .kernel import (
    FixedPointFormat,
    OracleTable,
    QubitCapError,
    ResourceReport,
    purification_unitary,
)
from .meanest import MeanEstimationConfig, make_estimator
from .stateprep import (
    ScalingBounds,
    build_mean_oracles,
    estimate_trace_ratio,
    perturbed_psi_e_error,
    prepare_psi_e,
    prepare_psi_j,
    prepare_psi_k,
    psi_e_entries,
    psi_j_entries,
    state_error_bound,
)

SUITE_NAMES = ("lemma1", "appendixB", "stateprep", "blockenc", "pipeline", "resources")


class UnknownSuiteError(ValueError):
    pass


@dataclass
class SuiteResult:
    name: str
    passed: bool
    cases: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"suite": self.name, "passed": self.passed,
             "summary": self.summary, "cases": self.cases},
            sort_keys=True, indent=2, default=_default,
        )


def _default(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def run_suite(name: str, seed: int = 0, workers: int = 4, out_dir: str | None = None) -> SuiteResult:
    try:
        fn = _SUITES[name]
    except KeyError:
        raise UnknownSuiteError(
            f"unknown suite {name!r}; available: {', '.join(SUITE_NAMES)}"
        ) from None
    result = fn(seed=seed, workers=workers)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"{name}.json"), "w", encoding="utf-8") as fh:
            fh.write(result.to_json())
    return result


def _fan_out(fn, args_list, workers: int):
    if workers <= 1 or len(args_list) <= 1:
        return [fn(*a) for a in args_list]
    with ThreadPoolExecutor(max_workers=min(workers, len(args_list))) as pool:
        return list(pool.map(lambda a: fn(*a), args_list))


def _fit_exponent(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


# ---------------------------------------------------------------------------
# lemma1: mean-estimation error/failure bounds and query scaling
# ---------------------------------------------------------------------------


def suite_lemma1(seed: int = 0, workers: int = 4, trials: int = 500) -> SuiteResult:
    eps, delta = 0.05, 0.05
    cfg = MeanEstimationConfig(epsilon=eps, delta=delta)
    gen = np.random.default_rng(seed)
    rng = np.random.default_rng(seed + 1)

    # failure-rate audit over random tables (entries on the 1/8 grid, |.|<=1)
    n_tables = 50
    estimators = []
    for _ in range(n_tables):
        rows = int(gen.integers(1, 5))
        cols = int(gen.integers(2, 9))
        vals = gen.integers(-8, 9, size=(rows, cols)) / 8.0
        table = OracleTable.from_values("M", vals, FixedPointFormat(1, 3))
        row = int(gen.integers(0, rows))
        estimators.append((make_estimator(table, row, cfg), float(vals[row].mean())))
    hits = 0
    per_trial = max(1, trials // n_tables)
    total = 0
    for est, truth in estimators:
        for _ in range(per_trial):
            total += 1
            hits += abs(est.sample(rng) - truth) <= eps
    success = hits / total
    floor = 1.0 - 2.0 * delta - 0.03
    case_fail = {
        "name": "failure-rate", "trials": total, "success_rate": success,
        "floor": floor, "pass": success >= floor,
    }

    # query counter ~ 1/eps
    table = OracleTable.from_values(
        "M", np.array([[0.5, -0.25, 0.75, 0.0, 0.125, -0.5, 0.375, -0.875]]),
        FixedPointFormat(1, 3),
    )
    eps_grid = (0.2, 0.1, 0.05, 0.025)
    queries = []
    for e in eps_grid:
        rep = ResourceReport()
        est = make_estimator(table, 0, MeanEstimationConfig(epsilon=e, delta=delta))
        est.sample(np.random.default_rng(seed + 7), report=rep)
        queries.append(rep.total_queries())
    exponent = _fit_exponent([1.0 / e for e in eps_grid], queries)
    case_scale = {
        "name": "query-scaling", "queries": queries, "exponent": exponent,
        "pass": abs(exponent - 1.0) <= 0.15,
    }

    # exact-identity spot checks
    ident_pass = True
    from .meanest import build_uy, uy_flag_probability
    for _ in range(20):
        cols = int(gen.integers(2, 9))
        vals = gen.integers(-8, 9, size=(1, cols)) / 8.0
        t = OracleTable.from_values("M", vals, FixedPointFormat(1, 3))
        c = max(float(np.max(np.abs(vals))), 0.125)
        p = uy_flag_probability(build_uy(t, 0, c_scale=c))
        ident_pass &= abs(p - (1.0 - vals.mean() / c) / 2.0) <= 1e-10
    case_ident = {"name": "flag-probability-identity", "pass": bool(ident_pass)}

    cases = [case_fail, case_scale, case_ident]
    return SuiteResult(
        name="lemma1", passed=all(c["pass"] for c in cases), cases=cases,
        summary={"success_rate": success, "query_exponent": exponent},
    )


# ---------------------------------------------------------------------------
# appendixB: normalization bound audits
# ---------------------------------------------------------------------------


def _random_spec(gen: np.random.Generator, seed: int) -> GeneratorSpec:
    p = int(gen.integers(1, 4))
    q = int(gen.integers(1, 4))
    c = int(gen.integers(1, 4))
    sizes = tuple(int(gen.integers(1, 5)) for _ in range(c))
    return GeneratorSpec(
        p=p, q=q, class_sizes=sizes, seed=seed,
        value_range=float(gen.choice([1.0, 2.0, 4.0])),
        separation=float(gen.choice([0.5, 1.0, 2.0])),
        m0_mode="none", dyadic_means=bool(gen.integers(0, 2)),
    )


def suite_appendixb(seed: int = 0, workers: int = 4, n_datasets: int = 100) -> SuiteResult:
    gen = np.random.default_rng(seed)
    specs = [_random_spec(gen, seed * 1000 + i) for i in range(n_datasets)]

    def audit_case(i, spec):
        data = generate_dataset(spec)
        bounds = ScalingBounds.from_dataset(data)
        audit = bounds.audit(data)
        return {"case": i, **{k: v for k, v in audit.items()},
                "pass": bool(audit["alpha_ok"] and audit["beta_ok"])}

    cases = _fan_out(audit_case, list(enumerate(specs)), workers)

    # adversarial: every entry at the max magnitude (centered factors vanish)
    amax = np.full((2, 6), 2.0)
    bmax = np.full((1, 6), -2.0)
    adv1 = classical.PairedDataset(amax, bmax, (3, 3))
    b1 = ScalingBounds.from_dataset(adv1, m0=0.5)
    a1 = b1.audit(adv1)
    cases.append({"case": "all-max-entries", **a1, "pass": bool(a1["alpha_ok"] and a1["beta_ok"])})

    # adversarial: two balanced opposite classes; class-sum bound tight
    # within a factor of two
    v = 2.0
    a2 = np.concatenate([np.full((1, 4), v), np.full((1, 4), -v)], axis=1)
    b2 = -a2.copy()
    adv2 = classical.PairedDataset(a2, b2, (4, 4))
    bounds2 = ScalingBounds.from_dataset(adv2)
    audit2 = bounds2.audit(adv2)
    tightness = audit2["max_j_factor"] / bounds2.beta
    cases.append({
        "case": "balanced-opposite-classes", **audit2, "tightness": tightness,
        "pass": bool(audit2["beta_ok"] and tightness >= 0.5 - 1e-12),
    })

    # bound also holds for clamped estimated means on a few datasets
    rng = np.random.default_rng(seed + 5)
    for i in range(3):
        data = generate_dataset(specs[i])
        oracles = build_mean_oracles(
            data, MeanEstimationConfig(epsilon=0.05, delta=0.05), rng, exact=False,
            mean_frac_bits=3,
        )
        bounds = ScalingBounds.from_dataset(data)
        audit = bounds.audit(data, mean_tables=oracles)
        cases.append({"case": f"estimated-means-{i}", **audit,
                      "pass": bool(audit["alpha_ok"] and audit["beta_ok"])})

    passed = all(c["pass"] for c in cases)
    return SuiteResult(
        name="appendixB", passed=passed, cases=cases,
        summary={"datasets": len(cases), "violations": sum(not c["pass"] for c in cases)},
    )


# ---------------------------------------------------------------------------
# stateprep: fidelity, error law, round scaling, trace ratio
# ---------------------------------------------------------------------------


def _m0_family_dataset(m0: float) -> classical.PairedDataset:
    """Entries offset +- m0 around 2 - m0, so the raw maximum stays at 2
    for every m0 while every centered entry sits exactly at +-m0."""
    offset = 2.0 - m0
    row = np.tile([offset + m0, offset - m0], 4)
    a = np.stack([row])
    b = np.stack([np.roll(row, 1)])
    return classical.PairedDataset(a, b, (4, 4))


def suite_stateprep(seed: int = 0, workers: int = 4) -> SuiteResult:
    cases = []
    rng = np.random.default_rng(seed)

    # (a) error law under injected per-entry error
    law_ok = True
    worst = 0.0
    for i in range(20):
        spec = GeneratorSpec(
            p=int(rng.integers(1, 4)), q=int(rng.integers(1, 4)),
            class_sizes=tuple(int(rng.integers(2, 5)) for _ in range(int(rng.integers(1, 4)))),
            seed=seed * 100 + i, value_range=1.0, grid_bits=2,
            m0_mode="satisfy", m0_target=0.25,
        )
        data = generate_dataset(spec)
        for eps1 in (0.02, 0.05, 0.1):
            measured, bound = perturbed_psi_e_error(data, eps1, rng)
            law_ok &= measured <= bound + 1e-12
            worst = max(worst, measured - bound)
    cases.append({"name": "error-law-injection", "pass": bool(law_ok), "worst_excess": worst})

    # (b) true-estimation fidelity against the closed-form bound at the
    # realized mean error
    fid_cases = []
    for i in range(3):
        spec = GeneratorSpec(
            p=2, q=1, class_sizes=(2, 2), seed=seed * 7 + i,
            value_range=1.0, grid_bits=1, m0_mode="satisfy", m0_target=0.5,
        )
        data = generate_dataset(spec)
        bounds = ScalingBounds.from_dataset(data)
        oracles = build_mean_oracles(
            data, MeanEstimationConfig(epsilon=0.05, delta=0.05),
            np.random.default_rng(seed + 100 + i), exact=False, mean_frac_bits=3,
        )
        for prep in (prepare_psi_e, prepare_psi_j, prepare_psi_k):
            try:
                r = prep(data, bounds, oracles=oracles)
            except classical.DimensionError:
                continue
            eps1 = max(r.flags["max_mean_error"], 1e-12)
            bound = state_error_bound(data.max_abs_entry, bounds.m0, eps1)
            ok = r.fidelity >= 1.0 - (bound + 1e-3)
            fid_cases.append({
                "dataset": i, "state": r.name, "fidelity": r.fidelity,
                "bound": bound, "pass": bool(ok),
            })
    cases.append({"name": "true-estimation-fidelity", "cases": fid_cases,
                  "pass": all(c["pass"] for c in fid_cases)})

    # (c) amplification rounds ~ max/m0
    m0s = (1.0, 0.5, 0.25)
    rounds = []
    for m0 in m0s:
        data = _m0_family_dataset(m0)
        bounds = ScalingBounds.from_dataset(data, m0=m0)
        oracles = build_mean_oracles(
            data, MeanEstimationConfig(), np.random.default_rng(seed), exact=True,
        )
        r = prepare_psi_e(data, bounds, oracles=oracles)
        rounds.append(max(r.report.amplification_rounds, 1))
    exponent = _fit_exponent([1.0 / m for m in m0s], rounds)
    cases.append({
        "name": "rounds-vs-m0", "rounds": rounds, "exponent": exponent,
        "pass": abs(exponent - 1.0) <= 0.2,
    })

    # (d) Frobenius identity and forced-zero sparsity of the doubled factor
    sparse_ok = True
    for i in range(10):
        spec = _random_spec(np.random.default_rng(seed + 17 + i), seed * 31 + i)
        data = generate_dataset(spec)
        oracles = build_mean_oracles(
            data, MeanEstimationConfig(), np.random.default_rng(seed), exact=True,
        )
        from .stateprep import psi_k_entries
        jf = psi_j_entries(data, oracles)
        kf = psi_k_entries(data, oracles)
        sparse_ok &= abs(np.linalg.norm(jf) - np.linalg.norm(kf)) <= 1e-12
        p, c = data.p, data.c
        sparse_ok &= np.all(kf[:p, c:] == 0.0) and np.all(kf[p:, :c] == 0.0)
    cases.append({"name": "doubled-factor-structure", "pass": bool(sparse_ok)})

    passed = all(c["pass"] for c in cases)
    return SuiteResult(name="stateprep", passed=passed, cases=cases,
                       summary={"rounds_exponent": exponent})


# ---------------------------------------------------------------------------
# blockenc: construction contracts
# ---------------------------------------------------------------------------


def _perturbed_prep(prep, noise: np.ndarray, eps_state: float):
    """Clone a preparation with an orthogonal state perturbation of the
    given two-norm (isolates the encoding chain's error response)."""
    import dataclasses

    amps = prep.compressed.amplitudes
    n = noise - amps * np.vdot(amps, noise)
    n = n / np.linalg.norm(n)
    new = amps + eps_state * n
    new = new / np.linalg.norm(new)
    compressed = prep.compressed.with_amplitudes(new, check=False)
    err = float(np.linalg.norm(new - prep.target))
    return dataclasses.replace(prep, compressed=compressed, state_error=max(err, 1e-15))


def _prep_triple(data, rng, exact=True, mean_frac_bits=4):
    bounds = ScalingBounds.from_dataset(data)
    oracles = build_mean_oracles(
        data, MeanEstimationConfig(epsilon=0.05, delta=0.05), rng,
        exact=exact, mean_frac_bits=mean_frac_bits,
    )
    pe = prepare_psi_e(data, bounds, oracles=oracles)
    pj = prepare_psi_j(data, bounds, oracles=oracles)
    pk = prepare_psi_k(data, bounds, oracles=oracles)
    return bounds, oracles, pe, pj, pk


def _blockenc_case(i: int, seed: int):
    gen = np.random.default_rng(seed * 97 + i)
    sizes = tuple(
        int(gen.choice([2, 4])) for _ in range(int(gen.integers(2, 4)))
    )
    spec = GeneratorSpec(
        p=int(gen.integers(1, 3)), q=int(gen.integers(1, 3)),
        class_sizes=sizes,
        seed=seed * 11 + i, value_range=2.0, separation=1.0, m0_mode="none",
        center_rows=bool(gen.integers(0, 2)),
    )
    data = generate_dataset(spec)
    rng = np.random.default_rng(seed + i)
    try:
        bounds, oracles, pe, pj, pk = _prep_triple(data, rng)
    except (classical.DimensionError, QubitCapError) as exc:
        return {"case": i, "skipped": str(exc), "pass": None}
    params = params_from_preps(pe, pj, pk, eps3=0.05)
    encs = build_htilde(pe, pj, pk, params)

    rho_e = pe.density_operator().matrix
    rho_j = pj.density_operator().matrix
    rho_k = pk.density_operator().matrix
    inv, _, _ = classical.pinv_sqrt(rho_e.real, cutoff=1.0 / (params.kappa * 1.01))
    f_target = inv @ rho_j.real @ inv
    g_target = inv @ rho_k.real @ inv

    def padded(target, dim):
        out = np.zeros((dim, dim))
        out[: target.shape[0], : target.shape[1]] = target
        return out

    d = encs.rho_e.encoded_dim
    checks = {
        "rho_E": verify_encoding(encs.rho_e, padded(rho_e.real, d)) <= max(encs.rho_e.error_bound, 1e-9),
        "rho_J": verify_encoding(encs.rho_j, padded(rho_j.real, d)) <= max(encs.rho_j.error_bound, 1e-9),
        "rho_K": verify_encoding(encs.rho_k, padded(rho_k.real, d)) <= max(encs.rho_k.error_bound, 1e-9),
        "inv_sqrt": verify_encoding(encs.inv_sqrt, padded(inv, d)) <= params.eps3,
        "F": verify_encoding(encs.f, padded(f_target, d)) <= max(params.eps_f, 1e-9),
        "G": verify_encoding(encs.g, padded(g_target, d)) <= max(params.eps_g, 1e-9),
        "Htilde": verify_encoding(encs.htilde, padded(f_target - g_target, d)) <= params.eps_htilde,
    }
    # footnote ancilla identities from the actually allocated registers
    log2c = lambda x: math.ceil(math.log2(max(x, 2))) if x > 1 else 1
    m1 = sum(pe.state.layout.register(r).width for r in ("mean", "val"))
    m2 = sum(pj.state.layout.register(r).width for r in ("clsmean", "val", "rowmean", "csize"))
    n_bits = pe.state.layout.register("j").width - 1
    c_bits = pj.state.layout.register("i").width
    anc = {
        "a_E": params.a_e == n_bits + m1 + 4,
        "a_J": params.a_j == c_bits + m2 + 1,
        "a_K": params.a_k == params.a_j + 3,
        "a_prime": params.a_prime == params.a_e + params.s + params.inv_sqrt_extra_qubits,
        "a_dprime": params.a_dprime == params.a_j + params.s + 2 * params.a_prime,
        "a_tprime": params.a_tprime == params.a_k + params.s + 2 * params.a_prime,
        "htilde_anc": encs.htilde.ancilla_qubits == params.a_tprime + 1,
    }
    kappa_ok = abs(encs.inv_sqrt.meta["kappa_measured"]
                   - (encs.inv_sqrt.norm_factor / 2.0) ** 2) <= 1e-6 * params.kappa
    ok = all(checks.values()) and all(anc.values()) and kappa_ok
    return {"case": i, "checks": {k: bool(v) for k, v in checks.items()},
            "ancillas": {k: bool(v) for k, v in anc.items()},
            "kappa_consistent": bool(kappa_ok), "pass": bool(ok)}


def suite_blockenc(seed: int = 0, workers: int = 4, n_datasets: int = 20) -> SuiteResult:
    # draw candidates in chunks; register files over the qubit cap are
    # skipped until n_datasets constructions have actually run
    cases = []
    done = 0
    next_i = 0
    chunk = max(workers, 4)
    while done < n_datasets and next_i < 3 * n_datasets:
        batch = _fan_out(lambda i: _blockenc_case(i, seed),
                         [(i,) for i in range(next_i, next_i + chunk)], workers)
        next_i += chunk
        for c in batch:
            if c["pass"] is None:
                continue
            if done < n_datasets:
                cases.append(c)
                done += 1
    if done < n_datasets:
        cases.append({"case": "coverage", "pass": False,
                      "note": f"only {done} constructions fit the cap"})

    # error monotonicity: growing state-prep error never shrinks the
    # measured block error of the combination
    data = generate_dataset(GeneratorSpec(p=2, q=2, class_sizes=(4, 4), seed=seed,
                                          value_range=2.0, m0_mode="none"))
    rng = np.random.default_rng(seed + 3)
    _, _, pe0, pj0, pk0 = _prep_triple(data, rng)
    centered = classical.mean_center(data)
    ops = classical.build_operators(centered, data)
    h = classical.hermitian_reduction(ops)
    target = (np.trace(ops.e_matrix) / np.trace(ops.j_matrix)) * h
    noise = np.random.default_rng(seed + 4).standard_normal(pe0.compressed.amplitudes.size)
    errs = []
    for eps_state in (0.0, 1e-3, 1e-2):
        pe = _perturbed_prep(pe0, noise, eps_state)
        params = params_from_preps(pe, pj0, pk0, eps3=0.05)
        encs = build_htilde(pe, pj0, pk0, params)
        dim = encs.htilde.encoded_dim
        padded = np.zeros((dim, dim))
        padded[: target.shape[0], : target.shape[1]] = target
        errs.append(verify_encoding(encs.htilde, padded))
    mono = all(errs[i] <= errs[i + 1] + 1e-12 for i in range(len(errs) - 1))
    cases.append({"case": "error-monotonicity", "errors": errs, "pass": bool(mono)})

    # perturbed purification: block error tracks 2x the state error
    rng = np.random.default_rng(seed + 9)
    pert_ok = True
    for eps in (1e-3, 1e-2):
        base = np.zeros(16)
        base[: 8] = rng.standard_normal(8)
        base /= np.linalg.norm(base)
        noise = rng.standard_normal(16)
        noise -= base * (base @ noise)
        pert = base + eps * noise / np.linalg.norm(noise)
        pert /= np.linalg.norm(pert)
        w = purification_unitary(pert.astype(complex))
        be = density_encoding(w, 4, 4, ancilla_qubits=4, error_bound=2 * eps, label="rho")
        rho_true = base.reshape(4, 4).T @ base.reshape(4, 4)
        err = verify_encoding(be, rho_true)
        pert_ok &= err <= 2 * eps + 1e-9
    cases.append({"case": "perturbation-tracks-2eps", "pass": bool(pert_ok)})

    passed = all(c["pass"] for c in cases)
    return SuiteResult(name="blockenc", passed=passed, cases=cases,
                       summary={"datasets": n_datasets})


# ---------------------------------------------------------------------------
# pipeline: end-to-end eigenpair recovery
# ---------------------------------------------------------------------------


def curated_pipeline_specs(seed: int):
    """Dataset shapes whose register files fit the simulator cap.

    Centered class sums have rank c-1, so two-class shapes carry one
    usable eigenpair and the d=2 cases use three or four classes.
    Dataset seeds are pinned for shape coverage (screened to be
    nondegenerate at the phase grid); the suite seed drives the run's
    sampling randomness.
    """
    del seed  # dataset draws stay pinned; the caller's seed drives sampling
    return [
        GeneratorSpec(p=1, q=1, class_sizes=(2, 2), seed=1, value_range=2.0,
                      separation=2.0),
        GeneratorSpec(p=2, q=1, class_sizes=(2, 2), seed=4, value_range=2.0,
                      separation=1.5),
        GeneratorSpec(p=1, q=1, class_sizes=(4, 4), seed=2, value_range=2.0,
                      separation=2.0),
        GeneratorSpec(p=1, q=1, class_sizes=(2, 2, 2, 2), seed=14, value_range=2.0,
                      separation=1.5),
        GeneratorSpec(p=2, q=2, class_sizes=(2, 2, 2), seed=3, value_range=2.0,
                      separation=1.5),
        GeneratorSpec(p=2, q=2, class_sizes=(2, 2, 2, 2), seed=5,
                      value_range=2.0, separation=1.5, center_rows=True),
        GeneratorSpec(p=4, q=4, class_sizes=(4, 4, 4, 4), seed=4,
                      value_range=2.0, separation=1.5, center_rows=True),
        GeneratorSpec(p=2, q=2, class_sizes=(4, 4, 4, 4), seed=8,
                      value_range=2.0, separation=1.5, center_rows=True),
        GeneratorSpec(p=3, q=3, class_sizes=(2, 2, 2, 2), seed=12,
                      value_range=2.0, separation=1.5, center_rows=True),
        GeneratorSpec(p=3, q=3, class_sizes=(4, 4), seed=6, value_range=2.0,
                      separation=2.0, center_rows=True),
        GeneratorSpec(p=3, q=2, class_sizes=(4, 4), seed=9, value_range=2.0,
                      separation=2.0, center_rows=True),
        GeneratorSpec(p=2, q=2, class_sizes=(4, 4, 4), seed=16,
                      value_range=2.0, separation=1.5, center_rows=True),
        GeneratorSpec(p=2, q=2, class_sizes=(4, 4), seed=13, value_range=2.0,
                      separation=2.0, center_rows=True),
        GeneratorSpec(p=2, q=2, class_sizes=(4, 4), seed=1, value_range=2.0,
                      separation=1.5, center_rows=True),
    ]


def _classically_nondegenerate(data, d, eps4, t_bits) -> bool:
    """Pre-screen: top-d spectrum separated by > 2x the phase grid."""
    centered = classical.mean_center(data)
    ops = classical.build_operators(centered, data)
    spectral = classical.solve_dcca(ops, min(d, min(data.p, data.q, data.c)))
    full = np.sort(spectral.full_eigenvalues)[::-1]
    ratio = float(np.trace(ops.j_matrix) / max(np.trace(ops.e_matrix), 1e-300))
    if ratio <= 0:
        return False
    h_norm = float(np.linalg.norm(classical.hermitian_reduction(ops), ord=2))
    t = choose_time(ratio, eps4, t_bits, h_norm / ratio)
    grid = ratio * 2.0 * math.pi / (t * (1 << t_bits))
    dd = min(d, full.size - 1)
    if dd < 1:
        return False
    gaps = np.abs(np.diff(full[: dd + 1]))
    return bool(np.all(gaps > 2.0 * grid) and abs(full[0]) > grid)


def _pipeline_case(idx: int, spec: GeneratorSpec, seed: int, eps4: float, t_bits: int):
    data = generate_dataset(spec)
    # centered class sums have rank c-1, so cap d below that
    d = min(2, data.p, data.q, max(data.c - 1, 1))
    if not _classically_nondegenerate(data, d, eps4, t_bits):
        return {"case": idx, "skipped": "degenerate-at-grid", "pass": None}
    cfg = PipelineConfig(d=d, t_bits=t_bits, eps4=eps4)
    rng = np.random.default_rng(seed * 1009 + idx)
    try:
        res = run_qpe_pipeline(data, cfg, rng)
    except QubitCapError as exc:
        return {"case": idx, "skipped": str(exc), "pass": None}
    tol = eps4 + res.grid_resolution
    rows = []
    ok = True
    for i, comp in enumerate(res.comparison):
        w_cl = res.classical.w_raw[:, i]
        w_fid = float(abs(np.vdot(res.projections[:, i], w_cl / np.linalg.norm(w_cl))))
        row_ok = comp.gap <= tol and comp.fidelity >= 0.99 and w_fid >= 0.99
        ok &= row_ok
        rows.append({"gap": comp.gap, "tol": tol, "fidelity": comp.fidelity,
                     "projection_fidelity": w_fid, "pass": bool(row_ok)})
    return {"case": idx, "shape": f"p{data.p}q{data.q}c{data.c}n{data.n}",
            "d": d, "pairs": rows, "pass": bool(ok)}


def suite_pipeline(seed: int = 0, workers: int = 4, eps4: float = 0.05, t_bits: int = 7) -> SuiteResult:
    specs = curated_pipeline_specs(seed)
    cases = _fan_out(
        lambda i, s: _pipeline_case(i, s, seed, eps4, t_bits),
        list(enumerate(specs)), workers,
    )
    run = [c for c in cases if c["pass"] is not None]
    passed = len(run) >= 10 and all(c["pass"] for c in run)
    return SuiteResult(
        name="pipeline", passed=bool(passed), cases=cases,
        summary={"run": len(run), "skipped": len(cases) - len(run)},
    )


# ---------------------------------------------------------------------------
# resources: cost-shape fits and counter relations
# ---------------------------------------------------------------------------


def suite_resources(seed: int = 0, workers: int = 4) -> SuiteResult:
    cases = []
    data = classical.PairedDataset(
        np.array([[1.0, 2, 3, 4]]), np.array([[1.0, 1, 2, 2]]), (2, 2)
    )

    # (a) step-3 controlled-unitary charge ~ 1/eps4
    eps_grid = (0.2, 0.1, 0.05, 0.025)
    charges = []
    for e in eps_grid:
        res = run_qpe_pipeline(
            data, PipelineConfig(d=1, t_bits=7, eps4=e), np.random.default_rng(seed)
        )
        charges.append(res.resources.cost_terms["controlled_unitary_per_qpe"])
    slope = _fit_exponent([1.0 / e for e in eps_grid], charges)
    cases.append({"name": "step3-cost-vs-eps4", "charges": charges,
                  "slope": slope, "pass": abs(slope - 1.0) <= 0.2})

    # (b) amplification rounds ~ max/m0
    m0s = (1.0, 0.5, 0.25)
    rounds = []
    for m0 in m0s:
        fam = _m0_family_dataset(m0)
        bounds = ScalingBounds.from_dataset(fam, m0=m0)
        oracles = build_mean_oracles(
            fam, MeanEstimationConfig(), np.random.default_rng(seed), exact=True
        )
        r = prepare_psi_e(fam, bounds, oracles=oracles)
        rounds.append(max(r.report.amplification_rounds, 1))
    exp_rounds = _fit_exponent([1.0 / m for m in m0s], rounds)
    cases.append({"name": "rounds-vs-max-over-m0", "rounds": rounds,
                  "exponent": exp_rounds, "pass": abs(exp_rounds - 1.0) <= 0.2})

    # (c) T_K row equals T_J row exactly; counters add across stages
    res = run_qpe_pipeline(
        data, PipelineConfig(d=1, t_bits=7, eps4=0.05), np.random.default_rng(seed)
    )
    t_j = res.resources.cost_terms["row_T_J"]
    t_k = res.resources.cost_terms["row_T_K"]
    parts = [p.report for p in res.preps.values()]
    total_queries = res.resources.total_queries()
    part_queries = sum(p.total_queries() for p in parts)
    additive = total_queries >= part_queries  # pipeline adds step3/step4 charges
    decomp = abs(
        res.resources.cost_terms["step3_controlled_unitary"]
        - res.flags["qpe_runs"] * res.resources.cost_terms["controlled_unitary_per_qpe"]
    ) <= 1e-6 * max(res.resources.cost_terms["step3_controlled_unitary"], 1.0)
    cases.append({"name": "tk-equals-tj", "t_j": t_j, "t_k": t_k,
                  "pass": bool(t_k == t_j)})
    cases.append({"name": "counter-additivity", "pass": bool(additive and decomp)})

    passed = all(c["pass"] for c in cases)
    return SuiteResult(name="resources", passed=passed, cases=cases,
                       summary={"step3_slope": slope, "rounds_exponent": exp_rounds})


_SUITES = {
    "lemma1": suite_lemma1,
    "appendixB": suite_appendixb,
    "stateprep": suite_stateprep,
    "blockenc": suite_blockenc,
    "pipeline": suite_pipeline,
    "resources": suite_resources,
}
