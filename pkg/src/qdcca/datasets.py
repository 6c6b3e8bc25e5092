"""Dataset generation and CSV serialization.

CSV format: a header line `# p=<int> q=<int> classes=<n_1,...,n_c>`
followed by p+q comma-separated rows of n decimal numbers; rows 1..p are
the first view, the rest the second.  The generator produces seeded
class-structured data on a dyadic grid with controllable separation and
density floor, and can adjust row sums so the row means land on a coarse
grid (keeps the simulated mean registers narrow).
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from .classical import PairedDataset, mean_center


class DatasetFormatError(ValueError):
    """Malformed dataset file."""


def save_dataset(data: PairedDataset, path=None) -> str:
    classes = ",".join(str(s) for s in data.class_sizes)
    buf = io.StringIO()
    buf.write(f"# p={data.p} q={data.q} classes={classes}\n")
    for row in np.vstack([data.a_matrix, data.b_matrix]):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def load_dataset(source) -> PairedDataset:
    """Parse a dataset from a path or raw CSV text."""
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, os.PathLike):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    elif isinstance(source, str) and source and "\n" not in source and not source.lstrip().startswith("#"):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = str(source)
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DatasetFormatError("line 1: empty dataset file")
    header = lines[0]
    if not header.startswith("#"):
        raise DatasetFormatError("line 1: missing '# p=... q=... classes=...' header")
    fields = {}
    for tok in header.lstrip("#").split():
        if "=" not in tok:
            raise DatasetFormatError(f"line 1: malformed header token {tok!r}")
        key, val = tok.split("=", 1)
        fields[key] = val
    try:
        p = int(fields["p"])
        q = int(fields["q"])
        class_sizes = tuple(int(x) for x in fields["classes"].split(","))
    except (KeyError, ValueError) as exc:
        raise DatasetFormatError(f"line 1: bad header ({exc})") from exc
    n = sum(class_sizes)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            row = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}: {exc}") from exc
        if len(row) != n:
            raise DatasetFormatError(
                f"line {lineno}: expected {n} columns from class sizes, got {len(row)}"
            )
        rows.append(row)
    if len(rows) != p + q:
        raise DatasetFormatError(
            f"line {len(lines)}: expected {p + q} data rows, got {len(rows)}"
        )
    mat = np.asarray(rows)
    return PairedDataset(mat[:p], mat[p:], class_sizes)


@dataclass(frozen=True)
class GeneratorSpec:
    p: int
    q: int
    class_sizes: tuple
    seed: int
    value_range: float = 2.0
    separation: float = 1.0
    grid_bits: int = 1            # entries are multiples of 2^-grid_bits
    m0_mode: str = "satisfy"      # satisfy | violate | none
    m0_target: float = 0.5
    center_rows: bool = False     # force exactly zero row means
    dyadic_means: bool = True     # force row means onto the half-unit grid

    def __post_init__(self):
        if self.p < 1 or self.q < 1 or not self.class_sizes:
            raise ValueError("need p, q >= 1 and at least one class")
        if any(s < 1 for s in self.class_sizes):
            raise ValueError("class sizes must be positive")
        if self.m0_mode not in ("satisfy", "violate", "none"):
            raise ValueError(f"unknown m0 mode {self.m0_mode!r}")
        if self.value_range <= 0:
            raise ValueError("value range must be positive")


def generate_dataset(spec: GeneratorSpec) -> PairedDataset:
    """Seeded synthetic paired data with class structure.

    satisfy-mode draws spread-out within-class noise so at least half of
    the centered entries clear the target floor; violate-mode clusters the
    data tightly so most centered entries fall below it.
    """
    rng = np.random.default_rng(spec.seed)
    for attempt in range(64):
        data = _draw(spec, rng)
        frac = _density(data, spec.m0_target)
        if spec.m0_mode == "satisfy" and frac >= 0.5:
            return data
        if spec.m0_mode == "violate" and frac <= 0.4:
            return data
        if spec.m0_mode == "none":
            return data
    raise RuntimeError(
        f"could not draw a dataset meeting m0 mode {spec.m0_mode!r} in 64 attempts"
    )


def _density(data: PairedDataset, m0: float) -> float:
    centered = mean_center(data).stacked
    return float(np.mean(np.abs(centered) >= m0 - 1e-12))


def _draw(spec: GeneratorSpec, rng: np.random.Generator) -> PairedDataset:
    p, q = spec.p, spec.q
    c = len(spec.class_sizes)
    n = sum(spec.class_sizes)
    step = 2.0**-spec.grid_bits
    units = int(round(spec.value_range / step))

    if spec.m0_mode == "violate":
        # tight cluster: identical class centers, minimal noise
        centers_a = np.zeros((p, c))
        centers_b = np.zeros((q, c))
        noise_units = 1
    else:
        spread = max(1, int(round(spec.separation * units / 2)))
        centers_a = rng.integers(-spread, spread + 1, size=(p, c)) * step
        while c > 1 and np.allclose(centers_a, centers_a[:, [0]]):
            centers_a = rng.integers(-spread, spread + 1, size=(p, c)) * step
        mix = rng.choice([-1.0, 1.0], size=(q, p))
        centers_b = np.sign(mix @ centers_a + 1e-9) * np.minimum(
            np.abs(mix @ centers_a), spread * step
        )
        centers_b = np.round(centers_b / step) * step
        noise_units = max(1, int(round(spec.m0_target / step)))

    cols_a, cols_b = [], []
    for i, size in enumerate(spec.class_sizes):
        na = rng.integers(-noise_units, noise_units + 1, size=(p, size)) * step
        nb = rng.integers(-noise_units, noise_units + 1, size=(q, size)) * step
        cols_a.append(centers_a[:, [i]] + na)
        cols_b.append(centers_b[:, [i]] + nb)
    a = np.clip(np.concatenate(cols_a, axis=1), -spec.value_range, spec.value_range)
    b = np.clip(np.concatenate(cols_b, axis=1), -spec.value_range, spec.value_range)
    a = np.round(a / step) * step
    b = np.round(b / step) * step

    if spec.center_rows:
        a = _adjust_row_sums(a, step, n, spec.value_range, exact_zero=True)
        b = _adjust_row_sums(b, step, n, spec.value_range, exact_zero=True)
    elif spec.dyadic_means:
        a = _adjust_row_sums(a, step, n, spec.value_range, exact_zero=False)
        b = _adjust_row_sums(b, step, n, spec.value_range, exact_zero=False)
    return PairedDataset(a, b, tuple(spec.class_sizes))


def _adjust_row_sums(mat: np.ndarray, step: float, n: int, vmax: float, exact_zero: bool) -> np.ndarray:
    """Nudge entries by single grid steps so each row's mean lands on the
    half-unit grid (or is exactly zero), preserving range and grid."""
    out = mat.copy()
    for r in range(out.shape[0]):
        units = np.round(out[r] / step).astype(int)
        total = int(units.sum())
        if exact_zero:
            residue = total
        else:
            modulus = n * max(1, int(round(0.5 / step)))
            residue = ((total + modulus // 2) % modulus) - modulus // 2
        sign = 1 if residue > 0 else -1
        vmax_units = int(round(vmax / step))
        k = 0
        guard = 0
        while residue != 0 and guard < 10 * abs(total) + 10 * n:
            j = k % n
            k += 1
            guard += 1
            if sign > 0 and units[j] > -vmax_units:
                units[j] -= 1
                residue -= 1
            elif sign < 0 and units[j] < vmax_units:
                units[j] += 1
                residue += 1
        out[r] = units * step
    return out
