"""Classical discriminative CCA solver.

This is the exact reference implementation that every quantum stage is
validated against.  Given two views A (p x n) and B (q x n) whose columns
are grouped into c contiguous classes, it mean-centers the data, builds the
operator pencil (D, E) of the problem

    max w_x' X C Y' w_y   s.t.  w_x' X X' w_x = 1,  w_y' Y Y' w_y = 1,

and solves the equivalent Hermitian eigenproblem H v = lambda v with
H = E^{-1/2} D E^{-1/2} (pseudo-inverse square root on E's null space).

Everything here is pure-function over value-semantic numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Relative cutoff below which eigenvalues of E are treated as zero.
E_NULLSPACE_CUTOFF = 1e-10

# Two eigenvalues closer than this (relative to the spectral radius) are
# reported as degenerate; eigenvector comparisons should then use subspace
# angles instead of per-vector fidelity.
DEGENERACY_TOL = 1e-8


class DimensionError(ValueError):
    """Inconsistent matrix/class dimensions."""


@dataclass(frozen=True)
class PairedDataset:
    """Two raw modality matrices with a contiguous class partition.

    Columns are samples; column j of `a_matrix` pairs with column j of
    `b_matrix`.  Classes occupy contiguous column blocks of sizes
    `class_sizes`.
    """

    a_matrix: np.ndarray
    b_matrix: np.ndarray
    class_sizes: tuple[int, ...]

    def __post_init__(self):
        a = np.asarray(self.a_matrix, dtype=float)
        b = np.asarray(self.b_matrix, dtype=float)
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "b_matrix", b)
        object.__setattr__(self, "class_sizes", tuple(int(s) for s in self.class_sizes))
        if a.ndim != 2 or b.ndim != 2:
            raise DimensionError("a_matrix and b_matrix must be 2-D")
        if a.shape[0] < 1 or b.shape[0] < 1:
            raise DimensionError("need p >= 1 and q >= 1 feature rows")
        if len(self.class_sizes) < 1:
            raise DimensionError("need at least one class")
        if any(s < 1 for s in self.class_sizes):
            raise DimensionError(f"class sizes must be positive, got {self.class_sizes}")
        n = sum(self.class_sizes)
        if a.shape[1] != n or b.shape[1] != n:
            raise DimensionError(
                f"class sizes sum to {n} but matrices have "
                f"{a.shape[1]} and {b.shape[1]} columns"
            )

    @property
    def p(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def q(self) -> int:
        return self.b_matrix.shape[0]

    @property
    def n(self) -> int:
        return self.a_matrix.shape[1]

    @property
    def c(self) -> int:
        return len(self.class_sizes)

    @property
    def n_max(self) -> int:
        """n' = largest class size."""
        return max(self.class_sizes)

    @property
    def n_min(self) -> int:
        """n'' = smallest class size."""
        return min(self.class_sizes)

    @property
    def m_matrix(self) -> np.ndarray:
        """Stacked view M = (A; B), shape (p+q) x n."""
        return np.vstack([self.a_matrix, self.b_matrix])

    @property
    def max_abs_entry(self) -> float:
        return float(np.max(np.abs(self.m_matrix))) if self.n else 0.0

    def class_slice(self, i: int) -> slice:
        start = sum(self.class_sizes[:i])
        return slice(start, start + self.class_sizes[i])


@dataclass(frozen=True)
class PaddedDataset:
    """Class blocks of M padded on the right with zero columns to width n'.

    Entry (k, i*n' + j) equals M^i_{kj} for j < n_i and 0 otherwise, so all
    c blocks share a common width and a flat column index.
    """

    padded_matrix: np.ndarray
    n_max: int
    class_sizes: tuple[int, ...]


def pad_classes(data: PairedDataset) -> PaddedDataset:
    """Build the zero-padded block matrix used by the class-mean oracles."""
    m = data.m_matrix
    npr = data.n_max
    out = np.zeros((data.p + data.q, data.c * npr))
    for i in range(data.c):
        block = m[:, data.class_slice(i)]
        out[:, i * npr : i * npr + block.shape[1]] = block
    return PaddedDataset(out, npr, data.class_sizes)


@dataclass(frozen=True)
class CenteredDataset:
    """Row-centered views X, Y and the row means that were removed."""

    x_matrix: np.ndarray
    y_matrix: np.ndarray
    row_means: np.ndarray  # length p+q, rows of M

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack([self.x_matrix, self.y_matrix])


def mean_center(data: PairedDataset) -> CenteredDataset:
    """Subtract each row's mean: x_i = a_i - abar, y_i = b_i - bbar."""
    m = data.m_matrix
    means = m.mean(axis=1)
    centered = m - means[:, None]
    return CenteredDataset(
        x_matrix=centered[: data.p],
        y_matrix=centered[data.p :],
        row_means=means,
    )


@dataclass(frozen=True)
class DccaOperators:
    """All matrices of the pencil and their low-rank factorizations.

    d_matrix = j_matrix - k_matrix holds exactly; e_matrix = e_factor @
    e_factor.T and similarly for J, K.
    """

    class_block: np.ndarray  # C, n x n block diagonal of ones
    d_matrix: np.ndarray
    e_matrix: np.ndarray
    j_matrix: np.ndarray
    k_matrix: np.ndarray
    class_sums_x: np.ndarray  # X-class sums, p x c
    class_sums_y: np.ndarray  # Y-class sums, q x c
    e_factor: np.ndarray  # diag(X, Y), (p+q) x 2n
    j_factor: np.ndarray  # (Xsums; Ysums), (p+q) x c
    k_factor: np.ndarray  # diag(Xsums, Ysums), (p+q) x 2c


def build_operators(centered: CenteredDataset, data: PairedDataset) -> DccaOperators:
    """Assemble D, E, J, K and their factors from the centered views."""
    x, y = centered.x_matrix, centered.y_matrix
    p, q, n, c = data.p, data.q, data.n, data.c
    if x.shape != (p, n) or y.shape != (q, n):
        raise DimensionError(
            f"centered views {x.shape}/{y.shape} do not match dataset ({p},{q},{n})"
        )

    cmat = np.zeros((n, n))
    for i in range(c):
        s = data.class_slice(i)
        cmat[s, s] = 1.0

    xs = np.stack([x[:, data.class_slice(i)].sum(axis=1) for i in range(c)], axis=1)
    ys = np.stack([y[:, data.class_slice(i)].sum(axis=1) for i in range(c)], axis=1)

    off = xs @ ys.T  # equals X C Y^T
    d = np.block([[np.zeros((p, p)), off], [off.T, np.zeros((q, q))]])

    e_factor = np.block([[x, np.zeros((p, n))], [np.zeros((q, n)), y]])
    j_factor = np.vstack([xs, ys])
    k_factor = np.block([[xs, np.zeros((p, c))], [np.zeros((q, c)), ys]])

    j = j_factor @ j_factor.T
    k = k_factor @ k_factor.T
    # Rebuild D from J - K so the identity is exact in floating point.
    d = j - k
    e = e_factor @ e_factor.T

    return DccaOperators(
        class_block=cmat,
        d_matrix=d,
        e_matrix=e,
        j_matrix=j,
        k_matrix=k,
        class_sums_x=xs,
        class_sums_y=ys,
        e_factor=e_factor,
        j_factor=j_factor,
        k_factor=k_factor,
    )


def pinv_sqrt(mat: np.ndarray, cutoff: float = E_NULLSPACE_CUTOFF) -> tuple[np.ndarray, np.ndarray, int]:
    """Pseudo-inverse square root of a symmetric PSD matrix.

    Returns (S_minus, S_plus, rank) with S_minus = mat^{-1/2} and
    S_plus = mat^{1/2}, both restricted to the eigenspace above
    cutoff * lambda_max.
    """
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    lam_max = float(vals[-1]) if vals.size else 0.0
    keep = vals > cutoff * max(lam_max, 0.0)
    rank = int(np.count_nonzero(keep))
    inv_roots = np.zeros_like(vals)
    roots = np.zeros_like(vals)
    inv_roots[keep] = vals[keep] ** -0.5
    roots[keep] = vals[keep] ** 0.5
    s_minus = (vecs * inv_roots) @ vecs.T
    s_plus = (vecs * roots) @ vecs.T
    return s_minus, s_plus, rank


def hermitian_reduction(ops: DccaOperators) -> np.ndarray:
    """H = E^{-1/2} D E^{-1/2}, symmetrized, on range(E)."""
    e_inv_sqrt, _, _ = pinv_sqrt(ops.e_matrix)
    h = e_inv_sqrt @ ops.d_matrix @ e_inv_sqrt
    return 0.5 * (h + h.T)


def fix_sign(v: np.ndarray) -> np.ndarray:
    """Flip so the largest-magnitude entry is positive (deterministic)."""
    idx = int(np.argmax(np.abs(v)))
    return -v if v[idx] < 0 else v


@dataclass(frozen=True)
class SpectralResult:
    """Top-d eigenpairs of H plus the DCCA projection pairs.

    `projections[i]` is (w_x, w_y) rescaled so each block meets its own
    unit-variance constraint (the form the bilinear objective takes);
    `w_raw[i]` is the unnormalized E^{-1/2} v_i used for residual checks
    and as the quantum comparison target.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns are v_i, unit norm
    projections: tuple[tuple[np.ndarray, np.ndarray], ...]
    d: int
    w_raw: np.ndarray = field(repr=False, default=None)
    degenerate: bool = False
    degenerate_groups: tuple[tuple[int, ...], ...] = ()
    e_rank: int = 0
    e_singular: bool = False
    full_eigenvalues: np.ndarray = field(repr=False, default=None)
    full_eigenvectors: np.ndarray = field(repr=False, default=None)

    def eigenspace_basis(self, value: float, tol: float) -> np.ndarray:
        """Columns spanning all eigenvectors within tol of `value`
        (for principal-angle comparisons under degeneracy)."""
        mask = np.abs(self.full_eigenvalues - value) <= tol
        if not np.any(mask):
            return np.zeros((self.full_eigenvectors.shape[0], 0))
        return self.full_eigenvectors[:, mask]


def solve_dcca(
    ops: DccaOperators,
    d: int | None = None,
    *,
    p: int | None = None,
    q: int | None = None,
    c: int | None = None,
) -> SpectralResult:
    """Top-d eigenpairs of H = E^{-1/2} D E^{-1/2} and projection pairs.

    p, q, c default to what the operator shapes imply (c from the class-sum
    factors).  d defaults to min(p, q, c) and must respect d <= min(p, q)
    and d <= c.
    """
    if p is None:
        p = ops.class_sums_x.shape[0]
    if q is None:
        q = ops.class_sums_y.shape[0]
    if c is None:
        c = ops.class_sums_x.shape[1]
    if d is None:
        d = min(p, q, c)
    if d < 1 or d > min(p, q) or d > c:
        raise DimensionError(f"d={d} violates d <= min(p,q)={min(p, q)} and d <= c={c}")

    dim = p + q
    e_inv_sqrt, _, rank = pinv_sqrt(ops.e_matrix)
    e_singular = rank < dim
    h = e_inv_sqrt @ ops.d_matrix @ e_inv_sqrt
    h = 0.5 * (h + h.T)

    # Diagonalize within range(E) so returned vectors never leak into the
    # null space (where H is identically zero but eigh may mix).
    vals_e, vecs_e = np.linalg.eigh(0.5 * (ops.e_matrix + ops.e_matrix.T))
    keep = vals_e > E_NULLSPACE_CUTOFF * max(float(vals_e[-1]), 0.0)
    basis = vecs_e[:, keep]
    h_small = basis.T @ h @ basis
    vals, vecs_small = np.linalg.eigh(0.5 * (h_small + h_small.T))
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = basis @ vecs_small[:, order]

    n_avail = vals.size
    if d > n_avail:
        # rank(E) < d: pad with zero eigenpairs supported nowhere useful
        pad = d - n_avail
        vals = np.concatenate([vals, np.zeros(pad)])
        extra = np.zeros((dim, pad))
        vecs = np.hstack([vecs, extra])

    top_vals = vals[:d].copy()
    top_vecs = np.stack(
        [fix_sign(vecs[:, i]) if np.linalg.norm(vecs[:, i]) > 0 else vecs[:, i] for i in range(d)],
        axis=1,
    )

    scale = max(abs(float(vals[0])), 1.0) if n_avail else 1.0
    groups: list[tuple[int, ...]] = []
    i = 0
    while i < d:
        j = i
        while j + 1 < n_avail and abs(vals[j + 1] - vals[j]) <= DEGENERACY_TOL * scale:
            j += 1
        if j > i:
            groups.append(tuple(range(i, min(j, d - 1) + 1)))
        i = j + 1
    # the d-th value may continue a group past the returned window
    boundary_degenerate = d < n_avail and abs(vals[d] - vals[d - 1]) <= DEGENERACY_TOL * scale
    degenerate = bool(groups) or boundary_degenerate

    w_raw = e_inv_sqrt @ top_vecs
    projections = []
    for i in range(d):
        wx, wy = w_raw[:p, i], w_raw[p:, i]
        ax = float(wx @ ops.e_matrix[:p, :p] @ wx)
        ay = float(wy @ ops.e_matrix[p:, p:] @ wy)
        wx = wx / np.sqrt(ax) if ax > 1e-14 else wx
        wy = wy / np.sqrt(ay) if ay > 1e-14 else wy
        projections.append((wx, wy))

    return SpectralResult(
        eigenvalues=top_vals,
        eigenvectors=top_vecs,
        projections=tuple(projections),
        d=d,
        w_raw=w_raw,
        degenerate=degenerate,
        degenerate_groups=tuple(groups),
        e_rank=rank,
        e_singular=e_singular,
        full_eigenvalues=vals.copy(),
        full_eigenvectors=vecs.copy(),
    )


class ConstraintError(ValueError):
    """A projection pair violates the unit-variance constraints."""


def brute_force_objective(
    centered: CenteredDataset,
    ops: DccaOperators,
    w_x: np.ndarray,
    w_y: np.ndarray,
    tol: float = 1e-8,
) -> float:
    """Objective w_x' X C Y' w_y for a feasible pair.

    Rejects pairs that violate w_x' X X' w_x = 1 or w_y' Y Y' w_y = 1
    beyond tol.  Used to verify solver optimality by random restarts.
    """
    x, y = centered.x_matrix, centered.y_matrix
    cx = float(w_x @ (x @ x.T) @ w_x)
    cy = float(w_y @ (y @ y.T) @ w_y)
    if abs(cx - 1.0) > tol or abs(cy - 1.0) > tol:
        raise ConstraintError(f"constraints violated: w_x'XX'w_x={cx:.3e}, w_y'YY'w_y={cy:.3e}")
    return float(w_x @ ops.class_sums_x @ ops.class_sums_y.T @ w_y)


def random_feasible_pair(
    centered: CenteredDataset, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray] | None:
    """Draw a random pair on both constraint ellipsoids, or None if one
    view has collapsed (zero variance in every direction)."""
    x, y = centered.x_matrix, centered.y_matrix
    pair = []
    for mat in (x, y):
        gram = mat @ mat.T
        w = rng.standard_normal(mat.shape[0])
        norm2 = float(w @ gram @ w)
        for _ in range(20):
            if norm2 > 1e-12:
                break
            w = rng.standard_normal(mat.shape[0])
            norm2 = float(w @ gram @ w)
        if norm2 <= 1e-12:
            return None
        pair.append(w / np.sqrt(norm2))
    return pair[0], pair[1]
