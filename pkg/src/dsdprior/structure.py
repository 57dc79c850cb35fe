"""Design and structure matrices for latent Gaussian model components.

Builders for common intrinsic structures (random walks, graph-based
conditional autoregressions, penalized spline penalties), the spectral
split of a rank-deficient precision into null and range parts, and the
eigenvalue weights of the centered quadratic form

    V = nu' M nu / (n - 1),    M = I - 11'/n,

which drive everything downstream: under a sum-to-zero constrained
Gaussian with precision K / sigma2, V given sigma2 is distributed as a
weighted sum of chi-squared(1) variables with the weights computed here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "DesignMatrix",
    "QfWeights",
    "SpectralSplit",
    "StructureSpec",
    "build_bspline_basis",
    "build_icar",
    "build_rw",
    "centering_matrix",
    "qf_weights",
    "scaled_structure",
    "spectral_split",
]

_EPS = np.finfo(float).eps

_DESIGN_KINDS = ("identity", "selection", "basis", "covariate-column")


def _as_readonly(a):
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass
class StructureSpec:
    """Symmetric positive semi-definite precision structure K with a
    declared rank deficiency (null space dimension)."""

    precision: np.ndarray
    rank_deficiency: int
    label: str = ""
    _split: "SpectralSplit | None" = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        k = np.array(self.precision, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] < 1:
            raise ValueError("precision must be a square matrix")
        if not np.all(np.isfinite(k)):
            raise ValueError("precision must be finite")
        scale = max(1.0, float(np.max(np.abs(k))))
        if np.max(np.abs(k - k.T)) > 1e-12 * scale:
            raise ValueError("precision must be symmetric")
        if not isinstance(self.rank_deficiency, (int, np.integer)):
            raise ValueError("rank_deficiency must be an integer")
        if not 0 <= self.rank_deficiency < k.shape[0]:
            raise ValueError("rank_deficiency must lie in [0, n_g)")
        self.precision = _as_readonly((k + k.T) / 2.0)
        self.rank_deficiency = int(self.rank_deficiency)

    @property
    def n_g(self) -> int:
        return self.precision.shape[0]


@dataclass(frozen=True)
class SpectralSplit:
    """Eigendecomposition of K split at the rank deficiency: K has
    orthonormal null basis U0 (n_g x kappa) and range basis U+ with
    strictly positive eigenvalues, K = U+ diag(eigs) U+'."""

    null_basis: np.ndarray
    range_basis: np.ndarray
    range_eigs: np.ndarray


@dataclass
class DesignMatrix:
    """Predictor-to-coefficient map Z (n x m) plus a kind tag that
    records how it was built; meta carries builder details (knots on a
    spline basis, and so on)."""

    values: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        z = np.array(self.values, dtype=float)
        if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] < 1:
            raise ValueError("design matrix must be 2-d and non-empty")
        if not np.all(np.isfinite(z)):
            raise ValueError("design matrix must be finite")
        if self.kind not in _DESIGN_KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}; expected one of {_DESIGN_KINDS}")
        if self.kind == "identity":
            if z.shape[0] != z.shape[1] or not np.array_equal(z, np.eye(z.shape[0])):
                raise ValueError("identity kind requires Z = I")
        if self.kind == "selection":
            one_hot = np.all(np.isin(z, (0.0, 1.0))) and np.all(z.sum(axis=1) == 1.0)
            if not one_hot:
                raise ValueError("selection kind requires exactly one unit entry per row")
        if self.kind == "covariate-column" and z.shape[1] != 1:
            raise ValueError("covariate-column kind requires a single column")
        self.values = _as_readonly(z)

    @classmethod
    def identity(cls, n: int) -> "DesignMatrix":
        return cls(values=np.eye(n), kind="identity")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


@dataclass
class QfWeights:
    """Positive eigenvalue weights of the conditional law of V: given
    sigma2, (n-1) V / sigma2 is a weights-weighted sum of independent
    chi-squared(1) variables. zero_count is how many structurally null
    directions were discarded (at least one, from centering)."""

    weights: np.ndarray
    n_predictor: int
    zero_count: int

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1:
            raise ValueError("weights must be a vector")
        if w.size and (not np.all(np.isfinite(w)) or np.any(w <= 0.0)):
            raise ValueError("weights must be finite and strictly positive")
        if self.n_predictor < 2:
            raise ValueError("need at least two predictor rows")
        if self.zero_count < 0:
            raise ValueError("zero_count must be nonnegative")
        self.weights = _as_readonly(np.sort(w))
        self.n_predictor = int(self.n_predictor)
        self.zero_count = int(self.zero_count)


def centering_matrix(n: int) -> np.ndarray:
    """M = I - 11'/n, the projection removing the mean. Requires n >= 2."""
    if n < 2:
        raise ValueError("centering needs n >= 2")
    return np.eye(n) - np.full((n, n), 1.0 / n)


def build_rw(order: int, n_g: int, circular: bool = False) -> StructureSpec:
    """Random walk precision of the given order on n_g equally spaced
    points, K = D'D with D the order-th difference operator. Circular
    variants wrap the differences around; they lose only the constant
    (rank deficiency 1) whereas the line-graph walk of order r loses the
    full degree-(r-1) polynomial space (rank deficiency r)."""
    if order not in (1, 2):
        raise ValueError("walk order must be 1 or 2")
    if n_g < order + 2:
        raise ValueError("need n_g >= order + 2 grid points")
    eye = np.eye(n_g)
    if circular:
        if order == 1:
            d = np.roll(eye, -1, axis=1) - eye
        else:
            d = np.roll(eye, -1, axis=1) + np.roll(eye, 1, axis=1) - 2.0 * eye
        kappa = 1
    else:
        d = np.diff(eye, n=order, axis=0)
        kappa = order
    tag = f"crw{order}" if circular else f"rw{order}"
    return StructureSpec(precision=d.T @ d, rank_deficiency=kappa, label=f"{tag}({n_g})")


def build_icar(adjacency: np.ndarray) -> StructureSpec:
    """Intrinsic conditional autoregression on an undirected graph:
    K = diag(degree) - W. Rank deficiency equals the number of connected
    components (isolated vertices each count as a component)."""
    w = np.array(adjacency, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 2:
        raise ValueError("adjacency must be square with at least two vertices")
    if not np.array_equal(w, w.T):
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diag(w) != 0.0):
        raise ValueError("adjacency must have a zero diagonal (no self loops)")
    if not np.all(np.isin(w, (0.0, 1.0))):
        raise ValueError("adjacency entries must be 0 or 1")
    kappa, _ = connected_components(csr_matrix(w), directed=False)
    precision = np.diag(w.sum(axis=1)) - w
    return StructureSpec(precision=precision, rank_deficiency=int(kappa), label="icar")


def build_bspline_basis(x, m: int, degree: int = 3, bounds=None) -> DesignMatrix:
    """Evaluate m uniformly spaced B-spline basis functions of the given
    degree at the points x. The base interval (bounds, defaulting to the
    data range) is divided into m - degree equal segments and the knot
    vector is extended degree steps past each end, so the basis spans
    exactly m functions and sums to one on the interval."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.size < 1 or not np.all(np.isfinite(x)):
        raise ValueError("x must be a finite vector")
    if degree < 1:
        raise ValueError("degree must be at least 1")
    if m < degree + 2:
        raise ValueError("need m >= degree + 2 basis functions")
    lo, hi = bounds if bounds is not None else (float(x.min()), float(x.max()))
    if not hi > lo:
        raise ValueError("basis range is degenerate; pass explicit bounds")
    if np.any(x < lo) or np.any(x > hi):
        raise ValueError("x must lie inside the basis bounds")
    n_seg = m - degree
    dx = (hi - lo) / n_seg
    knots = lo + dx * np.arange(-degree, n_seg + degree + 1)
    values = BSpline.design_matrix(x, knots, degree, extrapolate=False).toarray()
    meta = {
        "knots": [float(t) for t in knots],
        "degree": int(degree),
        "bounds": (lo, hi),
        "placement": "uniform",
    }
    return DesignMatrix(values=values, kind="basis", meta=meta)


def spectral_split(spec: StructureSpec) -> SpectralSplit:
    """Symmetric eigendecomposition of K classified against the declared
    rank deficiency. Eigenvalues below n_g * eps * max_eig are treated
    as null; their count must equal the declared deficiency, otherwise
    the declaration is wrong and we refuse to guess. Cached per spec."""
    if spec._split is not None:
        return spec._split
    eigs, vecs = np.linalg.eigh(spec.precision)
    lam_max = float(eigs[-1])
    if lam_max <= 0.0:
        raise ValueError("structure matrix has no positive eigenvalues")
    if eigs[0] < -1e-10 * lam_max:
        raise ValueError("structure matrix is not positive semi-definite")
    tau = spec.n_g * _EPS * lam_max
    null = eigs < tau
    found = int(np.sum(null))
    if found != spec.rank_deficiency:
        raise ValueError(
            f"declared rank deficiency {spec.rank_deficiency} but found "
            f"{found} null eigenvalues (threshold {tau:.3e})"
        )
    split = SpectralSplit(
        null_basis=_as_readonly(vecs[:, null]),
        range_basis=_as_readonly(vecs[:, ~null]),
        range_eigs=_as_readonly(eigs[~null]),
    )
    spec._split = split
    return split


def qf_weights(design: DesignMatrix, spec: StructureSpec, constrained: bool) -> QfWeights:
    """Eigenvalue weights of V = nu' M nu / (n-1) under the (possibly
    constrained) Gaussian with structure K and design Z, nu = Z beta.

    The conditional law of (n-1) V given sigma2 is sigma2 times a sum of
    weights[k] * chi-squared(1). The weights are the nonzero eigenvalues
    of (Z'MZ) K^-, computed through the symmetric congruence
    Lambda+^{-1/2} U+' (Z'MZ) U+ Lambda+^{-1/2} so a single symmetric
    eigensolve gives them in deterministic ascending order.

    An improper structure (rank_deficiency > 0) is only meaningful under
    the null-space constraint U0' beta = 0; asking for the unconstrained
    law of such a component is an error, not a warning.
    """
    if design.m != spec.n_g:
        raise ValueError("design columns must match the structure size")
    n = design.n
    if n < 2:
        raise ValueError("need at least two predictor rows")
    if spec.rank_deficiency > 0 and not constrained:
        raise ValueError(
            "improper structure (rank deficiency > 0) has no unconstrained "
            "sampling law; pass constrained=True"
        )
    split = spectral_split(spec)
    zc = design.values - design.values.mean(axis=0)  # M Z without forming M
    g = zc.T @ zc
    u = split.range_basis
    inv_sqrt = 1.0 / np.sqrt(split.range_eigs)
    a = (u.T @ g @ u) * np.outer(inv_sqrt, inv_sqrt)
    a = (a + a.T) / 2.0
    eigs = np.linalg.eigvalsh(a)
    tau = a.shape[0] * _EPS * max(float(eigs[-1]), 0.0)
    kept = eigs[eigs > tau]
    return QfWeights(
        weights=kept,
        n_predictor=n,
        zero_count=int(eigs.size - kept.size) + spec.rank_deficiency,
    )


def scaled_structure(spec: StructureSpec, design: DesignMatrix) -> StructureSpec:
    """Rescale K so the conditional mean of V is exactly sigma2: multiply
    the precision by sum(weights) / (n-1), which divides every weight by
    that factor and makes the recomputed weights sum to n - 1."""
    w = qf_weights(design, spec, constrained=spec.rank_deficiency > 0)
    if w.weights.size == 0:
        raise ValueError("structure has no positive weights to scale against")
    factor = float(w.weights.sum()) / (w.n_predictor - 1)
    label = f"{spec.label} (scaled)" if spec.label else "scaled"
    return StructureSpec(
        precision=spec.precision * factor,
        rank_deficiency=spec.rank_deficiency,
        label=label,
    )
