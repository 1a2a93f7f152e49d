"""Numerical core: filter normalization, PCA over flattened kernels, and
per-layer sparsity / entropy / scale statistics.

The PCA never materializes an SVD of the full n x 9 matrix. Filters are
centered, the 9x9 Gram matrix is accumulated in float64, and its Jacobi
eigendecomposition supplies singular values and principal components;
coefficients come from projection. This keeps n-in-the-millions cheap.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import EmptySet, TooFewFilters
from .jacobi import jacobi_eigh

# Relative variance floor below which a filter set counts as zero-variance
# (numerical noise from centering identical rows).
_DEGENERATE_REL = 1e-13


@dataclass
class PcaBasis:
    """Principal-component basis of a filter population.

    components holds the principal components as rows, orthonormal, ordered
    by descending singular value, each sign-fixed so its largest-magnitude
    entry is positive. explained_variance_ratio sums to 1 (or is (1,0,...)
    with ``degenerate`` set when the population has zero variance).
    """

    mean: np.ndarray
    components: np.ndarray
    singular_values: np.ndarray
    explained_variance_ratio: np.ndarray
    n_fit: int
    degenerate: bool
    basis_id: str


@dataclass
class CoefficientSet:
    """Rows of PCA coefficients plus the id of the basis that produced them."""

    coeffs: np.ndarray
    basis_ref: str


@dataclass
class LayerStats:
    """Per-layer diagnostics; entropy is NaN when the layer has one filter."""

    n: int
    sparsity: float
    entropy: float
    mean_scale: float


def _as_matrix(filters: np.ndarray) -> np.ndarray:
    arr = np.asarray(filters)
    if arr.ndim != 2:
        raise ValueError(f"filter matrix must be 2-D, got shape {arr.shape}")
    return arr


def normalize_filters(filters: np.ndarray) -> np.ndarray:
    """Scale each filter by its absolute maximum weight; zero rows pass through.

    Output entries lie in [-1, 1]; dtype is float32.
    """
    arr = _as_matrix(filters).astype(np.float32, copy=True)
    if arr.size == 0:
        return arr
    peak = np.abs(arr).max(axis=1)
    nz = peak > 0
    arr[nz] /= peak[nz, None]
    return arr


def _basis_id(mean: np.ndarray, components: np.ndarray, n: int) -> str:
    digest = hashlib.sha256()
    digest.update(mean.tobytes())
    digest.update(components.tobytes())
    digest.update(str(n).encode())
    return digest.hexdigest()[:12]


def fit_pca(filters: np.ndarray) -> PcaBasis:
    """Center the filter matrix and decompose it into principal components.

    Works on the 9x9 Gram matrix of the centered filters; explained variance
    ratios are the normalized squared singular values over n - 1. A
    zero-variance population (e.g. n identical filters) yields ratios
    (1, 0, ..., 0) and the degenerate flag.

    Raises:
        TooFewFilters: fewer than 2 filters.
    """
    x = _as_matrix(filters).astype(np.float64)
    n, dim = x.shape
    if n < 2:
        raise TooFewFilters(f"PCA needs at least 2 filters, got {n}")

    mean = x.mean(axis=0)
    centered = x - mean
    gram = centered.T @ centered

    eigvals, eigvecs = jacobi_eigh(gram, tol=1e-12, max_sweeps=50)
    order = np.argsort(-eigvals, kind="stable")
    eigvals = np.clip(eigvals[order], 0.0, None)
    components = eigvecs[:, order].T.copy()

    for row in components:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            row *= -1.0

    variances = eigvals / (n - 1)
    total = float(variances.sum())
    scale = float(np.abs(x).max()) if x.size else 0.0
    degenerate = total <= dim * (_DEGENERATE_REL * scale) ** 2

    if degenerate:
        ratios = np.zeros(dim)
        ratios[0] = 1.0
        singular = np.zeros(dim)
    else:
        ratios = variances / total
        singular = np.sqrt(eigvals)

    return PcaBasis(
        mean=mean,
        components=components,
        singular_values=singular,
        explained_variance_ratio=ratios,
        n_fit=n,
        degenerate=degenerate,
        basis_id=_basis_id(mean, components, n),
    )


def project(filters: np.ndarray, basis: PcaBasis) -> CoefficientSet:
    """Coefficients of each filter in the basis: c = (f - mean) V^T."""
    x = _as_matrix(filters).astype(np.float64)
    coeffs = (x - basis.mean) @ basis.components.T
    return CoefficientSet(coeffs=coeffs, basis_ref=basis.basis_id)


def reconstruct(coeffs: CoefficientSet | np.ndarray, basis: PcaBasis) -> np.ndarray:
    """Rebuild float32 filters from coefficients: f = sum_i c_i v_i + mean."""
    c = coeffs.coeffs if isinstance(coeffs, CoefficientSet) else np.asarray(coeffs)
    return (c @ basis.components + basis.mean).astype(np.float32)


def entropy_of_ratios(ratios: np.ndarray) -> float:
    """Base-10 Shannon entropy with the 0*log(0) = 0 convention."""
    r = np.asarray(ratios, dtype=np.float64)
    positive = r[r > 0]
    return max(float(-(positive * np.log10(positive)).sum()), 0.0)


def layer_entropy(filters: np.ndarray) -> float:
    """Entropy of the explained variance ratios of one layer's filters.

    Only expressive when the layer has many more than 9 filters; tiny layers
    are rank-limited and always score low.

    Raises:
        TooFewFilters: fewer than 2 filters.
    """
    return entropy_of_ratios(fit_pca(filters).explained_variance_ratio)


def layer_sparsity(filters: np.ndarray, eps0: float) -> float:
    """Share of filters whose every weight lies within [-eps0, eps0]."""
    arr = _as_matrix(filters)
    if len(arr) == 0:
        return 0.0
    return float((np.abs(arr).max(axis=1) <= eps0).mean())


def default_eps0(
    filters: np.ndarray, rel: float = 0.01, floor: float = 1e-6
) -> float:
    """Relative near-zero threshold: rel x the set's max-abs weight, floored."""
    arr = _as_matrix(filters)
    peak = float(np.abs(arr).max()) if arr.size else 0.0
    return max(rel * peak, floor)


def mean_scale(filters: np.ndarray) -> float:
    """Average per-filter weight range (max - min).

    Raises:
        EmptySet: no filters given.
    """
    arr = _as_matrix(filters)
    if len(arr) == 0:
        raise EmptySet("mean_scale needs at least one filter")
    spans = arr.max(axis=1).astype(np.float64) - arr.min(axis=1)
    return float(spans.mean())


def layer_stats(filters: np.ndarray, eps0: float | None = None) -> LayerStats:
    """Bundle n, sparsity, entropy, and mean scale for one layer."""
    arr = _as_matrix(filters)
    if eps0 is None:
        eps0 = default_eps0(arr)
    entropy = layer_entropy(arr) if len(arr) >= 2 else float("nan")
    return LayerStats(
        n=len(arr),
        sparsity=layer_sparsity(arr, eps0),
        entropy=entropy,
        mean_scale=mean_scale(arr),
    )
