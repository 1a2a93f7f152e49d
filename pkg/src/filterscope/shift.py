"""Distribution shift between filter sets.

Both sets are projected onto a shared PCA basis; per-component coefficient
histograms (70 uniform bins, epsilon-floored) are compared with symmetric
Kullback-Leibler divergence, and the drift D is the explained-variance
weighted sum over components.

The symmetric KL is accumulated as sum((max(p,q) - min(p,q)) * log(max/min))
per bin, which makes symmetry and non-negativity exact in floating point,
not just up to rounding.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import BinMismatch, DegenerateRange, EmptyCoefficients
from .spectra import CoefficientSet, PcaBasis, project
from .store import FilterStore, decile_of

logger = logging.getLogger("filterscope.shift")

NUM_BINS = 70
PROB_FLOOR = 1e-10

# natural log divisors per KL log base
_LOG_DIVISOR = {"e": 1.0, "10": math.log(10.0), "2": math.log(2.0)}


@dataclass
class ComponentHistogram:
    """70-bin probability histogram of one component's coefficients."""

    bin_edges: np.ndarray
    probs: np.ndarray
    component_index: int


@dataclass
class DriftResult:
    """Weighted drift plus its per-component KL terms and weights."""

    value: float
    per_component: np.ndarray
    weights: np.ndarray
    basis_ref: str


def _coeff_matrix(coeffs: CoefficientSet | np.ndarray) -> np.ndarray:
    c = coeffs.coeffs if isinstance(coeffs, CoefficientSet) else np.asarray(coeffs)
    return c.astype(np.float64, copy=False)


def build_histograms(
    coeffs: CoefficientSet | np.ndarray,
    value_range: tuple[float, float],
    bins: int = NUM_BINS,
    floor: float = PROB_FLOOR,
) -> list[ComponentHistogram]:
    """Per-component histograms over a shared uniform binning.

    Values outside the range are clamped into the boundary bins. Counts are
    normalized, floored at ``floor``, and renormalized so every bin carries
    positive probability.

    Raises:
        EmptyCoefficients: no rows.
        DegenerateRange: lo >= hi.
    """
    c = _coeff_matrix(coeffs)
    if len(c) == 0:
        raise EmptyCoefficients("histograms need at least one coefficient row")
    lo, hi = float(value_range[0]), float(value_range[1])
    if not lo < hi:
        raise DegenerateRange(f"need lo < hi, got ({lo}, {hi})")

    edges = np.linspace(lo, hi, bins + 1)
    scale = bins / (hi - lo)
    out = []
    for j in range(c.shape[1]):
        idx = np.clip(np.floor((c[:, j] - lo) * scale).astype(np.int64), 0, bins - 1)
        counts = np.bincount(idx, minlength=bins).astype(np.float64)
        probs = counts / counts.sum()
        probs = np.maximum(probs, floor)
        probs /= probs.sum()
        out.append(ComponentHistogram(bin_edges=edges, probs=probs, component_index=j))
    return out


def kl_sym(
    p: ComponentHistogram, q: ComponentHistogram, base: str = "e"
) -> float:
    """Symmetric KL divergence KL(P||Q) + KL(Q||P) between two histograms.

    Zero exactly when the histograms agree bin-wise; always non-negative.

    Raises:
        BinMismatch: the histograms use different bin edges.
    """
    if p.bin_edges.shape != q.bin_edges.shape or not np.array_equal(
        p.bin_edges, q.bin_edges
    ):
        raise BinMismatch("histograms must share bin edges")
    hi_side = np.maximum(p.probs, q.probs)
    lo_side = np.minimum(p.probs, q.probs)
    terms = (hi_side - lo_side) * np.log(hi_side / lo_side)
    return float(terms.sum()) / _LOG_DIVISOR[base]


def _union_range(ca: np.ndarray, cb: np.ndarray) -> tuple[float, float]:
    lo = float(min(ca.min(), cb.min()))
    hi = float(max(ca.max(), cb.max()))
    if lo == hi:  # both clouds collapse to one value; any non-empty bin works
        lo -= 0.5
        hi += 0.5
    return lo, hi


def _drift_from_coeffs(
    ca: np.ndarray,
    cb: np.ndarray,
    basis: PcaBasis,
    base: str,
    value_range: tuple[float, float] | None,
) -> DriftResult:
    rng = _union_range(ca, cb) if value_range is None else value_range
    hists_a = build_histograms(ca, rng)
    hists_b = build_histograms(cb, rng)
    per_component = np.array(
        [kl_sym(a, b, base=base) for a, b in zip(hists_a, hists_b)]
    )
    weights = np.asarray(basis.explained_variance_ratio, dtype=np.float64)
    return DriftResult(
        value=float(weights @ per_component),
        per_component=per_component,
        weights=weights,
        basis_ref=basis.basis_id,
    )


def drift(
    filters_a: np.ndarray,
    filters_b: np.ndarray,
    basis: PcaBasis,
    *,
    base: str = "e",
    value_range: tuple[float, float] | None = None,
) -> DriftResult:
    """Drift D between two filter sets under a shared reference basis.

    Histograms span the min/max of the union of both coefficient sets unless
    an explicit (corpus-level) range is given.
    """
    ca = project(filters_a, basis).coeffs
    cb = project(filters_b, basis).coeffs
    if len(ca) == 0 or len(cb) == 0:
        raise EmptyCoefficients("drift needs two non-empty filter sets")
    return _drift_from_coeffs(ca, cb, basis, base, value_range)


def pairwise_drift(
    groups: list[tuple[object, np.ndarray]],
    basis: PcaBasis,
    *,
    base: str = "e",
    value_range: tuple[float, float] | None = None,
) -> tuple[list[object], np.ndarray]:
    """Symmetric drift matrix over named filter groups.

    Each group is projected once; cells are filled for unordered pairs so the
    matrix is exactly symmetric with a zero diagonal.
    """
    if len(groups) < 2:
        raise ValueError("pairwise drift needs at least 2 groups")
    labels = [key for key, _ in groups]
    coeff_sets = [project(filters, basis).coeffs for _, filters in groups]
    size = len(groups)
    matrix = np.zeros((size, size))
    for i in range(size):
        for j in range(i + 1, size):
            result = _drift_from_coeffs(
                coeff_sets[i], coeff_sets[j], basis, base, value_range
            )
            matrix[i, j] = result.value
            matrix[j, i] = result.value
    return labels, matrix


@dataclass
class DecileShift:
    """All model-pair drifts within one conv-depth decile."""

    decile: int
    pairs: list[tuple[int, int, float]]
    median: float
    q1: float
    q3: float


def decile_shift(
    store: FilterStore,
    basis: PcaBasis,
    *,
    model_ids: list[int] | None = None,
    base: str = "e",
    value_range: tuple[float, float] | None = None,
    normalized_filters: np.ndarray | None = None,
) -> list[DecileShift]:
    """Pairwise model-to-model drift per conv-depth decile.

    Deciles with fewer than two models holding filters are skipped with a
    warning. ``normalized_filters`` substitutes a preprocessed filter matrix
    (same row order as the store).
    """
    keep = set(model_ids) if model_ids is not None else None
    matrix = normalized_filters if normalized_filters is not None else store.filters

    per_decile: dict[int, dict[int, list[np.ndarray]]] = {}
    for rec in store.layers:
        if keep is not None and rec.model_id not in keep:
            continue
        d = decile_of(rec.conv_depth_norm)
        rows = np.arange(rec.filter_start, rec.filter_start + rec.filter_count)
        per_decile.setdefault(d, {}).setdefault(rec.model_id, []).append(rows)

    results = []
    for d in sorted(per_decile):
        by_model = {
            mid: np.concatenate(chunks) for mid, chunks in per_decile[d].items()
        }
        model_list = sorted(mid for mid, rows in by_model.items() if len(rows))
        if len(model_list) < 2:
            logger.warning("decile %d has %d model(s); skipped", d, len(model_list))
            continue
        coeffs = {
            mid: project(matrix[by_model[mid]], basis).coeffs for mid in model_list
        }
        pairs = []
        for i, mid_a in enumerate(model_list):
            for mid_b in model_list[i + 1:]:
                value = _drift_from_coeffs(
                    coeffs[mid_a], coeffs[mid_b], basis, base, value_range
                ).value
                pairs.append((mid_a, mid_b, value))
        values = np.array([v for _, _, v in pairs])
        q1, med, q3 = np.percentile(values, [25.0, 50.0, 75.0])
        results.append(
            DecileShift(decile=d, pairs=pairs, median=float(med), q1=float(q1),
                        q3=float(q3))
        )
    return results
