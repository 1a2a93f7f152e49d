"""Randomness threshold and degeneration/phenotype classification.

The entropy of a randomly initialized layer concentrates near a value that
grows with the filter count n. Sampling minima over repeated standard-normal
draws and fitting a sigmoid in log2(n) gives the threshold curve T_H(n);
layers at or above it are indistinguishable from untrained initialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FitDiverged, Unreliable
from .spectra import CoefficientSet, layer_entropy

# Counter-based generator so each (seed, n, rep) triple is an independent,
# platform-stable substream.
RNG_NAME = "philox4x64"

_U64 = (1 << 64) - 1
_U32 = (1 << 32) - 1


@dataclass(frozen=True)
class ThresholdParams:
    """Sigmoid T_H(n) = L / (1 + e^(-k (log2 n - x0))) + b."""

    L: float
    x0: float
    k: float
    b: float
    rms: float | None = None


# Reference constants for the randomness threshold sigmoid.
PAPER_THRESHOLD = ThresholdParams(L=1.26, x0=2.30, k=0.89, b=-0.31)


def threshold(n: int, params: ThresholdParams = PAPER_THRESHOLD) -> float:
    """Entropy threshold above which an n-filter layer looks untrained."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = math.log2(n)
    return params.L / (1.0 + math.exp(-params.k * (x - params.x0))) + params.b


def _rep_rng(seed: int, n: int, rep: int) -> np.random.Generator:
    key = np.array(
        [seed & _U64, ((n & _U32) << 32) | (rep & _U32)], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(key=key))


def sample_min_entropy(n: int, reps: int, seed: int) -> float:
    """Minimum layer entropy over ``reps`` draws of n standard-normal filters.

    Deterministic for a fixed seed; each rep uses its own counter-based
    substream, so increasing ``reps`` only extends the sample (the minimum is
    non-increasing in reps).
    """
    if n < 2 or reps < 1:
        raise ValueError("need n >= 2 and reps >= 1")
    best = math.inf
    for rep in range(reps):
        draws = _rep_rng(seed, n, rep).standard_normal((n, 9))
        best = min(best, layer_entropy(draws))
    return best


def sample_entropy_curve(
    n_values: list[int], reps: int, seed: int
) -> list[tuple[int, float]]:
    """Minimum-entropy samples for a range of filter counts."""
    return [(n, sample_min_entropy(n, reps, seed)) for n in n_values]


def _sigmoid(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    amp, x0, k, b = p
    return amp / (1.0 + np.exp(-k * (x - x0))) + b


def _sigmoid_jacobian(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    amp, x0, k, _ = p
    s = 1.0 / (1.0 + np.exp(-k * (x - x0)))
    ds = s * (1.0 - s)
    return np.column_stack([s, -amp * k * ds, amp * (x - x0) * ds, np.ones_like(x)])


def _levenberg_marquardt(
    x: np.ndarray,
    y: np.ndarray,
    p0: np.ndarray,
    max_iter: int = 500,
    rel_tol: float = 1e-9,
) -> tuple[np.ndarray, float]:
    """Damped Gauss-Newton on the sigmoid with its analytic Jacobian."""
    p = np.asarray(p0, dtype=np.float64)
    residual = _sigmoid(x, p) - y
    cost = float(residual @ residual)
    lam = 1e-3
    for _ in range(max_iter):
        jac = _sigmoid_jacobian(x, p)
        normal = jac.T @ jac
        gradient = jac.T @ residual
        damping = np.diag(np.maximum(np.diag(normal), 1e-12))
        accepted = False
        for _ in range(60):
            try:
                step = np.linalg.solve(normal + lam * damping, -gradient)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            candidate = p + step
            res_new = _sigmoid(x, candidate) - y
            cost_new = float(res_new @ res_new)
            if cost_new <= cost:
                accepted = True
                break
            lam *= 10.0
            if lam > 1e14:
                break
        if not accepted:
            break
        improvement = cost - cost_new
        p, residual, cost = candidate, res_new, cost_new
        lam = max(lam * 0.3, 1e-12)
        if improvement <= rel_tol * max(cost, 1e-300):
            break
    return p, math.sqrt(cost / len(x))


def fit_threshold(samples: list[tuple[int, float]]) -> ThresholdParams:
    """Least-squares sigmoid fit of (n, min entropy) samples in log2(n) space.

    Multi-start over a few steepness guesses; deterministic given the inputs.

    Raises:
        ValueError: fewer than 6 distinct n values or span under 3 octaves.
        FitDiverged: no fit beats the constant-model baseline RMS.
    """
    ns = np.array([n for n, _ in samples], dtype=np.float64)
    ys = np.array([h for _, h in samples], dtype=np.float64)
    distinct = np.unique(ns)
    if len(distinct) < 6:
        raise ValueError("need at least 6 distinct n values")
    x = np.log2(ns)
    if x.max() - x.min() < 3.0:
        raise ValueError("n values must span at least 3 octaves")

    baseline = float(np.sqrt(np.mean((ys - ys.mean()) ** 2)))
    spread = ys.max() - ys.min()
    best: tuple[np.ndarray, float] | None = None
    for k0 in (0.5, 1.0, 2.0):
        p0 = np.array([spread, float(np.median(x)), k0, ys.min()])
        p, rms = _levenberg_marquardt(x, ys, p0)
        if best is None or rms < best[1]:
            best = (p, rms)

    params, rms = best
    if not rms < baseline:
        raise FitDiverged(
            f"sigmoid fit rms {rms:.3g} does not improve on constant baseline "
            f"{baseline:.3g}"
        )
    amp, x0, k, b = params
    if k < 0:  # mirrored parameterization of the same curve; canonicalize
        amp, k, b = -amp, -k, b + amp
    return ThresholdParams(L=float(amp), x0=float(x0), k=float(k), b=float(b),
                           rms=float(rms))


@dataclass(frozen=True)
class DegenerationLabel:
    """Layer classification plus the inputs that produced it.

    ``selected`` is the degenerated-layer removal criterion; its precedence
    reading is configurable while the label cascade is fixed, so flipping the
    reading only moves high-entropy, low-sparsity layers in or out of the
    selection.
    """

    label: str
    selected: bool
    entropy: float
    sparsity: float
    n: int
    threshold: float


def classify_layer(
    entropy: float,
    sparsity: float,
    n: int,
    params: ThresholdParams = PAPER_THRESHOLD,
    *,
    margin: float = 0.02,
    entropy_floor: float = 0.5,
    sparsity_bound: float = 0.14,
    and_binds_tighter: bool = True,
) -> DegenerationLabel:
    """Label one layer from its entropy H and sparsity S.

    Cascade: random if H is within ``margin`` of (or above) the randomness
    threshold; degenerate if H < entropy_floor and S >= sparsity_bound; the
    single-signal advisories low_diversity / sparse otherwise; else healthy.
    Random and sparse are mutually exclusive outcomes by construction.
    """
    t = threshold(n, params)
    random_like = entropy >= t - margin
    low_entropy = entropy < entropy_floor
    high_sparsity = sparsity >= sparsity_bound

    if random_like:
        label = "random"
    elif low_entropy and high_sparsity:
        label = "degenerate"
    elif low_entropy:
        label = "low_diversity"
    elif high_sparsity:
        label = "sparse"
    else:
        label = "healthy"

    if and_binds_tighter:
        selected = random_like or (low_entropy and high_sparsity)
    else:
        selected = (random_like or low_entropy) and high_sparsity

    return DegenerationLabel(
        label=label,
        selected=selected,
        entropy=entropy,
        sparsity=sparsity,
        n=n,
        threshold=t,
    )


@dataclass(frozen=True)
class PhenotypeConfig:
    """Heuristic knobs for phenotype rules; all CLI-overridable.

    The decision thresholds are not derived from anything measured, they are
    tuned to reproduce the four qualitative scatter archetypes.
    """

    min_rows: int = 100
    point_mass: float = 0.60
    point_radius: float = 0.05
    spike_mass: float = 0.05
    bins: int = 70
    peak_rel: float = 0.20
    valley_rel: float = 0.50
    kurtosis_limit: float = 10.0


@dataclass(frozen=True)
class PhenotypeLabel:
    label: str
    evidence: dict[str, float] = field(default_factory=dict)


def _peak_positions(counts: np.ndarray) -> list[int]:
    """Local maxima, treating equal-value plateaus as a single peak."""
    peaks = []
    size = len(counts)
    i = 0
    while i < size:
        j = i
        while j + 1 < size and counts[j + 1] == counts[i]:
            j += 1
        left = counts[i - 1] if i > 0 else -np.inf
        right = counts[j + 1] if j + 1 < size else -np.inf
        if counts[i] > left and counts[i] > right:
            peaks.append(i)
        i = j + 1
    return peaks


def _is_multimodal(counts: np.ndarray, cfg: PhenotypeConfig) -> bool:
    top = counts.max()
    if top <= 0:
        return False
    qualifying = [p for p in _peak_positions(counts) if counts[p] >= cfg.peak_rel * top]
    for a_pos in range(len(qualifying)):
        for b_pos in range(a_pos + 1, len(qualifying)):
            a, b = qualifying[a_pos], qualifying[b_pos]
            if b <= a + 1:
                continue
            valley = counts[a + 1:b].min()
            if valley <= cfg.valley_rel * min(counts[a], counts[b]):
                return True
    return False


def _excess_kurtosis(values: np.ndarray) -> float:
    centered = values - values.mean()
    m2 = float((centered ** 2).mean())
    if m2 == 0.0:
        return 0.0
    m4 = float((centered ** 4).mean())
    return m4 / (m2 * m2) - 3.0


def classify_phenotype(
    coeffs: CoefficientSet | np.ndarray,
    pair: tuple[int, int] | None = None,
    config: PhenotypeConfig = PhenotypeConfig(),
) -> PhenotypeLabel:
    """Assign a coefficient cloud one of sun / spikes / symbols / point.

    Rule cascade over the chosen component pair (or all components when
    ``pair`` is None): point when enough rows sit near the origin; spikes
    when any off-origin 2-D histogram bin concentrates mass; symbols when a
    1-D marginal is multi-modal or extremely heavy-tailed; sun otherwise.

    Raises:
        Unreliable: fewer than ``config.min_rows`` coefficient rows.
    """
    c = coeffs.coeffs if isinstance(coeffs, CoefficientSet) else np.asarray(coeffs)
    c = c.astype(np.float64)
    n, dim = c.shape
    if n < config.min_rows:
        raise Unreliable(f"phenotype needs >= {config.min_rows} rows, got {n}")

    columns = list(pair) if pair is not None else list(range(dim))
    sub = c[:, columns]
    lo = float(sub.min())
    hi = float(sub.max())
    span = hi - lo
    evidence: dict[str, float] = {}

    radius = config.point_radius * span
    origin_fraction = float((np.sqrt((sub ** 2).sum(axis=1)) <= radius).mean())
    evidence["origin_fraction"] = origin_fraction
    if origin_fraction >= config.point_mass:
        return PhenotypeLabel(label="point", evidence=evidence)

    if span == 0.0:  # one off-origin mass point: the extreme hotspot case
        evidence["max_spike_mass"] = 1.0
        return PhenotypeLabel(label="spikes", evidence=evidence)

    bins = config.bins
    scale = bins / span
    grid = np.clip(((sub - lo) * scale).astype(np.int64), 0, bins - 1)
    origin_cell = (
        int(np.clip((0.0 - lo) * scale, 0, bins - 1)) if lo <= 0.0 <= hi else None
    )
    max_spike = 0.0
    for a in range(len(columns)):
        for b in range(a + 1, len(columns)):
            flat = grid[:, a] * bins + grid[:, b]
            counts = np.bincount(flat, minlength=bins * bins)
            if origin_cell is not None:
                counts[origin_cell * bins + origin_cell] = 0
            max_spike = max(max_spike, counts.max() / n)
    evidence["max_spike_mass"] = max_spike
    if max_spike >= config.spike_mass:
        return PhenotypeLabel(label="spikes", evidence=evidence)

    multimodal = 0
    max_kurt = 0.0
    for a in range(len(columns)):
        counts = np.bincount(grid[:, a], minlength=bins).astype(np.float64)
        if _is_multimodal(counts, config):
            multimodal += 1
        max_kurt = max(max_kurt, _excess_kurtosis(sub[:, a]))
    evidence["multimodal_components"] = float(multimodal)
    evidence["max_kurtosis"] = max_kurt
    if multimodal or max_kurt > config.kurtosis_limit:
        return PhenotypeLabel(label="symbols", evidence=evidence)

    return PhenotypeLabel(label="sun", evidence=evidence)
