"""filterscope: 3x3 convolution filter extraction and weight-space analytics.

Pipeline: ONNX models -> filter store (raw float32 + JSON sidecar) -> PCA
filter bases, layer sparsity/entropy degeneration checks, and KL-based
distribution drift across metadata groupings.
"""

from __future__ import annotations

from . import errors
from .degeneracy import (
    PAPER_THRESHOLD,
    DegenerationLabel,
    PhenotypeConfig,
    PhenotypeLabel,
    ThresholdParams,
    classify_layer,
    classify_phenotype,
    fit_threshold,
    sample_entropy_curve,
    sample_min_entropy,
    threshold,
)
from .ingest import (
    LayerRecord,
    ModelMeta,
    census,
    compute_conv_depths,
    extract_filters,
    ingest_model,
    parse_model,
)
from .shift import (
    ComponentHistogram,
    DriftResult,
    build_histograms,
    decile_shift,
    drift,
    kl_sym,
    pairwise_drift,
)
from .spectra import (
    CoefficientSet,
    PcaBasis,
    default_eps0,
    fit_pca,
    layer_entropy,
    layer_sparsity,
    mean_scale,
    normalize_filters,
    project,
    reconstruct,
)
from .store import FilterStore, GroupKey, StoreView, group_by, read_store, select, write_store

__version__ = "0.1.0"
