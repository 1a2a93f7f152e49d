"""Bit-exact filter container: `<stem>.filters.f32` + `<stem>.meta.json`.

The payload file is raw little-endian IEEE-754 binary32, row-major n x 9,
no header (exactly 36*n bytes). The sidecar carries models and layer index
ranges; unknown model-level JSON keys survive a read/write round trip.
Selection and grouping hand out index sets, never copies of the payload.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DanglingIndex, SchemaMismatch
from .ingest import LayerRecord, ModelMeta

FILTER_WIDTH = 9
SCHEMA_VERSION = 1

DIMENSIONS = (
    "model",
    "task",
    "visual_category",
    "training_dataset",
    "conv_depth_decile",
    "layer",
)

_MODEL_FIELDS = (
    "model_id",
    "name",
    "task",
    "visual_category",
    "training_dataset",
    "producer",
    "op_set",
    "depth",
    "total_filters",
)
_LAYER_FIELDS = (
    "model_id",
    "layer_index",
    "conv_depth",
    "conv_depth_norm",
    "c_in",
    "c_out",
    "groups",
    "filter_start",
    "filter_count",
)


@dataclass(frozen=True)
class GroupKey:
    """One cell of a grouping: which dimension, and its value."""

    dimension: str
    value: str | int


@dataclass
class FilterStore:
    """In-memory store: filter matrix plus layer and model metadata."""

    filters: np.ndarray
    layers: list[LayerRecord] = field(default_factory=list)
    models: list[ModelMeta] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.filters)

    def validate(self) -> None:
        """Check index-range coverage and model references.

        Raises:
            DanglingIndex: ranges don't tile [0, n) or a model id is missing.
        """
        if self.filters.ndim != 2 or self.filters.shape[1] != FILTER_WIDTH:
            raise SchemaMismatch(
                f"filter matrix must be (n, {FILTER_WIDTH}), got {self.filters.shape}"
            )
        model_ids = {m.model_id for m in self.models}
        if len(model_ids) != len(self.models):
            raise DanglingIndex("duplicate model ids")
        cursor = 0
        for rec in sorted(self.layers, key=lambda r: r.filter_start):
            if rec.model_id not in model_ids:
                raise DanglingIndex(f"layer references unknown model {rec.model_id}")
            if rec.filter_start != cursor or rec.filter_count < 0:
                raise DanglingIndex(
                    f"layer ranges must tile [0, n): gap/overlap at {rec.filter_start}"
                )
            cursor += rec.filter_count
        if cursor != self.n:
            raise DanglingIndex(f"layer ranges cover {cursor} of {self.n} filters")


@dataclass(frozen=True)
class StoreView:
    """Immutable selection of filter rows inside a store."""

    store: FilterStore
    indices: np.ndarray

    @property
    def n(self) -> int:
        return len(self.indices)

    @property
    def filters(self) -> np.ndarray:
        return self.store.filters[self.indices]


def decile_of(conv_depth_norm: float) -> int:
    """Depth decile: floor(norm * 10) clamped into {0..9}."""
    return min(int(conv_depth_norm * 10.0), 9)


def _meta_paths(path_stem: str | Path) -> tuple[Path, Path]:
    stem = Path(path_stem)
    return stem.with_name(stem.name + ".filters.f32"), stem.with_name(
        stem.name + ".meta.json"
    )


def _model_to_json(meta: ModelMeta) -> dict:
    out = {name: getattr(meta, name) for name in _MODEL_FIELDS}
    out["op_census"] = dict(meta.op_census)
    out["filter_shape_census"] = {
        f"{h}x{w}": count for (h, w), count in meta.filter_shape_census.items()
    }
    for key, value in meta.extra.items():
        out.setdefault(key, value)
    return out


def _model_from_json(obj: dict) -> ModelMeta:
    try:
        shape_census = {}
        for key, count in obj.get("filter_shape_census", {}).items():
            h, w = key.split("x")
            shape_census[(int(h), int(w))] = int(count)
        meta = ModelMeta(
            model_id=int(obj["model_id"]),
            name=str(obj.get("name", "")),
            task=str(obj.get("task", "")),
            visual_category=str(obj.get("visual_category", "")),
            training_dataset=str(obj.get("training_dataset", "")),
            producer=str(obj.get("producer", "")),
            op_set=int(obj.get("op_set", 0)),
            depth=int(obj.get("depth", 0)),
            total_filters=int(obj.get("total_filters", 0)),
            op_census={str(k): int(v) for k, v in obj.get("op_census", {}).items()},
            filter_shape_census=shape_census,
        )
    except (KeyError, ValueError, TypeError, AttributeError) as exc:
        raise SchemaMismatch(f"bad model entry: {exc}") from exc
    known = set(_MODEL_FIELDS) | {"op_census", "filter_shape_census"}
    meta.extra = {k: v for k, v in obj.items() if k not in known}
    return meta


def _layer_from_json(obj: dict) -> LayerRecord:
    try:
        return LayerRecord(
            model_id=int(obj["model_id"]),
            layer_index=int(obj["layer_index"]),
            conv_depth=int(obj["conv_depth"]),
            conv_depth_norm=float(obj["conv_depth_norm"]),
            c_in=int(obj["c_in"]),
            c_out=int(obj["c_out"]),
            groups=int(obj["groups"]),
            filter_start=int(obj["filter_start"]),
            filter_count=int(obj["filter_count"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaMismatch(f"bad layer entry: {exc}") from exc


def write_store(store: FilterStore, path_stem: str | Path) -> None:
    """Write `<stem>.filters.f32` and `<stem>.meta.json`.

    Re-reading reproduces the store bit-exactly. I/O problems surface as
    OSError.
    """
    store.validate()
    f32_path, meta_path = _meta_paths(path_stem)
    payload = np.ascontiguousarray(store.filters, dtype="<f4")
    f32_path.write_bytes(payload.tobytes(order="C"))
    meta = {
        "version": SCHEMA_VERSION,
        "n": store.n,
        "models": [_model_to_json(m) for m in store.models],
        "layers": [
            {name: getattr(rec, name) for name in _LAYER_FIELDS}
            for rec in store.layers
        ],
    }
    meta_path.write_text(
        json.dumps(meta, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def read_store(path_stem: str | Path) -> FilterStore:
    """Load a store written by :func:`write_store`.

    Raises:
        SchemaMismatch: sidecar malformed, wrong version, or size mismatch.
        DanglingIndex: layer ranges/model references are inconsistent.
    """
    f32_path, meta_path = _meta_paths(path_stem)
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"meta sidecar is not valid JSON: {exc}") from exc
    if not isinstance(meta, dict) or meta.get("version") != SCHEMA_VERSION:
        raise SchemaMismatch(f"unsupported store version {meta.get('version')!r}")
    try:
        n = int(meta["n"])
        models = [_model_from_json(m) for m in meta["models"]]
        layers = [_layer_from_json(rec) for rec in meta["layers"]]
    except (KeyError, TypeError) as exc:
        raise SchemaMismatch(f"meta sidecar missing field: {exc}") from exc

    raw = f32_path.read_bytes()
    if len(raw) != n * FILTER_WIDTH * 4:
        raise SchemaMismatch(
            f"payload is {len(raw)} bytes, meta says n={n} "
            f"({n * FILTER_WIDTH * 4} bytes)"
        )
    filters = np.frombuffer(raw, dtype="<f4").reshape(n, FILTER_WIDTH).copy()
    store = FilterStore(filters=filters, layers=layers, models=models)
    store.validate()
    return store


def _layer_indices(rec: LayerRecord) -> np.ndarray:
    return np.arange(rec.filter_start, rec.filter_start + rec.filter_count)


def group_by(store: FilterStore, dimension: str) -> list[tuple[GroupKey, np.ndarray]]:
    """Partition filter indices along one metadata dimension.

    Returns (GroupKey, index array) pairs ordered by group value. Only
    non-empty groups appear; together they cover every filter exactly once.
    """
    if dimension not in DIMENSIONS:
        raise ValueError(f"unknown dimension {dimension!r}; pick from {DIMENSIONS}")

    buckets: dict[str | int, list[np.ndarray]] = {}

    def push(value: str | int, rec: LayerRecord) -> None:
        buckets.setdefault(value, []).append(_layer_indices(rec))

    if dimension == "layer":
        for ordinal, rec in enumerate(store.layers):
            push(ordinal, rec)
    elif dimension == "model":
        for rec in store.layers:
            push(rec.model_id, rec)
    elif dimension == "conv_depth_decile":
        for rec in store.layers:
            push(decile_of(rec.conv_depth_norm), rec)
    else:
        tags = {m.model_id: getattr(m, dimension) for m in store.models}
        for rec in store.layers:
            push(tags[rec.model_id], rec)

    groups = []
    for value in sorted(buckets):
        indices = np.concatenate(buckets[value]) if buckets[value] else np.empty(0, int)
        if len(indices):
            groups.append((GroupKey(dimension=dimension, value=value), indices))
    return groups


def select(store: FilterStore, key: GroupKey) -> StoreView:
    """View of the filters matching one group key (empty view if none match)."""
    for group_key, indices in group_by(store, key.dimension):
        if group_key.value == key.value:
            return StoreView(store=store, indices=indices)
    return StoreView(store=store, indices=np.empty(0, dtype=int))


def merge_stores(parts: list[FilterStore]) -> FilterStore:
    """Concatenate stores, reindexing filter ranges; model ids must not clash."""
    filters = (
        np.concatenate([p.filters for p in parts], axis=0)
        if parts
        else np.empty((0, FILTER_WIDTH), dtype=np.float32)
    )
    layers: list[LayerRecord] = []
    models: list[ModelMeta] = []
    offset = 0
    for part in parts:
        for rec in part.layers:
            shifted = LayerRecord(**{f: getattr(rec, f) for f in _LAYER_FIELDS})
            shifted.filter_start += offset
            layers.append(shifted)
        models.extend(part.models)
        offset += part.n
    merged = FilterStore(filters=filters, layers=layers, models=models)
    merged.validate()
    return merged
