"""Feature specifications, schema manifests, and the manifest document format."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping

import yaml

from .errors import ValidationError
from .properties import (
    PROPERTY_NAMES,
    Edge,
    PropertySet,
    format_edge,
    validate_property_set,
)

DTYPES = ("numeric", "categorical", "boolean", "ordinal")
SPACE_TAGS = ("original", "model_ready", "interpretable")


@dataclass(frozen=True)
class Wording:
    """Templates for rendering a feature value as natural language.

    ``value_phrase`` must contain the ``{value}`` placeholder.
    """

    positive_statement: str | None = None
    negative_statement: str | None = None
    value_phrase: str | None = None

    def __post_init__(self):
        if self.value_phrase is not None and "{value}" not in self.value_phrase:
            raise ValidationError("value_phrase must contain the {value} placeholder")


@dataclass(frozen=True)
class RawSource:
    """Pointer from a feature to the raw series it was computed from."""

    series_id: str
    window: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "window", tuple(int(v) for v in self.window))
        start, stop = self.window
        if start < 0 or stop <= start:
            raise ValidationError(f"raw_source window must satisfy 0 <= start < stop, got {self.window}")


@dataclass(frozen=True)
class DerivedFrom:
    """Derivation record: parent feature names plus a formula descriptor."""

    inputs: tuple[str, ...]
    formula: str

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if not self.inputs:
            raise ValidationError("derived_from requires at least one input feature")


def _needs_categories(dtype: str) -> bool:
    return dtype in ("categorical", "ordinal")


@dataclass(frozen=True)
class FeatureSpec:
    """Everything declared about one feature: identity, domain, wording,
    interpretability flags, and lineage hooks."""

    name: str
    dtype: str
    description: str = ""
    unit: str | None = None
    categories: tuple[str, ...] | None = None
    wording: Wording | None = None
    properties: PropertySet = field(default_factory=PropertySet)
    raw_source: RawSource | None = None
    derived_from: DerivedFrom | None = None
    observed: bool = False

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ValidationError("feature name must be a non-empty string")
        if self.dtype not in DTYPES:
            raise ValidationError(f"feature {self.name!r}: unknown dtype {self.dtype!r}")
        if self.categories is not None:
            object.__setattr__(self, "categories", tuple(self.categories))
        if _needs_categories(self.dtype):
            if not self.categories:
                raise ValidationError(
                    f"feature {self.name!r}: dtype {self.dtype} requires a non-empty category list")
            if any(not isinstance(c, str) or not c for c in self.categories):
                raise ValidationError(f"feature {self.name!r}: categories must be non-empty strings")
            if len(set(self.categories)) != len(self.categories):
                raise ValidationError(f"feature {self.name!r}: duplicate category labels")
        elif self.categories is not None:
            raise ValidationError(f"feature {self.name!r}: dtype {self.dtype} does not take categories")
        violated = validate_property_set(self.properties)
        if violated:
            edges = ", ".join(format_edge(e) for e in violated)
            raise ValidationError(f"feature {self.name!r}: property implications violated: {edges}")
        if (self.properties.simulatable and self.derived_from is None
                and self.raw_source is None and not self.observed):
            raise ValidationError(
                f"feature {self.name!r}: simulatable requires derived_from, raw_source, "
                "or the observed flag")


@dataclass(frozen=True)
class SchemaManifest:
    """An ordered set of feature specifications tagged with its feature space."""

    features: tuple[FeatureSpec, ...]
    space_tag: str = "original"
    extra_implications: tuple[Edge, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "extra_implications",
                           tuple((t, h) for t, h in self.extra_implications))
        if self.space_tag not in SPACE_TAGS:
            raise ValidationError(f"unknown space_tag {self.space_tag!r}")
        names = [f.name for f in self.features]
        seen: set[str] = set()
        for name in names:
            if name in seen:
                raise ValidationError(f"duplicate feature name {name!r}")
            seen.add(name)
        for spec in self.features:
            violated = validate_property_set(spec.properties, self.extra_implications)
            if violated:
                edges = ", ".join(format_edge(e) for e in violated)
                raise ValidationError(
                    f"feature {spec.name!r}: property implications violated: {edges}")
        if self.space_tag == "model_ready":
            bad = [f.name for f in self.features if not f.properties.model_compatible]
            if bad:
                raise ValidationError(
                    f"space_tag=model_ready requires model_compatible on every feature; "
                    f"missing on: {bad}")

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {f.name: i for i, f in enumerate(self.features)}

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ValidationError(f"unknown feature {name!r}") from None

    def feature(self, name: str) -> FeatureSpec:
        return self.features[self.index(name)]

    def with_space_tag(self, tag: str) -> "SchemaManifest":
        return replace(self, space_tag=tag)


@dataclass(frozen=True)
class SchemaDiff:
    """Difference report between two manifests, keyed by feature name."""

    added: tuple[str, ...]
    removed: tuple[str, ...]
    retyped: tuple[tuple[str, str, str], ...]

    @property
    def is_empty(self) -> bool:
        return not (self.added or self.removed or self.retyped)


def compare_schemas(a: SchemaManifest, b: SchemaManifest) -> SchemaDiff:
    """Symmetric difference by feature name plus dtype changes on shared names."""
    a_names, b_names = set(a.names), set(b.names)
    removed = tuple(n for n in a.names if n not in b_names)
    added = tuple(n for n in b.names if n not in a_names)
    retyped = tuple(
        (n, a.feature(n).dtype, b.feature(n).dtype)
        for n in a.names
        if n in b_names and a.feature(n).dtype != b.feature(n).dtype
    )
    return SchemaDiff(added=added, removed=removed, retyped=retyped)


# ---------------------------------------------------------------------------
# Manifest document format (YAML): top-level `space_tag`, `features`, and an
# optional `implications` extension section. Unknown keys are rejected.

_TOP_KEYS = {"space_tag", "features", "implications"}
_FEATURE_KEYS = {"name", "description", "dtype", "unit", "categories", "wording",
                 "properties", "raw_source", "derived_from", "observed"}
_WORDING_KEYS = {"positive", "negative", "value"}
_RAW_SOURCE_KEYS = {"series_id", "window"}
_DERIVED_KEYS = {"inputs", "formula"}


def _reject_unknown(mapping: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ValidationError(f"{where}: unknown keys {unknown}")


def _parse_properties(data: Any, where: str) -> PropertySet:
    if data is None:
        return PropertySet()
    if isinstance(data, list):
        return PropertySet.from_names(data)
    if isinstance(data, Mapping):
        _reject_unknown(data, set(PROPERTY_NAMES), where)
        return PropertySet(**{k: bool(v) for k, v in data.items()})
    raise ValidationError(f"{where}: properties must be a mapping or a list of flag names")


def parse_wording_data(data: Any, where: str = "wording") -> Wording | None:
    if data is None:
        return None
    if not isinstance(data, Mapping):
        raise ValidationError(f"{where}: wording must be a mapping")
    _reject_unknown(data, _WORDING_KEYS, where)
    return Wording(
        positive_statement=data.get("positive"),
        negative_statement=data.get("negative"),
        value_phrase=data.get("value"),
    )


def _parse_feature(data: Any, position: int) -> FeatureSpec:
    where = f"features[{position}]"
    if not isinstance(data, Mapping):
        raise ValidationError(f"{where}: each feature must be a mapping")
    _reject_unknown(data, _FEATURE_KEYS, where)
    for key in ("name", "dtype"):
        if key not in data:
            raise ValidationError(f"{where}: missing required key {key!r}")
    raw_source = None
    if data.get("raw_source") is not None:
        rs = data["raw_source"]
        if not isinstance(rs, Mapping):
            raise ValidationError(f"{where}: raw_source must be a mapping")
        _reject_unknown(rs, _RAW_SOURCE_KEYS, f"{where}.raw_source")
        if "series_id" not in rs or "window" not in rs:
            raise ValidationError(f"{where}: raw_source needs series_id and window")
        raw_source = RawSource(series_id=str(rs["series_id"]), window=tuple(rs["window"]))
    derived = None
    if data.get("derived_from") is not None:
        df = data["derived_from"]
        if not isinstance(df, Mapping):
            raise ValidationError(f"{where}: derived_from must be a mapping")
        _reject_unknown(df, _DERIVED_KEYS, f"{where}.derived_from")
        if "inputs" not in df or "formula" not in df:
            raise ValidationError(f"{where}: derived_from needs inputs and formula")
        derived = DerivedFrom(inputs=tuple(str(n) for n in df["inputs"]),
                              formula=str(df["formula"]))
    categories = data.get("categories")
    return FeatureSpec(
        name=str(data["name"]),
        dtype=str(data["dtype"]),
        description=str(data.get("description", "")),
        unit=None if data.get("unit") is None else str(data["unit"]),
        categories=None if categories is None else tuple(str(c) for c in categories),
        wording=parse_wording_data(data.get("wording"), f"{where}.wording"),
        properties=_parse_properties(data.get("properties"), f"{where}.properties"),
        raw_source=raw_source,
        derived_from=derived,
        observed=bool(data.get("observed", False)),
    )


def manifest_from_data(data: Any) -> SchemaManifest:
    """Build a manifest from an already-parsed document structure."""
    if not isinstance(data, Mapping):
        raise ValidationError("manifest document must be a mapping")
    _reject_unknown(data, _TOP_KEYS, "manifest")
    if "space_tag" not in data or "features" not in data:
        raise ValidationError("manifest needs top-level space_tag and features")
    features_data = data["features"]
    if not isinstance(features_data, list):
        raise ValidationError("manifest: features must be a list")
    features = tuple(_parse_feature(f, i) for i, f in enumerate(features_data))
    implications = data.get("implications") or []
    if not isinstance(implications, list):
        raise ValidationError("manifest: implications must be a list of [tail, head] pairs")
    extra = []
    for pair in implications:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ValidationError("manifest: each implication must be a [tail, head] pair")
        extra.append((str(pair[0]), str(pair[1])))
    return SchemaManifest(features=features, space_tag=str(data["space_tag"]),
                          extra_implications=tuple(extra))


def parse_manifest(text: str) -> SchemaManifest:
    """Parse a manifest document; raises ValidationError on malformed input."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"manifest parse error: {exc}") from exc
    return manifest_from_data(data)


def load_manifest(path: str | Path) -> SchemaManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read manifest {path}: {exc}") from exc
    try:
        return parse_manifest(text)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def wording_to_data(w: Wording) -> dict[str, str]:
    out = {}
    if w.positive_statement is not None:
        out["positive"] = w.positive_statement
    if w.negative_statement is not None:
        out["negative"] = w.negative_statement
    if w.value_phrase is not None:
        out["value"] = w.value_phrase
    return out


def manifest_to_data(manifest: SchemaManifest) -> dict[str, Any]:
    features = []
    for spec in manifest.features:
        item: dict[str, Any] = {"name": spec.name, "dtype": spec.dtype}
        if spec.description:
            item["description"] = spec.description
        if spec.unit is not None:
            item["unit"] = spec.unit
        if spec.categories is not None:
            item["categories"] = list(spec.categories)
        if spec.wording is not None:
            item["wording"] = wording_to_data(spec.wording)
        true_flags = spec.properties.true_names()
        if true_flags:
            item["properties"] = list(true_flags)
        if spec.raw_source is not None:
            item["raw_source"] = {"series_id": spec.raw_source.series_id,
                                  "window": list(spec.raw_source.window)}
        if spec.derived_from is not None:
            item["derived_from"] = {"inputs": list(spec.derived_from.inputs),
                                    "formula": spec.derived_from.formula}
        if spec.observed:
            item["observed"] = True
        features.append(item)
    data: dict[str, Any] = {"space_tag": manifest.space_tag, "features": features}
    if manifest.extra_implications:
        data["implications"] = [list(e) for e in manifest.extra_implications]
    return data


def serialize_manifest(manifest: SchemaManifest) -> str:
    return yaml.safe_dump(manifest_to_data(manifest), sort_keys=False,
                          allow_unicode=True, default_flow_style=False)


def save_manifest(manifest: SchemaManifest, path: str | Path) -> None:
    Path(path).write_text(serialize_manifest(manifest), encoding="utf-8")
