"""Transform kernels between the model-ready and interpretable feature spaces.

Every kernel is a pure column operation with a declared inverse capability
(``exact``, ``lossy``, or ``none``), a static output-schema plan, an optional
fit phase, and a default property delta applied during schema propagation.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import KernelError, ValidationError
from .expressions import evaluate, expression_names, parse_expression
from .lineage import Computed, Imputed, LineageRecord, RawLinked
from .properties import PropertySet
from .schema import (
    DerivedFrom,
    FeatureSpec,
    SchemaManifest,
    Wording,
    parse_wording_data,
    wording_to_data,
)
from .table import MISSING, DataTable


@dataclass(frozen=True)
class TransformStep:
    """A configured transform: kind, kind-specific config, and optional
    per-output-feature property overrides."""

    kind: str
    config: Mapping[str, Any] = field(default_factory=dict)
    property_delta: Mapping[str, Mapping[str, bool]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "config", dict(self.config))
        object.__setattr__(self, "property_delta",
                           {str(k): dict(v) for k, v in dict(self.property_delta).items()})


@dataclass(frozen=True)
class FitState:
    """Learned per-step parameters, populated by the fit phase."""

    mean: float | None = None
    scale: float | None = None
    min: float | None = None
    max: float | None = None
    edges: tuple[float, ...] | None = None
    means: tuple[float, ...] | None = None
    loadings: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.scale is not None and self.scale <= 0:
            raise ValidationError(f"fit state scale must be > 0, got {self.scale}")
        if self.edges is not None:
            object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
            if any(a >= b for a, b in zip(self.edges, self.edges[1:])):
                raise ValidationError("fit state edges must be strictly increasing")
        if self.means is not None:
            object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        if self.loadings is not None:
            rows = tuple(tuple(float(v) for v in row) for row in self.loadings)
            object.__setattr__(self, "loadings", rows)
            if rows and any(len(row) != len(rows[0]) for row in rows):
                raise ValidationError("fit state loadings must be rectangular")


@dataclass(frozen=True)
class PlanResult:
    """Static output of a kernel: the full feature list after the step, plus
    which input features each produced feature consumed."""

    features: tuple[FeatureSpec, ...]
    produced: dict[str, tuple[str, ...]]


@dataclass(frozen=True)
class RunContext:
    step_number: int
    series_store: Mapping[str, Sequence[float]] | None = None


# ---------------------------------------------------------------------------
# config helpers

def _check_keys(cfg: Mapping, allowed: set[str], kind: str) -> None:
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ValidationError(f"{kind}: unknown config keys {unknown}")


def _req(cfg: Mapping, key: str, kind: str):
    if key not in cfg or cfg[key] is None:
        raise ValidationError(f"{kind}: missing required config key {key!r}")
    return cfg[key]


def _feature_of(schema: SchemaManifest, name: str, kind: str) -> FeatureSpec:
    if name not in schema:
        raise ValidationError(f"{kind}: unknown feature {name!r}")
    return schema.feature(name)


def _numeric_feature(schema: SchemaManifest, name: str, kind: str) -> FeatureSpec:
    spec = _feature_of(schema, name, kind)
    if spec.dtype != "numeric":
        raise ValidationError(f"{kind}: feature {name!r} must be numeric, is {spec.dtype}")
    return spec


def _check_new_names(names: Sequence[str], schema: SchemaManifest,
                     removed: set[str], kind: str) -> None:
    surviving = set(schema.names) - removed
    for name in names:
        if name in surviving:
            raise ValidationError(f"{kind}: output feature {name!r} collides with an existing feature")
    if len(set(names)) != len(names):
        raise ValidationError(f"{kind}: duplicate output feature names {list(names)}")


def structural_data(spec: FeatureSpec) -> dict[str, Any]:
    """Presentation-level fields of a spec, used to restore it on inversion.

    Properties, derived_from, and raw_source are owned by propagation and are
    deliberately excluded.
    """
    data: dict[str, Any] = {"dtype": spec.dtype}
    if spec.description:
        data["description"] = spec.description
    if spec.unit is not None:
        data["unit"] = spec.unit
    if spec.categories is not None:
        data["categories"] = list(spec.categories)
    if spec.wording is not None:
        data["wording"] = wording_to_data(spec.wording)
    if spec.observed:
        data["observed"] = True
    return data


_STRUCTURAL_KEYS = {"dtype", "description", "unit", "categories", "wording", "observed"}


def _restore_from_data(data: Mapping[str, Any], kind: str) -> dict[str, Any]:
    if not isinstance(data, Mapping):
        raise ValidationError(f"{kind}: restore must be a mapping")
    _check_keys(data, _STRUCTURAL_KEYS, f"{kind}.restore")
    out = dict(data)
    if "categories" in out and out["categories"] is not None:
        out["categories"] = [str(c) for c in out["categories"]]
    if "wording" in out and out["wording"] is not None:
        parse_wording_data(out["wording"], f"{kind}.restore.wording")  # validate shape
        out["wording"] = dict(out["wording"])
    return out


def spec_from_structural(name: str, data: Mapping[str, Any],
                         derived_from: DerivedFrom | None,
                         properties: PropertySet) -> FeatureSpec:
    categories = data.get("categories")
    return FeatureSpec(
        name=name,
        dtype=data["dtype"],
        description=data.get("description", ""),
        unit=data.get("unit"),
        categories=None if categories is None else tuple(categories),
        wording=parse_wording_data(data.get("wording")),
        properties=properties,
        derived_from=derived_from,
        observed=bool(data.get("observed", False)),
    )


def _base_properties(schema: SchemaManifest, inputs: Sequence[str]) -> PropertySet:
    props = schema.feature(inputs[0]).properties
    for name in inputs[1:]:
        props = props.intersect(schema.feature(name).properties)
    return props


def _replace_features(schema: SchemaManifest, remove: Sequence[str],
                      insert_at: int, new_specs: Sequence[FeatureSpec]) -> tuple[FeatureSpec, ...]:
    removed = set(remove)
    out: list[FeatureSpec] = []
    inserted = False
    for i, spec in enumerate(schema.features):
        if i == insert_at:
            out.extend(new_specs)
            inserted = True
        if spec.name not in removed:
            out.append(spec)
    if not inserted:
        out.extend(new_specs)
    return tuple(out)


def _wording_cfg(cfg: Mapping, kind: str) -> dict | None:
    wording = cfg.get("wording")
    if wording is None:
        return None
    parse_wording_data(wording, f"{kind}.wording")
    return dict(wording)


# ---------------------------------------------------------------------------
# kernels

class Kernel:
    kind: str = ""
    invertible: str = "lossy"  # exact | lossy | none

    def normalize(self, cfg: Mapping, schema: SchemaManifest) -> dict:
        raise NotImplementedError

    def requires_fit(self, cfg: Mapping) -> bool:
        return False

    def fit(self, table: DataTable, cfg: Mapping) -> FitState | None:
        return None

    def plan(self, schema: SchemaManifest, cfg: Mapping,
             fit_state: FitState | None) -> PlanResult:
        raise NotImplementedError

    def apply(self, table: DataTable, cfg: Mapping, fit_state: FitState | None,
              ctx: RunContext) -> tuple[list[tuple], list[LineageRecord]]:
        raise NotImplementedError

    def inverse(self, cfg: Mapping, fit_state: FitState | None,
                input_schema: SchemaManifest) -> TransformStep | None:
        return None

    # Effective parameters with fit state folded in; used for serialization
    # and step-identity comparisons.
    def resolved_config(self, cfg: Mapping, fit_state: FitState | None) -> dict:
        return dict(cfg)


def _column_values(table: DataTable, name: str) -> list:
    idx = table.schema.index(name)
    return [row[idx] for row in table.rows]


def _non_missing(values) -> list:
    return [v for v in values if v is not MISSING]


class OneHotEncode(Kernel):
    kind = "one_hot_encode"
    invertible = "exact"

    def normalize(self, cfg, schema):
        _check_keys(cfg, {"feature", "name_template", "names"}, self.kind)
        feature = str(_req(cfg, "feature", self.kind))
        spec = _feature_of(schema, feature, self.kind)
        if spec.dtype != "categorical":
            raise ValidationError(
                f"{self.kind}: feature {feature!r} must be categorical, is {spec.dtype}")
        categories = spec.categories or ()
        if cfg.get("names") is not None:
            names = tuple(str(n) for n in cfg["names"])
            if len(names) != len(categories):
                raise ValidationError(
                    f"{self.kind}: names must match category count "
                    f"({len(names)} != {len(categories)})")
        else:
            template = str(cfg.get("name_template") or "{feature} {category}")
            if "{category}" not in template:
                raise ValidationError(f"{self.kind}: name_template needs a {{category}} placeholder")
            names = tuple(template.format(feature=feature, category=c) for c in categories)
        _check_new_names(names, schema, {feature}, self.kind)
        return {"feature": feature, "names": names}

    def plan(self, schema, cfg, fit_state):
        feature = cfg["feature"]
        spec = schema.feature(feature)
        base = spec.properties
        new_specs = tuple(
            FeatureSpec(
                name=name,
                dtype="boolean",
                description=f"{feature} is {category}",
                properties=base,
                derived_from=DerivedFrom((feature,), self.kind),
            )
            for name, category in zip(cfg["names"], spec.categories)
        )
        features = _replace_features(schema, [feature], schema.index(feature), new_specs)
        return PlanResult(features, {name: (feature,) for name in cfg["names"]})

    def apply(self, table, cfg, fit_state, ctx):
        feature = cfg["feature"]
        idx = table.schema.index(feature)
        categories = table.schema.feature(feature).categories
        names = cfg["names"]
        rows = []
        lineage = []
        for r, row in enumerate(table.rows):
            value = row[idx]
            if value is MISSING:
                cells = (MISSING,) * len(names)
            else:
                cells = tuple(value == c for c in categories)
            rows.append(row[:idx] + cells + row[idx + 1:])
            for name in names:
                lineage.append(LineageRecord(r, name, Computed(self.kind, (feature,))))
        return rows, lineage

    def inverse(self, cfg, fit_state, input_schema):
        spec = input_schema.feature(cfg["feature"])
        return TransformStep("one_hot_decode", {
            "group": cfg["names"],
            "target": cfg["feature"],
            "restore": structural_data(spec),
            "zero_hot": "error",
        })


class OneHotDecode(Kernel):
    kind = "one_hot_decode"
    invertible = "exact"

    def normalize(self, cfg, schema):
        _check_keys(cfg, {"group", "target", "categories", "wording", "unit",
                          "description", "observed", "restore", "zero_hot"}, self.kind)
        group = tuple(str(n) for n in _req(cfg, "group", self.kind))
        if not group:
            raise ValidationError(f"{self.kind}: group must be non-empty")
        for name in group:
            spec = _feature_of(schema, name, self.kind)
            if spec.dtype != "boolean":
                raise ValidationError(
                    f"{self.kind}: group feature {name!r} must be boolean, is {spec.dtype}")
        target = str(_req(cfg, "target", self.kind))
        if cfg.get("restore") is not None:
            restore = _restore_from_data(cfg["restore"], self.kind)
        else:
            categories = tuple(str(c) for c in _req(cfg, "categories", self.kind))
            restore = {"dtype": "categorical", "categories": list(categories)}
            if cfg.get("unit") is not None:
                restore["unit"] = str(cfg["unit"])
            if cfg.get("description"):
                restore["description"] = str(cfg["description"])
            wording = _wording_cfg(cfg, self.kind)
            if wording is not None:
                restore["wording"] = wording
            if cfg.get("observed"):
                restore["observed"] = True
        if restore.get("dtype") != "categorical":
            raise ValidationError(f"{self.kind}: restored dtype must be categorical")
        categories = restore.get("categories") or []
        if len(categories) != len(group):
            raise ValidationError(
                f"{self.kind}: category count must equal group size "
                f"({len(categories)} != {len(group)})")
        zero_hot = str(cfg.get("zero_hot") or "error")
        if zero_hot not in ("error", "missing"):
            raise ValidationError(f"{self.kind}: zero_hot must be 'error' or 'missing'")
        _check_new_names([target], schema, set(group), self.kind)
        return {"group": group, "target": target, "restore": restore, "zero_hot": zero_hot}

    def plan(self, schema, cfg, fit_state):
        group = cfg["group"]
        base = _base_properties(schema, group)
        spec = spec_from_structural(cfg["target"], cfg["restore"],
                                    DerivedFrom(group, self.kind), base)
        insert_at = min(schema.index(n) for n in group)
        features = _replace_features(schema, group, insert_at, (spec,))
        return PlanResult(features, {cfg["target"]: group})

    def apply(self, table, cfg, fit_state, ctx):
        group = cfg["group"]
        indices = [table.schema.index(n) for n in group]
        categories = cfg["restore"]["categories"]
        insert_at = min(indices)
        removed = set(indices)
        rows = []
        lineage = []
        for r, row in enumerate(table.rows):
            cells = [row[i] for i in indices]
            missing = [c is MISSING for c in cells]
            if all(missing):
                value = MISSING
            elif any(missing):
                raise KernelError(
                    f"row {r}: one-hot group {list(group)} mixes MISSING and present cells",
                    row_index=r)
            else:
                trues = [i for i, c in enumerate(cells) if c]
                if len(trues) == 1:
                    value = categories[trues[0]]
                elif len(trues) > 1:
                    raise KernelError(
                        f"row {r}: ill-formed one-hot ({len(trues)} indicators TRUE)",
                        row_index=r)
                elif cfg["zero_hot"] == "missing":
                    value = MISSING
                else:
                    raise KernelError(
                        f"row {r}: zero indicators TRUE in one-hot group {list(group)}",
                        row_index=r)
            kept = tuple(c for i, c in enumerate(row) if i not in removed)
            split = sum(1 for i in range(insert_at) if i not in removed)
            rows.append(kept[:split] + (value,) + kept[split:])
            lineage.append(LineageRecord(r, cfg["target"], Computed(self.kind, group)))
        return rows, lineage

    def inverse(self, cfg, fit_state, input_schema):
        return TransformStep("one_hot_encode", {
            "feature": cfg["target"],
            "names": cfg["group"],
        })


class Standardize(Kernel):
    kind = "standardize"
    invertible = "exact"

    def normalize(self, cfg, schema):
        _check_keys(cfg, {"feature", "mean", "scale", "target", "display_format"}, self.kind)
        feature = str(_req(cfg, "feature", self.kind))
        _numeric_feature(schema, feature, self.kind)
        mean, scale = cfg.get("mean"), cfg.get("scale")
        if (mean is None) != (scale is None):
            raise ValidationError(f"{self.kind}: configure mean and scale together or neither")
        if scale is not None and float(scale) <= 0:
            raise ValidationError(f"{self.kind}: scale must be > 0, got {scale}")
        target = str(cfg.get("target") or feature)
        if target != feature:
            _check_new_names([target], schema, {feature}, self.kind)
        return {
            "feature": feature,
            "mean": None if mean is None else float(mean),
            "scale": None if scale is None else float(scale),
            "target": target,
            "display_format": cfg.get("display_format"),
        }

    def requires_fit(self, cfg):
        return cfg["mean"] is None

    def fit(self, table, cfg):
        values = _non_missing(_column_values(table, cfg["feature"]))
        if not values:
            raise KernelError(f"{self.kind}: column {cfg['feature']!r} has no observed values")
        mean = sum(values) / len(values)
        variance = sum((v - mean) ** 2 for v in values) / len(values)
        scale = math.sqrt(variance)
        if scale <= 0:
            raise KernelError(f"{self.kind}: column {cfg['feature']!r} is constant (scale 0)")
        return FitState(mean=mean, scale=scale)

    def _params(self, cfg, fit_state):
        if cfg["mean"] is not None:
            return cfg["mean"], cfg["scale"]
        if fit_state is None or fit_state.mean is None:
            raise ValidationError(f"{self.kind}: not fitted and no mean/scale configured")
        return fit_state.mean, fit_state.scale

    def resolved_config(self, cfg, fit_state):
        mean, scale = self._params(cfg, fit_state)
        return {**cfg, "mean": mean, "scale": scale}

    def plan(self, schema, cfg, fit_state):
        feature = cfg["feature"]
        spec = schema.feature(feature)
        out = FeatureSpec(
            name=cfg["target"],
            dtype="numeric",
            description=spec.description and f"Standardized {spec.description}" or "",
            properties=spec.properties,
            derived_from=DerivedFrom((feature,), self.kind),
        )
        features = _replace_features(schema, [feature], schema.index(feature), (out,))
        return PlanResult(features, {cfg["target"]: (feature,)})

    def apply(self, table, cfg, fit_state, ctx):
        mean, scale = self._params(cfg, fit_state)
        idx = table.schema.index(cfg["feature"])
        rows = []
        lineage = []
        for r, row in enumerate(table.rows):
            value = row[idx]
            if value is not MISSING:
                value = (value - mean) / scale
            rows.append(row[:idx] + (value,) + row[idx + 1:])
            lineage.append(LineageRecord(r, cfg["target"],
                                         Computed(self.kind, (cfg["feature"],))))
        return rows, lineage

    def inverse(self, cfg, fit_state, input_schema):
        mean, scale = self._params(cfg, fit_state)
        return TransformStep("unstandardize", {
            "feature": cfg["target"],
            "mean": mean,
            "scale": scale,
            "target": cfg["feature"],
            "restore": structural_data(input_schema.feature(cfg["feature"])),
        })


class Unstandardize(Kernel):
    kind = "unstandardize"
    invertible = "exact"

    def normalize(self, cfg, schema):
        _check_keys(cfg, {"feature", "mean", "scale", "target", "restore",
                          "unit", "description", "display_format"}, self.kind)
        feature = str(_req(cfg, "feature", self.kind))
        _numeric_feature(schema, feature, self.kind)
        mean = float(_req(cfg, "mean", self.kind))
        scale = float(_req(cfg, "scale", self.kind))
        if scale <= 0:
            raise ValidationError(f"{self.kind}: scale must be > 0, got {scale}")
        target = str(cfg.get("target") or feature)
        if cfg.get("restore") is not None:
            restore = _restore_from_data(cfg["restore"], self.kind)
        else:
            restore = {"dtype": "numeric"}
            if cfg.get("unit") is not None:
                restore["unit"] = str(cfg["unit"])
            if cfg.get("description"):
                restore["description"] = str(cfg["description"])
        if restore.get("dtype") != "numeric":
            raise ValidationError(f"{self.kind}: restored dtype must be numeric")
        if target != feature:
            _check_new_names([target], schema, {feature}, self.kind)
        return {"feature": feature, "mean": mean, "scale": scale, "target": target,
                "restore": restore, "display_format": cfg.get("display_format")}

    def plan(self, schema, cfg, fit_state):
        feature = cfg["feature"]
        spec = spec_from_structural(cfg["target"], cfg["restore"],
                                    DerivedFrom((feature,), self.kind),
                                    schema.feature(feature).properties)
        features = _replace_features(schema, [feature], schema.index(feature), (spec,))
        return PlanResult(features, {cfg["target"]: (feature,)})

    def apply(self, table, cfg, fit_state, ctx):
        idx = table.schema.index(cfg["feature"])
        mean, scale = cfg["mean"], cfg["scale"]
        rows = []
        lineage = []
        for r, row in enumerate(table.rows):
            value = row[idx]
            if value is not MISSING:
                value = value * scale + mean
            rows.append(row[:idx] + (value,) + row[idx + 1:])
            lineage.append(LineageRecord(r, cfg["target"],
                                         Computed(self.kind, (cfg["feature"],))))
        return rows, lineage

    def inverse(self, cfg, fit_state, input_schema):
        return TransformStep("standardize", {
            "feature": cfg["target"],
            "mean": cfg["mean"],
            "scale": cfg["scale"],
            "target": cfg["feature"],
            "display_format": None,
        })


def _round_edge(value: float) -> int:
    return int(round(value))


def _bin_labels(labels: Sequence[str], edges: Sequence[float], unit: str | None) -> tuple[str, ...]:
    suffix = unit or ""
    return tuple(
        f"{label} ({_round_edge(edges[i])}{suffix}-{_round_edge(edges[i + 1])}{suffix})"
        for i, label in enumerate(labels)
    )


class StatisticalBin(Kernel):
    kind = "statistical_bin"
    invertible = "lossy"

    def normalize(self, cfg, schema):
        _check_keys(cfg, {"feature", "bins", "min", "max", "labels", "target",
                          "keep_original", "wording"}, self.kind)
        feature = str(_req(cfg, "feature", self.kind))
        _numeric_feature(schema, feature, self.kind)
        bins = int(_req(cfg, "bins", self.kind))
        if bins < 1:
            raise ValidationError(f"{self.kind}: bins must be >= 1")
        lo, hi = cfg.get("min"), cfg.get("max")
        if (lo is None) != (hi is None):
            raise ValidationError(f"{self.kind}: configure min and max together or neither")
        if lo is not None and float(lo) >= float(hi):
            raise ValidationError(f"{self.kind}: min must be < max")
        labels = cfg.get("labels")
        if labels is None:
            labels = tuple(f"Bin {i + 1}" for i in range(bins))
        else:
            labels = tuple(str(x) for x in labels)
        if len(labels) != bins:
            raise ValidationError(f"{self.kind}: need exactly {bins} labels, got {len(labels)}")
        keep = bool(cfg.get("keep_original", False))
        target = str(cfg.get("target") or feature)
        if keep and target == feature:
            raise ValidationError(f"{self.kind}: keep_original requires a distinct target name")
        if target != feature:
            _check_new_names([target], schema, set() if keep else {feature}, self.kind)
        return {
            "feature": feature, "bins": bins,
            "min": None if lo is None else float(lo),
            "max": None if hi is None else float(hi),
            "labels": labels, "target": target, "keep_original": keep,
            "wording": _wording_cfg(cfg, self.kind),
        }

    def requires_fit(self, cfg):
        return cfg["min"] is None

    def fit(self, table, cfg):
        values = _non_missing(_column_values(table, cfg["feature"]))
        if not values:
            raise KernelError(f"{self.kind}: column {cfg['feature']!r} has no observed values")
        lo, hi = min(values), max(values)
        if lo >= hi:
            raise KernelError(f"{self.kind}: column {cfg['feature']!r} has a degenerate range")
        return FitState(min=float(lo), max=float(hi), edges=self._edges(lo, hi, cfg["bins"]))

    @staticmethod
    def _edges(lo: float, hi: float, bins: int) -> tuple[float, ...]:
        return tuple(lo + i * (hi - lo) / bins for i in range(bins + 1))

    def _params(self, cfg, fit_state):
        if cfg["min"] is not None:
            lo, hi = cfg["min"], cfg["max"]
            return lo, hi, self._edges(lo, hi, cfg["bins"])
        if fit_state is None or fit_state.min is None:
            raise ValidationError(f"{self.kind}: not fitted and no min/max configured")
        return fit_state.min, fit_state.max, fit_state.edges

    def resolved_config(self, cfg, fit_state):
        lo, hi, _ = self._params(cfg, fit_state)
        return {**cfg, "min": lo, "max": hi}

    def _categories(self, schema, cfg, fit_state):
        unit = schema.feature(cfg["feature"]).unit
        try:
            _, _, edges = self._params(cfg, fit_state)
        except ValidationError:
            return cfg["labels"]  # provisional until fitted
        return _bin_labels(cfg["labels"], edges, unit)

    def plan(self, schema, cfg, fit_state):
        feature = cfg["feature"]
        spec = schema.feature(feature)
        out = FeatureSpec(
            name=cfg["target"],
            dtype="ordinal",
            description=f"Uniform-width bins for {feature}",
            categories=self._categories(schema, cfg, fit_state),
            wording=parse_wording_data(cfg["wording"]),
            properties=spec.properties,
            derived_from=DerivedFrom((feature,), self.kind),
        )
        if cfg["keep_original"]:
            features = schema.features + (out,)
        else:
            features = _replace_features(schema, [feature], schema.index(feature), (out,))
        return PlanResult(features, {cfg["target"]: (feature,)})

    def apply(self, table, cfg, fit_state, ctx):
        feature = cfg["feature"]
        lo, hi, edges = self._params(cfg, fit_state)
        categories = self._categories(table.schema, cfg, fit_state)
        idx = table.schema.index(feature)
        keep = cfg["keep_original"]
        rows = []
        lineage = []
        for r, row in enumerate(table.rows):
            value = row[idx]
            if value is MISSING:
                label = MISSING
            else:
                if value < lo or value > hi:
                    raise KernelError(
                        f"row {r}: value {value!r} of {feature!r} outside bin range "
                        f"[{lo}, {hi}]", row_index=r)
                i = bisect.bisect_right(edges, value) - 1
                label = categories[min(max(i, 0), cfg["bins"] - 1)]
            if keep:
                rows.append(row + (label,))
            else:
                rows.append(row[:idx] + (label,) + row[idx + 1:])
            lineage.append(LineageRecord(r, cfg["target"], Computed(self.kind, (feature,))))
        return rows, lineage


class SemanticBin(Kernel):
    kind = "semantic_bin"
    invertible = "lossy"

    def normalize(self, cfg, schema):
        _check_keys(cfg, {"feature", "boundaries", "labels", "target",
                          "keep_original", "wording"}, self.kind)
        feature = str(_req(cfg, "feature", self.kind))
        _numeric_feature(schema, feature, self.kind)
        boundaries = tuple(float(b) for b in _req(cfg, "boundaries", self.kind))
        if not boundaries:
            raise ValidationError(f"{self.kind}: boundaries must be non-empty")
        if any(a >= b for a, b in zip(boundaries, boundaries[1:])):
            raise ValidationError(f"{self.kind}: boundaries must be strictly increasing")
        labels = tuple(str(x) for x in _req(cfg, "labels", self.kind))
        if len(labels) != len(boundaries) + 1:
            raise ValidationError(
                f"{self.kind}: need {len(boundaries) + 1} labels, got {len(labels)}")
        keep = bool(cfg.get("keep_original", False))
        target = str(cfg.get("target") or feature)
        if keep and target == feature:
            raise ValidationError(f"{self.kind}: keep_original requires a distinct target name")
        if target != feature:
            _check_new_names([target], schema, set() if keep else {feature}, self.kind)
        return {"feature": feature, "boundaries": boundaries, "labels": labels,
                "target": target, "keep_original": keep,
                "wording": _wording_cfg(cfg, self.kind)}

    def plan(self, schema, cfg, fit_state):
        feature = cfg["feature"]
        spec = schema.feature(feature)
        out = FeatureSpec(
            name=cfg["target"],
            dtype="ordinal",
            description=f"Semantic bins for {feature}",
            categories=cfg["labels"],
            wording=parse_wording_data(cfg["wording"]),
            properties=spec.properties,
            derived_from=DerivedFrom((feature,), self.kind),
        )
        if cfg["keep_original"]:
            features = schema.features + (out,)
        else:
            features = _replace_features(schema, [feature], schema.index(feature), (out,))
        return PlanResult(features, {cfg["target"]: (feature,)})

    def apply(self, table, cfg, fit_state, ctx):
        feature = cfg["feature"]
        idx = table.schema.index(feature)
        boundaries, labels = cfg["boundaries"], cfg["labels"]
        keep = cfg["keep_original"]
        rows = []
        lineage = []
        for r, row in enumerate(table.rows):
            value = row[idx]
            if value is MISSING:
                label = MISSING
            else:
                label = labels[bisect.bisect_right(boundaries, value)]
            if keep:
                rows.append(row + (label,))
            else:
                rows.append(row[:idx] + (label,) + row[idx + 1:])
            lineage.append(LineageRecord(r, cfg["target"], Computed(self.kind, (feature,))))
        return rows, lineage


class ImputeFlagged(Kernel):
    kind = "impute_flagged"
    invertible = "lossy"

    def normalize(self, cfg, schema):
        _check_keys(cfg, {"feature", "strategy", "constant", "flag_name"}, self.kind)
        feature = str(_req(cfg, "feature", self.kind))
        spec = _feature_of(schema, feature, self.kind)
        strategy = str(_req(cfg, "strategy", self.kind))
        if strategy not in ("mean", "constant", "forward_fill"):
            raise ValidationError(f"{self.kind}: unknown strategy {strategy!r}")
        if strategy == "mean" and spec.dtype != "numeric":
            raise ValidationError(
                f"{self.kind}: mean strategy requires a numeric feature, "
                f"{feature!r} is {spec.dtype}")
        constant = cfg.get("constant")
        if strategy == "constant":
            if constant is None:
                raise ValidationError(f"{self.kind}: constant strategy needs a constant value")
            from .table import check_cell
            check_cell(constant, spec)
        flag_name = str(cfg.get("flag_name") or f"{feature} Flag")
        _check_new_names([flag_name], schema, set(), self.kind)
        return {"feature": feature, "strategy": strategy, "constant": constant,
                "flag_name": flag_name}

    def plan(self, schema, cfg, fit_state):
        feature = cfg["feature"]
        flag = FeatureSpec(
            name=cfg["flag_name"],
            dtype="boolean",
            description=f"TRUE where {feature} was imputed",
            properties=schema.feature(feature).properties,
            derived_from=DerivedFrom((feature,), self.kind),
        )
        return PlanResult(schema.features + (flag,),
                          {feature: (feature,), cfg["flag_name"]: (feature,)})

    def apply(self, table, cfg, fit_state, ctx):
        feature = cfg["feature"]
        idx = table.schema.index(feature)
        strategy = cfg["strategy"]
        column = [row[idx] for row in table.rows]
        if strategy == "mean":
            observed = _non_missing(column)
            if not observed:
                raise KernelError(
                    f"{self.kind}: column {feature!r} is entirely missing; "
                    "mean strategy has nothing to average")
            fill_value = sum(observed) / len(observed)
        rows = []
        lineage = []
        previous = None
        for r, row in enumerate(table.rows):
            value = row[idx]
            imputed = value is MISSING
            if imputed:
                if strategy == "mean":
                    value = fill_value
                elif strategy == "constant":
                    value = cfg["constant"]
                else:
                    if previous is None:
                        raise KernelError(
                            f"row {r}: forward_fill has no preceding value for {feature!r}",
                            row_index=r)
                    value = previous
                lineage.append(LineageRecord(r, feature, Imputed(strategy)))
            previous = value
            rows.append(row[:idx] + (value,) + row[idx + 1:] + (imputed,))
            lineage.append(LineageRecord(r, cfg["flag_name"],
                                         Computed(self.kind, (feature,))))
        return rows, lineage


def _formula_normalized(formula, inputs: tuple[str, ...], kind: str):
    if isinstance(formula, str):
        if formula in ("euclidean_floor", "sum", "mean"):
            return formula
        raise ValidationError(
            f"{kind}: unknown formula {formula!r}; use euclidean_floor, sum, mean, "
            "or {'expr': ...}")
    if isinstance(formula, Mapping) and set(formula) == {"expr"}:
        expr = str(formula["expr"])
        ast = parse_expression(expr)
        unknown = sorted(expression_names(ast) - set(inputs))
        if unknown:
            raise ValidationError(
                f"{kind}: expression references unknown feature {unknown[0]!r}")
        return {"expr": expr}
    raise ValidationError(f"{kind}: formula must be a name or {{'expr': ...}}")


def _formula_descriptor(formula) -> str:
    return formula if isinstance(formula, str) else formula["expr"]


def _evaluate_formula(formula, inputs: tuple[str, ...], values: list):
    if formula == "euclidean_floor":
        return math.floor(math.sqrt(sum(v * v for v in values)))
    if formula == "sum":
        return sum(values)
    if formula == "mean":
        return sum(values) / len(values)
    env = dict(zip(inputs, values))
    return evaluate(parse_expression(formula["expr"]), env)


class AggregateNumeric(Kernel):
    kind = "aggregate_numeric"
    invertible = "lossy"

    _KEYS = {"inputs", "formula", "target", "keep_inputs", "wording",
             "display_format", "unit", "description"}

    def normalize(self, cfg, schema):
        _check_keys(cfg, self._KEYS, self.kind)
        inputs = tuple(str(n) for n in _req(cfg, "inputs", self.kind))
        if not inputs:
            raise ValidationError(f"{self.kind}: inputs must be non-empty")
        for name in inputs:
            _numeric_feature(schema, name, self.kind)
        formula = _formula_normalized(_req(cfg, "formula", self.kind), inputs, self.kind)
        target = str(_req(cfg, "target", self.kind))
        keep = bool(cfg.get("keep_inputs", False))
        _check_new_names([target], schema, set() if keep else set(inputs), self.kind)
        return {"inputs": inputs, "formula": formula, "target": target,
                "keep_inputs": keep, "wording": _wording_cfg(cfg, self.kind),
                "display_format": cfg.get("display_format"),
                "unit": None if cfg.get("unit") is None else str(cfg["unit"]),
                "description": str(cfg.get("description", ""))}

    def _out_spec(self, schema, cfg) -> FeatureSpec:
        return FeatureSpec(
            name=cfg["target"],
            dtype="numeric",
            description=cfg["description"],
            unit=cfg["unit"],
            wording=parse_wording_data(cfg["wording"]),
            properties=_base_properties(schema, cfg["inputs"]),
            derived_from=DerivedFrom(cfg["inputs"], _formula_descriptor(cfg["formula"])),
        )

    def plan(self, schema, cfg, fit_state):
        out = self._out_spec(schema, cfg)
        if cfg["keep_inputs"]:
            features = schema.features + (out,)
        else:
            insert_at = min(schema.index(n) for n in cfg["inputs"])
            features = _replace_features(schema, cfg["inputs"], insert_at, (out,))
        return PlanResult(features, {cfg["target"]: cfg["inputs"]})

    def apply(self, table, cfg, fit_state, ctx):
        inputs = cfg["inputs"]
        indices = [table.schema.index(n) for n in inputs]
        keep = cfg["keep_inputs"]
        removed = set(indices)
        insert_at = min(indices)
        rows = []
        lineage = []
        for r, row in enumerate(table.rows):
            values = [row[i] for i in indices]
            if any(v is MISSING for v in values):
                result = MISSING
            else:
                try:
                    result = _evaluate_formula(cfg["formula"], inputs, values)
                except KernelError as exc:
                    raise KernelError(f"row {r}: {exc}", row_index=r) from None
            if keep:
                rows.append(row + (result,))
            else:
                kept = tuple(c for i, c in enumerate(row) if i not in removed)
                split = sum(1 for i in range(insert_at) if i not in removed)
                rows.append(kept[:split] + (result,) + kept[split:])
            lineage.append(LineageRecord(
                r, cfg["target"],
                Computed(_formula_descriptor(cfg["formula"]), inputs)))
        return rows, lineage


class AbstractConcept(AggregateNumeric):
    kind = "abstract_concept"
    invertible = "lossy"

    _KEYS = AggregateNumeric._KEYS | {"labeling"}

    def normalize(self, cfg, schema):
        labeling = cfg.get("labeling")
        base = super().normalize({k: v for k, v in cfg.items() if k != "labeling"}, schema)
        if labeling is not None:
            if not isinstance(labeling, Mapping) or set(labeling) - {"boundaries", "labels"}:
                raise ValidationError(f"{self.kind}: labeling needs boundaries and labels only")
            boundaries = tuple(float(b) for b in _req(labeling, "boundaries", self.kind))
            if any(a >= b for a, b in zip(boundaries, boundaries[1:])) or not boundaries:
                raise ValidationError(f"{self.kind}: labeling boundaries must be strictly increasing")
            labels = tuple(str(x) for x in _req(labeling, "labels", self.kind))
            if len(labels) != len(boundaries) + 1:
                raise ValidationError(
                    f"{self.kind}: labeling needs {len(boundaries) + 1} labels, got {len(labels)}")
            labeling = {"boundaries": boundaries, "labels": labels}
        base["labeling"] = labeling
        return base

    def _out_spec(self, schema, cfg) -> FeatureSpec:
        spec = super()._out_spec(schema, cfg)
        if cfg["labeling"] is None:
            return spec
        return FeatureSpec(
            name=spec.name,
            dtype="ordinal",
            description=spec.description,
            categories=cfg["labeling"]["labels"],
            wording=spec.wording,
            properties=spec.properties,
            derived_from=spec.derived_from,
        )

    def apply(self, table, cfg, fit_state, ctx):
        rows, lineage = super().apply(table, cfg, fit_state, ctx)
        labeling = cfg["labeling"]
        if labeling is None:
            return rows, lineage
        target_idx = len(rows[0]) - 1 if cfg["keep_inputs"] else \
            min(table.schema.index(n) for n in cfg["inputs"])
        boundaries, labels = labeling["boundaries"], labeling["labels"]
        labeled = []
        for row in rows:
            value = row[target_idx]
            if value is not MISSING:
                value = labels[bisect.bisect_right(boundaries, value)]
            labeled.append(row[:target_idx] + (value,) + row[target_idx + 1:])
        return labeled, lineage


class HierarchyRollup(Kernel):
    kind = "hierarchy_rollup"
    invertible = "lossy"

    def normalize(self, cfg, schema):
        _check_keys(cfg, {"feature", "mapping", "target", "keep_original",
                          "wording", "description"}, self.kind)
        feature = str(_req(cfg, "feature", self.kind))
        spec = _feature_of(schema, feature, self.kind)
        if spec.dtype not in ("categorical", "ordinal"):
            raise ValidationError(
                f"{self.kind}: feature {feature!r} must be categorical, is {spec.dtype}")
        mapping_cfg = _req(cfg, "mapping", self.kind)
        if not isinstance(mapping_cfg, Mapping):
            raise ValidationError(f"{self.kind}: mapping must be a child-to-parent mapping")
        mapping = {str(k): str(v) for k, v in mapping_cfg.items()}
        declared = set(spec.categories or ())
        unmapped = sorted(declared - set(mapping))
        if unmapped:
            raise ValidationError(f"{self.kind}: categories missing from mapping: {unmapped}")
        stray = sorted(set(mapping) - declared)
        if stray:
            raise ValidationError(f"{self.kind}: mapping keys not in declared categories: {stray}")
        keep = bool(cfg.get("keep_original", False))
        target = str(cfg.get("target") or feature)
        if keep and target == feature:
            raise ValidationError(f"{self.kind}: keep_original requires a distinct target name")
        if target != feature:
            _check_new_names([target], schema, set() if keep else {feature}, self.kind)
        return {"feature": feature, "mapping": mapping, "target": target,
                "keep_original": keep, "wording": _wording_cfg(cfg, self.kind),
                "description": str(cfg.get("description", ""))}

    def _parents(self, schema, cfg) -> tuple[str, ...]:
        seen: list[str] = []
        for category in schema.feature(cfg["feature"]).categories:
            parent = cfg["mapping"][category]
            if parent not in seen:
                seen.append(parent)
        return tuple(seen)

    def plan(self, schema, cfg, fit_state):
        feature = cfg["feature"]
        out = FeatureSpec(
            name=cfg["target"],
            dtype="categorical",
            description=cfg["description"],
            categories=self._parents(schema, cfg),
            wording=parse_wording_data(cfg["wording"]),
            properties=schema.feature(feature).properties,
            derived_from=DerivedFrom((feature,), self.kind),
        )
        if cfg["keep_original"]:
            features = schema.features + (out,)
        else:
            features = _replace_features(schema, [feature], schema.index(feature), (out,))
        return PlanResult(features, {cfg["target"]: (feature,)})

    def apply(self, table, cfg, fit_state, ctx):
        feature = cfg["feature"]
        idx = table.schema.index(feature)
        mapping = cfg["mapping"]
        keep = cfg["keep_original"]
        rows = []
        lineage = []
        for r, row in enumerate(table.rows):
            value = row[idx]
            if value is not MISSING:
                if value not in mapping:
                    raise KernelError(f"row {r}: unmapped category {value!r}", row_index=r)
                value = mapping[value]
            if keep:
                rows.append(row + (value,))
            else:
                rows.append(row[:idx] + (value,) + row[idx + 1:])
            lineage.append(LineageRecord(r, cfg["target"], Computed(self.kind, (feature,))))
        return rows, lineage


class RenderStatement(Kernel):
    kind = "render_statement"
    invertible = "exact"

    def normalize(self, cfg, schema):
        _check_keys(cfg, {"feature", "target"}, self.kind)
        feature = str(_req(cfg, "feature", self.kind))
        spec = _feature_of(schema, feature, self.kind)
        if spec.dtype not in ("boolean", "categorical", "ordinal"):
            raise ValidationError(
                f"{self.kind}: only boolean and categorical features can be rendered "
                f"as a column ({feature!r} is {spec.dtype}); use render_value for numerics")
        rendered = rendered_categories(spec)
        if len(set(rendered)) != len(rendered):
            raise ValidationError(
                f"{self.kind}: wording templates for {feature!r} do not produce "
                "distinct statements; rendering would not be invertible")
        target = str(cfg.get("target") or f"{feature} Statement")
        _check_new_names([target], schema, {feature}, self.kind)
        return {"feature": feature, "target": target}

    def plan(self, schema, cfg, fit_state):
        feature = cfg["feature"]
        spec = schema.feature(feature)
        out = FeatureSpec(
            name=cfg["target"],
            dtype="categorical",
            description=spec.description,
            categories=rendered_categories(spec),
            properties=spec.properties,
            derived_from=DerivedFrom((feature,), self.kind),
        )
        features = _replace_features(schema, [feature], schema.index(feature), (out,))
        return PlanResult(features, {cfg["target"]: (feature,)})

    def apply(self, table, cfg, fit_state, ctx):
        feature = cfg["feature"]
        spec = table.schema.feature(feature)
        idx = table.schema.index(feature)
        rows = []
        lineage = []
        for r, row in enumerate(table.rows):
            value = row[idx]
            if value is not MISSING:
                value = render_value(spec, value)
            rows.append(row[:idx] + (value,) + row[idx + 1:])
            lineage.append(LineageRecord(r, cfg["target"], Computed(self.kind, (feature,))))
        return rows, lineage

    def inverse(self, cfg, fit_state, input_schema):
        return TransformStep("unrender_statement", {
            "feature": cfg["target"],
            "target": cfg["feature"],
            "restore": structural_data(input_schema.feature(cfg["feature"])),
        })


class UnrenderStatement(Kernel):
    kind = "unrender_statement"
    invertible = "exact"

    def normalize(self, cfg, schema):
        _check_keys(cfg, {"feature", "target", "restore"}, self.kind)
        feature = str(_req(cfg, "feature", self.kind))
        spec = _feature_of(schema, feature, self.kind)
        if spec.dtype not in ("categorical", "ordinal"):
            raise ValidationError(f"{self.kind}: feature {feature!r} must hold rendered statements")
        target = str(_req(cfg, "target", self.kind))
        restore = _restore_from_data(_req(cfg, "restore", self.kind), self.kind)
        if restore.get("dtype") not in ("boolean", "categorical", "ordinal"):
            raise ValidationError(f"{self.kind}: restored dtype must be boolean or categorical")
        if restore.get("wording") is None:
            raise ValidationError(f"{self.kind}: restore must carry the wording templates")
        _check_new_names([target], schema, {feature}, self.kind)
        return {"feature": feature, "target": target, "restore": restore}

    def _restored_spec(self, cfg) -> FeatureSpec:
        return spec_from_structural(cfg["target"], cfg["restore"], None, PropertySet())

    def plan(self, schema, cfg, fit_state):
        feature = cfg["feature"]
        restored = self._restored_spec(cfg)
        out = FeatureSpec(
            name=cfg["target"],
            dtype=restored.dtype,
            description=restored.description,
            unit=restored.unit,
            categories=restored.categories,
            wording=restored.wording,
            properties=schema.feature(feature).properties,
            derived_from=DerivedFrom((feature,), self.kind),
            observed=restored.observed,
        )
        features = _replace_features(schema, [feature], schema.index(feature), (out,))
        return PlanResult(features, {cfg["target"]: (feature,)})

    def apply(self, table, cfg, fit_state, ctx):
        feature = cfg["feature"]
        idx = table.schema.index(feature)
        restored = self._restored_spec(cfg)
        reverse = {render_value(restored, v): v for v in _domain_values(restored)}
        rows = []
        lineage = []
        for r, row in enumerate(table.rows):
            value = row[idx]
            if value is not MISSING:
                if value not in reverse:
                    raise KernelError(
                        f"row {r}: statement {value!r} does not match any template",
                        row_index=r)
                value = reverse[value]
            rows.append(row[:idx] + (value,) + row[idx + 1:])
            lineage.append(LineageRecord(r, cfg["target"], Computed(self.kind, (feature,))))
        return rows, lineage

    def inverse(self, cfg, fit_state, input_schema):
        return TransformStep("render_statement", {
            "feature": cfg["target"],
            "target": cfg["feature"],
        })


class PcaProject(Kernel):
    kind = "pca_project"
    invertible = "lossy"

    def normalize(self, cfg, schema):
        _check_keys(cfg, {"inputs", "components", "means", "loadings",
                          "name_template", "display_format"}, self.kind)
        inputs = tuple(str(n) for n in _req(cfg, "inputs", self.kind))
        if not inputs:
            raise ValidationError(f"{self.kind}: inputs must be non-empty")
        for name in inputs:
            _numeric_feature(schema, name, self.kind)
        components = int(_req(cfg, "components", self.kind))
        if components < 1 or components > len(inputs):
            raise ValidationError(
                f"{self.kind}: components must be in [1, {len(inputs)}], got {components}")
        means, loadings = cfg.get("means"), cfg.get("loadings")
        if (means is None) != (loadings is None):
            raise ValidationError(f"{self.kind}: configure means and loadings together or neither")
        if loadings is not None:
            loadings = tuple(tuple(float(v) for v in row) for row in loadings)
            means = tuple(float(m) for m in means)
            if len(means) != len(inputs) or len(loadings) != len(inputs) or \
                    any(len(row) != components for row in loadings):
                raise ValidationError(
                    f"{self.kind}: loadings must be (inputs x components) and means per input")
        template = str(cfg.get("name_template") or "PCA {i}")
        if "{i}" not in template:
            raise ValidationError(f"{self.kind}: name_template needs an {{i}} placeholder")
        names = tuple(template.format(i=i + 1) for i in range(components))
        _check_new_names(names, schema, set(inputs), self.kind)
        return {"inputs": inputs, "components": components,
                "means": means, "loadings": loadings,
                "name_template": template, "display_format": cfg.get("display_format")}

    def requires_fit(self, cfg):
        return cfg["loadings"] is None

    def fit(self, table, cfg):
        inputs = cfg["inputs"]
        columns = []
        for name in inputs:
            column = _column_values(table, name)
            if any(v is MISSING for v in column):
                raise KernelError(
                    f"{self.kind}: column {name!r} contains MISSING values; impute first")
            columns.append(column)
        data = np.array(columns, dtype=float).T
        if data.shape[0] < 2:
            raise KernelError(f"{self.kind}: need at least 2 rows to fit")
        means = data.mean(axis=0)
        centered = data - means
        cov = centered.T @ centered / data.shape[0]
        eigenvalues, eigenvectors = np.linalg.eigh(cov)
        order = np.argsort(eigenvalues)[::-1]
        eigenvalues = eigenvalues[order]
        eigenvectors = eigenvectors[:, order]
        top = max(float(eigenvalues[0]), 0.0)
        rank = int(np.sum(eigenvalues > top * 1e-10)) if top > 0 else 0
        if rank < cfg["components"]:
            raise KernelError(
                f"{self.kind}: covariance rank {rank} < requested components "
                f"{cfg['components']}")
        vectors = eigenvectors[:, :cfg["components"]].copy()
        for k in range(vectors.shape[1]):
            nonzero = np.nonzero(np.abs(vectors[:, k]) > 1e-12)[0]
            if nonzero.size and vectors[nonzero[0], k] < 0:
                vectors[:, k] = -vectors[:, k]
        return FitState(means=tuple(float(m) for m in means),
                        loadings=tuple(tuple(float(v) for v in row) for row in vectors))

    def _params(self, cfg, fit_state):
        if cfg["loadings"] is not None:
            return cfg["means"], cfg["loadings"]
        if fit_state is None or fit_state.loadings is None:
            raise ValidationError(f"{self.kind}: not fitted and no loadings configured")
        return fit_state.means, fit_state.loadings

    def resolved_config(self, cfg, fit_state):
        means, loadings = self._params(cfg, fit_state)
        return {**cfg, "means": means, "loadings": loadings}

    def _names(self, cfg) -> tuple[str, ...]:
        return tuple(cfg["name_template"].format(i=i + 1) for i in range(cfg["components"]))

    def plan(self, schema, cfg, fit_state):
        inputs = cfg["inputs"]
        base = _base_properties(schema, inputs)
        names = self._names(cfg)
        new_specs = tuple(
            FeatureSpec(
                name=name,
                dtype="numeric",
                description=f"Feature {i + 1} from PCA",
                properties=base,
                derived_from=DerivedFrom(inputs, self.kind),
            )
            for i, name in enumerate(names)
        )
        insert_at = min(schema.index(n) for n in inputs)
        features = _replace_features(schema, inputs, insert_at, new_specs)
        return PlanResult(features, {name: inputs for name in names})

    def apply(self, table, cfg, fit_state, ctx):
        inputs = cfg["inputs"]
        means, loadings = self._params(cfg, fit_state)
        indices = [table.schema.index(n) for n in inputs]
        names = self._names(cfg)
        removed = set(indices)
        insert_at = min(indices)
        rows = []
        lineage = []
        for r, row in enumerate(table.rows):
            values = [row[i] for i in indices]
            if any(v is MISSING for v in values):
                raise KernelError(
                    f"row {r}: MISSING value in PCA inputs; impute first", row_index=r)
            centered = [v - m for v, m in zip(values, means)]
            projected = tuple(
                sum(centered[i] * loadings[i][k] for i in range(len(inputs)))
                for k in range(cfg["components"])
            )
            kept = tuple(c for i, c in enumerate(row) if i not in removed)
            split = sum(1 for i in range(insert_at) if i not in removed)
            rows.append(kept[:split] + projected + kept[split:])
            for name in names:
                lineage.append(LineageRecord(r, name, Computed(self.kind, inputs)))
        return rows, lineage


class LinkRaw(Kernel):
    kind = "link_raw"
    invertible = "exact"

    def normalize(self, cfg, schema):
        _check_keys(cfg, {"feature", "series_id", "window", "series"}, self.kind)
        feature = str(_req(cfg, "feature", self.kind))
        spec = _feature_of(schema, feature, self.kind)
        if spec.raw_source is None:
            raise ValidationError(
                f"{self.kind}: feature {feature!r} does not declare a raw_source")
        series_id = str(cfg.get("series_id") or spec.raw_source.series_id)
        window = cfg.get("window") or spec.raw_source.window
        window = (int(window[0]), int(window[1]))
        if window[0] < 0 or window[1] <= window[0]:
            raise ValidationError(f"{self.kind}: window must satisfy 0 <= start < stop")
        series = cfg.get("series")
        if series is not None:
            series = tuple(float(v) for v in series)
        return {"feature": feature, "series_id": series_id, "window": window,
                "series": series}

    def plan(self, schema, cfg, fit_state):
        return PlanResult(schema.features, {cfg["feature"]: (cfg["feature"],)})

    def _resolve_series(self, cfg, ctx: RunContext):
        if cfg["series"] is not None:
            return cfg["series"]
        store = ctx.series_store or {}
        if cfg["series_id"] not in store:
            raise KernelError(f"{self.kind}: unknown series {cfg['series_id']!r}")
        return store[cfg["series_id"]]

    def apply(self, table, cfg, fit_state, ctx):
        series = self._resolve_series(cfg, ctx)
        start, stop = cfg["window"]
        if stop > len(series):
            raise KernelError(
                f"{self.kind}: window [{start}, {stop}) outside series "
                f"{cfg['series_id']!r} of length {len(series)}")
        lineage = [
            LineageRecord(r, cfg["feature"], RawLinked(cfg["series_id"], start, stop))
            for r in range(table.num_rows)
        ]
        return list(table.rows), lineage

    def inverse(self, cfg, fit_state, input_schema):
        # Identity on data; linking again in the other direction is harmless.
        return TransformStep(self.kind, dict(cfg))


KERNELS: dict[str, Kernel] = {k.kind: k for k in (
    OneHotEncode(), OneHotDecode(), Standardize(), Unstandardize(),
    StatisticalBin(), SemanticBin(), ImputeFlagged(), AggregateNumeric(),
    AbstractConcept(), HierarchyRollup(), RenderStatement(), UnrenderStatement(),
    PcaProject(), LinkRaw(),
)}

TRANSFORM_KINDS = tuple(KERNELS)
EXACT_KINDS = tuple(k for k, v in KERNELS.items() if v.invertible == "exact")


def kernel_for(kind: str) -> Kernel:
    if kind not in KERNELS:
        raise ValidationError(f"unknown transform kind {kind!r}")
    return KERNELS[kind]


# ---------------------------------------------------------------------------
# value-level statement rendering

def _domain_values(spec: FeatureSpec):
    if spec.dtype == "boolean":
        return (True, False)
    return spec.categories or ()


def rendered_categories(spec: FeatureSpec) -> tuple[str, ...]:
    return tuple(render_value(spec, v) for v in _domain_values(spec))


def render_value(spec: FeatureSpec, value) -> str:
    """Render one cell as a human-worded statement using the spec's templates.

    Booleans map to the positive/negative statements, categories substitute
    into the value phrase, and numerics render as "<name>: <value> <unit>".
    """
    from .table import render_cell

    if value is MISSING:
        raise ValidationError(f"feature {spec.name!r}: cannot render a MISSING value")
    if spec.dtype == "boolean":
        if not isinstance(value, bool):
            raise ValidationError(f"feature {spec.name!r}: expected boolean, got {value!r}")
        wording = spec.wording
        if wording is None or wording.positive_statement is None \
                or wording.negative_statement is None:
            raise ValidationError(
                f"feature {spec.name!r}: boolean rendering needs positive and "
                "negative statement templates")
        return wording.positive_statement if value else wording.negative_statement
    if spec.dtype in ("categorical", "ordinal"):
        if spec.wording is None or spec.wording.value_phrase is None:
            raise ValidationError(
                f"feature {spec.name!r}: categorical rendering needs a value phrase template")
        return spec.wording.value_phrase.format(value=value)
    text = render_cell(value)
    return f"{spec.name}: {text} {spec.unit}" if spec.unit else f"{spec.name}: {text}"


def unrender_value(spec: FeatureSpec, text: str):
    """Exact inverse of render_value for boolean/categorical specs."""
    for value in _domain_values(spec):
        if render_value(spec, value) == text:
            return value
    raise ValidationError(
        f"feature {spec.name!r}: statement {text!r} does not match any template")


# ---------------------------------------------------------------------------
# PCA helpers shared with contribution mapping and tests

def pca_redistribution_weights(loadings: Sequence[Sequence[float]]) -> tuple[tuple[float, ...], ...]:
    """Per-component convex weights over inputs, proportional to squared loadings.

    weights[k][i] is the share of component k attributed to input i; each
    component's weights sum to 1.
    """
    n_inputs = len(loadings)
    n_components = len(loadings[0]) if n_inputs else 0
    out = []
    for k in range(n_components):
        squares = [loadings[i][k] ** 2 for i in range(n_inputs)]
        total = sum(squares)
        if total <= 0:
            raise ValidationError(f"PCA component {k + 1} has zero loadings")
        out.append(tuple(s / total for s in squares))
    return tuple(out)


def pca_reconstruct(component_rows: Sequence[Sequence[float]],
                    means: Sequence[float],
                    loadings: Sequence[Sequence[float]]) -> list[tuple[float, ...]]:
    """Map component values back to the input space (lossy unless full rank)."""
    n_inputs = len(means)
    out = []
    for row in component_rows:
        out.append(tuple(
            means[i] + sum(row[k] * loadings[i][k] for k in range(len(row)))
            for i in range(n_inputs)
        ))
    return out


# ---------------------------------------------------------------------------
# default property deltas per kind, applied during schema propagation

def default_property_delta(kind: str, out_spec: FeatureSpec) -> dict[str, bool]:
    if kind == "one_hot_encode":
        return {"model_compatible": True, "model_ready": True, "human_worded": False}
    if kind == "one_hot_decode":
        delta: dict[str, bool] = {"model_ready": False}
        if out_spec.wording is not None and out_spec.wording.value_phrase is not None:
            delta["human_worded"] = True
        return delta
    if kind == "standardize":
        return {"model_ready": True, "understandable": False, "human_worded": False}
    if kind == "unstandardize":
        return {"understandable": True, "model_ready": False}
    if kind == "statistical_bin":
        return {"model_ready": True, "understandable": False}
    if kind == "semantic_bin":
        return {"understandable": True}
    if kind == "impute_flagged":
        return {"trackable": True}
    if kind == "aggregate_numeric":
        return {"understandable": True, "trackable": True}
    if kind == "hierarchy_rollup":
        return {"understandable": True}
    if kind == "abstract_concept":
        return {"abstract_concept": True, "trackable": True}
    if kind == "render_statement":
        return {"human_worded": True}
    if kind == "unrender_statement":
        return {"human_worded": False}
    if kind == "pca_project":
        return {"readable": False, "human_worded": False, "understandable": False,
                "model_ready": True}
    if kind == "link_raw":
        return {"trackable": True}
    raise ValidationError(f"unknown transform kind {kind!r}")
