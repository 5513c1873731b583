"""Remap additive per-feature contribution vectors across a fitted pipeline.

Contribution vectors are produced externally (e.g. by a Shapley-value tool)
against the model-ready schema; this module carries them into the
interpretable schema while preserving the total contribution. Mapping walks a
``to_interpretable`` pipeline forward, or a ``to_model_ready`` pipeline in
reverse; either way the vector starts on the model-ready side.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Mapping, Sequence

from .errors import MappingError, ValidationError
from .pipeline import FittedPipeline, FittedStep
from .schema import SchemaManifest
from .transforms import pca_redistribution_weights

CONSERVATION_TOLERANCE = 1e-9

# Rule applied per step kind when carrying contributions toward the
# interpretable space. Every transform kind has exactly one rule.
MAPPING_RULES: dict[str, str] = {
    "one_hot_encode": "group_sum",
    "one_hot_decode": "group_sum",
    "standardize": "identity",
    "unstandardize": "identity",
    "statistical_bin": "identity",
    "semantic_bin": "identity",
    "render_statement": "identity",
    "unrender_statement": "identity",
    "hierarchy_rollup": "identity",
    "impute_flagged": "absorb_flag",
    "aggregate_numeric": "group_sum",
    "abstract_concept": "group_sum",
    "pca_project": "redistribute_by_squared_loadings",
    "link_raw": "identity",
}


@dataclass(frozen=True)
class ContributionVector:
    """Per-feature additive explanation for one row, aligned to a schema."""

    schema: SchemaManifest
    values: tuple[float, ...]
    base_value: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) != len(self.schema.features):
            raise ValidationError(
                f"contribution vector has {len(self.values)} values for "
                f"{len(self.schema.features)} features")
        for name, value in zip(self.schema.names, self.values):
            if not math.isfinite(value):
                raise ValidationError(f"contribution for {name!r} is not finite: {value!r}")
        if self.base_value is not None and not math.isfinite(self.base_value):
            raise ValidationError(f"base value is not finite: {self.base_value!r}")

    def total(self) -> float:
        return sum(self.values)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.schema.names, self.values))


@dataclass(frozen=True)
class MappedContributions:
    vector: ContributionVector
    fidelity_notes: tuple[str, ...]
    exposed_flags: Mapping[str, float] = field(default_factory=dict)
    partition_audit: tuple[tuple[int, Mapping[str, int]], ...] = ()


@dataclass(frozen=True)
class ConservationResult:
    passed: bool
    delta: float
    tolerance: float


def conservation_check(before: ContributionVector,
                       after: ContributionVector,
                       extra_after: float = 0.0) -> ConservationResult:
    """Pass iff the total contribution is preserved within a relative 1e-9.

    ``extra_after`` accounts for contributions carried outside the vector
    (exposed imputation flags).
    """
    total_before = before.total()
    delta = abs(total_before - (after.total() + extra_after))
    tolerance = CONSERVATION_TOLERANCE * max(1.0, abs(total_before))
    return ConservationResult(passed=delta <= tolerance, delta=delta,
                              tolerance=tolerance)


def _keep_flag(cfg) -> bool:
    return bool(cfg.get("keep_original") or cfg.get("keep_inputs"))


def _forward_step(fstep: FittedStep, values: dict[str, float],
                  expose_flags: bool, notes: list[str],
                  exposed: dict[str, float]) -> tuple[dict[str, float], dict[str, int]]:
    """Carry a vector across one step of a to_interpretable pipeline."""
    kind = fstep.step.kind
    cfg = fstep.step.config
    counts = {name: 0 for name in fstep.input_schema.names}
    out: dict[str, float] = {}

    if kind == "one_hot_decode":
        total = 0.0
        for name in cfg["group"]:
            total += values[name]
            counts[name] += 1
        out[cfg["target"]] = total
    elif kind in ("standardize", "unstandardize", "statistical_bin", "semantic_bin",
                  "render_statement", "unrender_statement", "hierarchy_rollup"):
        source, target = cfg["feature"], cfg["target"]
        if _keep_flag(cfg):
            out[target] = 0.0  # derived display feature; source keeps its share
        else:
            out[target] = values[source]
            counts[source] += 1
    elif kind in ("aggregate_numeric", "abstract_concept"):
        if _keep_flag(cfg):
            out[cfg["target"]] = 0.0
        else:
            total = 0.0
            for name in cfg["inputs"]:
                total += values[name]
                counts[name] += 1
            out[cfg["target"]] = total
    elif kind == "impute_flagged":
        out[cfg["flag_name"]] = 0.0  # flag is new; no contribution exists yet
    elif kind == "link_raw":
        pass
    else:
        raise MappingError(
            f"step ({kind}) has no contribution rule in the forward direction; "
            "map against the pipeline that produced the model-ready schema instead")

    for name in fstep.output_schema.names:
        if name not in out:
            if name not in values:
                raise MappingError(f"feature {name!r} appeared without a mapping rule")
            out[name] = values[name]
            counts[name] += 1
    return out, counts


def _reverse_step(fstep: FittedStep, values: dict[str, float],
                  expose_flags: bool, notes: list[str],
                  exposed: dict[str, float]) -> tuple[dict[str, float], dict[str, int]]:
    """Undo one step of a to_model_ready pipeline: vector moves output -> input."""
    kind = fstep.step.kind
    cfg = fstep.step.config
    counts = {name: 0 for name in fstep.output_schema.names}
    out: dict[str, float] = {}

    if kind == "one_hot_encode":
        total = 0.0
        for name in cfg["names"]:
            total += values[name]
            counts[name] += 1
        out[cfg["feature"]] = total
    elif kind in ("standardize", "unstandardize", "statistical_bin", "semantic_bin",
                  "render_statement", "unrender_statement", "hierarchy_rollup"):
        source, target = cfg["feature"], cfg["target"]
        if _keep_flag(cfg):
            # The derived feature's share folds back into its source.
            out[source] = values[source] + values[target]
            counts[source] += 1
            counts[target] += 1
        else:
            out[source] = values[target]
            counts[target] += 1
    elif kind == "impute_flagged":
        feature, flag = cfg["feature"], cfg["flag_name"]
        if expose_flags:
            out[feature] = values[feature]
            exposed[flag] = exposed.get(flag, 0.0) + values[flag]
        else:
            out[feature] = values[feature] + values[flag]
        counts[feature] += 1
        counts[flag] += 1
    elif kind == "pca_project":
        from .transforms import kernel_for
        resolved = kernel_for(kind).resolved_config(cfg, fstep.fit_state)
        loadings = resolved["loadings"]
        weights = pca_redistribution_weights(loadings)
        inputs = cfg["inputs"]
        names = tuple(cfg["name_template"].format(i=i + 1)
                      for i in range(cfg["components"]))
        shares = {name: 0.0 for name in inputs}
        for k, comp in enumerate(names):
            for i, input_name in enumerate(inputs):
                shares[input_name] += values[comp] * weights[k][i]
            counts[comp] += 1
        out.update(shares)
        notes.append(
            "pca_project: contributions redistributed to inputs by squared "
            "loadings; this is an approximation and lowers explanation fidelity")
    elif kind == "link_raw":
        pass
    else:
        raise MappingError(
            f"step ({kind}) has no contribution rule in the reverse direction")

    for name in fstep.input_schema.names:
        if name not in out:
            if name not in values:
                raise MappingError(f"feature {name!r} appeared without a mapping rule")
            out[name] = values[name]
            counts[name] += 1
    return out, counts


def map_contributions(fitted: FittedPipeline, contrib: ContributionVector,
                      expose_flags: bool = False) -> MappedContributions:
    """Map a model-ready contribution vector onto the interpretable schema.

    Every source feature must be consumed by exactly one rule application;
    dropped or double-counted features raise MappingError. The base value
    passes through unchanged.
    """
    numbered = tuple(enumerate(fitted.steps, start=1))
    if fitted.direction == "to_interpretable":
        expected = fitted.input_schema
        steps = numbered
        mapper = _forward_step
        final_schema = fitted.output_schema
    else:
        expected = fitted.output_schema
        steps = tuple(reversed(numbered))
        mapper = _reverse_step
        final_schema = fitted.input_schema
    if contrib.schema.names != expected.names:
        raise MappingError(
            "contribution vector does not align with the pipeline's model-ready "
            f"schema: got {list(contrib.schema.names)}, expected {list(expected.names)}")

    values = contrib.as_dict()
    notes: list[str] = []
    exposed: dict[str, float] = {}
    audit: list[tuple[int, dict[str, int]]] = []
    for step_number, fstep in steps:
        values, counts = mapper(fstep, values, expose_flags, notes, exposed)
        bad = {name: c for name, c in counts.items() if c != 1}
        if bad:
            raise MappingError(
                f"step {step_number} ({fstep.step.kind}): contribution partition "
                f"violated (consumption counts {bad})")
        audit.append((step_number, counts))

    vector = ContributionVector(
        schema=final_schema,
        values=tuple(values[name] for name in final_schema.names),
        base_value=contrib.base_value,
    )
    return MappedContributions(vector=vector, fidelity_notes=tuple(notes),
                               exposed_flags=dict(exposed),
                               partition_audit=tuple(audit))


# ---------------------------------------------------------------------------
# contribution CSV: header is the schema's feature names, plus an optional
# trailing __base__ column; one row per explained instance.

BASE_COLUMN = "__base__"


def read_contributions(source: str | Path | IO[str],
                       schema: SchemaManifest) -> list[ContributionVector]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            handle = path.open(newline="", encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot read contributions {path}: {exc}") from exc
        with handle:
            return read_contributions(handle, schema)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("contribution file is empty (missing header)") from None
    has_base = bool(header) and header[-1] == BASE_COLUMN
    names = tuple(header[:-1] if has_base else header)
    if names != schema.names:
        raise MappingError(
            f"contribution header {list(names)} does not match schema features "
            f"{list(schema.names)}")
    vectors = []
    for r, raw in enumerate(reader):
        expected = len(names) + (1 if has_base else 0)
        if len(raw) != expected:
            raise ValidationError(f"contribution row {r}: expected {expected} fields")
        try:
            numbers = [float(x) for x in raw]
        except ValueError as exc:
            raise ValidationError(f"contribution row {r}: {exc}") from None
        base = numbers.pop() if has_base else None
        try:
            vectors.append(ContributionVector(schema=schema, values=tuple(numbers),
                                              base_value=base))
        except ValidationError as exc:
            raise ValidationError(f"contribution row {r}: {exc}") from None
    return vectors


def write_contributions(vectors: Sequence[ContributionVector],
                        target: str | Path | IO[str]) -> None:
    if isinstance(target, (str, Path)):
        with Path(target).open("w", newline="", encoding="utf-8") as handle:
            write_contributions(vectors, handle)
        return
    if not vectors:
        raise ValidationError("no contribution vectors to write")
    schema = vectors[0].schema
    has_base = any(v.base_value is not None for v in vectors)
    writer = csv.writer(target, lineterminator="\n")
    header = list(schema.names) + ([BASE_COLUMN] if has_base else [])
    writer.writerow(header)
    for vector in vectors:
        if vector.schema.names != schema.names:
            raise ValidationError("contribution vectors disagree on their schema")
        row = [repr(v) for v in vector.values]
        if has_base:
            row.append(repr(vector.base_value if vector.base_value is not None else 0.0))
        writer.writerow(row)
