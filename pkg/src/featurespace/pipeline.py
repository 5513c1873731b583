"""Directed pipelines of transform steps between feature spaces.

A pipeline composes steps over a statically-checked schema flow, fits
data-dependent parameters, runs tables through the kernels while accumulating
lineage and fidelity notes, and inverts itself when every step is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from .errors import KernelError, ValidationError
from .lineage import LineageRecord
from .properties import PropertySet, implication_closure
from .schema import SchemaManifest, load_manifest, manifest_from_data, manifest_to_data
from .table import DataTable
from .transforms import (
    FitState,
    Kernel,
    RunContext,
    TransformStep,
    default_property_delta,
    kernel_for,
)

DIRECTIONS = ("to_model_ready", "to_interpretable")
_FLIP = {"to_model_ready": "to_interpretable", "to_interpretable": "to_model_ready"}
_TARGET_SPACE = {"to_model_ready": "model_ready", "to_interpretable": "interpretable"}


@dataclass(frozen=True)
class FittedStep:
    """One step with its learned parameters and resolved input/output schemas."""

    step: TransformStep
    fit_state: FitState | None
    input_schema: SchemaManifest
    output_schema: SchemaManifest

    def signature(self):
        """Step identity with fit parameters folded in.

        Presentation-only keys (display_format) are excluded so that inversion
        round-trips compare equal.
        """
        cfg = kernel_for(self.step.kind).resolved_config(self.step.config, self.fit_state)
        cfg = {k: v for k, v in cfg.items() if k != "display_format"}
        return (self.step.kind, _to_plain(cfg), _to_plain(self.step.property_delta))


@dataclass(frozen=True)
class Pipeline:
    """Composed but not necessarily fitted pipeline; schemas are static."""

    steps: tuple[TransformStep, ...]
    input_schema: SchemaManifest
    direction: str
    output_schema: SchemaManifest


@dataclass(frozen=True)
class FittedPipeline:
    steps: tuple[FittedStep, ...]
    input_schema: SchemaManifest
    direction: str
    output_schema: SchemaManifest

    def display_formats(self) -> dict[str, str]:
        """Per-feature numeric display formats declared by the steps."""
        formats: dict[str, str] = {}
        for fstep in self.steps:
            surviving = set(fstep.output_schema.names)
            formats = {k: v for k, v in formats.items() if k in surviving}
            cfg = fstep.step.config
            fmt = cfg.get("display_format")
            if fmt:
                for name in _produced_names(fstep):
                    formats[name] = fmt
        return formats


@dataclass(frozen=True)
class RunResult:
    table: DataTable
    output_schema: SchemaManifest
    lineage: tuple[LineageRecord, ...]
    fidelity_notes: tuple[str, ...]


@dataclass(frozen=True)
class InversionRefusal:
    """Returned (never raised) when a pipeline contains non-exact steps."""

    non_invertible: tuple[tuple[int, str], ...]

    @property
    def message(self) -> str:
        steps = ", ".join(f"step {n} ({kind})" for n, kind in self.non_invertible)
        return f"pipeline is not invertible; non-exact steps: {steps}"


def _to_plain(value):
    if isinstance(value, Mapping):
        return {str(k): _to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_plain(v) for v in value]
    return value


def _produced_names(fstep: FittedStep) -> tuple[str, ...]:
    kernel = kernel_for(fstep.step.kind)
    plan = kernel.plan(fstep.input_schema, fstep.step.config, fstep.fit_state)
    return tuple(plan.produced)


def step_io(fstep: FittedStep) -> dict[str, tuple[str, ...]]:
    """Mapping of produced feature name to the input features it consumed."""
    kernel = kernel_for(fstep.step.kind)
    plan = kernel.plan(fstep.input_schema, fstep.step.config, fstep.fit_state)
    return dict(plan.produced)


def _final_properties(kind: str, out_spec, base: PropertySet,
                      overrides: Mapping[str, bool],
                      extra_implications) -> PropertySet:
    flags = base.flags()
    flags.update(default_property_delta(kind, out_spec))
    explicit = {str(k): bool(v) for k, v in overrides.items()}
    bad = sorted(set(explicit) - set(flags))
    if bad:
        raise ValidationError(f"property_delta references unknown flags: {bad}")
    flags.update(explicit)
    closed = implication_closure(PropertySet(**flags), extra_implications)
    for name, value in explicit.items():
        if value is False and closed.has(name):
            raise ValidationError(
                f"property override {name}=false on {out_spec.name!r} violates an "
                "implication after closure")
    return closed


def _plan_step(kernel: Kernel, step: TransformStep, schema: SchemaManifest,
               fit_state: FitState | None, step_number: int,
               final_space: str | None) -> SchemaManifest:
    plan = kernel.plan(schema, step.config, fit_state)
    stray = sorted(set(step.property_delta) - set(plan.produced))
    if stray:
        raise ValidationError(
            f"step {step_number} ({step.kind}): property_delta names features "
            f"this step does not produce: {stray}")
    specs = []
    for spec in plan.features:
        if spec.name in plan.produced:
            final = _final_properties(step.kind, spec, spec.properties,
                                      step.property_delta.get(spec.name, {}),
                                      schema.extra_implications)
            spec = replace(spec, properties=final)
        specs.append(spec)
    def build(tag: str) -> SchemaManifest:
        return SchemaManifest(features=tuple(specs), space_tag=tag,
                              extra_implications=schema.extra_implications)

    try:
        return build(final_space if final_space is not None else "original")
    except ValidationError as exc:
        if final_space == "model_ready":
            # The flow did not reach model-ready space (some feature is not
            # model-compatible); the output keeps the neutral tag.
            try:
                return build("original")
            except ValidationError:
                pass
        raise ValidationError(f"step {step_number} ({step.kind}): {exc}") from None


def _build(steps: Sequence[TransformStep], input_schema: SchemaManifest,
           direction: str,
           fit_states: Sequence[FitState | None] | None,
           fit_table: DataTable | None = None,
           require_params: bool = False,
           series_store: Mapping[str, Sequence[float]] | None = None):
    """Shared schema-flow planner for compose / fit / as_fitted / load_fitted."""
    if direction not in DIRECTIONS:
        raise ValidationError(f"unknown pipeline direction {direction!r}")
    normalized: list[TransformStep] = []
    fitted: list[FittedStep] = []
    schema = input_schema
    table = fit_table
    states = list(fit_states) if fit_states is not None else [None] * len(steps)
    if len(states) != len(steps):
        raise ValidationError("fit state count does not match step count")
    last = len(steps) - 1
    for i, step in enumerate(steps):
        number = i + 1
        kernel = kernel_for(step.kind)
        try:
            cfg = kernel.normalize(step.config, schema)
        except ValidationError as exc:
            raise ValidationError(f"step {number} ({step.kind}): {exc}") from None
        norm = TransformStep(step.kind, cfg, step.property_delta)
        state = states[i]
        if kernel.requires_fit(cfg) and state is None:
            if table is not None:
                try:
                    state = kernel.fit(table, cfg)
                except KernelError as exc:
                    raise KernelError(f"step {number} ({step.kind}): {exc}",
                                      row_index=exc.row_index, step_number=number) from None
            elif require_params:
                raise ValidationError(
                    f"step {number} ({step.kind}): requires fitting; provide data")
        final_space = _TARGET_SPACE[direction] if i == last else None
        out_schema = _plan_step(kernel, norm, schema, state, number, final_space)
        if table is not None:
            try:
                rows, _ = kernel.apply(table, cfg, state,
                                       RunContext(number, series_store))
            except KernelError as exc:
                raise KernelError(f"step {number} ({step.kind}): {exc}",
                                  row_index=exc.row_index, step_number=number) from None
            table = DataTable(schema=out_schema, rows=rows)
        fitted.append(FittedStep(norm, state, schema, out_schema))
        normalized.append(norm)
        schema = out_schema
    return tuple(normalized), tuple(fitted), schema


def compose(steps: Sequence[TransformStep], input_schema: SchemaManifest,
            direction: str) -> Pipeline:
    """Statically check the schema flow and return the composed pipeline.

    Errors name the offending step: dangling feature references, name
    collisions, invalid configs, or property overrides that violate the
    taxonomy implications.
    """
    normalized, _, output_schema = _build(steps, input_schema, direction, None)
    return Pipeline(normalized, input_schema, direction, output_schema)


def fit(pipeline: Pipeline, table: DataTable,
        series_store: Mapping[str, Sequence[float]] | None = None) -> FittedPipeline:
    """Populate every data-dependent step by flowing the table through."""
    _check_table_matches(table, pipeline.input_schema)
    _, fitted, output_schema = _build(pipeline.steps, pipeline.input_schema,
                                      pipeline.direction, None, fit_table=table,
                                      series_store=series_store)
    return FittedPipeline(fitted, pipeline.input_schema, pipeline.direction,
                          output_schema)


def as_fitted(pipeline: Pipeline) -> FittedPipeline:
    """Treat a parameter-complete pipeline as fitted without seeing data."""
    for i, step in enumerate(pipeline.steps):
        kernel = kernel_for(step.kind)
        if kernel.requires_fit(step.config):
            raise ValidationError(
                f"step {i + 1} ({step.kind}) requires fitting; call fit() with data")
    _, fitted, output_schema = _build(pipeline.steps, pipeline.input_schema,
                                      pipeline.direction, None, require_params=True)
    return FittedPipeline(fitted, pipeline.input_schema, pipeline.direction,
                          output_schema)


def _check_table_matches(table: DataTable, schema: SchemaManifest) -> None:
    if table.schema.names != schema.names:
        missing = [n for n in schema.names if n not in set(table.schema.names)]
        if missing:
            raise ValidationError(f"table is missing pipeline input columns: {missing}")
        raise ValidationError(
            f"table columns {list(table.schema.names)} do not match pipeline input "
            f"{list(schema.names)}")
    for got, want in zip(table.schema.features, schema.features):
        if got.dtype != want.dtype:
            raise ValidationError(
                f"column {want.name!r}: dtype {got.dtype} does not match pipeline "
                f"input dtype {want.dtype}")
        if got.categories != want.categories:
            raise ValidationError(
                f"column {want.name!r}: categories do not match the pipeline input schema")


def run(fitted: FittedPipeline, table: DataTable,
        series_store: Mapping[str, Sequence[float]] | None = None) -> RunResult:
    """Apply every fitted step; accumulate lineage and lossy-step warnings."""
    _check_table_matches(table, fitted.input_schema)
    lineage: list[LineageRecord] = []
    notes: list[str] = []
    current = table
    for i, fstep in enumerate(fitted.steps):
        number = i + 1
        kernel = kernel_for(fstep.step.kind)
        ctx = RunContext(step_number=number, series_store=series_store)
        try:
            rows, records = kernel.apply(current, fstep.step.config, fstep.fit_state, ctx)
        except KernelError as exc:
            raise KernelError(f"step {number} ({fstep.step.kind}): {exc}",
                              row_index=exc.row_index, step_number=number) from None
        current = DataTable(schema=fstep.output_schema, rows=rows)
        lineage.extend(records)
        if kernel.invertible in ("lossy", "none"):
            notes.append(f"step {number} ({fstep.step.kind}): lossy transform; "
                         "inverse not offered")
    return RunResult(table=current, output_schema=fitted.output_schema,
                     lineage=tuple(lineage), fidelity_notes=tuple(notes))


def invert(fitted: FittedPipeline) -> FittedPipeline | InversionRefusal:
    """Reverse an exact pipeline; refusal (a value, not an error) otherwise.

    Lossy pipelines are runnable but never invertible; no partial inverse is
    offered because silently dropping steps would bias downstream explanations.
    """
    non_exact = tuple(
        (i + 1, fstep.step.kind)
        for i, fstep in enumerate(fitted.steps)
        if kernel_for(fstep.step.kind).invertible != "exact"
    )
    if non_exact:
        return InversionRefusal(non_invertible=non_exact)
    inverse_raw = [
        kernel_for(fstep.step.kind).inverse(fstep.step.config, fstep.fit_state,
                                            fstep.input_schema)
        for fstep in reversed(fitted.steps)
    ]
    direction = _FLIP[fitted.direction]
    _, inverse_steps, output_schema = _build(inverse_raw, fitted.output_schema,
                                             direction, None, require_params=True)
    return FittedPipeline(
        steps=inverse_steps,
        input_schema=fitted.output_schema,
        direction=direction,
        output_schema=output_schema,
    )


def propagate_properties(fitted: FittedPipeline) -> SchemaManifest:
    """Output manifest with per-step property deltas and closure applied.

    Propagation happens while schemas are planned; this accessor returns the
    final manifest.
    """
    return fitted.output_schema


# ---------------------------------------------------------------------------
# documents

_PIPELINE_KEYS = {"input_manifest", "direction", "steps"}
_STEP_KEYS = {"kind", "config", "property_delta"}
FITTED_DOCUMENT = "fitted_pipeline"


def _steps_from_data(data: Any) -> list[TransformStep]:
    if not isinstance(data, list):
        raise ValidationError("pipeline document: steps must be a list")
    steps = []
    for i, item in enumerate(data):
        if not isinstance(item, Mapping):
            raise ValidationError(f"pipeline document: steps[{i}] must be a mapping")
        unknown = sorted(set(item) - _STEP_KEYS)
        if unknown:
            raise ValidationError(f"pipeline document: steps[{i}] unknown keys {unknown}")
        if "kind" not in item:
            raise ValidationError(f"pipeline document: steps[{i}] missing kind")
        steps.append(TransformStep(
            kind=str(item["kind"]),
            config=dict(item.get("config") or {}),
            property_delta=dict(item.get("property_delta") or {}),
        ))
    return steps


def pipeline_from_doc(doc: Any, input_schema: SchemaManifest) -> Pipeline:
    if not isinstance(doc, Mapping):
        raise ValidationError("pipeline document must be a mapping")
    unknown = sorted(set(doc) - _PIPELINE_KEYS)
    if unknown:
        raise ValidationError(f"pipeline document: unknown keys {unknown}")
    if "direction" not in doc:
        raise ValidationError("pipeline document: missing direction")
    return compose(_steps_from_data(doc.get("steps") or []), input_schema,
                   str(doc["direction"]))


def load_pipeline(path: str | Path) -> Pipeline:
    """Load a pipeline document; input_manifest resolves relative to it."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read pipeline {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: pipeline parse error: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ValidationError(f"{path}: pipeline document must be a mapping")
    if "input_manifest" not in doc:
        raise ValidationError(f"{path}: pipeline document needs input_manifest")
    manifest_path = Path(str(doc["input_manifest"]))
    if not manifest_path.is_absolute():
        manifest_path = path.parent / manifest_path
    schema = load_manifest(manifest_path)
    try:
        return pipeline_from_doc(doc, schema)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def _fit_state_to_data(state: FitState | None) -> dict | None:
    if state is None:
        return None
    out = {}
    for key in ("mean", "scale", "min", "max", "edges", "means", "loadings"):
        value = getattr(state, key)
        if value is not None:
            out[key] = _to_plain(value)
    return out


def save_fitted(fitted: FittedPipeline, path: str | Path) -> None:
    """Serialize with per-step numeric parameters at full precision."""
    doc = {
        "document": FITTED_DOCUMENT,
        "direction": fitted.direction,
        "input_manifest": manifest_to_data(fitted.input_schema),
        "steps": [
            {
                "kind": fstep.step.kind,
                "config": _to_plain(fstep.step.config),
                "property_delta": _to_plain(fstep.step.property_delta),
                "fit_state": _fit_state_to_data(fstep.fit_state),
            }
            for fstep in fitted.steps
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_fitted(path: str | Path) -> FittedPipeline:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read fitted pipeline {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: fitted pipeline parse error: {exc}") from exc
    if not isinstance(doc, Mapping) or doc.get("document") != FITTED_DOCUMENT:
        raise ValidationError(f"{path}: not a fitted pipeline document")
    schema = manifest_from_data(doc["input_manifest"])
    raw_steps = doc.get("steps") or []
    states = []
    for item in raw_steps:
        data = item.get("fit_state") if isinstance(item, Mapping) else None
        states.append(None if data is None else FitState(**data))
    steps = _steps_from_data([
        {k: v for k, v in item.items() if k != "fit_state"} for item in raw_steps
    ])
    direction = str(doc.get("direction"))
    _, fitted_steps, output_schema = _build(steps, schema, direction, states,
                                            require_params=True)
    return FittedPipeline(fitted_steps, schema, direction, output_schema)


def is_fitted_document(path: str | Path) -> bool:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return False
    return isinstance(doc, Mapping) and doc.get("document") == FITTED_DOCUMENT
