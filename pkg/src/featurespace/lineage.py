"""Lineage records: where each produced cell value came from."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class Observed:
    """Value taken directly from collected data."""


@dataclass(frozen=True)
class Imputed:
    strategy: str


@dataclass(frozen=True)
class Computed:
    formula: str
    inputs: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))


@dataclass(frozen=True)
class RawLinked:
    series_id: str
    start: int
    stop: int


Origin = Union[Observed, Imputed, Computed, RawLinked]

_ORIGIN_KINDS = {Observed: "observed", Imputed: "imputed",
                 Computed: "computed", RawLinked: "raw_linked"}


def origin_kind(origin: Origin) -> str:
    return _ORIGIN_KINDS[type(origin)]


@dataclass(frozen=True)
class LineageRecord:
    row_index: int
    feature: str
    origin: Origin


def lineage_to_data(records) -> list[dict]:
    out = []
    for rec in records:
        entry: dict = {"row": rec.row_index, "feature": rec.feature,
                       "origin": origin_kind(rec.origin)}
        if isinstance(rec.origin, Imputed):
            entry["strategy"] = rec.origin.strategy
        elif isinstance(rec.origin, Computed):
            entry["formula"] = rec.origin.formula
            entry["inputs"] = list(rec.origin.inputs)
        elif isinstance(rec.origin, RawLinked):
            entry["series_id"] = rec.origin.series_id
            entry["window"] = [rec.origin.start, rec.origin.stop]
        out.append(entry)
    return out
