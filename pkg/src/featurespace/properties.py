"""Feature-property taxonomy: ten flags per feature plus implication rules."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

from .errors import ValidationError

PROPERTY_NAMES: tuple[str, ...] = (
    "predictive",
    "model_compatible",
    "model_ready",
    "readable",
    "human_worded",
    "understandable",
    "meaningful",
    "abstract_concept",
    "trackable",
    "simulatable",
)

Edge = tuple[str, str]

# Implication edges (tail, head): a feature carrying the tail property must
# also carry the head property.
IMPLICATIONS: tuple[Edge, ...] = (
    ("human_worded", "readable"),
    ("simulatable", "trackable"),
    ("model_ready", "model_compatible"),
)


@dataclass(frozen=True)
class PropertySet:
    """Declared interpretability flags for a single feature.

    Flags are metadata asserted by whoever authored the schema; in particular
    ``predictive`` and ``meaningful`` are user assertions, never measured here.
    """

    predictive: bool = False
    model_compatible: bool = False
    model_ready: bool = False
    readable: bool = False
    human_worded: bool = False
    understandable: bool = False
    meaningful: bool = False
    abstract_concept: bool = False
    trackable: bool = False
    simulatable: bool = False

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "PropertySet":
        names = list(names)
        unknown = sorted(set(names) - set(PROPERTY_NAMES))
        if unknown:
            raise ValidationError(f"unknown property flags: {unknown}")
        return cls(**{name: True for name in names})

    def flags(self) -> dict[str, bool]:
        return {name: getattr(self, name) for name in PROPERTY_NAMES}

    def true_names(self) -> tuple[str, ...]:
        return tuple(name for name in PROPERTY_NAMES if getattr(self, name))

    def has(self, name: str) -> bool:
        if name not in PROPERTY_NAMES:
            raise ValidationError(f"unknown property flag: {name!r}")
        return getattr(self, name)

    def with_flags(self, **updates: bool) -> "PropertySet":
        unknown = sorted(set(updates) - set(PROPERTY_NAMES))
        if unknown:
            raise ValidationError(f"unknown property flags: {unknown}")
        return replace(self, **updates)

    def issubset(self, other: "PropertySet") -> bool:
        return all(other.has(name) for name in self.true_names())

    def intersect(self, other: "PropertySet") -> "PropertySet":
        return PropertySet(**{
            name: self.has(name) and other.has(name) for name in PROPERTY_NAMES
        })


def format_edge(edge: Edge) -> str:
    return f"{edge[0]}=>{edge[1]}"


def _checked_edges(extra: Iterable[Edge]) -> tuple[Edge, ...]:
    edges = IMPLICATIONS + tuple((str(t), str(h)) for t, h in extra)
    for tail, head in edges:
        if tail not in PROPERTY_NAMES or head not in PROPERTY_NAMES:
            raise ValidationError(f"implication references unknown property: {tail}=>{head}")
    return edges


def validate_property_set(p: PropertySet,
                          extra_implications: Iterable[Edge] = ()) -> tuple[Edge, ...]:
    """Return the violated implication edges; an empty tuple means coherent.

    Violations are data, not faults: callers decide whether to raise.
    """
    edges = _checked_edges(extra_implications)
    return tuple(e for e in edges if p.has(e[0]) and not p.has(e[1]))


def implication_closure(p: PropertySet,
                        extra_implications: Iterable[Edge] = ()) -> PropertySet:
    """Smallest superset of ``p`` that satisfies every implication edge.

    Extensive, monotone, and idempotent over the fixed edge set.
    """
    edges = _checked_edges(extra_implications)
    flags = p.flags()
    changed = True
    while changed:
        changed = False
        for tail, head in edges:
            if flags[tail] and not flags[head]:
                flags[head] = True
                changed = True
    return PropertySet(**flags)
