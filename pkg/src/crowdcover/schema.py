"""Attribute schemas, patterns, and demographic groups.

A schema fixes an ordered list of categorical attributes of interest.  A
pattern assigns a value to some attributes and leaves the rest unspecified
(rendered as the literal ``X``); a fully specified pattern names a single
finest-grained subgroup.  Patterns form a lattice: a parent differs from its
child on exactly one slot, which the parent leaves unspecified.
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field

from .errors import ConfigError, PartialLabelError

UNSPECIFIED = "X"

#: Sentinel used in integer-coded assignments for a missing value.
MISSING = -1


@dataclass(frozen=True)
class Attribute:
    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        if not self.name:
            raise ConfigError("attribute name must be non-empty")
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) < 2:
            raise ConfigError(f"attribute {self.name!r} needs at least two values")
        if len(set(self.values)) != len(self.values):
            raise ConfigError(f"attribute {self.name!r} has duplicate values")
        if UNSPECIFIED in self.values:
            raise ConfigError(
                f"attribute {self.name!r} uses the reserved value {UNSPECIFIED!r}"
            )

    @property
    def cardinality(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if not self.attributes:
            raise ConfigError("schema needs at least one attribute")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ConfigError("attribute names must be unique")

    @classmethod
    def of(cls, *attrs: tuple[str, Sequence[str]]) -> AttributeSchema:
        return cls(tuple(Attribute(name, tuple(values)) for name, values in attrs))

    @property
    def d(self) -> int:
        return len(self.attributes)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(a.cardinality for a in self.attributes)

    def index_of(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise ConfigError(f"unknown attribute {name!r}")

    def value_index(self, attr_index: int, value: str) -> int:
        attr = self.attributes[attr_index]
        try:
            return attr.values.index(value)
        except ValueError:
            raise ConfigError(
                f"unknown value {value!r} for attribute {attr.name!r}"
            ) from None

    def assignment_from_names(
        self, values: Mapping[str, str], *, allow_partial: bool = False
    ) -> tuple[int, ...]:
        """Translate ``{attribute: value}`` into an integer-coded row."""

        row = []
        for i, attr in enumerate(self.attributes):
            if attr.name in values:
                raw = values[attr.name]
                row.append(MISSING if raw == UNSPECIFIED else self.value_index(i, raw))
            elif allow_partial:
                row.append(MISSING)
            else:
                raise PartialLabelError(f"assignment is missing {attr.name!r}")
        unknown = set(values) - {a.name for a in self.attributes}
        if unknown:
            raise ConfigError(f"assignment names unknown attributes: {sorted(unknown)}")
        return tuple(row)

    def assignment_to_names(self, row: Sequence[int]) -> dict[str, str]:
        out = {}
        for i, attr in enumerate(self.attributes):
            v = row[i]
            if v is not None and v != MISSING:
                out[attr.name] = attr.values[v]
        return out

    def full_assignments(self) -> Iterator[tuple[int, ...]]:
        """All fully specified value-index rows, in attribute-major order."""

        def rec(prefix: tuple[int, ...], i: int) -> Iterator[tuple[int, ...]]:
            if i == self.d:
                yield prefix
                return
            for v in range(self.attributes[i].cardinality):
                yield from rec(prefix + (v,), i + 1)

        yield from rec((), 0)

    def to_dict(self) -> dict:
        return {
            "attributes": [
                {"name": a.name, "values": list(a.values)} for a in self.attributes
            ]
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> AttributeSchema:
        try:
            attrs = tuple(
                Attribute(a["name"], tuple(a["values"])) for a in data["attributes"]
            )
        except (KeyError, TypeError) as err:
            raise ConfigError(f"malformed schema: {err}") from err
        return cls(attrs)


@dataclass(frozen=True)
class Pattern:
    """A d-slot value string; ``None`` slots are unspecified."""

    schema: AttributeSchema
    slots: tuple[int | None, ...]

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        if len(self.slots) != self.schema.d:
            raise ConfigError("pattern must have one slot per attribute")
        for i, v in enumerate(self.slots):
            if v is not None and not 0 <= v < self.schema.attributes[i].cardinality:
                raise ConfigError(f"slot {i} value index {v} out of range")

    @classmethod
    def all_unspecified(cls, schema: AttributeSchema) -> Pattern:
        return cls(schema, (None,) * schema.d)

    @classmethod
    def from_values(cls, schema: AttributeSchema, values: Mapping[str, str]) -> Pattern:
        slots: list[int | None] = [None] * schema.d
        for name, value in values.items():
            i = schema.index_of(name)
            slots[i] = None if value == UNSPECIFIED else schema.value_index(i, value)
        return cls(schema, tuple(slots))

    @classmethod
    def parse(cls, schema: AttributeSchema, parts: Sequence[str]) -> Pattern:
        """Build from one textual part per attribute, ``X`` for unspecified."""

        if len(parts) != schema.d:
            raise ConfigError("pattern needs one part per attribute")
        slots = tuple(
            None if p == UNSPECIFIED else schema.value_index(i, p)
            for i, p in enumerate(parts)
        )
        return cls(schema, slots)

    @property
    def level(self) -> int:
        return sum(1 for v in self.slots if v is not None)

    @property
    def is_fully_specified(self) -> bool:
        return self.level == self.schema.d

    def specified(self) -> tuple[tuple[int, int], ...]:
        return tuple((i, v) for i, v in enumerate(self.slots) if v is not None)

    def matches(self, row: Sequence[int]) -> bool:
        """True iff every specified slot equals the row's value there.

        The row is an integer-coded assignment; MISSING on a specified slot
        signals a partially labeled item and raises.
        """

        for i, v in self.slots_items():
            got = row[i]
            if got is None or got == MISSING:
                raise PartialLabelError(
                    f"item lacks a value for {self.schema.attributes[i].name!r}"
                )
            if got != v:
                return False
        return True

    def slots_items(self) -> Iterator[tuple[int, int]]:
        for i, v in enumerate(self.slots):
            if v is not None:
                yield i, v

    def with_slot(self, attr_index: int, value_index: int) -> Pattern:
        if self.slots[attr_index] is not None:
            raise ConfigError("slot already specified")
        slots = list(self.slots)
        slots[attr_index] = value_index
        return Pattern(self.schema, tuple(slots))

    def parents(self) -> list[Pattern]:
        out = []
        for i, v in enumerate(self.slots):
            if v is not None:
                slots = list(self.slots)
                slots[i] = None
                out.append(Pattern(self.schema, tuple(slots)))
        return out

    def render(self, sep: str = "") -> str:
        parts = []
        for i, v in enumerate(self.slots):
            parts.append(UNSPECIFIED if v is None else self.schema.attributes[i].values[v])
        return sep.join(parts)

    def to_names(self) -> dict[str, str]:
        return {
            self.schema.attributes[i].name: self.schema.attributes[i].values[v]
            for i, v in self.specified()
        }


@dataclass(frozen=True)
class Group:
    """A demographic group: a pattern with exactly the slots of interest set."""

    pattern: Pattern
    display_name: str = field(default="")

    def __post_init__(self):
        if self.pattern.level == 0:
            raise ConfigError("a group must specify at least one attribute")
        if not self.display_name:
            object.__setattr__(self, "display_name", self.pattern.render())

    @classmethod
    def single(cls, schema: AttributeSchema, attribute: str, value: str) -> Group:
        return cls(Pattern.from_values(schema, {attribute: value}))

    @classmethod
    def from_values(cls, schema: AttributeSchema, values: Mapping[str, str]) -> Group:
        return cls(Pattern.from_values(schema, values))

    @property
    def schema(self) -> AttributeSchema:
        return self.pattern.schema

    def matches(self, row: Sequence[int]) -> bool:
        return self.pattern.matches(row)


def match(assignment: Mapping[str, str], pattern: Pattern | Group) -> bool:
    """Does a named attribute assignment fall inside a pattern?

    Raises PartialLabelError when a specified slot has no value in the
    assignment.
    """

    if isinstance(pattern, Group):
        pattern = pattern.pattern
    row = pattern.schema.assignment_from_names(assignment, allow_partial=True)
    return pattern.matches(row)


def patterns_disjoint(a: Pattern, b: Pattern) -> bool:
    """True when no item can match both patterns."""

    return any(
        a.slots[i] is not None and b.slots[i] is not None and a.slots[i] != b.slots[i]
        for i in range(a.schema.d)
    )
