"""Query tasks, fingerprints, and coverage verdicts.

A task's fingerprint is its semantic identity: the sorted item ids plus the
target (and negation) for set queries, or the item and queried attributes for
point queries.  Fingerprints key duplicate detection, transcript replay, and
the simulated crowd's per-task randomness, so the same question gets the same
answer no matter which driver asks it.
"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum

from .errors import ConfigError
from .schema import Group


class QueryKind(str, Enum):
    SET = "set"
    POINT = "point"


@dataclass(frozen=True)
class QueryTask:
    kind: QueryKind
    item_ids: tuple[str, ...]
    groups: tuple[Group, ...] = ()
    negated: bool = False
    attributes: tuple[str, ...] = ()
    task_id: str = ""
    required_assignments: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "item_ids", tuple(self.item_ids))
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if self.kind is QueryKind.SET:
            if not self.groups:
                raise ConfigError("set query needs a target group")
        else:
            if len(self.item_ids) != 1:
                raise ConfigError("point query targets exactly one item")
            if not self.attributes:
                raise ConfigError("point query needs attributes to ask about")
        if not self.item_ids:
            raise ConfigError("task needs at least one item")
        if not self.task_id:
            object.__setattr__(self, "task_id", default_task_id(self.fingerprint()))

    def fingerprint(self) -> str:
        if self.kind is QueryKind.SET:
            target = "+".join(sorted(g.pattern.render() for g in self.groups))
            neg = "!" if self.negated else ""
            return f"set|{neg}{target}|{','.join(sorted(self.item_ids))}"
        return f"point|{','.join(self.attributes)}|{self.item_ids[0]}"

    def target_label(self) -> str:
        if self.kind is QueryKind.POINT:
            return ",".join(self.attributes)
        return "|".join(g.display_name for g in self.groups)

    def question_text(self) -> str:
        if self.kind is QueryKind.POINT:
            attrs = " and ".join(self.attributes)
            return f"What is the {attrs} of the individual shown?"
        label = " or ".join(g.display_name for g in self.groups)
        if self.negated:
            return f"Is there any individual in this set that is NOT {label}?"
        return f"Is there at least one {label} in this set?"


def default_task_id(fingerprint: str) -> str:
    return "t" + hashlib.blake2s(fingerprint.encode(), digest_size=6).hexdigest()


def set_task(
    item_ids: Sequence[str],
    groups: Group | Sequence[Group],
    *,
    negated: bool = False,
    task_id: str = "",
) -> QueryTask:
    if isinstance(groups, Group):
        groups = (groups,)
    return QueryTask(
        kind=QueryKind.SET,
        item_ids=tuple(item_ids),
        groups=tuple(groups),
        negated=negated,
        task_id=task_id,
    )


def point_task(
    item_id: str, attributes: Sequence[str], *, task_id: str = ""
) -> QueryTask:
    return QueryTask(
        kind=QueryKind.POINT,
        item_ids=(item_id,),
        attributes=tuple(attributes),
        task_id=task_id,
    )


@dataclass(frozen=True)
class TraceEntry:
    task_id: str
    answer: str
    inferred: bool = False

    def to_json(self) -> dict:
        return {"task": self.task_id, "answer": self.answer, "inferred": self.inferred}


@dataclass(frozen=True)
class CoverageVerdict:
    """Outcome of one coverage check.

    ``cnt`` is the count lower bound: equal to the run's threshold when
    covered, and (under error-free answers) the exact member count when
    uncovered.  ``interval`` carries the honest count bounds for downstream
    lattice math; it is a point interval whenever the count is exact.
    Inferred trace entries cost no tasks.
    """

    group_label: str
    tau: int
    covered: bool
    cnt: int
    tasks_issued: int
    assignments_issued: int
    trace: tuple[TraceEntry, ...] = ()
    interval: tuple[float, float] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "trace", tuple(self.trace))
        if self.interval is None:
            hi = math.inf if self.covered else self.cnt
            object.__setattr__(self, "interval", (float(self.cnt), float(hi)))
        if self.covered and self.cnt != self.tau:
            raise ConfigError("covered verdict must report cnt = tau")
        if not self.covered and self.cnt >= self.tau:
            raise ConfigError("uncovered verdict must report cnt < tau")
        lo, hi = self.interval
        if lo > hi:
            raise ConfigError("verdict interval is empty")

    @property
    def exact(self) -> bool:
        lo, hi = self.interval
        return lo == hi

    def to_json(self) -> dict:
        lo, hi = self.interval
        return {
            "group": self.group_label,
            "covered": self.covered,
            "cnt": self.cnt,
            "tasks": self.tasks_issued,
            "assignments": self.assignments_issued,
            "interval": [lo, None if math.isinf(hi) else hi],
            "trace": [t.to_json() for t in self.trace],
        }
