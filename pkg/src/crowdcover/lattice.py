"""Pattern lattice: bottom-up count combination and MUP extraction.

Every pattern over the schema is materialized (one node per slot choice,
``prod(cardinality + 1)`` nodes in total).  Leaves are the fully specified
subgroups; their count intervals come from engine runs.  Combining upward,
a pattern's children along any one unspecified attribute partition it, so
each such dimension yields an interval sum and the node keeps the
intersection of all of them.  Nodes a super-group left loose can end up
undecided; those are settled by a dedicated engine run and the sweep is
repeated until every node is decided.

A maximal uncovered pattern (MUP) is an uncovered node all of whose parents
are covered; the MUP set is the audit's final answer.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping
from dataclasses import dataclass
from enum import Enum

from .aggregation import MultipleCoverageReport, multiple_coverage
from .collection import ItemCollection
from .engine import group_coverage
from .errors import ConfigError
from .schema import AttributeSchema, Group, Pattern
from .sources import AnswerSource

MAX_CARDINALITY = 10
MAX_ATTRIBUTES = 5


class PatternStatus(str, Enum):
    COVERED = "covered"
    UNCOVERED = "uncovered"
    UNDECIDED = "undecided"


@dataclass
class _Node:
    pattern: Pattern
    lo: float = 0.0
    hi: float = math.inf
    pinned: tuple[float, float] | None = None

    def status(self, tau: int) -> PatternStatus:
        if self.lo >= tau:
            return PatternStatus.COVERED
        if self.hi < tau:
            return PatternStatus.UNCOVERED
        return PatternStatus.UNDECIDED


def children_along(pattern: Pattern, attr_index: int) -> list[Pattern]:
    """The pattern's children specializing one unspecified attribute.

    They partition the items matching the pattern, one child per value.
    """

    if pattern.slots[attr_index] is not None:
        raise ConfigError("attribute already specified; no children along it")
    cardinality = pattern.schema.attributes[attr_index].cardinality
    return [pattern.with_slot(attr_index, v) for v in range(cardinality)]


@dataclass(frozen=True)
class MupReport:
    mups: tuple[Pattern, ...]
    entries: tuple[tuple[Pattern, PatternStatus, float, float], ...]

    def status_of(self, pattern: Pattern) -> PatternStatus:
        for p, status, _, _ in self.entries:
            if p == pattern:
                return status
        raise KeyError(pattern.render())

    def statuses(self) -> dict[Pattern, PatternStatus]:
        return {p: status for p, status, _, _ in self.entries}

    def to_json(self) -> list[dict]:
        out = []
        for pattern, status, lo, hi in self.entries:
            out.append(
                {
                    "pattern": pattern.render(),
                    "status": status.value,
                    "lo": lo,
                    "hi": None if math.isinf(hi) else hi,
                    "mup": pattern in self.mups,
                }
            )
        return out


class PatternLattice:
    """Eagerly materialized pattern graph with per-node count intervals."""

    def __init__(self, schema: AttributeSchema, tau: int):
        if schema.d > MAX_ATTRIBUTES:
            raise ConfigError(f"at most {MAX_ATTRIBUTES} attributes supported")
        if max(schema.cardinalities) > MAX_CARDINALITY:
            raise ConfigError(f"cardinalities above {MAX_CARDINALITY} unsupported")
        if tau < 1:
            raise ConfigError("coverage threshold tau must be >= 1")
        self.schema = schema
        self.tau = tau
        self._nodes: dict[tuple, _Node] = {}
        choices = [[None, *range(a.cardinality)] for a in schema.attributes]
        for slots in itertools.product(*choices):
            self._nodes[slots] = _Node(Pattern(schema, slots))
        self._by_level: dict[int, list[_Node]] = {}
        for node in self._nodes.values():
            self._by_level.setdefault(node.pattern.level, []).append(node)

    def __len__(self) -> int:
        return len(self._nodes)

    def node(self, pattern: Pattern) -> _Node:
        return self._nodes[pattern.slots]

    def patterns(self) -> list[Pattern]:
        return [n.pattern for n in self._nodes.values()]

    def leaves(self) -> list[Pattern]:
        return [n.pattern for n in self._by_level[self.schema.d]]

    def set_leaf_interval(self, pattern: Pattern, lo: float, hi: float) -> None:
        if not pattern.is_fully_specified:
            raise ConfigError("only fully specified patterns take leaf intervals")
        self.pin(pattern, lo, hi)

    def pin(self, pattern: Pattern, lo: float, hi: float) -> None:
        """Record a directly measured interval for a pattern."""

        if lo > hi:
            raise ConfigError("interval is empty")
        self._nodes[pattern.slots].pinned = (float(lo), float(hi))

    def combine(self) -> list[Pattern]:
        """Sweep levels bottom-up; returns the still-undecided patterns."""

        d = self.schema.d
        for leaf in self._by_level[d]:
            if leaf.pinned is None:
                raise ConfigError(f"missing leaf interval for {leaf.pattern.render()}")
            leaf.lo, leaf.hi = leaf.pinned
        for level in range(d - 1, -1, -1):
            for node in self._by_level[level]:
                lo, hi = 0.0, math.inf
                for i, v in enumerate(node.pattern.slots):
                    if v is not None:
                        continue
                    lo_sum = hi_sum = 0.0
                    for child in children_along(node.pattern, i):
                        c = self._nodes[child.slots]
                        lo_sum += c.lo
                        hi_sum += c.hi
                    lo = max(lo, lo_sum)
                    hi = min(hi, hi_sum)
                if node.pinned is not None:
                    lo = max(lo, node.pinned[0])
                    hi = min(hi, node.pinned[1])
                if lo > hi:
                    raise ConfigError(
                        f"inconsistent intervals at {node.pattern.render()}"
                    )
                node.lo, node.hi = lo, hi
        return [
            n.pattern
            for level in range(d, -1, -1)
            for n in self._by_level[level]
            if n.status(self.tau) is PatternStatus.UNDECIDED
        ]

    def report(self) -> MupReport:
        entries = []
        mups = []
        for level in range(0, self.schema.d + 1):
            for node in self._by_level[level]:
                status = node.status(self.tau)
                entries.append((node.pattern, status, node.lo, node.hi))
                if status is PatternStatus.UNCOVERED:
                    parents = node.pattern.parents()
                    if all(
                        self._nodes[p.slots].status(self.tau) is PatternStatus.COVERED
                        for p in parents
                    ):
                        mups.append(node.pattern)
        return MupReport(mups=tuple(mups), entries=tuple(entries))


def combine_bottom_up(
    schema: AttributeSchema,
    leaf_intervals: Mapping[Pattern, tuple[float, float]],
    tau: int,
) -> tuple[MupReport, list[Pattern]]:
    """One bottom-up sweep from fully specified leaf intervals."""

    lattice = PatternLattice(schema, tau)
    for pattern, (lo, hi) in leaf_intervals.items():
        lattice.set_leaf_interval(pattern, lo, hi)
    undecided = lattice.combine()
    return lattice.report(), undecided


@dataclass(frozen=True)
class IntersectionalReport:
    mup_report: MupReport
    leaf_report: MultipleCoverageReport
    resolution_tasks: int
    total_tasks: int
    assignments_issued: int

    @property
    def mups(self) -> tuple[Pattern, ...]:
        return self.mup_report.mups


def intersectional_coverage(
    collection: ItemCollection,
    *,
    n: int,
    tau: int,
    c: int,
    source: AnswerSource,
    seed: int,
    schema: AttributeSchema | None = None,
    block_attribute: int | None = None,
) -> IntersectionalReport:
    """Full audit over every intersectional pattern; finds all MUPs.

    The fully specified subgroups are settled first (with super-grouping to
    share work between likely-uncovered siblings), then counts combine up
    the lattice; any pattern the loose intervals leave undecided is settled
    by its own engine run with the pool evidence subtracted.
    """

    schema = schema or collection.schema
    if schema.d < 2:
        raise ConfigError("intersectional audit needs at least two attributes")
    lattice = PatternLattice(schema, tau)
    # the all-unspecified pattern matches everything; its count is just N
    lattice.pin(Pattern.all_unspecified(schema), len(collection), len(collection))
    leaves = [Group(p) for p in lattice.leaves()]
    tasks_before = source.tasks_issued
    assignments_before = source.assignments_issued
    leaf_report = multiple_coverage(
        collection,
        leaves,
        n=n,
        tau=tau,
        c=c,
        source=source,
        seed=seed,
        multi=True,
        block_attribute=block_attribute,
    )
    for group, verdict in zip(leaves, leaf_report.verdicts):
        lattice.set_leaf_interval(group.pattern, *verdict.interval)
    resolve_t0 = source.tasks_issued
    undecided = lattice.combine()
    while undecided:
        # deepest first, so shallower nodes can settle from combined children
        pattern = undecided[0]
        pool_cnt = leaf_report.pool.count(Group(pattern))
        tau_rem = tau - pool_cnt
        if tau_rem <= 0:
            lattice.pin(pattern, pool_cnt, math.inf)
        else:
            verdict = group_coverage(
                collection,
                Group(pattern),
                n=n,
                tau=tau_rem,
                source=source,
                order=leaf_report.order,
            )
            if verdict.covered:
                lattice.pin(pattern, tau, math.inf)
            else:
                exact = pool_cnt + verdict.cnt
                lattice.pin(pattern, exact, exact)
        undecided = lattice.combine()
    return IntersectionalReport(
        mup_report=lattice.report(),
        leaf_report=leaf_report,
        resolution_tasks=source.tasks_issued - resolve_t0,
        total_tasks=source.tasks_issued - tasks_before,
        assignments_issued=source.assignments_issued - assignments_before,
    )
