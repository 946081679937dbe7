"""Sampling, super-group formation, and coverage for multiple groups.

A small random subset (``c * tau`` items) is point-labeled first.  The pool
gives expected counts ``E_g = N * count(g) / |pool|``; sweeping the groups in
ascending pool-count order, minorities whose running expected total stays
below the threshold are merged into one "super-group" and checked with a
single OR-predicate engine run.  An uncovered super-group settles every
member at once; a covered one tells us nothing per member, so each member is
re-checked individually (the aggregation penalty).  Labeled items leave the
working order, so pool evidence and engine evidence never double count.
"""

from __future__ import annotations

import random
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .collection import ItemCollection
from .engine import group_coverage
from .errors import ConfigError
from .schema import Group, patterns_disjoint
from .sources import AnswerSource
from .tasks import CoverageVerdict, point_task


@dataclass(frozen=True)
class LabeledPool:
    """Crowd-labeled items, keyed by id, with full attribute assignments."""

    entries: Mapping[str, tuple[int, ...]]

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def count(self, groups: Group | Sequence[Group]) -> int:
        if isinstance(groups, Group):
            groups = (groups,)
        return sum(
            1
            for row in self.entries.values()
            if any(g.matches(row) for g in groups)
        )


@dataclass(frozen=True)
class SuperGroup:
    members: tuple[Group, ...]
    expected_total: float

    def __post_init__(self):
        if not self.members:
            raise ConfigError("super-group needs at least one member")

    @property
    def singleton(self) -> bool:
        return len(self.members) == 1


def label_samples(
    collection: ItemCollection,
    *,
    tau: int,
    c: int,
    source: AnswerSource,
    seed: int,
) -> tuple[np.ndarray, LabeledPool]:
    """Point-label min(c*tau, N) random items; return (reduced order, pool).

    Sampling is uniform without replacement under the explicit seed; labeled
    items are excluded from the returned working order.
    """

    if c < 1:
        raise ConfigError("sample-size parameter c must be >= 1")
    if len(collection) == 0:
        raise ConfigError("cannot sample an empty collection")
    size = min(c * tau, len(collection))
    rng = random.Random(seed)
    sampled = sorted(rng.sample(range(len(collection)), size))
    schema = collection.schema
    attrs = [a.name for a in schema.attributes]
    tasks = [point_task(collection.id_at(i), attrs) for i in sampled]
    answers = source.answer_point_batch(tasks)
    entries = {
        collection.id_at(i): schema.assignment_from_names(ans)
        for i, ans in zip(sampled, answers)
    }
    keep = np.ones(len(collection), dtype=bool)
    keep[sampled] = False
    order = np.nonzero(keep)[0]
    return order, LabeledPool(entries)


def _sweep(
    pool: LabeledPool, N: int, tau: int, groups: Sequence[Group]
) -> list[SuperGroup]:
    counts = {id(g): pool.count(g) for g in groups}
    ordered = sorted(groups, key=lambda g: counts[id(g)])  # stable on ties
    supers: list[SuperGroup] = []
    current: list[Group] = []
    total = 0.0
    for g in ordered:
        expected = N * counts[id(g)] / len(pool)
        if current and total + expected >= tau:
            supers.append(SuperGroup(tuple(current), total))
            current, total = [], 0.0
        current.append(g)
        total += expected
    if current:
        supers.append(SuperGroup(tuple(current), total))
    return supers


def aggregate_groups(
    pool: LabeledPool,
    N: int,
    tau: int,
    groups: Sequence[Group],
    *,
    multi: bool = False,
    block_attribute: int | None = None,
) -> list[SuperGroup]:
    """Greedy super-group formation from pool count estimates.

    With ``multi`` set, groups are fully specified subgroups and merging only
    happens between siblings: groups agreeing on every slot except the
    designated block attribute (default: the last one).
    """

    if len(pool) == 0:
        raise ConfigError("cannot aggregate from an empty pool")
    groups = list(groups)
    for i, a in enumerate(groups):
        for b in groups[i + 1 :]:
            if not patterns_disjoint(a.pattern, b.pattern):
                raise ConfigError(
                    f"groups must be pairwise disjoint: {a.display_name!r} "
                    f"overlaps {b.display_name!r}"
                )
    if not multi:
        return _sweep(pool, N, tau, groups)
    schema = groups[0].schema
    dim = schema.d - 1 if block_attribute is None else block_attribute
    blocks: dict[tuple, list[Group]] = {}
    for g in groups:
        if not g.pattern.is_fully_specified:
            raise ConfigError("multi mode aggregates fully specified subgroups")
        key = tuple(v for i, v in enumerate(g.pattern.slots) if i != dim)
        blocks.setdefault(key, []).append(g)
    supers: list[SuperGroup] = []
    for key in blocks:
        supers.extend(_sweep(pool, N, tau, blocks[key]))
    return supers


@dataclass(frozen=True)
class MultipleCoverageReport:
    verdicts: tuple[CoverageVerdict, ...]
    supergroups: tuple[SuperGroup, ...]
    pool: LabeledPool
    order: np.ndarray
    sample_tasks: int
    engine_tasks: int
    assignments_issued: int

    @property
    def total_tasks(self) -> int:
        return self.sample_tasks + self.engine_tasks

    def verdict_for(self, group: Group) -> CoverageVerdict:
        for v in self.verdicts:
            if v.group_label == group.display_name:
                return v
        raise KeyError(group.display_name)


def _covered_verdict(group: Group, tau: int, *, tasks=0, assignments=0, trace=()):
    return CoverageVerdict(
        group_label=group.display_name,
        tau=tau,
        covered=True,
        cnt=tau,
        tasks_issued=tasks,
        assignments_issued=assignments,
        trace=tuple(trace),
    )


def multiple_coverage(
    collection: ItemCollection,
    groups: Sequence[Group],
    *,
    n: int,
    tau: int,
    c: int,
    source: AnswerSource,
    seed: int,
    multi: bool = False,
    block_attribute: int | None = None,
) -> MultipleCoverageReport:
    """Coverage verdicts for several disjoint groups via super-grouping."""

    if tau < 1:
        raise ConfigError("coverage threshold tau must be >= 1")
    groups = list(groups)
    if not groups:
        raise ConfigError("need at least one group")
    tasks_before = source.tasks_issued
    assignments_before = source.assignments_issued
    order, pool = label_samples(collection, tau=tau, c=c, source=source, seed=seed)
    sample_tasks = source.tasks_issued - tasks_before
    supers = aggregate_groups(
        pool, len(collection), tau, groups, multi=multi, block_attribute=block_attribute
    )
    results: dict[str, CoverageVerdict] = {}

    def rerun_member(g: Group) -> CoverageVerdict:
        pool_cnt = pool.count(g)
        tau_rem = tau - pool_cnt
        if tau_rem <= 0:
            return _covered_verdict(g, tau)
        a0 = source.assignments_issued
        v = group_coverage(collection, g, n=n, tau=tau_rem, source=source, order=order)
        if v.covered:
            return _covered_verdict(
                g,
                tau,
                tasks=v.tasks_issued,
                assignments=source.assignments_issued - a0,
                trace=v.trace,
            )
        exact = pool_cnt + v.cnt
        return CoverageVerdict(
            group_label=g.display_name,
            tau=tau,
            covered=False,
            cnt=exact,
            tasks_issued=v.tasks_issued,
            assignments_issued=source.assignments_issued - a0,
            trace=v.trace,
        )

    for sg in supers:
        pool_counts = {g.display_name: pool.count(g) for g in sg.members}
        pool_total = sum(pool_counts.values())
        tau_rem = tau - pool_total
        if tau_rem <= 0:
            # the samples alone prove the (super-)group covered
            union_verdict = None
            union_covered = True
        else:
            a0 = source.assignments_issued
            union_verdict = group_coverage(
                collection, sg.members, n=n, tau=tau_rem, source=source, order=order
            )
            union_covered = union_verdict.covered
        if sg.singleton:
            g = sg.members[0]
            if union_verdict is None:
                results[g.display_name] = _covered_verdict(g, tau)
            elif union_covered:
                results[g.display_name] = _covered_verdict(
                    g,
                    tau,
                    tasks=union_verdict.tasks_issued,
                    assignments=source.assignments_issued - a0,
                    trace=union_verdict.trace,
                )
            else:
                exact = pool_total + union_verdict.cnt
                results[g.display_name] = CoverageVerdict(
                    group_label=g.display_name,
                    tau=tau,
                    covered=False,
                    cnt=exact,
                    tasks_issued=union_verdict.tasks_issued,
                    assignments_issued=source.assignments_issued - a0,
                    trace=union_verdict.trace,
                )
        elif union_covered:
            # penalty path: the union proves nothing per member
            for g in sg.members:
                results[g.display_name] = rerun_member(g)
        else:
            # exact union count settles every member as uncovered; the split
            # between members is unknown, so carry an honest interval
            union_cnt = union_verdict.cnt
            for g in sg.members:
                lo = pool_counts[g.display_name]
                hi = lo + union_cnt
                results[g.display_name] = CoverageVerdict(
                    group_label=g.display_name,
                    tau=tau,
                    covered=False,
                    cnt=lo,
                    tasks_issued=0,
                    assignments_issued=0,
                    trace=union_verdict.trace,
                    interval=(float(lo), float(hi)),
                )
    verdicts = tuple(results[g.display_name] for g in groups)
    engine_tasks = source.tasks_issued - tasks_before - sample_tasks
    return MultipleCoverageReport(
        verdicts=verdicts,
        supergroups=tuple(supers),
        pool=pool,
        order=order,
        sample_tasks=sample_tasks,
        engine_tasks=engine_tasks,
        assignments_issued=source.assignments_issued - assignments_before,
    )
