"""Breadth-first set-query search deciding whether a group is covered.

The working order is partitioned into consecutive root ranges of at most
``n`` items; a FIFO queue drives a binary split of every range that might
still hold group members:

* a root answering yes raises the count lower bound ``cnt`` by one and
  splits; a root answering no is pruned outright;
* a left child answering no lets the engine infer, for free, a yes for its
  right sibling (the parent contained a member and the left half did not);
  the sibling is pulled from the queue and handled exactly like a real yes;
* a non-root yes raises ``cnt`` only when its sibling already answered yes
  (tracked by the parent's ``checked`` flag), because the parent itself was
  already evidence of one member;
* the run stops as covered the moment ``cnt`` reaches the threshold, and as
  uncovered when the queue drains, at which point ``cnt`` is the exact
  member count (given error-free answers).

FIFO order is load-bearing: children are enqueued in pairs, so a left
child's right sibling is always the next queued node when the inference
fires.  The run object exposes its queue so a task board can publish the
whole frontier and cancel the inferred sibling's already-published task.
"""

from __future__ import annotations

import math
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .collection import ItemCollection
from .errors import AnswerSourceError, ConfigError, CoverageRunError
from .schema import Group
from .sources import AnswerSource
from .tasks import CoverageVerdict, QueryTask, TraceEntry, point_task, set_task


@dataclass
class SearchNode:
    """One queued item range; ``b``/``e`` are inclusive order positions."""

    b: int
    e: int
    parent: SearchNode | None = None
    left: SearchNode | None = None
    right: SearchNode | None = None
    checked: bool = False
    task: QueryTask | None = None

    @property
    def size(self) -> int:
        return self.e - self.b + 1

    @property
    def is_left_child(self) -> bool:
        return self.parent is not None and self.parent.left is self

    def __repr__(self) -> str:  # debugging aid
        return f"SearchNode[{self.b},{self.e}]"


@dataclass(frozen=True)
class EngineStep:
    """What one consumed answer did to the run."""

    node: SearchNode
    answer: bool
    inferred: SearchNode | None
    enqueued: tuple[SearchNode, ...]
    finished: bool


class GroupCoverageRun:
    """Explicit-state run; callers feed answers for the queue head in order."""

    def __init__(
        self,
        collection: ItemCollection,
        groups: Group | Sequence[Group],
        *,
        n: int,
        tau: int,
        order: Sequence[int] | None = None,
        negated: bool = False,
        early_stop_on_impossible: bool = False,
    ):
        if n < 1:
            raise ConfigError("set-size bound n must be >= 1")
        if tau < 1:
            raise ConfigError("coverage threshold tau must be >= 1")
        if isinstance(groups, Group):
            groups = (groups,)
        if not groups:
            raise ConfigError("need at least one target group")
        self.collection = collection
        self.groups = tuple(groups)
        self.negated = negated
        self.n = n
        self.tau = tau
        self.early_stop_on_impossible = early_stop_on_impossible
        if order is None:
            order = np.arange(len(collection), dtype=np.int64)
        else:
            order = np.asarray(order, dtype=np.int64)
        self._order = order
        self.cnt = 0
        self.tasks_issued = 0
        self.trace: list[TraceEntry] = []
        self.finished = False
        self.covered = False
        self._queue: deque[SearchNode] = deque()
        size = len(order)
        for start in range(0, size, n):
            self._queue.append(SearchNode(start, min(start + n, size) - 1))
        self._queue_mass = size
        if not self._queue:
            self._finish(covered=False)

    # -- inspection -------------------------------------------------------

    def head(self) -> SearchNode | None:
        return self._queue[0] if self._queue else None

    def pending(self) -> tuple[SearchNode, ...]:
        return tuple(self._queue)

    def task_for(self, node: SearchNode) -> QueryTask:
        if node.task is None:
            ids = self.collection.ids_at(self._order[node.b : node.e + 1])
            node.task = set_task(ids, self.groups, negated=self.negated)
        return node.task

    def group_label(self) -> str:
        return "|".join(g.display_name for g in self.groups)

    # -- state transitions --------------------------------------------------

    def _finish(self, *, covered: bool) -> None:
        self.finished = True
        self.covered = covered

    def _bump(self) -> None:
        self.cnt += 1
        if self.cnt == self.tau:
            self._finish(covered=True)

    def _checked_rule(self, node: SearchNode) -> None:
        parent = node.parent
        assert parent is not None
        if parent.checked:
            self._bump()
        else:
            parent.checked = True

    def _split(self, node: SearchNode) -> tuple[SearchNode, ...]:
        if self.finished or node.size <= 1:
            return ()
        mid = (node.b + node.e) // 2
        node.left = SearchNode(node.b, mid, parent=node)
        node.right = SearchNode(mid + 1, node.e, parent=node)
        self._queue.append(node.left)
        self._queue.append(node.right)
        self._queue_mass += node.size
        return (node.left, node.right)

    def _record(self, node: SearchNode, answer: bool, *, inferred: bool) -> None:
        task = self.task_for(node)
        self.trace.append(
            TraceEntry(task.task_id, "yes" if answer else "no", inferred=inferred)
        )

    def resolve_head(self, answer: bool) -> EngineStep:
        """Consume the aggregate answer for the queue head."""

        if self.finished or not self._queue:
            raise ConfigError("run is finished; no pending node to resolve")
        node = self._queue.popleft()
        self._queue_mass -= node.size
        self.tasks_issued += 1
        self._record(node, answer, inferred=False)
        inferred: SearchNode | None = None
        enqueued: tuple[SearchNode, ...] = ()
        if node.parent is None:
            if answer:
                self._bump()
                enqueued = self._split(node)
        elif not answer:
            if node.is_left_child:
                sibling = node.parent.right
                # FIFO guarantees the sibling is the next queued node.
                assert self._queue and self._queue[0] is sibling
                self._queue.popleft()
                self._queue_mass -= sibling.size
                inferred = sibling
                self._record(sibling, True, inferred=True)
                self._checked_rule(sibling)
                enqueued = self._split(sibling)
            # a right child answering no is simply pruned
        else:
            self._checked_rule(node)
            enqueued = self._split(node)
        if not self.finished and not self._queue:
            self._finish(covered=False)
        if (
            not self.finished
            and self.early_stop_on_impossible
            and self.cnt + self._queue_mass < self.tau
        ):
            self._finish(covered=False)
        return EngineStep(
            node=node,
            answer=answer,
            inferred=inferred,
            enqueued=enqueued,
            finished=self.finished,
        )

    def drain(self) -> tuple[SearchNode, ...]:
        """Remove and return whatever is still queued (after a stop)."""

        rest = tuple(self._queue)
        self._queue.clear()
        self._queue_mass = 0
        return rest

    def verdict(self, *, assignments_issued: int | None = None) -> CoverageVerdict:
        if not self.finished:
            raise ConfigError("run has not finished")
        if assignments_issued is None:
            assignments_issued = self.tasks_issued
        return CoverageVerdict(
            group_label=self.group_label(),
            tau=self.tau,
            covered=self.covered,
            cnt=self.tau if self.covered else self.cnt,
            tasks_issued=self.tasks_issued,
            assignments_issued=assignments_issued,
            trace=tuple(self.trace),
        )


def group_coverage(
    collection: ItemCollection,
    groups: Group | Sequence[Group],
    *,
    n: int,
    tau: int,
    source: AnswerSource,
    order: Sequence[int] | None = None,
    negated: bool = False,
    early_stop_on_impossible: bool = False,
) -> CoverageVerdict:
    """Run the set-query search to completion against an answer source."""

    run = GroupCoverageRun(
        collection,
        groups,
        n=n,
        tau=tau,
        order=order,
        negated=negated,
        early_stop_on_impossible=early_stop_on_impossible,
    )
    assignments_before = source.assignments_issued
    while not run.finished:
        task = run.task_for(run.head())
        try:
            answer = source.answer_set_query(task)
        except AnswerSourceError as err:
            raise CoverageRunError(
                f"answer source failed mid-run: {err}",
                trace=run.trace,
                tasks_issued=run.tasks_issued,
            ) from err
        run.resolve_head(answer)
    return run.verdict(assignments_issued=source.assignments_issued - assignments_before)


def base_coverage(
    collection: ItemCollection,
    group: Group,
    *,
    tau: int,
    source: AnswerSource,
    order: Sequence[int] | None = None,
) -> CoverageVerdict:
    """Baseline: point-query items one by one, in order, until tau matches."""

    if tau < 1:
        raise ConfigError("coverage threshold tau must be >= 1")
    if order is None:
        order = range(len(collection))
    attrs = [group.schema.attributes[i].name for i, _ in group.pattern.specified()]
    assignments_before = source.assignments_issued
    cnt = 0
    tasks = 0
    trace: list[TraceEntry] = []
    covered = False
    for idx in order:
        task = point_task(collection.id_at(int(idx)), attrs)
        try:
            answer = source.answer_point_query(task)
        except AnswerSourceError as err:
            raise CoverageRunError(
                f"answer source failed mid-run: {err}", trace=trace, tasks_issued=tasks
            ) from err
        tasks += 1
        row = group.schema.assignment_from_names(answer, allow_partial=True)
        hit = group.matches(row)
        trace.append(
            TraceEntry(task.task_id, ",".join(f"{a}={answer[a]}" for a in attrs))
        )
        if hit:
            cnt += 1
            if cnt == tau:
                covered = True
                break
    return CoverageVerdict(
        group_label=group.display_name,
        tau=tau,
        covered=covered,
        cnt=cnt,
        tasks_issued=tasks,
        assignments_issued=source.assignments_issued - assignments_before,
        trace=tuple(trace),
    )


def reported_upper_bound(N: int, n: int, tau: int) -> int:
    """The reported task upper bound N/n + tau*log10(n), nearest integer.

    Base-10 log and nearest-integer rounding reproduce the published value
    for (1522, 50, 50) -> 115; other bases or rounding modes do not.
    """

    if min(N, n, tau) < 1:
        raise ConfigError("N, n, tau must all be >= 1")
    return int(math.floor(N / n + tau * math.log10(n) + 0.5))


def task_bound(N: int, n: int, tau: int) -> int:
    """Concrete worst-case task bound ceil(N/n) + 2*tau*(ceil(log2 n) + 1)."""

    if min(N, n, tau) < 1:
        raise ConfigError("N, n, tau must all be >= 1")
    return math.ceil(N / n) + 2 * tau * (math.ceil(math.log2(n)) + 1)
