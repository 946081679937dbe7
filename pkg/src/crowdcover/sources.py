"""Answer sources: the simulated crowd, transcript replay, and recording.

Every source shares one contract: set queries aggregate to yes/no, point
queries to one value per queried attribute, a task may be answered once, and
cost counters only grow.  The simulated crowd models k independent virtual
workers per task, each wrong with a fixed probability, aggregated by majority
(set) or plurality (point).  Randomness is keyed on (seed, task fingerprint),
so identical questions draw identical worker answers regardless of which
driver asks or in what order.
"""

from __future__ import annotations

import json
import random
import threading
from collections.abc import Iterator, Mapping, Sequence
from pathlib import Path

import numpy as np

from .collection import ItemCollection, pattern_mask
from .errors import (
    AnswerSourceError,
    ConfigError,
    DuplicateTaskError,
    PartialLabelError,
    TranscriptMissError,
)
from .schema import MISSING
from .tasks import QueryKind, QueryTask

#: Observed live per-answer error rate used as the simulation default.
DEFAULT_ERROR_RATE = 0.0136
DEFAULT_ASSIGNMENTS = 3


class AnswerSource:
    """Base contract; subclasses implement ``_answer_set`` / ``_answer_point``."""

    supports_set = True
    supports_point = True

    def __init__(self):
        self._tasks_issued = 0
        self._assignments_issued = 0
        self._seen: set[str] = set()
        self._lock = threading.RLock()

    @property
    def tasks_issued(self) -> int:
        return self._tasks_issued

    @property
    def assignments_issued(self) -> int:
        return self._assignments_issued

    def _register(self, task: QueryTask, kind: QueryKind) -> None:
        if kind is QueryKind.SET and not self.supports_set:
            raise AnswerSourceError("source does not answer set queries")
        if kind is QueryKind.POINT and not self.supports_point:
            raise AnswerSourceError("source does not answer point queries")
        if task.kind is not kind:
            raise AnswerSourceError(f"expected a {kind.value} query")
        fp = task.fingerprint()
        if fp in self._seen:
            raise DuplicateTaskError(f"task already answered: {fp}")
        self._seen.add(fp)

    def answer_set_query(self, task: QueryTask) -> bool:
        with self._lock:
            self._register(task, QueryKind.SET)
            answer, assignments = self._answer_set(task)
            self._tasks_issued += 1
            self._assignments_issued += assignments
            return answer

    def answer_point_query(self, task: QueryTask) -> dict[str, str]:
        with self._lock:
            self._register(task, QueryKind.POINT)
            answer, assignments = self._answer_point(task)
            self._tasks_issued += 1
            self._assignments_issued += assignments
            return answer

    def answer_point_batch(self, tasks: Sequence[QueryTask]) -> list[dict[str, str]]:
        """Answer independent point tasks; sources may parallelize."""

        return [self.answer_point_query(t) for t in tasks]

    def _answer_set(self, task: QueryTask) -> tuple[bool, int]:
        raise NotImplementedError

    def _answer_point(self, task: QueryTask) -> tuple[dict[str, str], int]:
        raise NotImplementedError


class SimulatedCrowd(AnswerSource):
    """Virtual workers answering from a fully labeled ground-truth collection.

    With ``error_rate`` 0 every aggregate equals the truth-derived answer.
    Worker errors are independent per worker per task (and per attribute on
    multi-attribute point tasks); a plurality tie on a point task draws one
    extra worker at a time until it breaks, and those extra draws are counted
    in ``assignments_issued``.
    """

    def __init__(
        self,
        ground_truth: ItemCollection,
        *,
        error_rate: float = DEFAULT_ERROR_RATE,
        assignments_per_task: int = DEFAULT_ASSIGNMENTS,
        seed: int = 0,
    ):
        super().__init__()
        if not 0.0 <= error_rate <= 1.0:
            raise ConfigError("error_rate must be in [0, 1]")
        if assignments_per_task < 1 or assignments_per_task % 2 == 0:
            raise ConfigError("assignments_per_task must be an odd positive integer")
        if len(ground_truth) and not ground_truth.fully_labeled:
            raise PartialLabelError("simulated crowd needs full truth labels")
        self.collection = ground_truth
        self.error_rate = error_rate
        self.assignments_per_task = assignments_per_task
        self.seed = seed
        self._rows = ground_truth.truth_rows

    # -- worker models ----------------------------------------------------

    def _task_rng(self, task: QueryTask) -> random.Random:
        return random.Random(f"{self.seed}|{task.fingerprint()}")

    def truth_set_answer(self, task: QueryTask) -> bool:
        idx = np.fromiter(
            (self.collection.index_of(i) for i in task.item_ids),
            dtype=np.int64,
            count=len(task.item_ids),
        )
        rows = self._rows[idx]
        if (rows == MISSING).any():
            raise PartialLabelError("set query touched a partially labeled item")
        member = np.zeros(len(idx), dtype=bool)
        for g in task.groups:
            member |= pattern_mask(rows, g)
        if task.negated:
            # reverse question: is anything here NOT in the target group?
            return bool((~member).any())
        return bool(member.any())

    def worker_set_answers(self, task: QueryTask) -> list[bool]:
        """The k raw worker answers, deterministic in (seed, fingerprint)."""

        truth = self.truth_set_answer(task)
        k = self.assignments_per_task
        if self.error_rate == 0.0:
            return [truth] * k
        rng = self._task_rng(task)
        return [truth != (rng.random() < self.error_rate) for _ in range(k)]

    def worker_point_stream(self, task: QueryTask) -> Iterator[dict[str, str]]:
        """Endless stream of worker assignments for a point task.

        Consuming a prefix always yields the same answers, so the in-process
        aggregator and a live board extending for tie-breaks agree.
        """

        schema = self.collection.schema
        i = self.collection.index_of(task.item_ids[0])
        row = self._rows[i]
        attr_idx = [schema.index_of(a) for a in task.attributes]
        for j in attr_idx:
            if row[j] == MISSING:
                raise PartialLabelError(
                    f"item {task.item_ids[0]!r} lacks truth for point query"
                )
        rng = self._task_rng(task)
        while True:
            answer = {}
            for j in attr_idx:
                attr = schema.attributes[j]
                true_v = int(row[j])
                if self.error_rate > 0.0 and rng.random() < self.error_rate:
                    wrong = rng.randrange(attr.cardinality - 1)
                    v = wrong if wrong < true_v else wrong + 1
                else:
                    v = true_v
                answer[attr.name] = attr.values[v]
            yield answer

    # -- AnswerSource hooks -------------------------------------------------

    def _answer_set(self, task: QueryTask) -> tuple[bool, int]:
        k = self.assignments_per_task
        if self.error_rate == 0.0:
            return self.truth_set_answer(task), k
        votes = self.worker_set_answers(task)
        return sum(votes) * 2 > k, k

    def _answer_point(self, task: QueryTask) -> tuple[dict[str, str], int]:
        k = self.assignments_per_task
        stream = self.worker_point_stream(task)
        answers = [next(stream) for _ in range(k)]
        while True:
            aggregate = plurality(answers, task.attributes)
            if aggregate is not None:
                return aggregate, len(answers)
            answers.append(next(stream))


def plurality(
    answers: Sequence[Mapping[str, str]], attributes: Sequence[str]
) -> dict[str, str] | None:
    """Per-attribute plurality vote; None while any attribute is tied."""

    out = {}
    for attr in attributes:
        counts: dict[str, int] = {}
        for a in answers:
            counts[a[attr]] = counts.get(a[attr], 0) + 1
        best = max(counts.values())
        winners = [v for v, c in counts.items() if c == best]
        if len(winners) != 1:
            return None
        out[attr] = winners[0]
    return out


def majority(votes: Sequence[bool]) -> bool | None:
    yes = sum(votes)
    no = len(votes) - yes
    if yes == no:
        return None
    return yes > no


class TranscriptReplaySource(AnswerSource):
    """Replays recorded (fingerprint -> aggregate) pairs; errors on a miss."""

    def __init__(self, entries: Mapping[str, object]):
        super().__init__()
        self._entries = dict(entries)

    @classmethod
    def load(cls, path: str | Path) -> TranscriptReplaySource:
        entries = {}
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            entries[rec["fingerprint"]] = rec["answer"]
        return cls(entries)

    def _lookup(self, task: QueryTask):
        fp = task.fingerprint()
        if fp not in self._entries:
            raise TranscriptMissError(f"transcript has no answer for {fp}")
        return self._entries[fp]

    def _answer_set(self, task: QueryTask) -> tuple[bool, int]:
        raw = self._lookup(task)
        return raw in (True, "yes"), 1

    def _answer_point(self, task: QueryTask) -> tuple[dict[str, str], int]:
        raw = self._lookup(task)
        if not isinstance(raw, dict):
            raise TranscriptMissError("transcript entry is not a point answer")
        return dict(raw), 1


class TranscriptRecorder(AnswerSource):
    """Wraps another source and records its aggregates for later replay."""

    def __init__(self, inner: AnswerSource):
        super().__init__()
        self.inner = inner
        self.entries: dict[str, object] = {}

    def _answer_set(self, task: QueryTask) -> tuple[bool, int]:
        before = self.inner.assignments_issued
        answer = self.inner.answer_set_query(task)
        self.entries[task.fingerprint()] = "yes" if answer else "no"
        return answer, self.inner.assignments_issued - before

    def _answer_point(self, task: QueryTask) -> tuple[dict[str, str], int]:
        before = self.inner.assignments_issued
        answer = self.inner.answer_point_query(task)
        self.entries[task.fingerprint()] = dict(answer)
        return answer, self.inner.assignments_issued - before

    def save(self, path: str | Path) -> None:
        lines = [
            json.dumps({"fingerprint": fp, "answer": ans})
            for fp, ans in self.entries.items()
        ]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
