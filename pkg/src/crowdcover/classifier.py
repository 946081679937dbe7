"""Coverage checking seeded by an external classifier's predictions.

Predictions are ingested, never computed: the collection (or a CSV) names,
per item, which group a pre-trained model assigned.  The predicted-positive
set G is first probed with a small random sample of point queries to
estimate the classifier's precision on the target group.  False positives
are then eliminated either by partitioning (negated set queries, "is anyone
here NOT <group>?", halving impure sets) when the probe looks precise, or by
labeling G point by point when it does not.  If the verified positives fall
short of the threshold, the remainder is settled by the set-query engine
over the predicted-negative complement only; items already disproven are
never asked about again.
"""

from __future__ import annotations

import csv
import math
import random
from collections import deque
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

from .collection import ItemCollection
from .engine import group_coverage
from .errors import ConfigError
from .schema import Group
from .sources import AnswerSource
from .tasks import CoverageVerdict, TraceEntry, point_task, set_task

#: Probe sample fraction of |G| and the false-positive fraction above which
#: point labeling replaces partitioning.
PROBE_FRACTION = 0.1
LABEL_THRESHOLD = 0.25


@dataclass(frozen=True)
class PredictionSet:
    """Item ids predicted as the target group, plus the complement."""

    group: Group
    positive_ids: tuple[str, ...]
    complement_ids: tuple[str, ...]

    def __post_init__(self):
        overlap = set(self.positive_ids) & set(self.complement_ids)
        if overlap:
            raise ConfigError(f"ids on both sides of the prediction: {sorted(overlap)[:3]}")

    @classmethod
    def from_collection(cls, collection: ItemCollection, group: Group) -> PredictionSet:
        rows = collection.predicted_rows
        if rows is None:
            raise ConfigError("collection carries no predicted labels")
        positives, complement = [], []
        for i in range(len(collection)):
            try:
                hit = group.matches(rows[i])
            except Exception as err:
                raise ConfigError(
                    f"item {collection.id_at(i)!r} lacks a prediction for the target"
                ) from err
            (positives if hit else complement).append(collection.id_at(i))
        return cls(group, tuple(positives), tuple(complement))

    @classmethod
    def from_csv(
        cls, collection: ItemCollection, group: Group, path: str | Path
    ) -> PredictionSet:
        """Read ``id, predicted.<attr>`` columns and split on the group."""

        schema = group.schema
        attrs = [schema.attributes[i].name for i, _ in group.pattern.specified()]
        predicted: dict[str, dict[str, str]] = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                predicted[row["id"]] = {
                    a: row[f"predicted.{a}"] for a in attrs if row.get(f"predicted.{a}")
                }
        positives, complement = [], []
        for item_id in collection.item_ids:
            values = predicted.get(item_id)
            if values is None or len(values) != len(attrs):
                raise ConfigError(f"no prediction for item {item_id!r}")
            row = schema.assignment_from_names(values, allow_partial=True)
            (positives if group.matches(row) else complement).append(item_id)
        return cls(group, tuple(positives), tuple(complement))


@dataclass(frozen=True)
class ProbeResult:
    precision: float
    labels: dict[str, dict[str, str]]
    true_positive_ids: tuple[str, ...]
    false_positive_ids: tuple[str, ...]
    tasks: int


def _group_attrs(group: Group) -> list[str]:
    return [group.schema.attributes[i].name for i, _ in group.pattern.specified()]


def _is_member(group: Group, answer: Mapping[str, str]) -> bool:
    row = group.schema.assignment_from_names(answer, allow_partial=True)
    return group.matches(row)


def probe_precision(
    positive_ids: Sequence[str],
    *,
    group: Group,
    source: AnswerSource,
    seed: int,
    sample_fraction: float = PROBE_FRACTION,
) -> ProbeResult:
    """Estimate classifier precision on a random sample of G.

    Labels are retained so later phases never point-query an item twice.
    """

    if not positive_ids:
        raise ConfigError("cannot probe an empty predicted-positive set")
    if not 0.0 < sample_fraction <= 1.0:
        raise ConfigError("sample fraction must be in (0, 1]")
    size = max(1, math.ceil(sample_fraction * len(positive_ids)))
    rng = random.Random(seed)
    sampled = [positive_ids[i] for i in sorted(rng.sample(range(len(positive_ids)), size))]
    attrs = _group_attrs(group)
    tasks = [point_task(item_id, attrs) for item_id in sampled]
    answers = source.answer_point_batch(tasks)
    labels = dict(zip(sampled, map(dict, answers)))
    tp = tuple(i for i in sampled if _is_member(group, labels[i]))
    fp = tuple(i for i in sampled if i not in set(tp))
    return ProbeResult(
        precision=len(tp) / size,
        labels=labels,
        true_positive_ids=tp,
        false_positive_ids=fp,
        tasks=size,
    )


def partition_verify(
    positive_ids: Sequence[str],
    *,
    n: int,
    group: Group,
    source: AnswerSource,
) -> list[str]:
    """Eliminate false positives by halving impure sets.

    Asks the reverse question ("any NOT <group>?"): a no answer certifies the
    whole range, a yes on a singleton discards it, a yes on anything larger
    splits it.  Returns exactly the true-positive ids under error-free
    answers.
    """

    if n < 1:
        raise ConfigError("set-size bound n must be >= 1")
    ids = list(positive_ids)
    verified: list[str] = []
    queue: deque[tuple[int, int]] = deque()
    for start in range(0, len(ids), n):
        queue.append((start, min(start + n, len(ids)) - 1))
    while queue:
        b, e = queue.popleft()
        chunk = ids[b : e + 1]
        impure = source.answer_set_query(set_task(chunk, group, negated=True))
        if not impure:
            verified.extend(chunk)
        elif b == e:
            continue  # a lone false positive; drop it
        else:
            mid = (b + e) // 2
            queue.append((b, mid))
            queue.append((mid + 1, e))
    return verified


def label_verify(
    positive_ids: Sequence[str],
    *,
    tau: int,
    group: Group,
    source: AnswerSource,
    reuse: Mapping[str, Mapping[str, str]] | None = None,
) -> list[str]:
    """Point-label G in stored order until tau members are verified.

    Probed items are skipped and their retained labels reused for free; the
    verified set may fall short of tau if G runs out.
    """

    if tau < 1:
        raise ConfigError("coverage threshold tau must be >= 1")
    reuse = dict(reuse or {})
    attrs = _group_attrs(group)
    verified = [i for i in reuse if _is_member(group, reuse[i])]
    if len(verified) >= tau:
        return verified
    for item_id in positive_ids:
        if item_id in reuse:
            continue
        answer = source.answer_point_query(point_task(item_id, attrs))
        if _is_member(group, answer):
            verified.append(item_id)
            if len(verified) >= tau:
                break
    return verified


@dataclass(frozen=True)
class ClassifierCoverageReport:
    verdict: CoverageVerdict
    strategy: str | None
    precision: float | None
    verified: tuple[str, ...]
    probe_tasks: int
    verify_tasks: int
    sweep_tasks: int

    @property
    def total_tasks(self) -> int:
        return self.probe_tasks + self.verify_tasks + self.sweep_tasks


def classifier_coverage(
    collection: ItemCollection,
    predictions: PredictionSet,
    *,
    n: int,
    tau: int,
    source: AnswerSource,
    seed: int,
    sample_fraction: float = PROBE_FRACTION,
) -> ClassifierCoverageReport:
    """Decide coverage of the predictions' target group.

    The partition/label choice is a pure function of the probe outcome:
    label when the probe's false-positive fraction reaches LABEL_THRESHOLD,
    partition otherwise.
    """

    if tau < 1:
        raise ConfigError("coverage threshold tau must be >= 1")
    known = set(predictions.positive_ids) | set(predictions.complement_ids)
    missing = [i for i in collection.item_ids if i not in known]
    if missing:
        raise ConfigError(f"predictions do not cover the collection: {missing[:3]}")
    group = predictions.group
    trace: list[TraceEntry] = []
    strategy = None
    precision = None
    probe_tasks = verify_tasks = sweep_tasks = 0
    verified: list[str] = []
    assignments_before = source.assignments_issued

    if predictions.positive_ids:
        probe = probe_precision(
            predictions.positive_ids,
            group=group,
            source=source,
            seed=seed,
            sample_fraction=sample_fraction,
        )
        precision = probe.precision
        probe_tasks = probe.tasks
        verified = list(probe.true_positive_ids)
        false_positive_fraction = 1.0 - probe.precision
        t0 = source.tasks_issued
        if false_positive_fraction < LABEL_THRESHOLD:
            strategy = "partition"
            remaining = [
                i
                for i in predictions.positive_ids
                if i not in set(probe.false_positive_ids)
            ]
            swept = partition_verify(remaining, n=n, group=group, source=source)
            verified = list(dict.fromkeys([*probe.true_positive_ids, *swept]))
        else:
            strategy = "label"
            verified = label_verify(
                predictions.positive_ids,
                tau=tau,
                group=group,
                source=source,
                reuse=probe.labels,
            )
        verify_tasks = source.tasks_issued - t0

    if len(verified) >= tau:
        verdict = CoverageVerdict(
            group_label=group.display_name,
            tau=tau,
            covered=True,
            cnt=tau,
            tasks_issued=probe_tasks + verify_tasks,
            assignments_issued=source.assignments_issued - assignments_before,
            trace=tuple(trace),
        )
    else:
        # hunt for false negatives among the predicted-not-group items only;
        # discarded members of G are already disproven and never re-queried
        t0 = source.tasks_issued
        order = [collection.index_of(i) for i in predictions.complement_ids]
        sweep = group_coverage(
            collection,
            group,
            n=n,
            tau=tau - len(verified),
            source=source,
            order=order,
        )
        sweep_tasks = source.tasks_issued - t0
        covered = sweep.covered
        cnt = tau if covered else len(verified) + sweep.cnt
        verdict = CoverageVerdict(
            group_label=group.display_name,
            tau=tau,
            covered=covered,
            cnt=cnt,
            tasks_issued=probe_tasks + verify_tasks + sweep_tasks,
            assignments_issued=source.assignments_issued - assignments_before,
            trace=sweep.trace,
        )
    return ClassifierCoverageReport(
        verdict=verdict,
        strategy=strategy,
        precision=precision,
        verified=tuple(verified),
        probe_tasks=probe_tasks,
        verify_tasks=verify_tasks,
        sweep_tasks=sweep_tasks,
    )
