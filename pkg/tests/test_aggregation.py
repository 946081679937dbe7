import math
import random

import pytest

from crowdcover import (
    AttributeSchema,
    ConfigError,
    Group,
    SimulatedCrowd,
    aggregate_groups,
    label_samples,
    multiple_coverage,
    set_task,
    true_count,
)
from crowdcover.aggregation import LabeledPool
from crowdcover.harness import generate

from conftest import zero_error_crowd


def pool_from_counts(schema, counts):
    entries = {}
    i = 0
    for value, count in counts.items():
        vi = schema.value_index(0, value)
        for _ in range(count):
            entries[f"p{i}"] = (vi,)
            i += 1
    return LabeledPool(entries)


@pytest.fixture
def abcd_schema():
    return AttributeSchema.of(("group", ("A", "B", "C", "D")))


def abcd_groups(schema):
    return [Group.single(schema, "group", v) for v in "ABCD"]


def greedy_sweep_reference(expectations, tau):
    """Independent re-implementation of the merge rule for cross-checking."""

    supers, current, total = [], [], 0.0
    for name, e in sorted(expectations.items(), key=lambda kv: kv[1]):
        if current and total + e >= tau:
            supers.append(tuple(current))
            current, total = [], 0.0
        current.append(name)
        total += e
    supers.append(tuple(current))
    return supers


def test_aggregate_hand_traced_example(abcd_schema):
    # counts 1,2,30,67 in a pool of 100 over N=1000 -> E = 10,20,300,670
    pool = pool_from_counts(abcd_schema, {"A": 1, "B": 2, "C": 30, "D": 67})
    supers = aggregate_groups(pool, 1000, 50, abcd_groups(abcd_schema))
    names = [[g.display_name for g in sg.members] for sg in supers]
    assert names == [["A", "B"], ["C"], ["D"]]
    assert [sg.expected_total for sg in supers] == [30.0, 300.0, 670.0]


def test_aggregate_single_group_is_singleton(abcd_schema):
    pool = pool_from_counts(abcd_schema, {"A": 5})
    supers = aggregate_groups(pool, 100, 50, [abcd_groups(abcd_schema)[0]])
    assert len(supers) == 1 and supers[0].singleton


def test_aggregate_all_zero_counts_merge_into_one(abcd_schema):
    pool = pool_from_counts(abcd_schema, {"A": 10})  # pool sees only A
    groups = abcd_groups(abcd_schema)[1:]  # B, C, D all count 0
    supers = aggregate_groups(pool, 1000, 50, groups)
    assert len(supers) == 1
    assert {g.display_name for g in supers[0].members} == {"B", "C", "D"}


def test_aggregate_matches_reference_on_random_pools(abcd_schema):
    rng = random.Random(12)
    groups = abcd_groups(abcd_schema)
    for trial in range(200):
        counts = {v: rng.randint(0, 30) for v in "ABCD"}
        if sum(counts.values()) == 0:
            counts["A"] = 1
        pool = pool_from_counts(abcd_schema, counts)
        N = rng.randint(100, 5000)
        tau = rng.randint(1, 80)
        supers = aggregate_groups(pool, N, tau, groups)
        expectations = {
            v: N * counts[v] / len(pool) for v in "ABCD"
        }
        expected = greedy_sweep_reference(expectations, tau)
        got = [tuple(g.display_name for g in sg.members) for sg in supers]
        assert got == expected
        # no multi-member super-group may form at or above the threshold
        for sg in supers:
            if not sg.singleton:
                assert sg.expected_total < tau


def test_aggregate_rejects_an_empty_pool(abcd_schema):
    with pytest.raises(ConfigError):
        aggregate_groups(LabeledPool({}), 100, 10, abcd_groups(abcd_schema))


def test_aggregate_rejects_overlapping_groups(gender_race_schema):
    pool = LabeledPool({"a": (0, 0)})
    f = Group.from_values(gender_race_schema, {"gender": "F"})
    fb = Group.from_values(gender_race_schema, {"gender": "F", "race": "Black"})
    with pytest.raises(ConfigError):
        aggregate_groups(pool, 10, 5, [f, fb])


def test_aggregate_multi_mode_only_merges_siblings(gender_race_schema):
    # fully specified subgroups; blocks share the gender slot (race varies)
    leaves = [
        Group.from_values(gender_race_schema, {"gender": g, "race": r})
        for g in ("F", "M")
        for r in ("White", "Black", "Asian")
    ]
    pool = LabeledPool({f"p{i}": (0, 0) for i in range(10)})
    supers = aggregate_groups(pool, 1000, 50, leaves, multi=True)
    for sg in supers:
        genders = {g.pattern.slots[0] for g in sg.members}
        assert len(genders) == 1  # merging never crosses the non-block slot


def test_label_samples_sizes(abcd_schema):
    col = generate(abcd_schema, 10_000, {"A": 50, "B": 100, "C": 500, "D": 9350}, 0)
    src = zero_error_crowd(col)
    order, pool = label_samples(col, tau=50, c=2, source=src, seed=1)
    assert len(pool) == 100 and src.tasks_issued == 100
    assert len(order) == 9_900
    sampled = set(pool.entries)
    assert all(col.id_at(i) not in sampled for i in order)


def test_label_samples_exhausts_small_collections(abcd_schema):
    col = generate(abcd_schema, 10, {"A": 3, "B": 3, "C": 2, "D": 2}, 0)
    src = zero_error_crowd(col)
    order, pool = label_samples(col, tau=50, c=2, source=src, seed=1)
    assert len(pool) == 10 and len(order) == 0


def test_label_samples_frequencies_near_multinomial(abcd_schema):
    # pooled counts should sit within 3 sigma of the planted proportions
    N, m = 20_000, 400
    planted = {"A": 2000, "B": 4000, "C": 6000, "D": 8000}
    col = generate(abcd_schema, N, planted, 3)
    src = zero_error_crowd(col)
    order, pool = label_samples(col, tau=200, c=2, source=src, seed=7)
    assert len(pool) == m
    for value, count in planted.items():
        p = count / N
        got = pool.count(Group.single(abcd_schema, "group", value))
        sigma = math.sqrt(m * p * (1 - p))
        assert abs(got - m * p) <= 3 * sigma


def test_union_set_query_equals_or_of_members(abcd_schema):
    rng = random.Random(9)
    col = generate(abcd_schema, 300, {"A": 10, "B": 20, "C": 30, "D": 240}, 5)
    groups = abcd_groups(abcd_schema)
    for trial in range(40):
        ids = rng.sample(col.item_ids, rng.randint(1, 20))
        union = zero_error_crowd(col, seed=trial).answer_set_query(
            set_task(ids, groups[:3])
        )
        single = [
            zero_error_crowd(col, seed=trial).answer_set_query(set_task(ids, g))
            for g in groups[:3]
        ]
        assert union == any(single)


def test_multiple_coverage_short_circuits_on_sampled_proof(abcd_schema):
    # a dominant group reaches tau inside the sample: zero engine tasks for it
    col = generate(abcd_schema, 200, {"A": 0, "B": 0, "C": 0, "D": 200}, 1)
    src = zero_error_crowd(col)
    report = multiple_coverage(
        col, [Group.single(abcd_schema, "group", "D")], n=20, tau=50, c=2,
        source=src, seed=0,
    )
    verdict = report.verdicts[0]
    assert verdict.covered and verdict.tasks_issued == 0
    assert report.engine_tasks == 0 and report.sample_tasks == 100


def test_multiple_coverage_verdicts_match_oracle(abcd_schema):
    rng = random.Random(31)
    for trial in range(500):
        sigma = rng.randint(3, 6)
        values = tuple(f"g{i}" for i in range(sigma))
        schema = AttributeSchema.of(("grp", values))
        N = rng.randint(150, 1200)
        tau = rng.randint(5, 40)
        weights = [rng.random() ** 3 for _ in values]
        counts = [int(N * w / sum(weights)) for w in weights]
        counts[0] += N - sum(counts)
        col = generate(schema, N, dict(zip(values, counts)), trial)
        groups = [Group.single(schema, "grp", v) for v in values]
        src = SimulatedCrowd(col, error_rate=0, assignments_per_task=1, seed=trial)
        report = multiple_coverage(
            col, groups, n=20, tau=tau, c=2, source=src, seed=trial
        )
        assert [v.group_label for v in report.verdicts] == [g.display_name for g in groups]
        for g, v in zip(groups, report.verdicts):
            tc = true_count(col, g)
            assert v.covered == (tc >= tau), (trial, g.display_name)
            lo, hi = v.interval
            assert lo <= tc <= hi


def test_pool_and_engine_evidence_stay_disjoint(abcd_schema):
    col = generate(abcd_schema, 400, {"A": 12, "B": 28, "C": 60, "D": 300}, 2)
    src = zero_error_crowd(col)
    report = multiple_coverage(
        col, abcd_groups(abcd_schema), n=20, tau=30, c=2, source=src, seed=4
    )
    labeled = set(report.pool.entries)
    working = {col.id_at(i) for i in report.order}
    assert not labeled & working
    assert len(labeled) + len(working) == len(col)
