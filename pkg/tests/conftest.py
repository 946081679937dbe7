import random

import numpy as np
import pytest

from crowdcover import AttributeSchema, Group, ItemCollection, SimulatedCrowd


@pytest.fixture
def shape_schema():
    return AttributeSchema.of(("shape", ("square", "triangle")))


@pytest.fixture
def gender_race_schema():
    return AttributeSchema.of(
        ("gender", ("F", "M")),
        ("race", ("White", "Black", "Asian")),
    )


def planted_collection(schema, N, member_positions, *, member_value=1, attr=0):
    """Binary-ish collection: members carry member_value on one attribute."""

    truth = np.zeros((N, schema.d), dtype=np.int16)
    truth[list(member_positions), attr] = member_value
    ids = [f"i{i:05d}" for i in range(N)]
    return ItemCollection(schema, ids, truth=truth)


def random_members(rng: random.Random, N: int, f: int) -> list[int]:
    return rng.sample(range(N), min(f, N))


def zero_error_crowd(collection, seed=0):
    return SimulatedCrowd(
        collection, error_rate=0.0, assignments_per_task=1, seed=seed
    )


def scan_count(collection, values: dict[str, str]) -> int:
    """Independent oracle: a plain linear scan over named item records.

    Deliberately avoids Pattern.matches and the columnar mask path.
    """

    hits = 0
    for item in collection:
        truth = item.truth or {}
        if all(truth.get(k) == v for k, v in values.items()):
            hits += 1
    return hits


def triangle_group(schema) -> Group:
    return Group.single(schema, "shape", "triangle")
