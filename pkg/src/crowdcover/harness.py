"""Synthetic data generation, parameter sweeps, and CSV reports.

Collections are generated with exact planted counts and shuffled under an
explicit seed; all randomness lives here, never inside the algorithms.
Sweeps write one CSV row per (parameter value, seed) cell with a fixed
column set, and reruns of the same spec are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aggregation import multiple_coverage
from .collection import ItemCollection
from .engine import base_coverage, group_coverage, reported_upper_bound
from .errors import ConfigError
from .lattice import intersectional_coverage
from .schema import AttributeSchema, Group
from .sources import DEFAULT_ASSIGNMENTS, SimulatedCrowd

CSV_COLUMNS = [
    "algorithm",
    "N",
    "n",
    "tau",
    "c",
    "p",
    "k",
    "seed",
    "param_name",
    "param_value",
    "covered",
    "cnt",
    "tasks",
    "assignments",
    "upper_bound",
    "baseline_tasks",
]

ALGORITHMS = ("group", "base", "multiple", "intersectional", "classifier")


def _id_pool(n: int, _cache: dict[int, list[str]] = {}) -> list[str]:
    width = max(6, len(str(n - 1)) if n else 1)
    if n not in _cache:
        _cache.clear()  # keep at most one size around; sweeps reuse a single N
        _cache[n] = [f"i{i:0{width}d}" for i in range(n)]
    return _cache[n]


def generate(
    schema: AttributeSchema,
    N: int,
    counts: Mapping[tuple[str, ...] | str, int],
    seed: int,
) -> ItemCollection:
    """Full-truth collection with exactly the planted counts, seed-shuffled.

    Count keys are value-name tuples, one value per attribute (a bare string
    is accepted for single-attribute schemas).  Counts must sum to N.
    """

    rows = []
    total = 0
    for key, count in counts.items():
        if count < 0:
            raise ConfigError("planted counts must be non-negative")
        parts = (key,) if isinstance(key, str) else tuple(key)
        if len(parts) != schema.d:
            raise ConfigError(f"count key {parts} needs one value per attribute")
        row = tuple(schema.value_index(i, v) for i, v in enumerate(parts))
        rows.append((row, count))
        total += count
    if total != N:
        raise ConfigError(f"planted counts sum to {total}, expected N={N}")
    truth = np.empty((N, schema.d), dtype=np.int16)
    at = 0
    for row, count in rows:
        truth[at : at + count] = row
        at += count
    rng = np.random.default_rng(seed)
    truth = truth[rng.permutation(N)]
    return ItemCollection(schema, _id_pool(N), truth=truth)


# -- named presets -----------------------------------------------------------

FIG5_SEQUENCE = "sqsqsqsqtrsqsqtrsqsqsqsqtrtrsqtr"


def fig5_collection() -> ItemCollection:
    """The 16-image running example: 11 squares, 5 triangles, fixed order."""

    schema = AttributeSchema.of(("shape", ("square", "triangle")))
    marks = [FIG5_SEQUENCE[i : i + 2] for i in range(0, 32, 2)]
    truth = [(0,) if m == "sq" else (1,) for m in marks]
    ids = [f"i{i:02d}" for i in range(16)]
    return ItemCollection(schema, ids, truth=truth)


def feret_like_counts(N: int = 1522, positives: int = 215) -> tuple[AttributeSchema, dict]:
    schema = AttributeSchema.of(("gender", ("F", "M")))
    return schema, {"F": positives, "M": N - positives}


def multi_group_preset(name: str, N: int, tau: int) -> tuple[AttributeSchema, dict]:
    """The four multi-group settings: planted minority counts per scenario.

    effective1   three uncovered minorities whose union is still uncovered
    effective2   three covered minorities
    ineffective  two uncovered minorities and one covered
    adversarial  three uncovered minorities whose union is covered
    """

    schema = AttributeSchema.of(("group", ("g1", "g2", "g3", "g4")))
    minorities = {
        "effective1": [tau // 5, tau // 4, 3 * tau // 10],
        "effective2": [2 * tau, 2 * tau + tau // 5, 3 * tau],
        "ineffective": [tau // 5, 3 * tau // 10, 2 * tau],
        "adversarial": [3 * tau // 5, 7 * tau // 10, 4 * tau // 5],
    }.get(name)
    if minorities is None:
        raise ConfigError(f"unknown preset {name!r}")
    rest = N - sum(minorities)
    if rest <= tau:
        raise ConfigError("N too small for the preset")
    counts = {"g1": minorities[0], "g2": minorities[1], "g3": minorities[2], "g4": rest}
    return schema, counts


# -- sweeps ------------------------------------------------------------------


@dataclass
class ExperimentSpec:
    """One sweep: an algorithm, fixed parameters, and one varying parameter.

    Datasets come from one of three places: a named ``preset``, an explicit
    ``schema``/``counts`` pair (counts keyed by comma-joined value names;
    required for intersectional sweeps), or the default single-attribute
    layout with ``f`` planted target items out of N.
    """

    algorithm: str
    N: int = 100_000
    n: int = 50
    tau: int = 50
    c: int = 2
    p: float = 0.0
    k: int = DEFAULT_ASSIGNMENTS
    seeds: tuple[int, ...] = tuple(range(20))
    param_name: str = "f"
    param_values: tuple = ()
    target_value: str = "F"
    majority_value: str = "M"
    attribute: str = "gender"
    values: tuple[str, ...] = ("F", "M")
    f: int = 50
    include_baseline: bool = False
    preset: str | None = None
    schema: dict | None = None
    counts: dict | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if not self.param_values:
            raise ConfigError("sweep needs at least one parameter value")
        self.seeds = tuple(self.seeds)
        self.param_values = tuple(self.param_values)

    @classmethod
    def from_json(cls, path: str | Path) -> ExperimentSpec:
        try:
            data = json.loads(Path(path).read_text())
            return cls(**data)
        except (OSError, json.JSONDecodeError, TypeError) as err:
            raise ConfigError(f"bad sweep spec: {err}") from err


def _sweep_cell(spec: ExperimentSpec, param_value, seed: int) -> dict:
    params = {"N": spec.N, "n": spec.n, "tau": spec.tau, "f": spec.f}
    if spec.param_name not in params:
        raise ConfigError(f"cannot sweep parameter {spec.param_name!r}")
    params[spec.param_name] = param_value
    N, n, tau, f = params["N"], params["n"], params["tau"], params["f"]
    if spec.preset:
        schema, counts = multi_group_preset(spec.preset, N, tau)
    elif spec.schema is not None:
        if spec.counts is None:
            raise ConfigError("explicit schema needs explicit counts")
        if spec.param_name in ("f", "N"):
            raise ConfigError("explicit counts fix the dataset; sweep n or tau")
        schema = AttributeSchema.from_dict(spec.schema)
        counts = {tuple(key.split(",")): v for key, v in spec.counts.items()}
        N = sum(counts.values())
    else:
        schema = AttributeSchema.of((spec.attribute, spec.values))
        counts = {v: 0 for v in spec.values}
        counts[spec.target_value] = f
        counts[spec.majority_value] = N - f
    collection = generate(schema, N, counts, seed)
    source = SimulatedCrowd(
        collection, error_rate=spec.p, assignments_per_task=spec.k, seed=seed
    )
    covered: object
    if spec.algorithm == "group":
        target = Group.single(schema, spec.attribute, spec.target_value)
        v = group_coverage(collection, target, n=n, tau=tau, source=source)
        covered, cnt = v.covered, v.cnt
    elif spec.algorithm == "base":
        target = Group.single(schema, spec.attribute, spec.target_value)
        v = base_coverage(collection, target, tau=tau, source=source)
        covered, cnt = v.covered, v.cnt
    elif spec.algorithm == "multiple":
        groups = [Group.single(schema, schema.attributes[0].name, val)
                  for val in schema.attributes[0].values]
        rep = multiple_coverage(
            collection, groups, n=n, tau=tau, c=spec.c, source=source, seed=seed
        )
        covered = all(v.covered for v in rep.verdicts)
        cnt = sum(1 for v in rep.verdicts if v.covered)
    else:  # intersectional; classifier sweeps need external predictions
        rep = intersectional_coverage(
            collection, n=n, tau=tau, c=spec.c, source=source, seed=seed
        )
        covered = not rep.mups
        cnt = len(rep.mups)
    row = {
        "algorithm": spec.algorithm,
        "N": N,
        "n": n,
        "tau": tau,
        "c": spec.c,
        "p": format(spec.p, "g"),
        "k": spec.k,
        "seed": seed,
        "param_name": spec.param_name,
        "param_value": param_value,
        "covered": covered,
        "cnt": cnt,
        "tasks": source.tasks_issued,
        "assignments": source.assignments_issued,
        "upper_bound": reported_upper_bound(N, n, tau),
        "baseline_tasks": "",
    }
    if spec.include_baseline and spec.algorithm == "group":
        baseline_source = SimulatedCrowd(
            collection, error_rate=spec.p, assignments_per_task=spec.k, seed=seed
        )
        target = Group.single(schema, spec.attribute, spec.target_value)
        b = base_coverage(collection, target, tau=tau, source=baseline_source)
        row["baseline_tasks"] = b.tasks_issued
    return row


def sweep(spec: ExperimentSpec) -> list[dict]:
    """Run every (parameter value, seed) cell; rows sorted by (value, seed)."""

    rows = []
    for value in spec.param_values:
        for seed in spec.seeds:
            rows.append(_sweep_cell(spec, value, seed))
    rows.sort(key=lambda r: (r["param_value"], r["seed"]))
    return rows


def write_csv(rows: Sequence[Mapping], out) -> None:
    own = isinstance(out, (str, Path))
    fh = open(out, "w", newline="") if own else out
    try:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in CSV_COLUMNS})
    finally:
        if own:
            fh.close()


def csv_text(rows: Sequence[Mapping]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(rows: Sequence[Mapping]) -> list[dict]:
    """Mean/min/max task counts per parameter value, for the report command."""

    by_value: dict = {}
    for row in rows:
        by_value.setdefault(row["param_value"], []).append(int(row["tasks"]))
    out = []
    for value in sorted(by_value, key=lambda v: float(v)):
        tasks = by_value[value]
        out.append(
            {
                "param_value": value,
                "runs": len(tasks),
                "mean_tasks": sum(tasks) / len(tasks),
                "min_tasks": min(tasks),
                "max_tasks": max(tasks),
            }
        )
    return out
