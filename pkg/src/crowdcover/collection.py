"""Item collections with optional hidden truth and predicted labels.

Labels are stored columnarly (one int row per item, ``-1`` for missing) so
that simulated answering over large collections stays cheap; per-item record
views are materialized on demand.  Item order is significant and fixed at
load time: engines consume explicit working orders, and any shuffling is done
by the harness under an explicit seed.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, PartialLabelError, UnknownItemError
from .schema import MISSING, UNSPECIFIED, AttributeSchema, Group, Pattern


@dataclass(frozen=True)
class Item:
    item_id: str
    image_ref: str | None
    truth: dict[str, str] | None
    predicted: dict[str, str] | None


def _as_label_array(schema: AttributeSchema, rows, n: int) -> np.ndarray | None:
    if rows is None:
        return None
    arr = np.asarray(rows, dtype=np.int16)
    if arr.shape != (n, schema.d):
        raise ConfigError(f"label array must be {n}x{schema.d}, got {arr.shape}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


class ItemCollection:
    """Ordered, immutable collection of items."""

    def __init__(
        self,
        schema: AttributeSchema,
        item_ids: Sequence[str],
        *,
        truth=None,
        predicted=None,
        image_refs: Sequence[str | None] | None = None,
    ):
        self.schema = schema
        self._ids = list(item_ids)
        if len(set(self._ids)) != len(self._ids):
            raise ConfigError("item ids must be unique")
        n = len(self._ids)
        self._truth = _as_label_array(schema, truth, n)
        self._predicted = _as_label_array(schema, predicted, n)
        if image_refs is not None and len(image_refs) != n:
            raise ConfigError("image_refs length mismatch")
        self._image_refs = list(image_refs) if image_refs is not None else None
        self._id_index: dict[str, int] | None = None

    # -- basics ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def N(self) -> int:
        return len(self._ids)

    @property
    def item_ids(self) -> list[str]:
        return list(self._ids)

    @property
    def truth_rows(self) -> np.ndarray | None:
        return self._truth

    @property
    def predicted_rows(self) -> np.ndarray | None:
        return self._predicted

    @property
    def fully_labeled(self) -> bool:
        return self._truth is not None and not (self._truth == MISSING).any()

    @property
    def partially_labeled(self) -> bool:
        """True when some but not all truth values are present."""

        if self._truth is None:
            return False
        return bool((self._truth == MISSING).any()) and bool(
            (self._truth != MISSING).any()
        )

    def id_at(self, index: int) -> str:
        return self._ids[index]

    def ids_at(self, indices: Iterable[int]) -> tuple[str, ...]:
        ids = self._ids
        return tuple(ids[i] for i in indices)

    def index_of(self, item_id: str) -> int:
        if self._id_index is None:
            self._id_index = {x: i for i, x in enumerate(self._ids)}
        try:
            return self._id_index[item_id]
        except KeyError:
            raise UnknownItemError(f"unknown item id {item_id!r}") from None

    def image_ref(self, item_id: str) -> str | None:
        if self._image_refs is None:
            return None
        return self._image_refs[self.index_of(item_id)]

    def _row_to_names(self, arr, i: int) -> dict[str, str] | None:
        if arr is None:
            return None
        row = arr[i]
        if (row == MISSING).all():
            return None
        return self.schema.assignment_to_names(row)

    def item(self, index: int) -> Item:
        return Item(
            item_id=self._ids[index],
            image_ref=self._image_refs[index] if self._image_refs else None,
            truth=self._row_to_names(self._truth, index),
            predicted=self._row_to_names(self._predicted, index),
        )

    def __iter__(self) -> Iterator[Item]:
        return (self.item(i) for i in range(len(self)))

    def truth_assignment(self, index: int) -> dict[str, str]:
        names = self._row_to_names(self._truth, index)
        if names is None:
            raise PartialLabelError(f"item {self._ids[index]!r} has no truth labels")
        return names

    # -- construction ---------------------------------------------------

    @classmethod
    def from_records(
        cls, schema: AttributeSchema, records: Iterable[Mapping]
    ) -> ItemCollection:
        ids, images, truth, predicted = [], [], [], []
        any_truth = any_pred = any_image = False
        for rec in records:
            ids.append(str(rec["id"]))
            image = rec.get("image")
            images.append(image)
            any_image = any_image or image is not None
            t = rec.get("truth")
            if t is None:
                truth.append((MISSING,) * schema.d)
            else:
                truth.append(schema.assignment_from_names(t, allow_partial=True))
                any_truth = True
            p = rec.get("predicted")
            if p is None:
                predicted.append((MISSING,) * schema.d)
            else:
                predicted.append(schema.assignment_from_names(p, allow_partial=True))
                any_pred = True
        return cls(
            schema,
            ids,
            truth=truth if any_truth else None,
            predicted=predicted if any_pred else None,
            image_refs=images if any_image else None,
        )

    # -- manifest / CSV interchange -------------------------------------

    def to_manifest(self) -> dict:
        items = []
        for i in range(len(self)):
            rec: dict = {"id": self._ids[i]}
            if self._image_refs and self._image_refs[i] is not None:
                rec["image"] = self._image_refs[i]
            truth = self._row_to_names(self._truth, i)
            if truth:
                rec["truth"] = truth
            pred = self._row_to_names(self._predicted, i)
            if pred:
                rec["predicted"] = pred
            items.append(rec)
        return {"schema": self.schema.to_dict(), "items": items}

    @classmethod
    def from_manifest(cls, manifest: Mapping | str | Path) -> ItemCollection:
        if isinstance(manifest, (str, Path)):
            try:
                manifest = json.loads(Path(manifest).read_text())
            except (OSError, json.JSONDecodeError) as err:
                raise ConfigError(f"cannot read manifest: {err}") from err
        try:
            schema = AttributeSchema.from_dict(manifest["schema"])
            items = manifest["items"]
        except (KeyError, TypeError) as err:
            raise ConfigError(f"malformed manifest: {err}") from err
        return cls.from_records(schema, items)

    @classmethod
    def from_csv(cls, schema: AttributeSchema, path: str | Path) -> ItemCollection:
        """Load columns ``id, image, truth.<attr>, predicted.<attr>``.

        The literal ``X`` (or an empty cell) marks an unspecified value.
        """

        records = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rec: dict = {"id": row["id"]}
                if row.get("image"):
                    rec["image"] = row["image"]
                for kind in ("truth", "predicted"):
                    values = {}
                    for attr in schema.attributes:
                        raw = row.get(f"{kind}.{attr.name}", "")
                        if raw and raw != UNSPECIFIED:
                            values[attr.name] = raw
                    if values:
                        rec[kind] = values
                records.append(rec)
        return cls.from_records(schema, records)


def pattern_mask(rows: np.ndarray, pattern: Pattern | Group) -> np.ndarray:
    """Boolean mask of rows matching a pattern; rows must be fully labeled."""

    if isinstance(pattern, Group):
        pattern = pattern.pattern
    mask = np.ones(len(rows), dtype=bool)
    for i, v in pattern.slots_items():
        mask &= rows[:, i] == v
    return mask


def true_count(collection: ItemCollection, pattern: Pattern | Group) -> int:
    """Ground-truth number of items matching a pattern.

    This is the brute-force oracle the query engines are measured against;
    it requires every item to carry truth labels.
    """

    if isinstance(pattern, Group):
        pattern = pattern.pattern
    if len(collection) == 0:
        return 0
    rows = collection.truth_rows
    if rows is None:
        raise PartialLabelError("collection has no truth labels")
    for i, _ in pattern.slots_items():
        if (rows[:, i] == MISSING).any():
            raise PartialLabelError("collection is partially labeled")
    return int(pattern_mask(rows, pattern).sum())
