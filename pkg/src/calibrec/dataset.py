"""Interaction ingestion, id mapping, and deterministic per-user splits.

Implicit-feedback data: an interaction is a (user, item) pair, presence
meaning a positive label. Unobserved pairs are unlabeled, not negatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

Interaction = tuple[int, int]


class DataFormatError(ValueError):
    """Malformed interaction file. Carries the offending 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message)
        self.line_no = line_no


@dataclass
class IdMaps:
    """Bidirectional mapping between external string ids and dense indices."""

    user_to_index: dict[str, int] = field(default_factory=dict)
    item_to_index: dict[str, int] = field(default_factory=dict)

    @property
    def num_users(self) -> int:
        return len(self.user_to_index)

    @property
    def num_items(self) -> int:
        return len(self.item_to_index)

    def user_index(self, external_id: str) -> int:
        """Index for an external user id, assigning a fresh one if unseen."""
        idx = self.user_to_index.get(external_id)
        if idx is None:
            idx = len(self.user_to_index)
            self.user_to_index[external_id] = idx
        return idx

    def item_index(self, external_id: str) -> int:
        idx = self.item_to_index.get(external_id)
        if idx is None:
            idx = len(self.item_to_index)
            self.item_to_index[external_id] = idx
        return idx

    def user_id(self, index: int) -> str:
        """External id for a user index (inverse of user_index)."""
        return self._invert(self.user_to_index)[index]

    def item_id(self, index: int) -> str:
        return self._invert(self.item_to_index)[index]

    @staticmethod
    def _invert(mapping: dict[str, int]) -> list[str]:
        inv = [""] * len(mapping)
        for key, idx in mapping.items():
            inv[idx] = key
        return inv


@dataclass
class Dataset:
    """Index-mapped interactions partitioned into train/validation/test.

    Per-user sets are the primary representation; the flat pair sets are
    derived views. Instances are treated as immutable after construction.
    """

    num_users: int
    num_items: int
    train_by_user: dict[int, frozenset[int]]
    validation_by_user: dict[int, frozenset[int]]
    test_by_user: dict[int, frozenset[int]]
    item_popularity: np.ndarray

    def by_user(self, split: str) -> dict[int, frozenset[int]]:
        try:
            return {
                "train": self.train_by_user,
                "validation": self.validation_by_user,
                "test": self.test_by_user,
            }[split]
        except KeyError:
            raise ValueError(f"unknown split {split!r}") from None

    def pairs(self, split: str) -> set[Interaction]:
        return {(u, i) for u, items in self.by_user(split).items() for i in items}

    @property
    def train(self) -> set[Interaction]:
        return self.pairs("train")

    @property
    def validation(self) -> set[Interaction]:
        return self.pairs("validation")

    @property
    def test(self) -> set[Interaction]:
        return self.pairs("test")

    def train_items(self, user: int) -> frozenset[int]:
        return self.train_by_user.get(user, frozenset())

    def observed_items(self, user: int) -> frozenset[int]:
        """All items the user interacted with, over every split."""
        return (
            self.train_by_user.get(user, frozenset())
            | self.validation_by_user.get(user, frozenset())
            | self.test_by_user.get(user, frozenset())
        )


def load_interactions(
    path,
    delimiter: str = ",",
    id_maps: IdMaps | None = None,
) -> tuple[list[Interaction], IdMaps]:
    """Read a delimiter-separated interaction log.

    Each non-empty line is ``user_id<delim>item_id[<delim>timestamp]``.
    External ids are mapped to dense 0-based indices in first-appearance
    order; an existing ``id_maps`` is extended in place so several files can
    share one index space. Duplicate (user, item) lines collapse to a single
    interaction; timestamps are ignored.

    Raises DataFormatError on malformed lines (with the line number) and on
    input containing no interactions. I/O failures propagate as OSError.
    """
    maps = id_maps if id_maps is not None else IdMaps()
    interactions: list[Interaction] = []
    seen: set[Interaction] = set()
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            fields = [f.strip() for f in stripped.split(delimiter)]
            if len(fields) not in (2, 3) or not fields[0] or not fields[1]:
                raise DataFormatError(
                    f"line {line_no}: expected 'user{delimiter}item[{delimiter}timestamp]', got {stripped!r}",
                    line_no=line_no,
                )
            pair = (maps.user_index(fields[0]), maps.item_index(fields[1]))
            if pair not in seen:
                seen.add(pair)
                interactions.append(pair)
    if not interactions:
        raise DataFormatError("input contains no interactions")
    return interactions, maps


def split_per_user(
    raw: Sequence[Interaction],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int | Sequence[int] = 0,
    num_users: int | None = None,
    num_items: int | None = None,
) -> Dataset:
    """Partition interactions into per-user train/validation/test holdouts.

    Per user, items are shuffled by a generator seeded with ``seed`` and cut
    by ``ratios``: validation and test get floor(n * ratio) items each and
    train the remainder, so train is never empty. Users with fewer than 3
    interactions put everything in train. The same (raw, ratios, seed)
    always yields the same Dataset.
    """
    if not raw:
        raise ValueError("empty interaction list")
    r_train, r_val, r_test = ratios
    if min(ratios) <= 0:
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")

    deduped = list(dict.fromkeys(raw))
    by_user: dict[int, list[int]] = {}
    for u, i in deduped:
        by_user.setdefault(u, []).append(i)
        if u < 0 or i < 0:
            raise ValueError(f"negative index in interaction ({u}, {i})")

    n_users = num_users if num_users is not None else max(u for u, _ in deduped) + 1
    n_items = num_items if num_items is not None else max(i for _, i in deduped) + 1

    rng = np.random.default_rng(seed)
    train_by_user: dict[int, frozenset[int]] = {}
    val_by_user: dict[int, frozenset[int]] = {}
    test_by_user: dict[int, frozenset[int]] = {}
    popularity = np.zeros(n_items, dtype=np.int64)

    for user in sorted(by_user):
        items = np.array(sorted(by_user[user]), dtype=np.int64)
        items = items[rng.permutation(len(items))]
        n = len(items)
        if n < 3:
            n_val = n_test = 0
        else:
            # epsilon guards against 10 * 0.1 == 0.999... style float drift
            n_val = int(n * r_val + 1e-9)
            n_test = int(n * r_test + 1e-9)
        n_train = n - n_val - n_test
        train_by_user[user] = frozenset(int(i) for i in items[:n_train])
        if n_val:
            val_by_user[user] = frozenset(int(i) for i in items[n_train : n_train + n_val])
        if n_test:
            test_by_user[user] = frozenset(int(i) for i in items[n_train + n_val :])
        for i in items[:n_train]:
            popularity[i] += 1

    return Dataset(
        num_users=n_users,
        num_items=n_items,
        train_by_user=train_by_user,
        validation_by_user=val_by_user,
        test_by_user=test_by_user,
        item_popularity=popularity,
    )


def sample_negative(dataset: Dataset, user: int, rng: np.random.Generator) -> int:
    """Uniformly sample an item outside the user's train set.

    Rejection sampling; raises ValueError when the user's train set covers
    every item.
    """
    train = dataset.train_by_user.get(user, frozenset())
    if len(train) >= dataset.num_items:
        raise ValueError(f"user {user}: train set covers all {dataset.num_items} items")
    while True:
        item = int(rng.integers(dataset.num_items))
        if item not in train:
            return item
