"""Seeded synthetic interaction data for tests, demos, and smoke runs."""

from __future__ import annotations

import numpy as np

from .dataset import Dataset, Interaction, split_per_user


def low_rank_interactions(
    num_users: int,
    num_items: int,
    rank: int = 2,
    per_user: int = 20,
    noise: float = 0.25,
    seed: int = 0,
) -> list[Interaction]:
    """Interactions from a noisy low-rank preference matrix.

    Each user interacts with their ``per_user`` top items under
    score = <u_f, v_f> + noise * N(0,1), giving structure a factorization
    model can recover.
    """
    rng = np.random.default_rng(seed)
    user_factors = rng.normal(size=(num_users, rank))
    item_factors = rng.normal(size=(num_items, rank))
    pairs: list[Interaction] = []
    for u in range(num_users):
        scores = item_factors @ user_factors[u] + noise * rng.normal(size=num_items)
        top = np.argsort(-scores, kind="stable")[:per_user]
        pairs.extend((u, int(i)) for i in sorted(top))
    return pairs


def low_rank_dataset(
    num_users: int,
    num_items: int,
    rank: int = 2,
    per_user: int = 20,
    noise: float = 0.25,
    ratios=(0.8, 0.1, 0.1),
    seed: int = 0,
) -> Dataset:
    pairs = low_rank_interactions(num_users, num_items, rank, per_user, noise, seed)
    return split_per_user(pairs, ratios=ratios, seed=seed)


def write_interactions_csv(
    path,
    pairs,
    delimiter: str = ",",
    user_prefix: str = "u",
    item_prefix: str = "i",
    with_timestamps: bool = False,
):
    """Write pairs as external-id interaction lines (``u<u>,i<i>[,ts]``)."""
    with open(path, "w", encoding="utf-8") as fh:
        for ts, (u, i) in enumerate(pairs):
            row = [f"{user_prefix}{u}", f"{item_prefix}{i}"]
            if with_timestamps:
                row.append(str(1_000_000 + ts))
            fh.write(delimiter.join(row) + "\n")
    return path
