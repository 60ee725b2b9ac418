import numpy as np
import pytest

from calibrec.dataset import Dataset
from calibrec.synthetic import low_rank_dataset


def make_dataset(train, validation=None, test=None, num_users=None, num_items=None):
    """Build a Dataset directly from per-user item collections."""
    validation = validation or {}
    test = test or {}

    def freeze(d):
        return {u: frozenset(items) for u, items in d.items()}

    users = set(train) | set(validation) | set(test)
    items = {i for d in (train, validation, test) for s in d.values() for i in s}
    n_users = num_users if num_users is not None else (max(users) + 1 if users else 0)
    n_items = num_items if num_items is not None else (max(items) + 1 if items else 0)
    popularity = np.zeros(n_items, dtype=np.int64)
    for s in train.values():
        for i in s:
            popularity[i] += 1
    return Dataset(
        num_users=n_users,
        num_items=n_items,
        train_by_user=freeze(train),
        validation_by_user=freeze(validation),
        test_by_user=freeze(test),
        item_popularity=popularity,
    )


@pytest.fixture(scope="session")
def small_dataset():
    """50 users x 80 items low-rank dataset with all three splits populated."""
    return low_rank_dataset(50, 80, rank=2, per_user=15, noise=0.25, seed=11)
