"""Synthetic regression data and batching."""

import random


def make_dataset(n_rows, n_features=4):
    """Rows of features plus a scalar target per row."""
    rows = []
    for _ in range(n_rows):
        features = [random.uniform(-1.0, 1.0) for _ in range(n_features)]
        target = sum(features) * 0.5 + random.gauss(0.0, 0.01)
        rows.append((features, target))
    return rows


def iterate_batches(dataset, batch_size):
    """Yield (inputs, targets) lists; drops the trailing partial batch."""
    for start in range(0, len(dataset) - batch_size + 1, batch_size):
        batch = dataset[start : start + batch_size]
        inputs = [features for features, _ in batch]
        targets = [target for _, target in batch]
        yield inputs, targets
