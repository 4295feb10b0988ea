"""Seeded synthetic embedding datasets for demos and desk-scale experiments."""

from __future__ import annotations

import numpy as np

from .store import DataError, RawEmbeddings


def gaussian_class_splits(
    class_count: int,
    dim: int,
    train_per_class: int,
    dev_per_class: int,
    seed: int,
    spread: float = 0.35,
    train_label_noise: float = 0.0,
) -> tuple[RawEmbeddings, RawEmbeddings]:
    """Train/dev splits of Gaussian clusters around shared random unit centers.

    Both splits sample from the same class centers, so they describe one
    task. ``train_label_noise`` flips that fraction of training labels
    (rounded down) to a uniformly random different class. Pure function of
    the arguments.
    """
    if class_count < 2 or dim < 1 or train_per_class < 1 or dev_per_class < 1:
        raise DataError("need class_count >= 2, dim >= 1, positive split sizes")
    if not 0.0 <= train_label_noise < 1.0:
        raise DataError(f"train_label_noise must lie in [0, 1), got {train_label_noise}")
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(class_count, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    def sample(per_class):
        n = class_count * per_class
        labels = np.repeat(np.arange(class_count), per_class)
        vectors = centers[labels] + spread * rng.normal(size=(n, dim))
        return vectors.astype(np.float32), labels

    train_vectors, train_labels = sample(train_per_class)
    dev_vectors, dev_labels = sample(dev_per_class)

    if train_label_noise > 0.0:
        n = train_labels.shape[0]
        flip = rng.choice(n, size=int(train_label_noise * n), replace=False)
        offsets = rng.integers(1, class_count, size=flip.size)
        train_labels = train_labels.copy()
        train_labels[flip] = (train_labels[flip] + offsets) % class_count

    return (
        RawEmbeddings(train_vectors, train_labels, class_count),
        RawEmbeddings(dev_vectors, dev_labels, class_count),
    )
