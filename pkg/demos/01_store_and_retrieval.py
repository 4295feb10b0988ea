"""Build a normalized embedding store, persist it, and query neighbors.

The datastore is an immutable matrix of unit-norm rows with labels. Search
is exact: every row is scored, the k closest win, ties break by row index.
"""

import tempfile
from pathlib import Path

import numpy as np

from knn_calibrate import (
    aggregate,
    build_store,
    gaussian_class_splits,
    load_store,
    retrieve,
    save_store,
)

train_raw, _ = gaussian_class_splits(3, 8, 20, 1, seed=7, spread=0.4)
store = build_store(train_raw)
print(f"store: n={store.n} rows, D={store.dim}, C={store.class_count}")
print("row norms:", np.linalg.norm(store.vectors[:4].astype(np.float64), axis=1))

# round-trip through the binary format
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.femb"
    save_store(store, path)
    reloaded = load_store(path)
    print("round-trip bit-identical:", reloaded.vectors.tobytes() == store.vectors.tobytes())

# retrieve neighbors for a query and turn them into a class distribution
query = store.vectors[0].astype(np.float64)
neighbors = retrieve(store, query, k=8, exclude=0)
print("\nnearest neighbors (index, distance, label):")
for idx, dist, label in zip(neighbors.indices, neighbors.distances, neighbors.labels):
    print(f"  {idx:3d}  {dist:.4f}  {label}")

# temperature controls how sharply the closest neighbors dominate
for tau in (0.01, 0.1, 1.0, 10.0):
    probs = aggregate(neighbors, tau, store.class_count)
    print(f"tau={tau:>5}: {np.round(probs, 3)}")
