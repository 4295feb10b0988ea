"""Zero-shot flow: tag an unlabeled pool with the model, retrieve against it.

Without labeled training data, a base classifier pseudo-labels the pool;
the tagged pool then serves as the neighbor datastore for interpolated
inference.
"""

import numpy as np

from knn_calibrate import (
    RunConfig,
    build_store,
    evaluate,
    gaussian_class_splits,
    predict_batch,
    pseudo_label,
    train_calibrated,
)

from knn_calibrate import RawEmbeddings

# a small labeled set stands in for the external base predictor's training;
# the big unlabeled draw is split into a pool to tag and a held-out test set
seed_raw, rest_raw = gaussian_class_splits(4, 12, 8, 90, seed=21, spread=0.3)
pool_mask = (np.arange(rest_raw.n) % 90) < 50
pool_raw = RawEmbeddings(
    rest_raw.vectors[pool_mask], rest_raw.labels[pool_mask], rest_raw.class_count
)
test_raw = RawEmbeddings(
    rest_raw.vectors[~pool_mask], rest_raw.labels[~pool_mask], rest_raw.class_count
)
seed_store, pool_store = build_store(seed_raw), build_store(pool_raw)
test_store = build_store(test_raw)

cfg = RunConfig(mode="model-only", max_steps=400, eval_every=100, lr=1e-2, seed=21)
params, _ = train_calibrated(cfg, seed_store, test_store)

# tag the unlabeled pool
tagged = pseudo_label(params, pool_store.vectors.astype(np.float64))
agreement = (tagged.store.labels == pool_store.labels).mean()
print(f"pseudo-labels agree with generating labels on {agreement:.1%} of the pool")
print(f"confidence: min {tagged.confidences.min():.3f}, mean {tagged.confidences.mean():.3f}")

# the tagged pool becomes the datastore for interpolated inference
for mode, store in (("model-only", None), ("union-inf", tagged.store)):
    run = RunConfig(mode=mode, k=16, tau=1.0, lam=0.5)
    _, preds = predict_batch(run, params, store, test_store.vectors.astype(np.float64))
    report = evaluate(preds, test_store.labels, test_store.class_count)
    print(f"{mode:>11}: test accuracy {report.accuracy:.3f}")
