"""Leave-one-out neighbor priors and the modulating factors that reweight loss.

Each training row gets a prior: the neighbor-vote probability of its own
label, computed with the row itself excluded. Low priors mark hard (or
mislabeled) examples; the modulating factor turns that into a loss weight.
"""

import numpy as np

from knn_calibrate import (
    ModulatingFactor,
    build_store,
    calibrated_loss,
    factor_value,
    gaussian_class_splits,
    precompute_priors,
)

train_raw, _ = gaussian_class_splits(
    3, 8, 16, 1, seed=11, spread=0.4, train_label_noise=0.25
)
store = build_store(train_raw)
table = precompute_priors(store, k=8, tau=1.0)

print("prior distribution over the training rows (noisy labels get low priors):")
for lo, hi in ((0.0, 0.25), (0.25, 0.5), (0.5, 0.75), (0.75, 1.01)):
    count = int(((table.priors >= lo) & (table.priors < hi)).sum())
    print(f"  [{lo:.2f}, {hi:.2f}): {'#' * count} {count}")

focal = ModulatingFactor("focal", gamma=2.0)
nll = ModulatingFactor("nll", alpha=1.0)
print("\nfactor values f(p) by neighbor confidence p:")
print("   p    focal(g=2)   nll(a=1)")
for p in (0.0, 0.25, 0.5, 0.75, 1.0):
    print(f"  {p:.2f}   {factor_value(focal, p):8.4f}   {factor_value(nll, p):8.4f}")

print("\ncalibrated loss (1 + f(p)) * ce for ce = 1.0, focal g=2:")
for p in (0.0, 0.5, 1.0):
    print(f"  p={p}: loss = {calibrated_loss(1.0, p, focal):.4f}")
