"""Modulating factors and neighbor-prior computation for calibrated training."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .knn import knn_predict
from .store import DataError, EmbeddingStore

NLL_FLOOR = 1e-8


@dataclass(frozen=True)
class ModulatingFactor:
    """Nonnegative weight f(p), decreasing in neighbor confidence p.

    kind "focal": f(p) = (1 - p)^gamma, bounded in [0, 1].
    kind "nll":   f(p) = -alpha * ln(max(p, 1e-8)), unbounded above.
    """

    kind: str = "focal"
    gamma: float = 2.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("focal", "nll"):
            raise DataError(f"unknown factor kind {self.kind!r}")
        if self.gamma < 0:
            raise DataError(f"gamma must be >= 0, got {self.gamma}")
        if self.alpha < 0:
            raise DataError(f"alpha must be >= 0, got {self.alpha}")


def factor_value(factor: ModulatingFactor, p) -> np.ndarray | float:
    """Evaluate f(p) elementwise; p must lie in [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    if ((p < 0) | (p > 1)).any():
        raise DataError("p must lie in [0, 1]")
    if factor.kind == "focal":
        out = (1.0 - p) ** factor.gamma
    else:
        out = -factor.alpha * np.log(np.maximum(p, NLL_FLOOR))
    return out if out.ndim else float(out)


def calibrated_loss(ce_loss: float, p_knn_true: float, factor: ModulatingFactor) -> float:
    """Reweighted cross-entropy: (1 + f(p)) * ce_loss."""
    if ce_loss < 0:
        raise DataError(f"ce_loss must be >= 0, got {ce_loss}")
    return (1.0 + factor_value(factor, p_knn_true)) * ce_loss


@dataclass(frozen=True)
class PriorTable:
    """Per-row leave-one-out neighbor probability of the true label."""

    priors: np.ndarray  # (n,) float64 in [0, 1]
    k: int
    tau: float
    metric: str

    def __post_init__(self):
        priors = np.ascontiguousarray(self.priors, dtype=np.float64)
        if ((priors < 0) | (priors > 1)).any():
            raise DataError("priors must lie in [0, 1]")
        priors.setflags(write=False)
        object.__setattr__(self, "priors", priors)

    def __len__(self) -> int:
        return self.priors.shape[0]


def precompute_priors(
    store: EmbeddingStore, k: int, tau: float, metric: str = "euclidean"
) -> PriorTable:
    """For every store row, the leave-one-out probability of its own label.

    The row itself is excluded from its candidates; including it would pin
    every prior near 1 and erase the easy/hard signal.
    """
    if store.n < 2:
        raise DataError("need at least 2 rows to compute leave-one-out priors")
    priors = np.empty(store.n, dtype=np.float64)
    for i in range(store.n):
        probs = knn_predict(
            store, store.vectors[i].astype(np.float64), k, tau, metric=metric, exclude=i
        )
        priors[i] = probs[store.labels[i]]
    return PriorTable(priors, k=k, tau=tau, metric=metric)


def save_priors(table: PriorTable, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        handle.write(f"# k={table.k}\ttau={table.tau!r}\tmetric={table.metric}\n")
        for i, prior in enumerate(table.priors):
            handle.write(f"{i}\t{float(prior)!r}\n")


def load_priors(path) -> PriorTable:
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        header = handle.readline()
        if not header.startswith("# "):
            raise DataError(f"{path}: missing prior-table header")
        fields = dict(
            part.split("=", 1) for part in header[2:].rstrip("\n").split("\t")
        )
        priors = []
        for line in handle:
            index, value = line.rstrip("\n").split("\t")
            if int(index) != len(priors):
                raise DataError(f"{path}: non-contiguous row index {index}")
            priors.append(float(value))
    return PriorTable(
        np.asarray(priors),
        k=int(fields["k"]),
        tau=float(fields["tau"]),
        metric=fields["metric"],
    )
