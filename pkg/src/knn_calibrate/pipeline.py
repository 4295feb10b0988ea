"""End-to-end flows: calibrated training, interpolated inference, pseudo-labels, sweeps."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .calibration import ModulatingFactor, precompute_priors
from .classifier import (
    AdamW,
    ClassifierParams,
    forward_batch,
    init_params,
    loss_and_grad,
)
from .knn import knn_predict
from .metrics import EvalReport, evaluate
from .store import DataError, EmbeddingStore

MODES = ("knn-only", "model-only", "union-inf", "union-all")

DEFAULT_K_GRID = (16, 32, 128)
DEFAULT_TAU_GRID = (0.01, 0.1, 1.0, 10.0)
DEFAULT_LAMBDA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
DEFAULT_FEWSHOT_SEEDS = (13, 42, 87)


@dataclass(frozen=True)
class RunConfig:
    """All hyperparameters of one run."""

    k: int = 16
    tau: float = 1.0
    lam: float = 0.5
    metric: str = "euclidean"
    factor: ModulatingFactor = field(default_factory=ModulatingFactor)
    mode: str = "union-all"
    seed: int = 42
    max_steps: int = 1000
    eval_every: int = 100
    batch_size: int = 8
    lr: float = 1e-2
    warmup_steps: int | None = None  # None: 10% of max_steps
    weight_decay: float = 0.0
    grad_accum: int = 1
    hidden: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise DataError(f"unknown mode {self.mode!r} (expected one of {MODES})")
        if not 0.0 <= self.lam <= 1.0:
            raise DataError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.tau <= 0:
            raise DataError(f"tau must be positive, got {self.tau}")
        if self.k < 1:
            raise DataError(f"k must be >= 1, got {self.k}")

    @property
    def effective_warmup(self) -> int:
        return self.max_steps // 10 if self.warmup_steps is None else self.warmup_steps


def interpolate(p_knn: np.ndarray, p_model: np.ndarray, lam: float) -> np.ndarray:
    """Convex combination lam * p_knn + (1 - lam) * p_model."""
    p_knn = np.asarray(p_knn, dtype=np.float64)
    p_model = np.asarray(p_model, dtype=np.float64)
    if p_knn.shape != p_model.shape:
        raise DataError(
            f"distribution length mismatch: {p_knn.shape} vs {p_model.shape}"
        )
    if not 0.0 <= lam <= 1.0:
        raise DataError(f"lambda must lie in [0, 1], got {lam}")
    return lam * p_knn + (1.0 - lam) * p_model


def _knn_dists(
    store: EmbeddingStore, queries: np.ndarray, k: int, tau: float, metric: str
) -> np.ndarray:
    out = np.empty((queries.shape[0], store.class_count), dtype=np.float64)
    for i, q in enumerate(queries):
        out[i] = knn_predict(store, np.asarray(q, dtype=np.float64), k, tau, metric=metric)
    return out


def predict(
    config: RunConfig,
    params: ClassifierParams | None,
    store: EmbeddingStore | None,
    query: np.ndarray,
) -> tuple[np.ndarray, int]:
    """Class distribution and argmax class for one query under the configured mode."""
    probs, classes = predict_batch(config, params, store, np.asarray(query)[None, :])
    return probs[0], int(classes[0])


def predict_batch(
    config: RunConfig,
    params: ClassifierParams | None,
    store: EmbeddingStore | None,
    queries: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`predict`; ties in argmax break to the lowest class."""
    queries = np.asarray(queries, dtype=np.float64)
    if config.mode == "knn-only":
        if store is None:
            raise DataError("knn-only prediction needs a datastore")
        probs = _knn_dists(store, queries, config.k, config.tau, config.metric)
    else:
        if params is None:
            raise DataError(f"mode {config.mode!r} needs classifier parameters")
        _, probs = forward_batch(params, queries)
        if config.mode in ("union-inf", "union-all"):
            if store is None:
                raise DataError(f"mode {config.mode!r} needs a datastore")
            knn = _knn_dists(store, queries, config.k, config.tau, config.metric)
            probs = interpolate(knn, probs, config.lam)
    return probs, probs.argmax(axis=1)


def _dev_report(
    config: RunConfig,
    params: ClassifierParams,
    dev: EmbeddingStore,
    knn_dev: np.ndarray | None,
) -> EvalReport:
    _, model_probs = forward_batch(params, dev.vectors.astype(np.float64))
    if knn_dev is None:
        probs = model_probs
    else:
        probs = interpolate(knn_dev, model_probs, config.lam)
    return evaluate(probs.argmax(axis=1), dev.labels, dev.class_count)


def train_calibrated(
    config: RunConfig, train: EmbeddingStore, dev: EmbeddingStore
) -> tuple[ClassifierParams, list[dict]]:
    """Optimize the calibrated loss; return the best-dev checkpoint and the log.

    Priors are computed once (leave-one-out over the frozen training store)
    and only under union-all; the other trainable modes reduce to plain
    cross-entropy. The checkpoint with the highest dev accuracy among the
    periodic evaluations wins, earliest step on ties.
    """
    if config.mode == "knn-only":
        raise DataError("mode 'knn-only' has no trainable model")
    if train.n < 2:
        raise DataError("training store must have at least 2 rows")
    if dev.n < 1:
        raise DataError("dev store must be nonempty")
    if train.dim != dev.dim or train.class_count != dev.class_count:
        raise DataError("train and dev stores disagree on D or C")

    if config.mode == "union-all":
        priors = precompute_priors(train, config.k, config.tau, config.metric).priors
    else:
        priors = np.ones(train.n)

    knn_dev = None
    if config.mode in ("union-inf", "union-all"):
        knn_dev = _knn_dists(
            train, dev.vectors.astype(np.float64), config.k, config.tau, config.metric
        )

    params = init_params(train.dim, train.class_count, config.hidden, seed=config.seed)
    optimizer = AdamW(
        base_lr=config.lr,
        warmup_steps=config.effective_warmup,
        total_steps=config.max_steps,
        weight_decay=config.weight_decay,
        epsilon=1e-8,
    )

    vectors = train.vectors.astype(np.float64)
    labels = train.labels
    batches = _batch_stream(train.n, config.batch_size, config.seed)

    best_params = params.copy()
    best_accuracy = -1.0
    log: list[dict] = []
    loss_sum = 0.0
    loss_count = 0

    for step in range(1, config.max_steps + 1):
        grads_acc = None
        loss_acc = 0.0
        for _ in range(config.grad_accum):
            idx = next(batches)
            loss, grads = loss_and_grad(
                params, vectors[idx], labels[idx], priors[idx], config.factor
            )
            loss_acc += loss / config.grad_accum
            if grads_acc is None:
                grads_acc = {k: g / config.grad_accum for k, g in grads.items()}
            else:
                for name, g in grads.items():
                    grads_acc[name] += g / config.grad_accum
        optimizer.step(params, grads_acc)
        loss_sum += loss_acc
        loss_count += 1

        if step % config.eval_every == 0:
            report = _dev_report(config, params, dev, knn_dev)
            log.append(
                {
                    "step": step,
                    "train_loss": loss_sum / loss_count,
                    "dev_accuracy": report.accuracy,
                    "dev_macro_f1": report.macro_f1,
                    "lr": optimizer.lr_at(step - 1),
                }
            )
            loss_sum = 0.0
            loss_count = 0
            if report.accuracy > best_accuracy:
                best_accuracy = report.accuracy
                best_params = params.copy()

    return best_params, log


def _batch_stream(n: int, batch_size: int, seed: int):
    """Yield index batches forever; per-epoch shuffle keyed on (seed, epoch)."""
    epoch = 0
    while True:
        order = np.random.default_rng([seed, epoch]).permutation(n)
        for start in range(0, n, batch_size):
            yield order[start : start + batch_size]
        epoch += 1


def save_training_log(log: list[dict], path) -> None:
    """Persist the training log as JSON-lines, one record per evaluation."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in log:
            handle.write(json.dumps(record) + "\n")


# --- pseudo-labeling ------------------------------------------------------


@dataclass(frozen=True)
class PseudoLabeledStore:
    """A datastore whose labels came from a model, with per-row confidence."""

    store: EmbeddingStore
    confidences: np.ndarray  # (n,) float64 in [1/C, 1]


def pseudo_label(params: ClassifierParams, vectors: np.ndarray) -> PseudoLabeledStore:
    """Label raw vectors with the model's argmax; rows are L2-normalized first.

    The result is usable as a kNN datastore for the zero-shot flow.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise DataError("vectors must be a (n, D) array")
    norms = np.linalg.norm(vectors, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DataError(f"cannot normalize zero-norm vector at row {zero[0]}")
    unit = vectors / norms[:, None]
    _, probs = forward_batch(params, unit)
    labels = probs.argmax(axis=1)
    confidences = probs.max(axis=1)
    store = EmbeddingStore(unit.astype(np.float32), labels, params.class_count)
    return PseudoLabeledStore(store, confidences)


def save_pseudo_labels(labeled: PseudoLabeledStore, path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for i, (label, conf) in enumerate(zip(labeled.store.labels, labeled.confidences)):
            handle.write(f"{i}\t{int(label)}\t{float(conf)!r}\n")


def load_pseudo_labels(path) -> tuple[np.ndarray, np.ndarray]:
    """Read externally produced labels: returns (labels, confidences)."""
    labels, confidences = [], []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            index, label, conf = line.rstrip("\n").split("\t")
            if int(index) != len(labels):
                raise DataError(f"{path}: non-contiguous row index {index}")
            labels.append(int(label))
            confidences.append(float(conf))
    return np.asarray(labels, dtype=np.int64), np.asarray(confidences)


# --- few-shot sampling ----------------------------------------------------


def sample_k_shot(store: EmbeddingStore, shots: int, seed: int) -> EmbeddingStore:
    """Draw exactly ``shots`` rows per class, deterministically from ``seed``."""
    rng = np.random.default_rng(seed)
    picks = []
    for cls in range(store.class_count):
        rows = np.flatnonzero(store.labels == cls)
        if rows.size < shots:
            raise DataError(
                f"class {cls} has {rows.size} rows, cannot draw {shots} shots"
            )
        picks.append(np.sort(rng.choice(rows, size=shots, replace=False)))
    idx = np.concatenate(picks)
    return EmbeddingStore(store.vectors[idx], store.labels[idx], store.class_count)


# --- hyperparameter sweep -------------------------------------------------


@dataclass(frozen=True)
class SweepResult:
    k: int
    tau: float
    lam: float
    effective_k: int
    dev_accuracy: float
    dev_macro_f1: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "tau": self.tau,
            "lambda": self.lam,
            "effective_k": self.effective_k,
            "dev_accuracy": self.dev_accuracy,
            "dev_macro_f1": self.dev_macro_f1,
        }


def sweep(
    config: RunConfig,
    train: EmbeddingStore,
    dev: EmbeddingStore,
    ks=DEFAULT_K_GRID,
    taus=DEFAULT_TAU_GRID,
    lambdas=DEFAULT_LAMBDA_GRID,
) -> list[SweepResult]:
    """Full-grid dev evaluation over (k, tau, lambda) under the configured mode.

    Training runs are shared across grid points whose training is identical:
    under union-all the priors depend on (k, tau); every other trainable mode
    trains once. Results sort by dev accuracy descending, ties by ascending
    (k, tau, lambda).
    """
    if not (len(tuple(ks)) and len(tuple(taus)) and len(tuple(lambdas))):
        raise DataError("sweep grid must be nonempty")

    trained: dict = {}
    knn_cache: dict = {}
    dev_queries = dev.vectors.astype(np.float64)
    model_cache: dict = {}

    def model_probs_for(key, cfg):
        if cfg.mode == "knn-only":
            return None
        if key not in trained:
            trained[key], _ = train_calibrated(cfg, train, dev)
        if key not in model_cache:
            model_cache[key] = forward_batch(trained[key], dev_queries)[1]
        return model_cache[key]

    results = []
    for k in ks:
        for tau in taus:
            cfg_kt = replace(config, k=int(k), tau=float(tau))
            if (k, tau) not in knn_cache and cfg_kt.mode != "model-only":
                knn_cache[(k, tau)] = _knn_dists(
                    train, dev_queries, cfg_kt.k, cfg_kt.tau, cfg_kt.metric
                )
            train_key = (k, tau) if config.mode == "union-all" else "shared"
            for lam in lambdas:
                cfg = replace(cfg_kt, lam=float(lam))
                if cfg.mode == "knn-only":
                    probs = knn_cache[(k, tau)]
                elif cfg.mode == "model-only":
                    probs = model_probs_for(train_key, cfg)
                else:
                    probs = interpolate(
                        knn_cache[(k, tau)], model_probs_for(train_key, cfg), cfg.lam
                    )
                report = evaluate(probs.argmax(axis=1), dev.labels, dev.class_count)
                results.append(
                    SweepResult(
                        k=int(k),
                        tau=float(tau),
                        lam=float(lam),
                        effective_k=min(int(k), train.n),
                        dev_accuracy=report.accuracy,
                        dev_macro_f1=report.macro_f1,
                    )
                )
    return sorted(results, key=lambda r: (-r.dev_accuracy, r.k, r.tau, r.lam))
