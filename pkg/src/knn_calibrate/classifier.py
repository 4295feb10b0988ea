"""Softmax classifier over frozen embeddings: exact gradients, AdamW, schedule."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import ModulatingFactor, factor_value
from .store import DataError, EmbeddingFormatError

FCLS_MAGIC = b"FCLS"
FCLS_VERSION = 1

ARCH_LINEAR = "linear"
ARCH_HIDDEN = "one-hidden-layer"


@dataclass
class ClassifierParams:
    """Weights of the eager learner; linear or one ReLU hidden layer.

    All parameters are float64: training must reproduce bit-identically
    across runs.
    """

    w_out: np.ndarray  # (C, H)
    b_out: np.ndarray  # (C,)
    w_hidden: np.ndarray | None = None  # (H, D)
    b_hidden: np.ndarray | None = None  # (H,)

    def __post_init__(self):
        self.w_out = np.asarray(self.w_out, dtype=np.float64)
        self.b_out = np.asarray(self.b_out, dtype=np.float64)
        if (self.w_hidden is None) != (self.b_hidden is None):
            raise DataError("hidden weights and biases must be given together")
        if self.w_hidden is not None:
            self.w_hidden = np.asarray(self.w_hidden, dtype=np.float64)
            self.b_hidden = np.asarray(self.b_hidden, dtype=np.float64)
        for arr in self.arrays().values():
            if not np.isfinite(arr).all():
                raise DataError("non-finite parameter value")

    @property
    def architecture(self) -> str:
        return ARCH_LINEAR if self.w_hidden is None else ARCH_HIDDEN

    @property
    def class_count(self) -> int:
        return self.w_out.shape[0]

    @property
    def dim(self) -> int:
        return self.w_out.shape[1] if self.w_hidden is None else self.w_hidden.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        if self.w_hidden is not None:
            out["w_hidden"] = self.w_hidden
            out["b_hidden"] = self.b_hidden
        out["w_out"] = self.w_out
        out["b_out"] = self.b_out
        return out

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(
            self.w_out.copy(),
            self.b_out.copy(),
            None if self.w_hidden is None else self.w_hidden.copy(),
            None if self.b_hidden is None else self.b_hidden.copy(),
        )


def init_params(
    dim: int, class_count: int, hidden: int | None = None, seed: int = 42
) -> ClassifierParams:
    """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]; zero biases."""
    rng = np.random.default_rng(seed)

    def uniform(rows, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(rows, fan_in))

    if hidden is None:
        return ClassifierParams(uniform(class_count, dim), np.zeros(class_count))
    return ClassifierParams(
        uniform(class_count, hidden),
        np.zeros(class_count),
        uniform(hidden, dim),
        np.zeros(hidden),
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _features(params: ClassifierParams, x: np.ndarray) -> np.ndarray:
    if params.w_hidden is None:
        return x
    return np.maximum(x @ params.w_hidden.T + params.b_hidden, 0.0)


def forward_batch(params: ClassifierParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Logits and softmax distributions for a (B, D) batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dim:
        raise DataError(f"batch shape {x.shape} does not match D={params.dim}")
    logits = _features(params, x) @ params.w_out.T + params.b_out
    return logits, _softmax(logits)


def forward(params: ClassifierParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Logits and stable-softmax distribution for one D-vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("x must be a 1-D vector")
    if not np.isfinite(x).all():
        raise DataError("x contains non-finite values")
    logits, dist = forward_batch(params, x[None, :])
    return logits[0], dist[0]


def loss_and_grad(
    params: ClassifierParams,
    x: np.ndarray,
    y: np.ndarray,
    priors: np.ndarray,
    factor: ModulatingFactor,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean calibrated cross-entropy over a batch and its exact gradient.

    Per example: (1 + f(prior)) * (-ln dist[y]). The factor is constant in
    the parameters, so each example's gradient is the plain CE gradient
    scaled by its weight.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("batch must be a nonempty (B, D) array")
    if ((y < 0) | (y >= params.class_count)).any():
        raise DataError("label out of range")
    batch = x.shape[0]
    weights = 1.0 + np.asarray(factor_value(factor, priors), dtype=np.float64)

    hidden = _features(params, x)
    logits = hidden @ params.w_out.T + params.b_out
    # log-softmax computed directly for per-example CE
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    ce = log_norm - shifted[np.arange(batch), y]
    bad = np.flatnonzero(~np.isfinite(ce))
    if bad.size:
        raise DataError(f"non-finite loss for example {bad[0]}")
    loss = float(np.mean(weights * ce))

    probs = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
    dlogits = probs
    dlogits[np.arange(batch), y] -= 1.0
    dlogits *= weights[:, None] / batch

    grads = {
        "w_out": dlogits.T @ hidden,
        "b_out": dlogits.sum(axis=0),
    }
    if params.w_hidden is not None:
        dhidden = (dlogits @ params.w_out) * (hidden > 0.0)
        grads["w_hidden"] = dhidden.T @ x
        grads["b_hidden"] = dhidden.sum(axis=0)
    return loss, grads


def warmup_decay_lr(
    step: int, base_lr: float, warmup_steps: int, total_steps: int
) -> float:
    """Linear warmup to ``base_lr`` at ``warmup_steps``, then linear decay to 0."""
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    if total_steps <= warmup_steps:
        return base_lr
    return max(base_lr * (total_steps - step) / (total_steps - warmup_steps), 0.0)


@dataclass
class AdamW:
    """Adaptive-moment optimizer with decoupled weight decay and warmup/decay."""

    base_lr: float
    warmup_steps: int
    total_steps: int
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    _m: dict = field(default_factory=dict)
    _v: dict = field(default_factory=dict)

    def lr_at(self, step: int) -> float:
        return warmup_decay_lr(step, self.base_lr, self.warmup_steps, self.total_steps)

    def step(self, params: ClassifierParams, grads: dict[str, np.ndarray]) -> None:
        """Update parameters in place; increments the step counter."""
        if self.step_count >= self.total_steps:
            raise DataError("step budget exhausted")
        lr = self.lr_at(self.step_count)
        self.step_count += 1
        t = self.step_count
        for name, value in params.arrays().items():
            grad = grads[name]
            if grad.shape != value.shape:
                raise DataError(f"gradient shape mismatch for {name}")
            m = self._m.setdefault(name, np.zeros_like(value))
            v = self._v.setdefault(name, np.zeros_like(value))
            m += (1.0 - self.beta1) * (grad - m)
            v += (1.0 - self.beta2) * (grad * grad - v)
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            value -= lr * (m_hat / (np.sqrt(v_hat) + self.epsilon) + self.weight_decay * value)


# --- parameter persistence ------------------------------------------------
#
# magic "FCLS" | version u32 | arch u8 (0 linear, 1 hidden) | D u32 | H u32 |
# C u32 | f64 little-endian arrays in order w_hidden, b_hidden, w_out, b_out
# (hidden arrays present only for arch 1).

_PARAM_HEADER = struct.Struct("<4sIBIII")


def save_params(params: ClassifierParams, path) -> None:
    hidden = params.w_out.shape[1]
    arch = 0 if params.w_hidden is None else 1
    with Path(path).open("wb") as handle:
        handle.write(
            _PARAM_HEADER.pack(
                FCLS_MAGIC, FCLS_VERSION, arch, params.dim, hidden, params.class_count
            )
        )
        for arr in params.arrays().values():
            handle.write(arr.astype("<f8").tobytes())


def load_params(path) -> ClassifierParams:
    path = Path(path)
    with path.open("rb") as handle:
        header = handle.read(_PARAM_HEADER.size)
        if len(header) != _PARAM_HEADER.size:
            raise EmbeddingFormatError(f"{path}: truncated header")
        magic, version, arch, dim, hidden, classes = _PARAM_HEADER.unpack(header)
        if magic != FCLS_MAGIC:
            raise EmbeddingFormatError(f"{path}: bad magic bytes {magic!r}")
        if version != FCLS_VERSION:
            raise EmbeddingFormatError(f"{path}: unsupported version {version}")

        def read_array(shape):
            count = int(np.prod(shape))
            data = handle.read(8 * count)
            if len(data) != 8 * count:
                raise EmbeddingFormatError(
                    f"{path}: truncated payload: expected {8 * count} bytes, got {len(data)}"
                )
            return np.frombuffer(data, dtype="<f8").reshape(shape).copy()

        w_hidden = b_hidden = None
        if arch == 1:
            w_hidden = read_array((hidden, dim))
            b_hidden = read_array((hidden,))
        w_out = read_array((classes, hidden))
        b_out = read_array((classes,))
    return ClassifierParams(w_out, b_out, w_hidden, b_hidden)
