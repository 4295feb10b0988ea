"""kNN-augmented classification over precomputed embeddings.

Temperature-scaled nearest-neighbor class distributions, neighbor-prior
calibrated training of a shallow softmax classifier, and inference-time
interpolation of the two predictors.
"""

from .calibration import (
    ModulatingFactor,
    PriorTable,
    calibrated_loss,
    factor_value,
    load_priors,
    precompute_priors,
    save_priors,
)
from .classifier import (
    AdamW,
    ClassifierParams,
    forward,
    forward_batch,
    init_params,
    load_params,
    loss_and_grad,
    save_params,
    warmup_decay_lr,
)
from .data import gaussian_class_splits
from .knn import NeighborSet, aggregate, distance, knn_predict, retrieve
from .metrics import EvalReport, evaluate
from .pipeline import (
    PseudoLabeledStore,
    RunConfig,
    SweepResult,
    interpolate,
    load_pseudo_labels,
    predict,
    predict_batch,
    pseudo_label,
    sample_k_shot,
    save_pseudo_labels,
    save_training_log,
    sweep,
    train_calibrated,
)
from .store import (
    DataError,
    EmbeddingFormatError,
    EmbeddingStore,
    RawEmbeddings,
    build_store,
    load_embeddings,
    load_store,
    save_store,
)

__version__ = "0.1.0"
