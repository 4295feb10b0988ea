"""Embedding datastore: ingestion, validation, L2-normalization, persistence."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FEMB_MAGIC = b"FEMB"
FEMB_VERSION = 1
TSV_HEADER_TAG = "#femb"

UNLABELED = -1


class DataError(ValueError):
    """Invalid or malformed input data (bad file, bad value, bad shape)."""


class EmbeddingFormatError(DataError):
    """An embedding file does not conform to its declared format."""


def _validate_vectors(vectors: np.ndarray) -> None:
    if vectors.ndim != 2:
        raise DataError(f"vectors must be 2-D, got shape {vectors.shape}")
    n, dim = vectors.shape
    if n < 1 or dim < 1:
        raise DataError(f"need n >= 1 and D >= 1, got n={n}, D={dim}")
    bad = np.flatnonzero(~np.isfinite(vectors).all(axis=1))
    if bad.size:
        raise DataError(f"non-finite value in vector at row {bad[0]}")


@dataclass(frozen=True)
class RawEmbeddings:
    """Validated but unnormalized embedding rows with integer labels.

    Labels may be UNLABELED (-1) only when constructed with
    ``allow_unlabeled=True``; such rows are placeholders for pseudo-labeling.
    """

    vectors: np.ndarray  # (n, D) float32
    labels: np.ndarray  # (n,) int64
    class_count: int
    ids: tuple[str, ...] | None = None
    allow_unlabeled: bool = False

    def __post_init__(self):
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        _validate_vectors(vectors)
        if self.class_count < 2:
            raise DataError(f"class_count must be >= 2, got {self.class_count}")
        if labels.shape != (vectors.shape[0],):
            raise DataError(
                f"labels shape {labels.shape} does not match n={vectors.shape[0]}"
            )
        floor = UNLABELED if self.allow_unlabeled else 0
        bad = np.flatnonzero((labels < floor) | (labels >= self.class_count))
        if bad.size:
            raise DataError(
                f"label {labels[bad[0]]} out of range [0, {self.class_count}) "
                f"at row {bad[0]}"
            )
        if self.ids is not None and len(self.ids) != vectors.shape[0]:
            raise DataError("ids length does not match row count")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class EmbeddingStore:
    """Immutable datastore of L2-normalized rows; safe for concurrent reads."""

    vectors: np.ndarray  # (n, D) float32, unit rows
    labels: np.ndarray  # (n,) int64
    class_count: int
    normalized: bool = field(default=True, init=False)

    def __post_init__(self):
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        _validate_vectors(vectors)
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-5)
        if bad.size:
            raise DataError(
                f"row {bad[0]} is not unit-norm (|v| = {norms[bad[0]]:.6g})"
            )
        if labels.shape != (vectors.shape[0],):
            raise DataError("labels shape does not match row count")
        if ((labels < 0) | (labels >= self.class_count)).any():
            raise DataError("label out of range")
        vectors.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def build_store(raw: RawEmbeddings) -> EmbeddingStore:
    """Scale each row to unit L2 norm, preserving labels and row order.

    Zero-norm rows are a hard error: dropping them silently would
    desynchronize labels from vectors.
    """
    if (raw.labels == UNLABELED).any():
        raise DataError("cannot build a store from unlabeled rows")
    norms = np.linalg.norm(raw.vectors.astype(np.float64), axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DataError(f"cannot normalize zero-norm vector at row {zero[0]}")
    unit = (raw.vectors.astype(np.float64) / norms[:, None]).astype(np.float32)
    return EmbeddingStore(unit, raw.labels, raw.class_count)


# --- TSV format -----------------------------------------------------------
#
# First line:  #femb<TAB>n=<n><TAB>d=<D><TAB>c=<C>
# Data lines:  <label><TAB><f1><TAB>...<TAB><fD>


def _parse_tsv_header(line: str) -> tuple[int, int, int]:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 4 or parts[0] != TSV_HEADER_TAG:
        raise EmbeddingFormatError(f"malformed header line: {line.rstrip()!r}")
    values = {}
    for key, part in zip(("n", "d", "c"), parts[1:]):
        name, _, value = part.partition("=")
        if name != key:
            raise EmbeddingFormatError(f"malformed header field {part!r}")
        try:
            values[key] = int(value)
        except ValueError:
            raise EmbeddingFormatError(f"malformed header field {part!r}") from None
    return values["n"], values["d"], values["c"]


def load_embeddings_tsv(path, allow_unlabeled: bool = False) -> RawEmbeddings:
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        header = handle.readline()
        if not header:
            raise EmbeddingFormatError(f"{path}: empty file")
        n, dim, classes = _parse_tsv_header(header)
        vectors = np.empty((n, dim), dtype=np.float32)
        labels = np.empty(n, dtype=np.int64)
        for i in range(n):
            line = handle.readline()
            if not line:
                raise EmbeddingFormatError(
                    f"{path}: expected {n} data rows, file ends at row {i}"
                )
            fields = line.rstrip("\n").split("\t")
            if len(fields) != dim + 1:
                raise EmbeddingFormatError(
                    f"{path}: row {i} has {len(fields) - 1} values, header says d={dim}"
                )
            try:
                labels[i] = int(fields[0])
                vectors[i] = [float(f) for f in fields[1:]]
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}: row {i}: {exc}") from None
    try:
        return RawEmbeddings(vectors, labels, classes, allow_unlabeled=allow_unlabeled)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def save_embeddings_tsv(raw: RawEmbeddings, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        handle.write(
            f"{TSV_HEADER_TAG}\tn={raw.n}\td={raw.dim}\tc={raw.class_count}\n"
        )
        for label, row in zip(raw.labels, raw.vectors):
            values = "\t".join(repr(float(v)) for v in row)
            handle.write(f"{label}\t{values}\n")


# --- binary format (.femb) ------------------------------------------------
#
# magic "FEMB" | version u32 | n u32 | D u32 | C u32 | n x u32 labels |
# n*D f32 row-major vectors; all integers and floats little-endian.

_BIN_HEADER = struct.Struct("<4sIIII")


def _read_exact(handle, count: int, path, what: str) -> bytes:
    data = handle.read(count)
    if len(data) != count:
        raise EmbeddingFormatError(
            f"{path}: truncated {what}: expected {count} bytes, got {len(data)}"
        )
    return data


def load_embeddings_binary(path) -> RawEmbeddings:
    path = Path(path)
    with path.open("rb") as handle:
        header = _read_exact(handle, _BIN_HEADER.size, path, "header")
        magic, version, n, dim, classes = _BIN_HEADER.unpack(header)
        if magic != FEMB_MAGIC:
            raise EmbeddingFormatError(f"{path}: bad magic bytes {magic!r}")
        if version != FEMB_VERSION:
            raise EmbeddingFormatError(f"{path}: unsupported version {version}")
        labels = np.frombuffer(
            _read_exact(handle, 4 * n, path, "labels"), dtype="<u4"
        ).astype(np.int64)
        vectors = np.frombuffer(
            _read_exact(handle, 4 * n * dim, path, "vectors"), dtype="<f4"
        ).reshape(n, dim)
    try:
        return RawEmbeddings(vectors, labels, classes)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def save_embeddings_binary(raw: RawEmbeddings, path) -> None:
    path = Path(path)
    with path.open("wb") as handle:
        handle.write(
            _BIN_HEADER.pack(FEMB_MAGIC, FEMB_VERSION, raw.n, raw.dim, raw.class_count)
        )
        handle.write(raw.labels.astype("<u4").tobytes())
        handle.write(raw.vectors.astype("<f4").tobytes())


def load_embeddings(path, format: str = "tsv", allow_unlabeled: bool = False) -> RawEmbeddings:
    """Load embeddings from ``path`` in the named format (``tsv`` or ``binary``)."""
    if format == "tsv":
        return load_embeddings_tsv(path, allow_unlabeled=allow_unlabeled)
    if format == "binary":
        return load_embeddings_binary(path)
    raise DataError(f"unknown format {format!r} (expected 'tsv' or 'binary')")


def save_store(store: EmbeddingStore, path) -> None:
    """Persist a normalized store to the binary format, bit-exactly."""
    raw = RawEmbeddings(store.vectors, store.labels, store.class_count)
    save_embeddings_binary(raw, path)


def load_store(path) -> EmbeddingStore:
    """Load a store written by :func:`save_store` without re-normalizing."""
    raw = load_embeddings_binary(path)
    return EmbeddingStore(raw.vectors, raw.labels, raw.class_count)
