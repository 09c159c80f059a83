"""Dataset ingestion and batching for MNIST (IDX) and CIFAR-10 (binary).

Loaded inputs live in [0, 1]; labels are int64 in 0..K-1. Batch plans are
derived from an Rng, so an identical seed reproduces the identical batch
sequence.
"""

from __future__ import annotations

import gzip
import hashlib
import os
import shutil
import struct
import tarfile
import tempfile
import urllib.request
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ParameterError
from .numerics import Rng

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 * 32 * 32 channel-major pixels

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "train": tuple(f"data_batch_{i}.bin" for i in range(1, 6)),
    "test": ("test_batch.bin",),
}

DATA_DIR_ENV = "BIOLEARN_DATA_DIR"


@dataclass
class Dataset:
    """Input matrix in [0,1] plus integer class labels."""

    inputs: np.ndarray  # (n_samples, n_features) float64
    labels: np.ndarray  # (n_samples,) int64
    num_classes: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise FormatError("inputs must be a 2-D sample-by-feature array")
        if self.labels.shape != (self.inputs.shape[0],):
            raise FormatError(
                f"labels: length {self.labels.shape} does not match "
                f"{self.inputs.shape[0]} samples"
            )
        if self.inputs.size and (self.inputs.min() < 0.0 or self.inputs.max() > 1.0):
            raise FormatError("inputs: entries outside [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise FormatError(
                f"labels: values must lie in 0..{self.num_classes - 1}"
            )

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    def take(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.num_classes)


@dataclass
class BatchPlan:
    """How to slice a dataset into mini-batches for one epoch."""

    batch_size: int
    balanced: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")


def _read_bytes(path) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    # transparently accept gzip-compressed files (as distributed)
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx_images(raw: bytes, path) -> np.ndarray:
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated IDX header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(
            f"{path}: magic 0x{magic:08x}, expected image magic 0x{IDX_IMAGE_MAGIC:08x}"
        )
    need = count * rows * cols
    body = raw[16:]
    if len(body) != need:
        raise FormatError(
            f"{path}: pixel data has {len(body)} bytes, header promises {need}"
        )
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(count, rows * cols)
    return pixels


def _parse_idx_labels(raw: bytes, path) -> np.ndarray:
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated IDX header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != IDX_LABEL_MAGIC:
        raise FormatError(
            f"{path}: magic 0x{magic:08x}, expected label magic 0x{IDX_LABEL_MAGIC:08x}"
        )
    body = raw[8:]
    if len(body) != count:
        raise FormatError(
            f"{path}: label data has {len(body)} bytes, header promises {count}"
        )
    return np.frombuffer(body, dtype=np.uint8)


def load_mnist(images_path, labels_path) -> Dataset:
    """Load an MNIST-style IDX image/label pair (raw or gzipped).

    Pixels are divided by 255 into [0,1] and images flattened row-major.
    """
    pixels = _parse_idx_images(_read_bytes(images_path), images_path)
    labels = _parse_idx_labels(_read_bytes(labels_path), labels_path)
    if pixels.shape[0] != labels.shape[0]:
        raise FormatError(
            f"count mismatch: {images_path} has {pixels.shape[0]} images but "
            f"{labels_path} has {labels.shape[0]} labels"
        )
    if labels.size and labels.max() > 9:
        raise FormatError(f"{labels_path}: label {labels.max()} outside 0..9")
    return Dataset(pixels.astype(np.float64) / 255.0, labels.astype(np.int64), 10)


def load_cifar10(batch_paths) -> Dataset:
    """Load CIFAR-10 binary batches (3073-byte records, channel-major pixels).

    The stored channel-major order (R-plane, G-plane, B-plane) is preserved
    in the flattened 3072 features.
    """
    paths = list(batch_paths)
    if not paths:
        raise ParameterError("load_cifar10: empty batch file list")
    chunks: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    for path in paths:
        raw = _read_bytes(path)
        if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
            raise FormatError(
                f"{path}: length {len(raw)} is not a positive multiple of {CIFAR_RECORD_BYTES}"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels.append(records[:, 0])
        chunks.append(records[:, 1:])
    pixels = np.concatenate(chunks, axis=0)
    lab = np.concatenate(labels, axis=0)
    if lab.max() > 9:
        raise FormatError(f"label {lab.max()} outside 0..9")
    return Dataset(pixels.astype(np.float64) / 255.0, lab.astype(np.int64), 10)


def _balanced_batch_indices(ds: Dataset, batch_size: int, rng: Rng) -> list[np.ndarray]:
    k = ds.num_classes
    if batch_size % k != 0:
        raise ParameterError(
            f"balanced batches need batch_size divisible by {k}, got {batch_size}"
        )
    per_class = batch_size // k
    pools = []
    for c in range(k):
        idx = np.flatnonzero(ds.labels == c)
        pools.append(idx[rng.permutation(len(idx))])
    n_batches = min(len(p) // per_class for p in pools)
    batches = []
    for b in range(n_batches):
        take = np.concatenate(
            [p[b * per_class:(b + 1) * per_class] for p in pools]
        )
        batches.append(take[rng.permutation(len(take))])
    return batches


def make_batches(ds: Dataset, plan: BatchPlan, rng: Rng):
    """Yield one epoch of (inputs, labels) batches.

    A fresh permutation per call; incomplete trailing batches are dropped.
    Balanced mode stratifies so each batch holds batch_size/K samples per
    class, then shuffles within the batch. The index plan is fixed eagerly,
    so interleaved Rng use elsewhere cannot change the batch sequence.
    """
    if plan.balanced:
        index_sets = _balanced_batch_indices(ds, plan.batch_size, rng)
    else:
        perm = rng.permutation(ds.n_samples)
        n_batches = ds.n_samples // plan.batch_size
        index_sets = [
            perm[b * plan.batch_size:(b + 1) * plan.batch_size]
            for b in range(n_batches)
        ]

    def gen():
        for idx in index_sets:
            yield ds.inputs[idx], ds.labels[idx]

    return gen()


def few_shot_subset(ds: Dataset, shots: int, rng: Rng) -> Dataset:
    """Exactly ``shots`` samples per class, without replacement, shuffled."""
    if shots < 1:
        raise ParameterError("shots must be >= 1")
    picks = []
    for c in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == c)
        if len(idx) < shots:
            raise ParameterError(
                f"class {c} has only {len(idx)} samples, need {shots}"
            )
        picks.append(rng.choice_without_replacement(idx, shots))
    chosen = np.concatenate(picks)
    chosen = chosen[rng.permutation(len(chosen))]
    return ds.take(chosen)


# ---------------------------------------------------------------------------
# dataset file resolution and fetching


def resolve_data_dir(cli_value=None) -> str:
    """CLI flag wins; otherwise the BIOLEARN_DATA_DIR environment variable."""
    if cli_value:
        return str(cli_value)
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return env
    raise ParameterError(
        f"no data directory: pass --data-dir or set {DATA_DIR_ENV}"
    )


def _find_file(data_dir: str, name: str) -> str:
    for candidate in (name, name + ".gz"):
        path = os.path.join(data_dir, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(
        f"dataset file {name}[.gz] not found under {data_dir}"
    )


def load_named_dataset(dataset: str, data_dir: str, split: str) -> Dataset:
    """Load 'mnist' or 'cifar10' train/test split from a data directory."""
    if dataset == "mnist":
        images, labels = MNIST_FILES[split]
        return load_mnist(_find_file(data_dir, images), _find_file(data_dir, labels))
    if dataset == "cifar10":
        return load_cifar10([_find_file(data_dir, n) for n in CIFAR_FILES[split]])
    raise ParameterError(f"unknown dataset {dataset!r} (choose mnist or cifar10)")


def dataset_checksums(dataset: str, data_dir: str) -> dict[str, str]:
    """SHA-256 of every on-disk file backing the named dataset."""
    names = MNIST_FILES if dataset == "mnist" else CIFAR_FILES
    sums = {}
    for split_files in names.values():
        for name in split_files:
            path = _find_file(data_dir, name)
            with open(path, "rb") as f:
                sums[os.path.basename(path)] = hashlib.sha256(f.read()).hexdigest()
    return sums


def fetch_file(url: str, dest_dir: str, sha256: str, unpack: str = "none") -> list[str]:
    """Download ``url`` into ``dest_dir``, verify its SHA-256, then unpack.

    ``unpack``: 'none' keeps the file as named by the URL; 'gz' additionally
    writes the decompressed copy; 'tar' extracts all members flat into
    dest_dir. Already-present files with a matching digest are not
    re-downloaded. Returns the list of paths written or verified.
    """
    if not (isinstance(sha256, str) and len(sha256) == 64
            and all(c in "0123456789abcdef" for c in sha256.lower())):
        raise ParameterError(f"sha256 for {url} must be 64 hex chars, got {sha256!r}")
    sha256 = sha256.lower()
    os.makedirs(dest_dir, exist_ok=True)
    name = url.rstrip("/").rsplit("/", 1)[-1]
    target = os.path.join(dest_dir, name)

    def digest(path):
        h = hashlib.sha256()
        with open(path, "rb") as f:
            for block in iter(lambda: f.read(1 << 20), b""):
                h.update(block)
        return h.hexdigest()

    if not (os.path.exists(target) and digest(target) == sha256):
        fd, tmp = tempfile.mkstemp(dir=dest_dir, prefix=name + ".")
        try:
            with os.fdopen(fd, "wb") as out, urllib.request.urlopen(url) as resp:
                shutil.copyfileobj(resp, out)
            got = digest(tmp)
            if got != sha256:
                raise FormatError(
                    f"{url}: SHA-256 mismatch (expected {sha256}, got {got})"
                )
            os.replace(tmp, target)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
    written = [target]

    if unpack == "gz":
        out_path = os.path.join(dest_dir, name[:-3] if name.endswith(".gz") else name + ".raw")
        with gzip.open(target, "rb") as src, open(out_path, "wb") as dst:
            shutil.copyfileobj(src, dst)
        written.append(out_path)
    elif unpack == "tar":
        with tarfile.open(target) as tf:
            for member in tf.getmembers():
                if not member.isfile():
                    continue
                base = os.path.basename(member.name)
                with tf.extractfile(member) as src, open(os.path.join(dest_dir, base), "wb") as dst:
                    shutil.copyfileobj(src, dst)
                written.append(os.path.join(dest_dir, base))
    elif unpack != "none":
        raise ParameterError(f"unknown unpack mode {unpack!r}")
    return written
