"""Shared fixtures and independent oracles for the test suite.

The finite-difference and loop-based reference implementations here are
deliberately naive and separate from the library code: they are the
oracles the vectorized paths are checked against.
"""

from __future__ import annotations

import gzip
import os
import struct

import numpy as np
import pytest

from biolearn._backprop import cross_entropy
from biolearn.data import Dataset
from biolearn.network import Architecture, forward, init_model
from biolearn.numerics import Rng


# ---------------------------------------------------------------------------
# dataset builders


def write_idx_pair(directory, images: np.ndarray, labels: np.ndarray,
                   prefix: str = "train", gzipped: bool = False):
    """Write an MNIST-style IDX image/label file pair, returning the paths."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    img_name = f"{prefix}-images-idx3-ubyte"
    lab_name = f"{prefix}-labels-idx1-ubyte"
    img_bytes = struct.pack(">IIII", 0x00000803, n, rows, cols) + images.tobytes()
    lab_bytes = struct.pack(">II", 0x00000801, n) + labels.tobytes()
    paths = []
    for name, blob in ((img_name, img_bytes), (lab_name, lab_bytes)):
        path = os.path.join(directory, name + (".gz" if gzipped else ""))
        data = gzip.compress(blob) if gzipped else blob
        with open(path, "wb") as f:
            f.write(data)
        paths.append(path)
    return paths


def prototype_dataset(seed: int, n_per_class: int = 120, d: int = 40,
                      k: int = 5, noise: float = 0.15) -> tuple[Dataset, Dataset]:
    """Separable synthetic classes: sparse prototypes plus clipped noise."""
    gen = Rng(seed).generator
    protos = gen.uniform(0, 1, size=(k, d)) * (gen.uniform(0, 1, (k, d)) > 0.6)
    xs, ys = [], []
    for c in range(k):
        xs.append(np.clip(protos[c] + gen.normal(0, noise, size=(n_per_class, d)), 0, 1))
        ys.append(np.full(n_per_class, c))
    x = np.vstack(xs)
    y = np.concatenate(ys)
    perm = gen.permutation(len(x))
    x, y = x[perm], y[perm]
    split = (len(x) * 4) // 5
    return Dataset(x[:split], y[:split], k), Dataset(x[split:], y[split:], k)


def mnist_like_images(seed: int, n: int, rows: int = 28, cols: int = 28):
    gen = Rng(seed).generator
    images = gen.integers(0, 256, size=(n, rows, cols), dtype=np.uint8)
    labels = gen.integers(0, 10, size=n, dtype=np.uint8)
    return images, labels


@pytest.fixture
def toy_splits():
    return prototype_dataset(seed=11)


@pytest.fixture
def small_model():
    rng = Rng(99)
    arch = Architecture(6, (4,), 3, nonneg=False)
    return init_model(arch, rng)


def make_net(nonneg: bool, seed: int, dims=(6, (4,), 3)):
    """6-4-3 net with seeded weights; nonneg nets get warmed-up norm stats."""
    rng = Rng(seed)
    arch = Architecture(dims[0], dims[1], dims[2], nonneg=nonneg)
    model = init_model(arch, rng)
    if nonneg:
        warm = rng.uniform(0.0, 1.0, 5 * dims[0]).reshape(5, dims[0])
        forward(model, warm, mode="train")
    return model, rng


# ---------------------------------------------------------------------------
# finite-difference oracles (naive loops over every coordinate)


def eval_loss(model, X, labels) -> float:
    return cross_entropy(forward(model, X, "eval").logits, labels)


def fd_param_grads(model, X, labels, h: float = 1e-6):
    grads = []
    for w in model.weights:
        g = np.zeros_like(w)
        for i in range(w.shape[0]):
            for j in range(w.shape[1]):
                orig = w[i, j]
                w[i, j] = orig + h
                up = eval_loss(model, X, labels)
                w[i, j] = orig - h
                down = eval_loss(model, X, labels)
                w[i, j] = orig
                g[i, j] = (up - down) / (2 * h)
        grads.append(g)
    gb = np.zeros_like(model.bias)
    for i in range(len(model.bias)):
        orig = model.bias[i]
        model.bias[i] = orig + h
        up = eval_loss(model, X, labels)
        model.bias[i] = orig - h
        down = eval_loss(model, X, labels)
        model.bias[i] = orig
        gb[i] = (up - down) / (2 * h)
    return grads, gb


def fd_input_grads(model, X, labels, h: float = 1e-6):
    g = np.zeros_like(X)
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            orig = X[i, j]
            X[i, j] = orig + h
            up = eval_loss(model, X, labels)
            X[i, j] = orig - h
            down = eval_loss(model, X, labels)
            X[i, j] = orig
            g[i, j] = (up - down) / (2 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(b))), 1e-8)
    return float(np.max(np.abs(a - b))) / scale


# ---------------------------------------------------------------------------
# loop-based learning-rule oracles


def hebbian_hidden_reference(x, w, eta):
    """Per-sample scalar loops: eta * z_j * (x_i - sum_k z_k w_ik), batch mean."""
    n, d = x.shape
    m = w.shape[1]
    total = np.zeros_like(w)
    for t in range(n):
        z = np.array([sum(x[t, u] * w[u, j] for u in range(d)) for j in range(m)])
        for i in range(d):
            for j in range(m):
                total[i, j] += eta * z[j] * (x[t, i] - sum(z[k] * w[i, k] for k in range(m)))
    return total / n


def hebbian_output_reference(h, w, eta):
    """Same, with the competition sum excluding each unit's own weight."""
    n, d = h.shape
    m = w.shape[1]
    total = np.zeros_like(w)
    for t in range(n):
        z = np.array([sum(h[t, u] * w[u, j] for u in range(d)) for j in range(m)])
        for i in range(d):
            for j in range(m):
                excl = sum(z[k] * w[i, k] for k in range(m) if k != j)
                total[i, j] += eta * z[j] * (h[t, i] - excl)
    return total / n
