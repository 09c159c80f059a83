"""Model representation, forward pass, prediction, and model-file IO.

Two forward graphs exist, selected by ``Architecture.nonneg``:

* nonneg: per hidden layer, the linear response is magnitude-preserving
  z-score normalized (scalar batch statistics of the absolute values),
  passed through ReLU, then rescaled into [0,1] by the per-layer batch max.
  Running statistics (exponential moving average) replace batch statistics
  at eval time.
* standard: plain ReLU, no normalization.

Hidden layers carry no bias; the classification layer has a bias vector.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import FormatError, ParameterError, ShapeError
from .numerics import Rng, as_matrix

#: Floor for the absolute-value standard deviation (constant-input guard).
EPS_SIGMA = 1e-8
#: Decay of the running-statistics exponential moving average.
EMA_DECAY = 0.99

MODEL_MAGIC = b"BIOMLP01"
MODEL_VERSION = 1
FLAG_NONNEG = 1


@dataclass
class Architecture:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    nonneg: bool = False
    beta_norm: float = 1.0
    rescale_eps: float = 1e-8

    def __post_init__(self):
        self.hidden_dims = tuple(int(d) for d in self.hidden_dims)
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(d < 1 for d in dims):
            raise ParameterError(f"all layer dims must be >= 1, got {dims}")
        if self.beta_norm <= 0:
            raise ParameterError("beta_norm must be > 0")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(in_dim, out_dim) per weight matrix, classification layer last."""
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_hidden(self) -> int:
        return len(self.hidden_dims)


@dataclass
class NormStats:
    """Running normalization statistics for one hidden layer.

    The first training batch seeds the values; later batches fold in via
    exponential moving average.
    """

    mean_abs: float = 0.0
    std_abs: float = 0.0
    max_act: float = 0.0
    norm_updates: int = 0
    max_updates: int = 0
    guard_events: int = 0  # batches whose std fell below EPS_SIGMA

    @property
    def initialized(self) -> bool:
        return self.norm_updates > 0

    def update_norm(self, mean_abs: float, std_abs: float):
        if self.norm_updates == 0:
            self.mean_abs, self.std_abs = mean_abs, std_abs
        else:
            d = EMA_DECAY
            self.mean_abs = d * self.mean_abs + (1 - d) * mean_abs
            self.std_abs = d * self.std_abs + (1 - d) * std_abs
        self.norm_updates += 1

    def update_max(self, max_act: float):
        if self.max_updates == 0:
            self.max_act = max_act
        else:
            self.max_act = EMA_DECAY * self.max_act + (1 - EMA_DECAY) * max_act
        self.max_updates += 1

    def copy(self) -> "NormStats":
        return NormStats(self.mean_abs, self.std_abs, self.max_act,
                         self.norm_updates, self.max_updates, self.guard_events)


@dataclass
class MlpModel:
    weights: list[np.ndarray]  # layer l: in_dim(l) x out_dim(l)
    bias: np.ndarray           # classification layer only, length K
    norm_stats: list[NormStats]
    arch: Architecture

    def copy(self) -> "MlpModel":
        return MlpModel(
            [w.copy() for w in self.weights],
            self.bias.copy(),
            [s.copy() for s in self.norm_stats],
            self.arch,
        )

    @property
    def output_weights(self) -> np.ndarray:
        return self.weights[-1]


@dataclass
class ForwardTrace:
    """Per-layer signals saved by the forward pass.

    For standard-mode hidden layers the ``normalized`` entries are None and
    the per-layer scalars are unused. ``clip_active`` records whether the
    eval-time clip at 1 was part of the computation (exact gradients need
    to differentiate the traced function, nothing else).
    """

    inputs: np.ndarray
    pre_activations: list[np.ndarray]   # u = a_prev @ W, per hidden layer
    normalized: list                    # v, per hidden layer (nonneg only)
    relu_out: list[np.ndarray]          # h = relu(v) or relu(u)
    activations: list[np.ndarray]       # a, the layer outputs
    rescale_denoms: list[float]
    sigmas: list[float]
    logits: np.ndarray                  # z, batch x K
    probs: np.ndarray                   # softmax(z)
    mode: str = "eval"
    clip_active: bool = False

    @property
    def last_hidden(self) -> np.ndarray:
        """Input to the classification layer."""
        return self.activations[-1] if self.activations else self.inputs

    def layer_input(self, layer: int) -> np.ndarray:
        return self.inputs if layer == 0 else self.activations[layer - 1]


def init_model(arch: Architecture, rng: Rng) -> MlpModel:
    """Fresh model: U[0.01,0.1) weights (nonneg) or N(0,0.01) (standard)."""
    weights = []
    for n_in, n_out in arch.layer_dims:
        n = n_in * n_out
        if arch.nonneg:
            w = rng.uniform(0.01, 0.1, n)
        else:
            w = rng.normal(0.0, 0.01, n)
        weights.append(w.reshape(n_in, n_out))
    bias = np.zeros(arch.output_dim)
    stats = [NormStats() for _ in arch.hidden_dims]
    return MlpModel(weights, bias, stats, arch)


def _normalize(y: np.ndarray, beta_norm: float, mode: str,
               stats: NormStats) -> tuple[np.ndarray, float]:
    """Shared kernel for normalize_magnitude; returns (v, sigma_used)."""
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    a = np.abs(y)
    if mode == "train" or not stats.initialized:
        mu = float(a.mean())
        sigma = float(a.std())  # population std
        if mode == "train":
            if sigma < EPS_SIGMA:
                stats.guard_events += 1
            stats.update_norm(mu, max(sigma, EPS_SIGMA))
        if sigma < EPS_SIGMA:
            # constant batch: the z-score is undefined, return exact zeros
            # rather than amplifying summation dust by 1/EPS_SIGMA
            return np.zeros_like(a), EPS_SIGMA
    else:
        mu, sigma = stats.mean_abs, stats.std_abs
    sigma = max(sigma, EPS_SIGMA)
    return beta_norm * (a - mu) / sigma, sigma


def normalize_magnitude(y: np.ndarray, beta_norm: float, mode: str,
                        stats: NormStats) -> np.ndarray:
    """Magnitude-preserving z-score: beta * (|y| - mean|y|) / std|y|.

    Scalar population statistics over every entry of |y|. Train mode uses
    the batch statistics and folds them into ``stats``; eval mode reads the
    running values (falling back to batch statistics if never trained).
    Near-constant inputs are guarded by substituting EPS_SIGMA for the std,
    which is tallied in ``stats.guard_events``.
    """
    v, _ = _normalize(np.asarray(y, dtype=np.float64), beta_norm, mode, stats)
    return v


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: MlpModel, X, mode: str = "eval") -> ForwardTrace:
    """Run the network, returning the full trace.

    Train mode updates the running normalization statistics (the model's
    only mutable state); eval mode is pure. In nonneg mode every hidden
    activation lands in [0,1].
    """
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    X = as_matrix(X, "X")
    arch = model.arch
    if X.shape[1] != arch.input_dim:
        raise ShapeError(
            f"forward: X has {X.shape[1]} features, model expects {arch.input_dim}"
        )

    a = X
    pre, norm, relu_out, acts = [], [], [], []
    denoms, sigmas = [], []
    clip_active = False
    for layer in range(arch.n_hidden):
        u = a @ model.weights[layer]
        pre.append(u)
        if arch.nonneg:
            stats = model.norm_stats[layer]
            use_batch = mode == "train" or not stats.initialized
            v, sigma_used = _normalize(u, arch.beta_norm, mode, stats)
            h = np.maximum(v, 0.0)
            if use_batch:
                m = float(h.max()) if h.size else 0.0
                if mode == "train":
                    stats.update_max(m)
            else:
                m = stats.max_act
            denom = max(m, arch.rescale_eps)
            a_new = h / denom
            if not use_batch:
                # running max may undershoot unseen data; keep a in [0,1]
                a_new = np.minimum(a_new, 1.0)
                clip_active = True
            norm.append(v)
            denoms.append(denom)
            sigmas.append(sigma_used)
        else:
            h = np.maximum(u, 0.0)
            a_new = h
            norm.append(None)
            denoms.append(1.0)
            sigmas.append(1.0)
        relu_out.append(h)
        acts.append(a_new)
        a = a_new

    z = a @ model.output_weights + model.bias
    p = softmax(z)
    return ForwardTrace(X, pre, norm, relu_out, acts, denoms, sigmas, z, p,
                        mode, clip_active)


def predict(model: MlpModel, X) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index."""
    trace = forward(model, X, mode="eval")
    return np.argmax(trace.logits, axis=1)


def accuracy(model: MlpModel, ds: Dataset, batch_size: int = 2048) -> float:
    """Fraction of correctly classified samples."""
    if ds.n_features != model.arch.input_dim:
        raise ShapeError(
            f"dataset has {ds.n_features} features, model expects {model.arch.input_dim}"
        )
    correct = 0
    for start in range(0, ds.n_samples, batch_size):
        sl = slice(start, min(start + batch_size, ds.n_samples))
        correct += int(np.sum(predict(model, ds.inputs[sl]) == ds.labels[sl]))
    return correct / ds.n_samples


# ---------------------------------------------------------------------------
# model file format
#
#   magic            8 bytes  "BIOMLP01"
#   version          u32 LE
#   flags            u32 LE   bit0 = nonneg
#   layer count      u32 LE   number of weight matrices (hidden + output)
#   per-layer dims   u32 LE pairs (in_dim, out_dim)
#   beta_norm        f64 LE
#   weights          f64 LE row-major, layer order
#   bias             f64 LE, length K
#   norm stats       f64 LE triplets (mean_abs, std_abs, max_act) per hidden
#                    layer; all-zero triplet = never trained
#   checksum         SHA-256 of all preceding bytes


def save_model(model: MlpModel, path) -> None:
    arch = model.arch
    parts = [MODEL_MAGIC]
    flags = FLAG_NONNEG if arch.nonneg else 0
    parts.append(struct.pack("<III", MODEL_VERSION, flags, len(model.weights)))
    for w in model.weights:
        parts.append(struct.pack("<II", w.shape[0], w.shape[1]))
    parts.append(struct.pack("<d", arch.beta_norm))
    for w in model.weights:
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(model.bias, dtype="<f8").tobytes())
    for s in model.norm_stats:
        triple = (s.mean_abs, s.std_abs, s.max_act) if s.initialized else (0.0, 0.0, 0.0)
        parts.append(struct.pack("<ddd", *triple))
    blob = b"".join(parts)
    blob += hashlib.sha256(blob).digest()

    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".biomlp.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_model(path) -> MlpModel:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MODEL_MAGIC) + 12 + 32:
        raise FormatError(f"{path}: truncated model file")
    if blob[:8] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:8]!r}")
    body, checksum = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != checksum:
        raise FormatError(f"{path}: checksum mismatch")

    off = 8
    version, flags, n_layers = struct.unpack_from("<III", body, off)
    off += 12
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if n_layers < 1:
        raise FormatError(f"{path}: layer count must be >= 1")
    dims = []
    for _ in range(n_layers):
        if off + 8 > len(body):
            raise FormatError(f"{path}: truncated model file")
        dims.append(struct.unpack_from("<II", body, off))
        off += 8
    if off + 8 > len(body):
        raise FormatError(f"{path}: truncated model file")
    (beta_norm,) = struct.unpack_from("<d", body, off)
    off += 8

    def take_f64(count):
        nonlocal off
        nbytes = 8 * count
        if off + nbytes > len(body):
            raise FormatError(f"{path}: truncated model file")
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).copy()
        off += nbytes
        return arr

    weights = [take_f64(n_in * n_out).reshape(n_in, n_out) for n_in, n_out in dims]
    k = dims[-1][1]
    bias = take_f64(k)
    stats = []
    for _ in range(n_layers - 1):
        mean_abs, std_abs, max_act = take_f64(3)
        trained = std_abs > 0
        stats.append(NormStats(mean_abs, std_abs, max_act,
                               norm_updates=int(trained), max_updates=int(trained)))
    if off != len(body):
        raise FormatError(f"{path}: {len(body) - off} unexpected trailing bytes")

    hidden = tuple(d[1] for d in dims[:-1])
    arch = Architecture(
        input_dim=dims[0][0],
        hidden_dims=hidden,
        output_dim=k,
        nonneg=bool(flags & FLAG_NONNEG),
        beta_norm=beta_norm,
    )
    return MlpModel(weights, bias, stats, arch)
