"""Learning rules and training loops.

Hidden layers learn by a competitive Hebbian (Oja subspace) update computed
from the clean forward trace. The classification layer combines the same
Hebbian form (with self-exclusion) and a reward-modulated weight
perturbation estimate; its bias follows a homeostatic rule pulling each
unit's mean output toward 1/K. A plain-SGD backpropagation baseline shares
the forward graphs.

All batch updates are arithmetic means over the batch, so learning rates
are batch-size independent.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ._backprop import backward, cross_entropy, one_hot
from .data import BatchPlan, Dataset, make_batches
from .errors import NumericError, ParameterError, ShapeError
from .network import MlpModel, accuracy, forward
from .numerics import Rng


@dataclass
class BioHyperParams:
    """Hyperparameters of the combined Hebbian / weight-perturbation rule."""

    eta: float = 0.0005
    sigma2: float = 0.00016
    alpha: float = 0.04
    beta_wp: float = 87500.0
    gamma: float = 0.04
    batch_size: int = 2000
    epochs: int = 50
    balanced: bool = True
    eq4_mode: str = "literal"      # 'literal' keeps eta inside both kernels
    eq5_signal: str = "softmax"    # homeostatic signal: 'softmax' | 'linear'
    hebb_signal: str = "activation"  # hidden post-synaptic signal (see train_bio)
    output_rule: str = "wp"        # 'wp' | 'bp' (locally SGD-trained output)
    bp_output_lr: float = 0.1

    def __post_init__(self):
        if self.eta <= 0 or self.sigma2 <= 0:
            raise ParameterError("eta and sigma2 must be > 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ParameterError("batch_size must be >= 1 and epochs >= 0")
        if self.eq4_mode not in ("literal", "eta_free"):
            raise ParameterError(f"eq4_mode must be literal|eta_free, got {self.eq4_mode!r}")
        if self.eq5_signal not in ("softmax", "linear"):
            raise ParameterError(f"eq5_signal must be softmax|linear, got {self.eq5_signal!r}")
        if self.hebb_signal not in ("activation", "linear"):
            raise ParameterError(f"hebb_signal must be activation|linear, got {self.hebb_signal!r}")
        if self.output_rule not in ("wp", "bp"):
            raise ParameterError(f"output_rule must be wp|bp, got {self.output_rule!r}")


@dataclass
class BpHyperParams:
    """Plain-SGD baseline settings."""

    lr: float = 0.1
    batch_size: int = 128
    epochs: int = 30
    balanced: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ParameterError("lr must be > 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ParameterError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class Perturbation:
    """Effective noise applied to the output weights, masked to w != 0."""

    xi: np.ndarray
    mask: np.ndarray


@dataclass
class EpochReport:
    epoch: int
    loss: float
    test_acc: float
    sparsity: float      # exact-zero fraction of hidden-layer weights
    seconds: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "loss": self.loss, "test_acc": self.test_acc,
                "sparsity": self.sparsity, "seconds": self.seconds}


def hebbian_hidden_delta(x: np.ndarray, w: np.ndarray, eta: float,
                         z: np.ndarray | None = None) -> np.ndarray:
    """Batch-mean Oja-style update for a hidden layer.

    With the linear responses Z = X W, each weight moves by
    eta * z_j * (x_i - sum_k z_k w_ik), averaged over the batch. ``z`` may
    be passed when the caller already computed X W (bit-identical reuse).
    """
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"hebbian_hidden_delta: {x.shape} incompatible with {w.shape}")
    if z is None:
        z = x @ w
    n = x.shape[0]
    return (eta / n) * (x.T @ z - w @ (z.T @ z))


def hebbian_output_delta(h: np.ndarray, w: np.ndarray, eta: float,
                         z: np.ndarray | None = None) -> np.ndarray:
    """Hebbian update for the classification layer.

    Identical to the hidden rule except the competition sum excludes each
    unit's own weight, which adds back eta * w_ij * mean(z_j^2).
    """
    if h.shape[1] != w.shape[0]:
        raise ShapeError(f"hebbian_output_delta: {h.shape} incompatible with {w.shape}")
    if z is None:
        z = h @ w
    n = h.shape[0]
    base = (eta / n) * (h.T @ z - w @ (z.T @ z))
    return base + eta * w * np.mean(z * z, axis=0)[None, :]


def sample_perturbation(w_out: np.ndarray, sigma2: float, rng: Rng,
                        nonneg: bool) -> tuple[Perturbation, np.ndarray]:
    """Draw N(0, sqrt(sigma2)) noise on the nonzero output weights.

    Returns the perturbation and the perturbed weights. In nonneg mode the
    perturbed weights are clamped at zero and ``xi`` records the effective
    applied difference, keeping the reward estimate consistent with what
    the perturbed trial actually used.
    """
    if sigma2 <= 0:
        raise ParameterError("sigma2 must be > 0")
    mask = (w_out != 0.0).astype(np.float64)
    xi = rng.normal(0.0, np.sqrt(sigma2), w_out.size).reshape(w_out.shape) * mask
    w_pert = w_out + xi
    if nonneg:
        w_pert = np.maximum(w_pert, 0.0)
        xi = w_pert - w_out
    return Perturbation(xi=xi, mask=mask), w_pert


def wp_delta(e_pert: float, e: float, pert: Perturbation, eta: float,
             sigma2: float) -> np.ndarray:
    """Reward-modulated perturbation update: -(eta/sigma2) (E_pert - E) xi."""
    if not (np.isfinite(e_pert) and np.isfinite(e)):
        raise NumericError("wp_delta: non-finite loss")
    return -(eta / sigma2) * (e_pert - e) * pert.xi * pert.mask


def combined_output_delta(hebb: np.ndarray, wp: np.ndarray, eta: float,
                          alpha: float, beta_wp: float) -> np.ndarray:
    """Mix the two classification-layer updates: eta*alpha*hebb + eta*beta*wp."""
    if hebb.shape != wp.shape:
        raise ShapeError(f"combined_output_delta: {hebb.shape} vs {wp.shape}")
    return eta * alpha * hebb + eta * beta_wp * wp


def bias_delta(p: np.ndarray, k: int, eta: float, gamma: float) -> np.ndarray:
    """Homeostatic bias update toward mean output activation 1/K.

    ``p`` holds the clean batch output activations (rows = samples). With
    balanced labels the target mean activation per unit is 1/K.
    """
    if p.shape[1] != k:
        raise ShapeError(f"bias_delta: activations have {p.shape[1]} columns, K={k}")
    return eta * gamma * (1.0 / k - p.mean(axis=0))


def nonneg_project(a: np.ndarray) -> np.ndarray:
    """Elementwise max(0, .) — idempotent."""
    return np.maximum(a, 0.0)


def hidden_zero_fraction(model: MlpModel) -> float:
    """Exact-zero fraction over all hidden-layer weight entries."""
    hidden = model.weights[:-1]
    if not hidden:
        return 0.0
    total = sum(w.size for w in hidden)
    zeros = sum(int(np.count_nonzero(w == 0.0)) for w in hidden)
    return zeros / total


def _project_model(model: MlpModel):
    for i, w in enumerate(model.weights):
        model.weights[i] = nonneg_project(w)
    model.bias = nonneg_project(model.bias)


def _epoch_report(model, ds_test, epoch, losses, t0) -> EpochReport:
    return EpochReport(
        epoch=epoch,
        loss=float(np.mean(losses)) if losses else 0.0,
        test_acc=accuracy(model, ds_test),
        sparsity=hidden_zero_fraction(model),
        seconds=time.perf_counter() - t0,
    )


def train_bio(model: MlpModel, ds_train: Dataset, ds_test: Dataset,
              hp: BioHyperParams, rng: Rng, metrics_sink=None,
              on_batch_end=None) -> tuple[MlpModel, list[EpochReport]]:
    """Train with the combined Hebbian / weight-perturbation rule.

    Per batch: perturb the output weights, run the clean forward pass
    (train mode), rerun only the output layer with the perturbed weights on
    the same hidden activations, convert the loss difference into the WP
    update, add the Hebbian output update, then apply the homeostatic bias
    rule and the per-layer hidden Hebbian updates from the clean trace. In
    nonneg mode every weight and the bias are projected to >= 0 after the
    updates.

    ``hebb_signal`` picks the post-synaptic signal of the hidden updates:
    'activation' (default) feeds the saved layer outputs, 'linear' the raw
    linear responses. Caution with 'linear' on wide nonnegative layers:
    the competition sum scales with layer width (m * z * w >> x at the
    default init), so a single projected batch can silence the layer;
    the bounded activation signal decays gently instead.

    ``metrics_sink`` receives each EpochReport as it is produced;
    ``on_batch_end`` is a diagnostics hook called with the model after
    every batch update.
    """
    if hp.gamma != 0.0 and not hp.balanced and hp.output_rule == "wp":
        raise ParameterError(
            "the homeostatic bias rule assumes balanced batches; "
            "set balanced=True or gamma=0"
        )
    nonneg = model.arch.nonneg
    k = model.arch.output_dim
    kernel_eta = hp.eta if hp.eq4_mode == "literal" else 1.0
    plan = BatchPlan(hp.batch_size, balanced=hp.balanced)

    reports = []
    for epoch in range(hp.epochs):
        t0 = time.perf_counter()
        losses = []
        for x_batch, y_batch in make_batches(ds_train, plan, rng):
            w_out = model.output_weights
            trace = forward(model, x_batch, mode="train")
            h_last = trace.last_hidden
            e_clean = cross_entropy(trace.logits, y_batch)
            losses.append(e_clean)

            if hp.output_rule == "wp":
                pert, w_pert = sample_perturbation(w_out, hp.sigma2, rng, nonneg)
                z_pert = h_last @ w_pert + model.bias
                e_pert = cross_entropy(z_pert, y_batch)
                wpd = wp_delta(e_pert, e_clean, pert, kernel_eta, hp.sigma2)
                hebb = hebbian_output_delta(h_last, w_out, kernel_eta)
                model.weights[-1] = w_out + combined_output_delta(
                    hebb, wpd, hp.eta, hp.alpha, hp.beta_wp)
                signal = trace.probs if hp.eq5_signal == "softmax" else trace.logits
                model.bias = model.bias + bias_delta(signal, k, hp.eta, hp.gamma)
            else:
                # locally SGD-trained classification layer (no backprop into hidden)
                dz = (trace.probs - one_hot(y_batch, k)) / x_batch.shape[0]
                model.weights[-1] = w_out - hp.bp_output_lr * (h_last.T @ dz)
                model.bias = model.bias - hp.bp_output_lr * dz.sum(axis=0)

            for layer in range(model.arch.n_hidden):
                x_l = trace.layer_input(layer)
                z_l = (trace.activations[layer] if hp.hebb_signal == "activation"
                       else trace.pre_activations[layer])
                model.weights[layer] = model.weights[layer] + hebbian_hidden_delta(
                    x_l, model.weights[layer], hp.eta, z=z_l)

            if nonneg:
                _project_model(model)
            if on_batch_end is not None:
                on_batch_end(model)

        report = _epoch_report(model, ds_test, epoch, losses, t0)
        reports.append(report)
        if metrics_sink is not None:
            metrics_sink(report)
    return model, reports


def train_bp(model: MlpModel, ds_train: Dataset, ds_test: Dataset,
             hp: BpHyperParams, rng: Rng, metrics_sink=None,
             on_batch_end=None) -> tuple[MlpModel, list[EpochReport]]:
    """Plain-SGD softmax cross-entropy baseline.

    Uses the model's own forward graph (normalized in nonneg mode, with the
    statistics frozen in the backward pass); nonneg mode projects all
    parameters after each step.
    """
    nonneg = model.arch.nonneg
    plan = BatchPlan(hp.batch_size, balanced=hp.balanced)
    reports = []
    for epoch in range(hp.epochs):
        t0 = time.perf_counter()
        losses = []
        for x_batch, y_batch in make_batches(ds_train, plan, rng):
            trace = forward(model, x_batch, mode="train")
            grads = backward(model, trace, y_batch, wrt_params=True)
            losses.append(grads.loss)
            for i, gw in enumerate(grads.weights):
                model.weights[i] = model.weights[i] - hp.lr * gw
            model.bias = model.bias - hp.lr * grads.bias
            if nonneg:
                _project_model(model)
            if on_batch_end is not None:
                on_batch_end(model)

        report = _epoch_report(model, ds_test, epoch, losses, t0)
        reports.append(report)
        if metrics_sink is not None:
            metrics_sink(report)
    return model, reports
