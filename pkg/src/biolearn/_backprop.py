"""Shared reverse-mode pass for both forward graphs.

Normalization statistics (mean, std, rescale max) are treated as constants:
the backward pass differentiates exactly the function recorded in the
ForwardTrace, with the statistics frozen at their traced values. Eval-mode
traces include the clip at 1, train-mode traces do not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .network import ForwardTrace, MlpModel


def one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    y = np.zeros((len(labels), k))
    y[np.arange(len(labels)), labels] = 1.0
    return y


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Batch-mean softmax cross-entropy, computed stably from logits."""
    zmax = logits.max(axis=1)
    lse = zmax + np.log(np.exp(logits - zmax[:, None]).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(len(labels)), labels]))
    if not np.isfinite(loss):
        raise NumericError("cross-entropy loss is non-finite")
    return loss


@dataclass
class Grads:
    loss: float
    weights: list | None = None   # one array per layer, output layer last
    bias: np.ndarray | None = None
    inputs: np.ndarray | None = None


def backward(model: MlpModel, trace: ForwardTrace, labels: np.ndarray,
             wrt_params: bool = True, wrt_inputs: bool = False) -> Grads:
    """Gradients of the batch-mean cross-entropy recorded in ``trace``."""
    arch = model.arch
    n = trace.inputs.shape[0]
    loss = cross_entropy(trace.logits, labels)

    dz = (trace.probs - one_hot(labels, arch.output_dim)) / n
    h_last = trace.last_hidden
    w_grads: list = [None] * len(model.weights)
    if wrt_params:
        w_grads[-1] = h_last.T @ dz
        b_grad = dz.sum(axis=0)
    else:
        b_grad = None

    g = dz @ model.output_weights.T  # dL/da for the last hidden layer
    for layer in range(arch.n_hidden - 1, -1, -1):
        if arch.nonneg:
            h = trace.relu_out[layer]
            denom = trace.rescale_denoms[layer]
            gh = g / denom
            if trace.clip_active:
                gh = gh * (h <= denom)
            v = trace.normalized[layer]
            gv = gh * (v > 0.0)
            u = trace.pre_activations[layer]
            gu = gv * (arch.beta_norm / trace.sigmas[layer]) * np.sign(u)
        else:
            u = trace.pre_activations[layer]
            gu = g * (u > 0.0)
        if wrt_params:
            w_grads[layer] = trace.layer_input(layer).T @ gu
        g = gu @ model.weights[layer].T

    input_grad = None
    if wrt_inputs:
        input_grad = g
        if not np.all(np.isfinite(input_grad)):
            raise NumericError("input gradient is non-finite")
    return Grads(loss=loss,
                 weights=w_grads if wrt_params else None,
                 bias=b_grad,
                 inputs=input_grad)
