"""White-box L-infinity adversarial evaluation: FGSM and PGD.

Gradients flow through the model's own forward graph with the
normalization statistics frozen (eval mode). Attacks never mutate the
model, and every output stays inside [0,1] and the epsilon-ball of its
clean input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backprop import backward
from .data import Dataset
from .errors import ParameterError
from .network import MlpModel, accuracy, forward
from .numerics import Rng


@dataclass
class AttackConfig:
    method: str = "pgd"          # 'fgsm' | 'pgd'
    step: float = 0.01
    iters: int = 40
    random_start: bool = False
    batch_size: int = 1000

    def __post_init__(self):
        if self.method not in ("fgsm", "pgd"):
            raise ParameterError(f"method must be fgsm|pgd, got {self.method!r}")
        if self.step <= 0 or self.iters < 1 or self.batch_size < 1:
            raise ParameterError("step must be > 0, iters and batch_size >= 1")


@dataclass
class RobustnessCurve:
    epsilons: list[float]
    accuracies: list[float]
    clean_accuracy: float
    method: str
    step: float | None = None
    iters: int | None = None

    def to_csv(self) -> str:
        lines = [f"# method={self.method}"]
        if self.method == "pgd":
            lines[0] += f" step={self.step} iters={self.iters}"
        lines.append("epsilon,accuracy")
        for eps, acc in zip(self.epsilons, self.accuracies):
            lines.append(f"{eps:.17g},{acc:.17g}")
        return "\n".join(lines) + "\n"


def input_gradient(model: MlpModel, X: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(batch-mean cross-entropy)/dX with normalization statistics frozen."""
    trace = forward(model, X, mode="eval")
    return backward(model, trace, labels, wrt_params=False, wrt_inputs=True).inputs


def fgsm(model: MlpModel, X: np.ndarray, labels: np.ndarray,
         epsilon: float) -> np.ndarray:
    """Single sign-gradient step, clipped to [0,1]. sign(0) contributes 0."""
    if epsilon < 0:
        raise ParameterError("epsilon must be >= 0")
    g = input_gradient(model, X, labels)
    return np.clip(X + epsilon * np.sign(g), 0.0, 1.0)


def pgd(model: MlpModel, X: np.ndarray, labels: np.ndarray, epsilon: float,
        cfg: AttackConfig, rng: Rng | None = None) -> np.ndarray:
    """Iterated projected sign-gradient ascent inside the epsilon-ball.

    Starts at the clean input unless ``cfg.random_start`` (which needs an
    Rng). With iters=1 and step=epsilon this reproduces fgsm exactly.
    """
    if epsilon < 0:
        raise ParameterError("epsilon must be >= 0")
    x0 = X
    x = X
    if cfg.random_start:
        if rng is None:
            raise ParameterError("random_start requires an Rng")
        noise = rng.uniform(-epsilon, epsilon, X.size).reshape(X.shape) if epsilon > 0 else 0.0
        x = np.clip(x0 + noise, 0.0, 1.0)
    for _ in range(cfg.iters):
        g = input_gradient(model, x, labels)
        x = x + cfg.step * np.sign(g)
        x = np.clip(x, x0 - epsilon, x0 + epsilon)
        x = np.clip(x, 0.0, 1.0)
    return x


def _attacked_accuracy(model: MlpModel, ds: Dataset, method: str, epsilon: float,
                       cfg: AttackConfig, rng: Rng | None) -> float:
    correct = 0
    for start in range(0, ds.n_samples, cfg.batch_size):
        sl = slice(start, min(start + cfg.batch_size, ds.n_samples))
        x, y = ds.inputs[sl], ds.labels[sl]
        if method == "fgsm":
            adv = fgsm(model, x, y, epsilon)
        else:
            adv = pgd(model, x, y, epsilon, cfg,
                      rng.child(start) if rng is not None else None)
        pred = np.argmax(forward(model, adv, mode="eval").logits, axis=1)
        correct += int(np.sum(pred == y))
    return correct / ds.n_samples


def robustness_sweep(model: MlpModel, ds: Dataset, method: str,
                     epsilons, cfg: AttackConfig | None = None,
                     rng: Rng | None = None) -> RobustnessCurve:
    """Accuracy on attacked test inputs for each epsilon (ascending)."""
    cfg = cfg or AttackConfig(method=method)
    eps = [float(e) for e in epsilons]
    if any(b <= a for a, b in zip(eps, eps[1:])):
        raise ParameterError("epsilon list must be strictly increasing")
    if any(e < 0 for e in eps):
        raise ParameterError("epsilons must be >= 0")
    clean = accuracy(model, ds)
    accs = [clean if e == 0.0 else _attacked_accuracy(model, ds, method, e, cfg, rng)
            for e in eps]
    return RobustnessCurve(
        epsilons=eps, accuracies=accs, clean_accuracy=clean, method=method,
        step=cfg.step if method == "pgd" else None,
        iters=cfg.iters if method == "pgd" else None,
    )
