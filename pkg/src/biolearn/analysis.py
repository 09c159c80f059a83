"""Synaptic-weight statistics, activation decorrelation, and few-shot harness.

Weight matrices are max-normalized into [0,1]; entries under the detection
threshold (default 0.005) count as unobservable and are excluded from the
distribution fits. Candidate families are the lognormal and the
two-parameter Weibull, whose shape parameter distinguishes stretched
(k < 1) from compressed (k > 1) exponential behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .data import Dataset, few_shot_subset
from .errors import DegenerateInputError, NumericError, ParameterError
from .network import MlpModel, accuracy, forward
from .numerics import Rng

DETECTION_THRESHOLD = 0.005
WEIBULL_SCORE_TOL = 1e-10
WEIBULL_MAX_ITER = 200


@dataclass
class WeightSample:
    """Max-normalized weight magnitudes surviving the detection threshold."""

    values: np.ndarray
    threshold: float
    n_total: int
    n_below_threshold: int


@dataclass
class FitResult:
    family: str            # 'lognormal' | 'weibull'
    params: tuple[float, float]
    log_likelihood: float
    ks_stat: float
    n: int

    def to_dict(self) -> dict:
        names = ("mu", "sigma") if self.family == "lognormal" else ("shape", "scale")
        d = {"family": self.family, "log_likelihood": self.log_likelihood,
             "ks_stat": self.ks_stat, "n": self.n}
        d.update(zip(names, self.params))
        if self.family == "weibull":
            d["regime"] = ("stretched" if self.params[0] < 1.0
                           else "compressed" if self.params[0] > 1.0 else "exponential")
        return d


@dataclass
class FewShotReport:
    shots: int
    accuracies: list[float]
    mean: float
    std: float

    def to_dict(self) -> dict:
        return {"shots": self.shots, "accuracies": list(self.accuracies),
                "mean": self.mean, "std": self.std}


def weight_sample(w: np.ndarray, threshold: float = DETECTION_THRESHOLD) -> WeightSample:
    """Normalize |W| by its max and drop entries below ``threshold``."""
    w = np.asarray(w, dtype=np.float64)
    peak = np.abs(w).max() if w.size else 0.0
    if peak == 0.0:
        raise DegenerateInputError("weight_sample: all-zero matrix")
    v = np.abs(w).ravel() / peak
    below = v < threshold
    return WeightSample(values=v[~below], threshold=threshold,
                        n_total=v.size, n_below_threshold=int(below.sum()))


def sparsity(w: np.ndarray, threshold: float = DETECTION_THRESHOLD) -> tuple[float, float]:
    """(exact-zero fraction, below-threshold fraction) over all entries.

    Exactly-zero weights are silent synapses and count as below any
    detection threshold, so the second fraction never undershoots the
    first.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise ParameterError("sparsity: empty matrix")
    exact = float(np.mean(w == 0.0))
    peak = np.abs(w).max()
    if peak == 0.0:
        return 1.0, 1.0
    below = float(np.mean((np.abs(w) / peak < threshold) | (w == 0.0)))
    return exact, below


def _check_fit_input(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise DegenerateInputError("need at least 2 values to fit")
    if np.any(v <= 0):
        raise ParameterError("distribution fits need strictly positive values")
    if np.all(v == v[0]):
        raise DegenerateInputError("all values equal; nothing to fit")
    return v


def ks_statistic(values, cdf) -> float:
    """Sup distance between the empirical CDF and ``cdf``.

    Evaluated at the sorted sample with both one-sided gaps, so the
    result is exact for the step-function empirical CDF.
    """
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = v.size
    if n < 1:
        raise ParameterError("ks_statistic: empty sample")
    f = np.asarray(cdf(v), dtype=np.float64)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - f)
    d_minus = np.max(f - (i - 1) / n)
    return float(max(d_plus, d_minus, 0.0))


def lognormal_cdf(x, mu: float, sigma: float):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = ndtr((np.log(x[pos]) - mu) / sigma)
    return out


def lognormal_pdf(x, mu: float, sigma: float):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    lx = np.log(x[pos])
    out[pos] = np.exp(-0.5 * ((lx - mu) / sigma) ** 2) / (x[pos] * sigma * math.sqrt(2 * math.pi))
    return out


def weibull_cdf(x, shape: float, scale: float):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = 1.0 - np.exp(-((x[pos] / scale) ** shape))
    return out


def weibull_pdf(x, shape: float, scale: float):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    t = x[pos] / scale
    out[pos] = (shape / scale) * t ** (shape - 1.0) * np.exp(-(t ** shape))
    return out


def fit_lognormal(values) -> FitResult:
    """Closed-form lognormal MLE: mu = mean(ln v), sigma = population std(ln v)."""
    v = _check_fit_input(values)
    lv = np.log(v)
    mu = float(lv.mean())
    sigma = float(lv.std())  # population std is the MLE
    ll = float(np.sum(-lv - math.log(sigma) - 0.5 * math.log(2 * math.pi)
                      - 0.5 * ((lv - mu) / sigma) ** 2))
    ks = ks_statistic(v, lambda x: lognormal_cdf(x, mu, sigma))
    return FitResult("lognormal", (mu, sigma), ll, ks, v.size)


def _weibull_score(k: float, v: np.ndarray, mean_log: float) -> float:
    # profile-likelihood score in the shape parameter; strictly decreasing in k
    vk = v ** k
    return 1.0 / k + mean_log - float((vk * np.log(v)).sum() / vk.sum())


def fit_weibull(values) -> FitResult:
    """Two-parameter Weibull MLE via root-finding on the shape score.

    The scale has a closed form given the shape: scale = mean(v^k)^(1/k).
    Raises NumericError if the score does not meet tolerance within the
    iteration budget.
    """
    v = _check_fit_input(values)
    mean_log = float(np.log(v).mean())
    # moment-based starting point: Var(ln V) = pi^2 / (6 k^2)
    k0 = math.pi / (math.sqrt(6.0) * max(float(np.log(v).std()), 1e-12))
    k0 = min(max(k0, 1e-3), 1e3)

    lo, hi = k0, k0
    for _ in range(80):
        if _weibull_score(lo, v, mean_log) > 0:
            break
        lo /= 2.0
    for _ in range(80):
        if _weibull_score(hi, v, mean_log) < 0:
            break
        hi *= 2.0
    try:
        k, res = brentq(_weibull_score, lo, hi, args=(v, mean_log),
                        xtol=1e-14, maxiter=WEIBULL_MAX_ITER, full_output=True)
    except (ValueError, RuntimeError) as exc:
        raise NumericError(f"weibull shape solve failed: {exc}") from exc
    if not res.converged or abs(_weibull_score(k, v, mean_log)) > WEIBULL_SCORE_TOL:
        raise NumericError(
            f"weibull shape solve did not reach tolerance in {WEIBULL_MAX_ITER} iterations"
        )
    scale = float(np.mean(v ** k) ** (1.0 / k))
    t = v / scale
    ll = float(np.sum(np.log(k / scale) + (k - 1.0) * np.log(t) - t ** k))
    ks = ks_statistic(v, lambda x: weibull_cdf(x, k, scale))
    return FitResult("weibull", (float(k), scale), ll, ks, v.size)


def mean_abs_offdiag_correlation(activations: np.ndarray) -> tuple[float, int]:
    """Mean |Pearson r| over unit pairs; returns (metric, zero-variance units).

    Units with zero variance across samples carry no correlation signal and
    are excluded from the average.
    """
    a = np.asarray(activations, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 2:
        raise ParameterError("need a samples-by-units matrix with >= 2 samples")
    live = ~np.all(a == a[0], axis=0)  # exactly-constant units carry no signal
    n_dead = int((~live).sum())
    if live.sum() < 2:
        raise DegenerateInputError("fewer than 2 units with nonzero variance")
    c = np.corrcoef(a[:, live], rowvar=False)
    off = np.abs(c[~np.eye(c.shape[0], dtype=bool)])
    return float(off.mean()), n_dead


def activation_decorrelation(model: MlpModel, X: np.ndarray) -> float:
    """Mean absolute off-diagonal correlation of final hidden activations."""
    if len(X) == 0:
        raise ParameterError("activation_decorrelation: empty input")
    trace = forward(model, X, mode="eval")
    metric, _ = mean_abs_offdiag_correlation(trace.last_hidden)
    return metric


def few_shot_eval(train_model, ds_train: Dataset, ds_test: Dataset,
                  shots: int, n_seeds: int, rng: Rng) -> FewShotReport:
    """Train from scratch on per-seed few-shot subsets, evaluate on full test.

    ``train_model(subset, rng)`` must return a trained model. Each seed uses
    an independent child stream, so results do not depend on evaluation
    order.
    """
    if shots < 1 or n_seeds < 1:
        raise ParameterError("shots and n_seeds must be >= 1")
    accuracies = []
    for i in range(n_seeds):
        seed_rng = rng.child(i)
        subset = few_shot_subset(ds_train, shots, seed_rng)
        model = train_model(subset, seed_rng)
        accuracies.append(accuracy(model, ds_test))
    arr = np.asarray(accuracies)
    return FewShotReport(shots=shots, accuracies=accuracies,
                         mean=float(arr.mean()), std=float(arr.std()))


def histogram_with_fits(sample: WeightSample, lognormal: FitResult,
                        weibull: FitResult, bins: int = 64) -> list[dict]:
    """Per-bin counts over [threshold, 1] with both fitted densities."""
    edges = np.linspace(sample.threshold, 1.0, bins + 1)
    counts, _ = np.histogram(sample.values, bins=edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    ln_pdf = lognormal_pdf(centers, *lognormal.params)
    wb_pdf = weibull_pdf(centers, *weibull.params)
    return [
        {"bin_lo": float(edges[i]), "bin_hi": float(edges[i + 1]),
         "count": int(counts[i]), "lognormal_pdf": float(ln_pdf[i]),
         "weibull_pdf": float(wb_pdf[i])}
        for i in range(bins)
    ]
