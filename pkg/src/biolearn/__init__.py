"""Competitive Hebbian plasticity with reward-modulated weight perturbation.

Library + CLI for training MLP classifiers with a biologically inspired
rule (Oja-style Hebbian hidden layers, perturbation-driven classification
layer, optional nonnegativity), a backpropagation baseline, FGSM/PGD
robustness evaluation, few-shot protocols, and synaptic-weight-distribution
analysis.

Importing the top-level package is intentionally lightweight (no numpy),
so the CLI can pin BLAS thread counts before numeric modules load.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "analysis", "attacks", "cli", "data", "errors", "jsonio",
    "network", "numerics", "plasticity",
)


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module("." + name, __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
