"""Dynamic scene graph toolkit.

Builds spatiotemporal patch graphs from per-frame feature tensors,
clusters them with differentiable partitioning objectives into pooled
scene graphs, and jointly trains cluster structure, inter-cluster edge
weights, and a graph classifier for sequence-level workflow prediction.
Few-shot prototype matching assigns semantic labels to clusters.

Submodules are imported lazily so that CLI startup can pin threading
environment variables before numpy loads.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "nn",
    "checkpoint",
    "kernels",
    "graphs",
    "matching",
    "clustering",
    "model",
    "training",
    "prototypes",
    "metrics",
    "data",
    "config",
    "cli",
    "errors",
)


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
