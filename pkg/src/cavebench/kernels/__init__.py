"""Numeric kernels behind the policy network.

Two interchangeable backends: a BLAS-backed numpy implementation and a
compiled Cython core (built at install time). numpy is the default: at
the training minibatch size its dgemm calls are an order of magnitude
faster than the Cython loops (see benchmarks/bench_kernels.py). Set
CAVEBENCH_KERNELS=cython or =numpy to force a choice. Backends agree to
float64 rounding but not bit-for-bit (different summation order), so
replay determinism holds within a backend, not across backends.
"""
import os

_requested = os.environ.get("CAVEBENCH_KERNELS", "").strip().lower()

if _requested == "cython":
    from . import _mlp_core as _impl  # raises if the extension was not built

    BACKEND = "cython"
elif _requested in ("numpy", ""):
    from . import _numpy as _impl

    BACKEND = "numpy"
else:
    raise ValueError(
        f"CAVEBENCH_KERNELS must be 'numpy' or 'cython', not {_requested!r}"
    )

forward_probs = _impl.forward_probs
loss_and_grads = _impl.loss_and_grads
adam_update = _impl.adam_update


def get_backend(name):
    """Load a backend module by name ('numpy' or 'cython'); for benchmarks."""
    if name == "numpy":
        from . import _numpy

        return _numpy
    if name == "cython":
        from . import _mlp_core

        return _mlp_core
    raise ValueError(f"unknown kernel backend {name!r}")
