"""Times the two kernel backends on the policy-network hot paths.

Run: python3 benchmarks/bench_kernels.py [--reps 200]

Justifies the default backend choice with numbers instead of folklore:
the compiled core wins nothing here because BLAS already owns the matmul
time, so numpy stays the default and the extension remains an optional
deterministic-loop reference.
"""
import argparse
import statistics
import time

import numpy as np

from cavebench.kernels import get_backend
from cavebench.policy import LAYER_DIMS, init_params

BATCHES = (1, 8, 64, 256)


def _median_ms(fn, reps):
    fn()  # warmup, outside the timed window
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(samples)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=200)
    args = ap.parse_args()

    params = init_params(0)
    rng = np.random.default_rng(0)
    backends = {name: get_backend(name) for name in ("numpy", "cython")}

    print(f"layer dims {LAYER_DIMS}, median of {args.reps} reps, ms/call")
    print(f"{'path':<14}{'batch':>6}{'numpy':>10}{'cython':>10}{'ratio':>8}")
    for batch in BATCHES:
        X = rng.random((batch, LAYER_DIMS[0]))
        y = rng.integers(0, LAYER_DIMS[-1], size=batch)

        probs = {
            name: mod.forward_probs(X, params.weights, params.biases)
            for name, mod in backends.items()
        }
        np.testing.assert_allclose(probs["numpy"], probs["cython"],
                                   rtol=1e-10, atol=1e-12)

        for path, call in (
            ("forward", lambda mod: mod.forward_probs(
                X, params.weights, params.biases)),
            ("loss+grads", lambda mod: mod.loss_and_grads(
                X, y, params.weights, params.biases)),
        ):
            ms = {name: _median_ms(lambda m=mod: call(m), args.reps)
                  for name, mod in backends.items()}
            print(f"{path:<14}{batch:>6}{ms['numpy']:>10.3f}"
                  f"{ms['cython']:>10.3f}{ms['cython'] / ms['numpy']:>8.1f}x")


if __name__ == "__main__":
    main()
