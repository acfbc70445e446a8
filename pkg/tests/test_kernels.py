"""Backend equivalence: the compiled core and the numpy fallback must
agree numerically on every kernel, and the import-time selector must
honor the environment override."""
import os
import subprocess
import sys

import numpy as np
import pytest

import cavebench.policy as P
from cavebench import kernels
from cavebench.env import NUM_ACTIONS, OBS_DIM


@pytest.fixture(scope="module")
def backends():
    return kernels.get_backend("numpy"), kernels.get_backend("cython")


def _params_and_batch(seed, size):
    rng = np.random.default_rng(seed)
    params = P.init_params(seed)
    X = np.ascontiguousarray(rng.random((size, OBS_DIM)))
    y = rng.integers(0, NUM_ACTIONS, size=size).astype(np.int64)
    return params, X, y


def test_forward_probabilities_agree(backends):
    np_impl, cy_impl = backends
    for seed in range(3):
        params, X, _y = _params_and_batch(seed, 17)
        a = np_impl.forward_probs(X, params.weights, params.biases)
        b = cy_impl.forward_probs(X, params.weights, params.biases)
        assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


def test_losses_and_gradients_agree(backends):
    np_impl, cy_impl = backends
    for seed in range(3):
        params, X, y = _params_and_batch(seed, 11)
        loss_a, gw_a, gb_a = np_impl.loss_and_grads(X, y, params.weights, params.biases)
        loss_b, gw_b, gb_b = cy_impl.loss_and_grads(X, y, params.weights, params.biases)
        assert abs(loss_a - loss_b) < 1e-10
        for a, b in zip(gw_a + gb_a, gw_b + gb_b):
            assert np.allclose(a, b, rtol=1e-9, atol=1e-12)


def test_moment_updates_agree(backends):
    np_impl, cy_impl = backends
    rng = np.random.default_rng(4)
    w = rng.random((8, 5))
    g = rng.random((8, 5))

    def run(impl):
        param = w.copy()
        m = np.zeros_like(w)
        v = np.zeros_like(w)
        for t in range(1, 6):
            impl.adam_update(param, g, m, v, t, 1e-3, 0.9, 0.999, 1e-8)
        return param, m, v

    pa, ma, va = run(np_impl)
    pb, mb, vb = run(cy_impl)
    assert np.allclose(pa, pb, rtol=1e-12, atol=1e-15)
    assert np.allclose(ma, mb, rtol=1e-12, atol=1e-15)
    assert np.allclose(va, vb, rtol=1e-12, atol=1e-15)


def test_unknown_backend_name_is_rejected():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@pytest.mark.parametrize("name", ["numpy", "cython"])
def test_environment_variable_selects_the_backend(name):
    code = "import cavebench.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, CAVEBENCH_KERNELS=name)
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env=env)
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == name


def test_bad_environment_value_fails_the_import():
    code = "import cavebench.kernels"
    env = dict(os.environ, CAVEBENCH_KERNELS="banana")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env=env)
    assert out.returncode != 0
    assert "CAVEBENCH_KERNELS" in out.stderr
