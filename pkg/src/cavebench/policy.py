"""Feed-forward classification policy over the nine actions.

A fixed 304-64-64-9 relu network trained with cross-entropy and an
adaptive-moment optimizer. Everything is float64 and seeded, so training
runs and rollouts replay exactly. The numeric heavy lifting lives in
cavebench.kernels (compiled core with numpy fallback).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .env import NUM_ACTIONS, OBS_DIM, ActionId

LAYER_DIMS = (OBS_DIM, 64, 64, NUM_ACTIONS)

MAGIC = b"HDDP"
FORMAT_VERSION = 1


class NonFiniteInput(ValueError):
    """Raised when an observation vector contains NaN or infinity."""


class EmptyBatch(ValueError):
    """Raised when a training batch has no elements."""


class ShapeMismatch(ValueError):
    """Raised when gradient shapes do not match parameter shapes."""


class BadMagic(ValueError):
    """Raised when a policy file does not start with the expected magic."""


class VersionMismatch(ValueError):
    """Raised when a policy file has an unsupported format version."""


class TruncatedFile(ValueError):
    """Raised when a policy file ends before its declared payload."""


@dataclass
class PolicyParams:
    layer_dims: tuple
    weights: list  # per layer, (fan_in, fan_out) float64
    biases: list   # per layer, (fan_out,) float64
    init_seed: int

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            layer_dims=self.layer_dims,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            init_seed=self.init_seed,
        )


@dataclass
class OptState:
    m_weights: list
    m_biases: list
    v_weights: list
    v_biases: list
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass
class Batch:
    observations: np.ndarray  # (n, 304) float64
    labels: np.ndarray        # (n,) int64 action ordinals

    def __len__(self) -> int:
        return self.observations.shape[0]


def init_params(seed: int) -> PolicyParams:
    """Seeded uniform init scaled by 1/sqrt(fan_in); biases start at zero."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(LAYER_DIMS[:-1], LAYER_DIMS[1:]):
        scale = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-scale, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return PolicyParams(layer_dims=LAYER_DIMS, weights=weights, biases=biases, init_seed=seed)


def init_opt_state(params: PolicyParams, learning_rate: float = 1e-3) -> OptState:
    return OptState(
        m_weights=[np.zeros_like(w) for w in params.weights],
        m_biases=[np.zeros_like(b) for b in params.biases],
        v_weights=[np.zeros_like(w) for w in params.weights],
        v_biases=[np.zeros_like(b) for b in params.biases],
        learning_rate=learning_rate,
    )


def forward(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    """Action probabilities for one observation vector or a batch."""
    single = obs.ndim == 1
    X = np.ascontiguousarray(obs.reshape(1, -1) if single else obs, dtype=np.float64)
    if not np.isfinite(X).all():
        raise NonFiniteInput("observation contains non-finite values")
    probs = kernels.forward_probs(X, params.weights, params.biases)
    return probs[0] if single else probs


def act(params: PolicyParams, obs) -> ActionId:
    """Deterministic greedy action; ties go to the lowest action ordinal."""
    vec = obs.vector if hasattr(obs, "vector") else obs
    probs = forward(params, vec)
    return ActionId(int(np.argmax(probs)))


def loss_and_grad(params: PolicyParams, batch: Batch):
    """Mean cross-entropy on the batch plus backprop gradients."""
    if len(batch) == 0:
        raise EmptyBatch("batch has no elements")
    X = np.ascontiguousarray(batch.observations, dtype=np.float64)
    y = np.ascontiguousarray(batch.labels, dtype=np.int64)
    loss, grads_w, grads_b = kernels.loss_and_grads(X, y, params.weights, params.biases)
    return loss, (grads_w, grads_b)


def optimizer_step(params: PolicyParams, grads, opt: OptState):
    """Adaptive-moment update; returns fresh params and advanced opt state."""
    grads_w, grads_b = grads
    for w, gw in zip(params.weights, grads_w):
        if w.shape != gw.shape:
            raise ShapeMismatch(f"weight grad shape {gw.shape} != {w.shape}")
    for b, gb in zip(params.biases, grads_b):
        if b.shape != gb.shape:
            raise ShapeMismatch(f"bias grad shape {gb.shape} != {b.shape}")

    new = params.copy()
    opt.step_count += 1
    for i in range(len(new.weights)):
        kernels.adam_update(
            new.weights[i], grads_w[i], opt.m_weights[i], opt.v_weights[i],
            opt.step_count, opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon,
        )
        kernels.adam_update(
            new.biases[i], grads_b[i], opt.m_biases[i], opt.v_biases[i],
            opt.step_count, opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon,
        )
    return new, opt


def save_params(params: PolicyParams, path) -> None:
    """Little-endian binary: magic, version, layer count, per-layer blocks."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(params.weights)))
        for w, b in zip(params.weights, params.biases):
            rows, cols = w.shape
            fh.write(struct.pack("<II", rows, cols))
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        fh.write(struct.pack("<Q", params.init_seed))


def load_params(path) -> PolicyParams:
    with open(path, "rb") as fh:
        data = fh.read()

    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"{path}: not a policy file")
    offset = 4

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(data):
            raise TruncatedFile(f"{path}: expected {n} more bytes at offset {offset}")
        chunk = data[offset : offset + n]
        offset += n
        return chunk

    version, layer_count = struct.unpack("<II", take(8))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {FORMAT_VERSION}")

    weights, biases, dims = [], [], []
    for _ in range(layer_count):
        rows, cols = struct.unpack("<II", take(8))
        w = np.frombuffer(take(rows * cols * 8), dtype="<f8").reshape(rows, cols).copy()
        b = np.frombuffer(take(cols * 8), dtype="<f8").copy()
        weights.append(w)
        biases.append(b)
        dims.append(rows)
    dims.append(weights[-1].shape[1])
    (init_seed,) = struct.unpack("<Q", take(8))

    return PolicyParams(
        layer_dims=tuple(dims), weights=weights, biases=biases, init_seed=init_seed
    )
