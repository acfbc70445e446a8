"""Pure-numpy implementation of the policy-network kernels.

Used whenever the compiled extension is unavailable (or forced via
CAVEBENCH_KERNELS=numpy). Shapes: X is (n, in_dim), weights[i] is
(fan_in, fan_out) row-major, biases[i] is (fan_out,).
"""
from __future__ import annotations

import numpy as np


def forward_probs(X, weights, biases):
    """Class probabilities for a batch; relu hiddens, stabilized softmax."""
    h = X
    for W, b in zip(weights[:-1], biases[:-1]):
        h = np.maximum(h @ W + b, 0.0)
    logits = h @ weights[-1] + biases[-1]
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(X, labels, weights, biases):
    """Mean cross-entropy over the batch and its parameter gradients."""
    n = X.shape[0]
    activations = [X]
    h = X
    for W, b in zip(weights[:-1], biases[:-1]):
        h = np.maximum(h @ W + b, 0.0)
        activations.append(h)
    logits = h @ weights[-1] + biases[-1]
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    sums = e.sum(axis=1, keepdims=True)
    probs = e / sums

    # log-sum-exp form: safe even when the labelled prob underflows to 0
    idx = np.arange(n)
    loss = float(np.mean(np.log(sums[:, 0]) - logits[idx, labels]))

    delta = probs.copy()
    delta[idx, labels] -= 1.0
    delta /= n

    grads_w = [None] * len(weights)
    grads_b = [None] * len(biases)
    for layer in range(len(weights) - 1, -1, -1):
        a = activations[layer]
        grads_w[layer] = a.T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * (a > 0.0)
    return loss, grads_w, grads_b


def adam_update(param, grad, m, v, step, lr, beta1, beta2, eps):
    """One bias-corrected adaptive-moment update, in place on param/m/v."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
