# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled policy-network kernels: forward pass, backprop, adam update.

Same contract as the numpy fallback; values agree with it to float64
rounding (summation order differs, so equality is within ~1e-12 relative,
not bitwise).
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()


cdef void _linear(double[:, ::1] inp, double[:, ::1] W, double[::1] b,
                  double[:, ::1] out, bint relu) noexcept nogil:
    cdef Py_ssize_t n = inp.shape[0]
    cdef Py_ssize_t fin = W.shape[0]
    cdef Py_ssize_t fout = W.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(fout):
            acc = b[j]
            for k in range(fin):
                acc += inp[i, k] * W[k, j]
            if relu and acc < 0.0:
                acc = 0.0
            out[i, j] = acc


cdef double _softmax_rows(double[:, ::1] logits, long[::1] labels) noexcept nogil:
    # In-place row softmax. When labels are non-empty, returns the summed
    # cross-entropy -sum_i log p(label_i) in log-sum-exp form, which stays
    # finite even when the labelled probability underflows to zero.
    cdef Py_ssize_t n = logits.shape[0]
    cdef Py_ssize_t c = logits.shape[1]
    cdef Py_ssize_t i, j
    cdef double mx, s, total
    total = 0.0
    for i in range(n):
        mx = logits[i, 0]
        for j in range(1, c):
            if logits[i, j] > mx:
                mx = logits[i, j]
        s = 0.0
        for j in range(c):
            logits[i, j] -= mx
            s += exp(logits[i, j])
        if labels.shape[0] > 0:
            total += log(s) - logits[i, labels[i]]
        for j in range(c):
            logits[i, j] = exp(logits[i, j]) / s
    return total


def forward_probs(X, weights, biases):
    cdef double[:, ::1] h = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = h.shape[0]
    cdef Py_ssize_t layer_count = len(weights)
    cdef Py_ssize_t li
    cdef double[:, ::1] W
    cdef double[::1] b
    cdef double[:, ::1] out
    for li in range(layer_count):
        W = weights[li]
        b = biases[li]
        out = np.empty((n, W.shape[1]), dtype=np.float64)
        _linear(h, W, b, out, li < layer_count - 1)
        h = out
    _softmax_rows(h, np.empty(0, dtype=np.int64))
    return np.asarray(h)


def loss_and_grads(X, labels, weights, biases):
    cdef double[:, ::1] X_c = np.ascontiguousarray(X, dtype=np.float64)
    cdef long[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = X_c.shape[0]
    cdef Py_ssize_t layer_count = len(weights)
    cdef Py_ssize_t li, i, j, k

    activations = [np.asarray(X_c)]
    cdef double[:, ::1] h = X_c
    cdef double[:, ::1] W
    cdef double[::1] b
    cdef double[:, ::1] out
    for li in range(layer_count):
        W = weights[li]
        b = biases[li]
        out = np.empty((n, W.shape[1]), dtype=np.float64)
        _linear(h, W, b, out, li < layer_count - 1)
        h = out
        if li < layer_count - 1:
            activations.append(np.asarray(out))
    cdef double loss = _softmax_rows(h, y) / n

    cdef double[:, ::1] delta = np.asarray(h).copy()
    for i in range(n):
        delta[i, y[i]] -= 1.0
    for i in range(n):
        for j in range(delta.shape[1]):
            delta[i, j] /= n

    grads_w = [None] * layer_count
    grads_b = [None] * layer_count
    cdef double[:, ::1] a
    cdef double[:, ::1] gw
    cdef double[::1] gb
    cdef double[:, ::1] new_delta
    cdef double acc
    for li in range(layer_count - 1, -1, -1):
        a = activations[li]
        gw = np.empty((a.shape[1], delta.shape[1]), dtype=np.float64)
        gb = np.empty(delta.shape[1], dtype=np.float64)
        with nogil:
            for j in range(delta.shape[1]):
                acc = 0.0
                for i in range(n):
                    acc += delta[i, j]
                gb[j] = acc
            for k in range(a.shape[1]):
                for j in range(delta.shape[1]):
                    acc = 0.0
                    for i in range(n):
                        acc += a[i, k] * delta[i, j]
                    gw[k, j] = acc
        grads_w[li] = np.asarray(gw)
        grads_b[li] = np.asarray(gb)
        if li > 0:
            W = weights[li]
            new_delta = np.empty((n, W.shape[0]), dtype=np.float64)
            with nogil:
                for i in range(n):
                    for k in range(W.shape[0]):
                        acc = 0.0
                        for j in range(W.shape[1]):
                            acc += delta[i, j] * W[k, j]
                        if a[i, k] <= 0.0:
                            acc = 0.0
                        new_delta[i, k] = acc
            delta = new_delta
    return loss, grads_w, grads_b


def adam_update(param, grad, m, v, step, lr, beta1, beta2, eps):
    cdef double[::1] p = param.reshape(-1)
    cdef double[::1] g = np.ascontiguousarray(grad, dtype=np.float64).reshape(-1)
    cdef double[::1] m_ = m.reshape(-1)
    cdef double[::1] v_ = v.reshape(-1)
    cdef double c1 = 1.0 - beta1 ** step
    cdef double c2 = 1.0 - beta2 ** step
    cdef double lr_ = lr, b1 = beta1, b2 = beta2, eps_ = eps
    cdef Py_ssize_t i
    with nogil:
        for i in range(p.shape[0]):
            m_[i] = b1 * m_[i] + (1.0 - b1) * g[i]
            v_[i] = b2 * v_[i] + (1.0 - b2) * g[i] * g[i]
            p[i] -= lr_ * (m_[i] / c1) / (sqrt(v_[i] / c2) + eps_)
