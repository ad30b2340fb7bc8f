"""NumPy kernels for the training hot path.

The compiled extension in _kernels_cy implements the same signatures;
backend.py picks one of the two at import time.
"""

import numpy as np


def adam_update(params, grads, m, v, t, beta1, beta2, eps, lr):
    """Adam with bias correction on flat float64 arrays; t is the post-increment step count."""
    m_new = beta1 * m + (1.0 - beta1) * grads
    v_new = beta2 * v + (1.0 - beta2) * (grads * grads)
    m_hat = m_new / (1.0 - beta1**t)
    v_hat = v_new / (1.0 - beta2**t)
    params_new = params - lr * (m_hat / (np.sqrt(v_hat) + eps))
    return params_new, m_new, v_new


def encode_batch(x, w1, b1, w2, b2, use_tanh):
    """Batch of representations: x (n, f) -> (n, d) through affine, tanh, affine."""
    z = x @ w1 + b1
    a = np.tanh(z) if use_tanh else z
    return a @ w2 + b2


def model_forward_backward(x, y, w1, b1, w2, b2, wh, use_tanh):
    """Fused forward + backward for the summed cross-entropy over one batch.

    x (n, f), y (n,) int64 head-column indices, wh (d, C) feature-major head.
    Returns (loss, probs, dw1, db1, dw2, db2, dwh); gradients are sums over
    the batch, matching a loss that is a sum rather than a mean.
    """
    n = x.shape[0]
    z1 = x @ w1 + b1
    a1 = np.tanh(z1) if use_tanh else z1
    h = a1 @ w2 + b2
    logits = h @ wh
    shifted = logits - logits.max(axis=1, keepdims=True)
    expv = np.exp(shifted)
    probs = expv / expv.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    loss = float(-np.log(np.maximum(probs[rows, y], 1e-12)).sum())
    g = probs.copy()
    g[rows, y] -= 1.0
    dwh = h.T @ g
    dh = g @ wh.T
    dw2 = a1.T @ dh
    db2 = dh.sum(axis=0)
    da1 = dh @ w2.T
    dz1 = da1 * (1.0 - a1 * a1) if use_tanh else da1
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    return loss, probs, dw1, db1, dw2, db2, dwh
