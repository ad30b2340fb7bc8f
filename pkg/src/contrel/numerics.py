"""Dense vector/matrix ops, stable softmax cross-entropy with analytic
gradients, and Adam with explicit per-parameter state.

Matrices are 2-d float64 numpy arrays and vectors are 1-d. Classifier weights
are stored feature-major (d x C), so the logit vector is ``h @ W``. Every
operation here is a pure function of its inputs; optimizer state is passed in
and returned rather than mutated, which keeps values safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend

PROB_FLOOR = 1e-12


@dataclass
class AdamState:
    """First/second-moment accumulators plus the step counter for one parameter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam_state(param: np.ndarray, beta1: float = 0.9, beta2: float = 0.999,
                    epsilon: float = 1e-8) -> AdamState:
    """Zeroed Adam state shaped like ``param``."""
    return AdamState(
        m=np.zeros_like(param, dtype=np.float64),
        v=np.zeros_like(param, dtype=np.float64),
        t=0,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def matvec(w: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Logits of a feature-major weight matrix: out[j] = sum_i w[i, j] * h[i]."""
    w = np.asarray(w, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if w.ndim != 2 or h.ndim != 1:
        raise ValueError("matvec expects a 2-d matrix and a 1-d vector")
    if w.shape[0] != h.shape[0]:
        raise ValueError(f"matrix has {w.shape[0]} rows but vector has dim {h.shape[0]}")
    return h @ w


def softmax(logits: np.ndarray) -> np.ndarray:
    """Probability distribution over logits, max-subtracted for overflow safety."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size == 0:
        raise ValueError("softmax needs a non-empty 1-d vector")
    if not np.all(np.isfinite(logits)):
        raise ValueError("softmax input must be finite")
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def xent_loss(probs: np.ndarray, label: int) -> float:
    """-log(probs[label]), floored at PROB_FLOOR so the loss stays finite."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < probs.shape[0]:
        raise ValueError(f"label {label} out of range for {probs.shape[0]} classes")
    return float(-np.log(max(float(probs[label]), PROB_FLOOR)))


def softmax_xent_grad(logits: np.ndarray, label: int) -> np.ndarray:
    """Gradient of -log softmax(logits)[label] w.r.t. the logits: probs - onehot."""
    g = softmax(logits)
    if not 0 <= label < g.shape[0]:
        raise ValueError(f"label {label} out of range for {g.shape[0]} classes")
    g[label] -= 1.0
    return g


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              lr: float) -> tuple[np.ndarray, AdamState]:
    """One Adam update at learning rate ``lr``; returns (new_params, new_state).

    Inputs are left untouched. lr == 0 keeps the parameters bit-identical
    while the moments and step counter still advance.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ValueError(f"params shape {params.shape} != grads shape {grads.shape}")
    if state.m.shape != params.shape or state.v.shape != params.shape:
        raise ValueError(f"optimizer state shape {state.m.shape} != params shape {params.shape}")
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    t = state.t + 1
    flat_p = np.ascontiguousarray(params.reshape(-1))
    flat_g = np.ascontiguousarray(grads.reshape(-1))
    flat_m = np.ascontiguousarray(state.m.reshape(-1))
    flat_v = np.ascontiguousarray(state.v.reshape(-1))
    new_p, new_m, new_v = backend.kernels.adam_update(
        flat_p, flat_g, flat_m, flat_v, t, state.beta1, state.beta2, state.epsilon, lr
    )
    if lr == 0.0:
        new_p = flat_p.copy()
    new_state = AdamState(
        m=np.asarray(new_m).reshape(params.shape),
        v=np.asarray(new_v).reshape(params.shape),
        t=t,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )
    return np.asarray(new_p).reshape(params.shape), new_state


def finite_diff_check(loss_fn, at: np.ndarray, analytic: np.ndarray, eps: float) -> float:
    """Max relative gap between central differences of ``loss_fn`` and ``analytic``.

    Probes one entry at a time; relative error uses |analytic| + 1e-8 in the
    denominator. Raises if the loss goes non-finite while probing.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    at = np.array(at, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != at.shape:
        raise ValueError(f"analytic shape {analytic.shape} != parameter shape {at.shape}")
    flat = at.reshape(-1)
    aflat = analytic.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        lp = float(loss_fn(at))
        flat[i] = orig - eps
        lm = float(loss_fn(at))
        flat[i] = orig
        if not (np.isfinite(lp) and np.isfinite(lm)):
            raise ValueError("loss became non-finite while probing")
        numeric = (lp - lm) / (2.0 * eps)
        err = abs(numeric - aflat[i]) / (abs(aflat[i]) + 1e-8)
        if err > worst:
            worst = err
    return worst
