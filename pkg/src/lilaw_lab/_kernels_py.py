"""Pure-numpy implementation of the fused LiLAW kernel.

Mirrors ``_kernels.pyx`` exactly in signature; used when the compiled
extension is unavailable or ``LILAW_LAB_PURE=1`` is set.
"""

import numpy as np


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _sigmoid_slope(z):
    # sigmoid(z) * sigmoid(-z), i.e. W^2 / exp(z), without the 1 - sigmoid cancellation
    e = np.exp(-np.abs(z))
    return e / ((1.0 + e) * (1.0 + e))


def lilaw_terms(s_true, s_max, losses, alpha, beta, delta, use_alpha, use_beta, use_delta):
    """Per-sample weight terms and summed parameter gradients in one pass.

    Returns ``(w_alpha, w_beta, w_delta, w, g_alpha, g_beta, g_delta)``; the
    three gradients are sums over rows of ``loss_i * dW/dparam`` and are zero
    for disabled terms.
    """
    s = np.asarray(s_true, dtype=np.float64)
    m = np.asarray(s_max, dtype=np.float64)
    loss = np.asarray(losses, dtype=np.float64)

    za = alpha * s - m
    zb = beta * s - m
    zd = delta * s - m
    wa = _sigmoid(za)
    wb = _sigmoid(-zb)
    wd = np.exp(-0.5 * zd * zd)

    w = np.zeros_like(s)
    ga = gb = gd = 0.0
    if use_alpha:
        w += wa
        ga = float(np.sum(loss * _sigmoid_slope(za) * s))
    if use_beta:
        w += wb
        gb = float(-np.sum(loss * _sigmoid_slope(zb) * s))
    if use_delta:
        w += wd
        gd = float(-np.sum(loss * wd * zd * s))
    return wa, wb, wd, w, ga, gb, gd


def softmax_confidence(logits, labels, focal_gamma):
    """Row softmax plus each row's (s_true, s_max) pair and base loss.

    ``focal_gamma < 0`` selects cross-entropy; otherwise focal loss with that
    exponent. Probabilities are floored at 1e-12 inside the log.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape[0] != z.shape[0]:
        raise ValueError("one label per row required")
    if np.any((y < 0) | (y >= z.shape[1])):
        raise ValueError("label out of range")
    e = np.exp(z - z.max(axis=1, keepdims=True))
    probs = e / e.sum(axis=1, keepdims=True)
    s = probs[np.arange(z.shape[0]), y]
    m = probs.max(axis=1)
    nll = -np.log(np.maximum(s, 1e-12))
    loss = nll if focal_gamma < 0 else (1.0 - s) ** focal_gamma * nll
    return probs, s, m, loss
