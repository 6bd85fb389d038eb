"""Hot kernels for the width-N two-layer model, in numba and numpy flavors.

Shapes: a (n, c) output weights, w (n, d) input weights, X (batch, d),
Y (batch, c). The model output is the 1/n average of the per-neuron
contributions; losses are means over the batch. Loss codes: 0 = square
(summed over output coordinates), 1 = softmax cross-entropy.

Gradients returned here are plain gradients of the batch-mean loss; the
mean-field step-size scaling is applied by the callers.
"""
from __future__ import annotations

import math

import numpy as np

from . import backend
from .backend import njit


LOSS_SQUARE = 0
LOSS_XENT = 1


# ---------------------------------------------------------------------------
# numba flavor
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _act(code, h):
    if code == 0:  # sigmoid, branch avoids exp overflow
        if h >= 0.0:
            return 1.0 / (1.0 + math.exp(-h))
        e = math.exp(h)
        return e / (1.0 + e)
    elif code == 1:
        return math.tanh(h)
    elif code == 2:
        return h if h > 0.0 else 0.0
    return h


@njit(cache=True, inline="always")
def _act_grad_from_value(code, z):
    # derivative written in terms of the activation value z
    if code == 0:
        return z * (1.0 - z)
    elif code == 1:
        return 1.0 - z * z
    elif code == 2:
        return 1.0 if z > 0.0 else 0.0
    return 1.0


@njit(cache=True)
def _nb_forward(a, w, x_batch, act_code):
    bsz, d = x_batch.shape
    n, c = a.shape
    out = np.zeros((bsz, c))
    for b in range(bsz):
        for i in range(n):
            h = 0.0
            for j in range(d):
                h += x_batch[b, j] * w[i, j]
            z = _act(act_code, h)
            for k in range(c):
                out[b, k] += z * a[i, k]
        for k in range(c):
            out[b, k] /= n
    return out


@njit(cache=True, inline="always")
def _loss_row(loss_code, yhat_row, y_row):
    c = yhat_row.shape[0]
    if loss_code == 0:
        acc = 0.0
        for k in range(c):
            r = y_row[k] - yhat_row[k]
            acc += r * r
        return acc
    m = yhat_row[0]
    for k in range(1, c):
        if yhat_row[k] > m:
            m = yhat_row[k]
    lse = 0.0
    for k in range(c):
        lse += math.exp(yhat_row[k] - m)
    lse = m + math.log(lse)
    dot = 0.0
    for k in range(c):
        dot += y_row[k] * yhat_row[k]
    return lse - dot


@njit(cache=True)
def _nb_loss(a, w, x_batch, y_batch, act_code, loss_code):
    bsz = x_batch.shape[0]
    n, c = a.shape
    d = x_batch.shape[1]
    yhat = np.empty(c)
    total = 0.0
    for b in range(bsz):
        for k in range(c):
            yhat[k] = 0.0
        for i in range(n):
            h = 0.0
            for j in range(d):
                h += x_batch[b, j] * w[i, j]
            z = _act(act_code, h)
            for k in range(c):
                yhat[k] += z * a[i, k]
        for k in range(c):
            yhat[k] /= n
        total += _loss_row(loss_code, yhat, y_batch[b])
    return total / bsz


@njit(cache=True)
def _nb_loss_grad(a, w, x_batch, y_batch, act_code, loss_code):
    bsz, d = x_batch.shape
    n, c = a.shape
    z_buf = np.empty((bsz, n))
    yhat = np.empty((bsz, c))
    for b in range(bsz):
        for k in range(c):
            yhat[b, k] = 0.0
        for i in range(n):
            h = 0.0
            for j in range(d):
                h += x_batch[b, j] * w[i, j]
            z = _act(act_code, h)
            z_buf[b, i] = z
            for k in range(c):
                yhat[b, k] += z * a[i, k]
        for k in range(c):
            yhat[b, k] /= n

    # d(loss)/d(yhat), mean-over-batch convention
    dy = np.empty((bsz, c))
    total = 0.0
    for b in range(bsz):
        total += _loss_row(loss_code, yhat[b], y_batch[b])
        if loss_code == 0:
            for k in range(c):
                dy[b, k] = -2.0 * (y_batch[b, k] - yhat[b, k]) / bsz
        else:
            m = yhat[b, 0]
            for k in range(1, c):
                if yhat[b, k] > m:
                    m = yhat[b, k]
            denom = 0.0
            for k in range(c):
                denom += math.exp(yhat[b, k] - m)
            for k in range(c):
                p = math.exp(yhat[b, k] - m) / denom
                dy[b, k] = (p - y_batch[b, k]) / bsz

    grad_a = np.zeros((n, c))
    grad_w = np.zeros((n, d))
    for b in range(bsz):
        for i in range(n):
            z = z_buf[b, i]
            g = 0.0
            for k in range(c):
                grad_a[i, k] += z * dy[b, k] / n
                g += dy[b, k] * a[i, k]
            g = g / n * _act_grad_from_value(act_code, z)
            if g != 0.0:
                for j in range(d):
                    grad_w[i, j] += g * x_batch[b, j]
    return total / bsz, grad_a, grad_w


# ---------------------------------------------------------------------------
# numpy flavor
# ---------------------------------------------------------------------------

def _np_act(code, h):
    if code == 0:
        out = np.empty_like(h)
        pos = h >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-h[pos]))
        e = np.exp(h[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    if code == 1:
        return np.tanh(h)
    if code == 2:
        return np.maximum(h, 0.0)
    return h


def _np_act_grad_from_value(code, z):
    if code == 0:
        return z * (1.0 - z)
    if code == 1:
        return 1.0 - z * z
    if code == 2:
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def _np_forward(a, w, x_batch, act_code):
    z = _np_act(act_code, x_batch @ w.T)
    return (z @ a) / a.shape[0]


def _np_loss_terms(loss_code, yhat, y_batch):
    if loss_code == LOSS_SQUARE:
        r = y_batch - yhat
        loss = float(np.mean(np.sum(r * r, axis=1)))
        dy = -2.0 * r / yhat.shape[0]
        return loss, dy
    m = np.max(yhat, axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.sum(np.exp(yhat - m), axis=1))
    loss = float(np.mean(lse - np.sum(y_batch * yhat, axis=1)))
    p = np.exp(yhat - m)
    p /= np.sum(p, axis=1, keepdims=True)
    dy = (p - y_batch) / yhat.shape[0]
    return loss, dy


def _np_loss(a, w, x_batch, y_batch, act_code, loss_code):
    yhat = _np_forward(a, w, x_batch, act_code)
    loss, _ = _np_loss_terms(loss_code, yhat, y_batch)
    return loss


def _np_loss_grad(a, w, x_batch, y_batch, act_code, loss_code):
    n = a.shape[0]
    z = _np_act(act_code, x_batch @ w.T)
    yhat = (z @ a) / n
    loss, dy = _np_loss_terms(loss_code, yhat, y_batch)
    grad_a = (z.T @ dy) / n
    dh = ((dy @ a.T) / n) * _np_act_grad_from_value(act_code, z)
    grad_w = dh.T @ x_batch
    return loss, grad_a, grad_w


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def tl_forward(a, w, x_batch, act_code):
    if backend.use_numba():
        return _nb_forward(a, w, x_batch, act_code)
    return _np_forward(a, w, x_batch, act_code)


def tl_loss(a, w, x_batch, y_batch, act_code, loss_code):
    if backend.use_numba():
        return _nb_loss(a, w, x_batch, y_batch, act_code, loss_code)
    return _np_loss(a, w, x_batch, y_batch, act_code, loss_code)


def tl_loss_grad(a, w, x_batch, y_batch, act_code, loss_code):
    if backend.use_numba():
        return _nb_loss_grad(a, w, x_batch, y_batch, act_code, loss_code)
    return _np_loss_grad(a, w, x_batch, y_batch, act_code, loss_code)
