"""numba ``@njit`` kernels mirroring ``_numpy`` one-for-one.

Loops run in fixed index order, so results are reproducible bit-for-bit
on a given machine. They agree with the numpy path to rounding error,
not bitwise.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _row_softmax_xent(logits_row, label, probs):
    # writes softmax into probs, returns -log p[label]
    C = logits_row.shape[0]
    mx = logits_row[0]
    for c in range(1, C):
        if logits_row[c] > mx:
            mx = logits_row[c]
    tot = 0.0
    for c in range(C):
        probs[c] = np.exp(logits_row[c] - mx)
        tot += probs[c]
    for c in range(C):
        probs[c] /= tot
    return np.log(tot) - (logits_row[label] - mx)


@njit(cache=True)
def mean_xent(logits, y):
    m, C = logits.shape
    probs = np.empty(C)
    loss = 0.0
    for s in range(m):
        loss += _row_softmax_xent(logits[s], y[s], probs)
    return loss / m


@njit(cache=True)
def _affine(X, params, offset, n_out):
    # X @ Wblock[:d] + Wblock[d] for a row-major (d+1) x n_out block at offset
    m, d = X.shape
    out = np.empty((m, n_out))
    for s in range(m):
        for c in range(n_out):
            acc = params[offset + d * n_out + c]
            for j in range(d):
                acc += X[s, j] * params[offset + j * n_out + c]
            out[s, c] = acc
    return out


@njit(cache=True)
def _affine_backward(X, dout, grad, offset):
    m, d = X.shape
    n_out = dout.shape[1]
    for s in range(m):
        for c in range(n_out):
            g = dout[s, c]
            for j in range(d):
                grad[offset + j * n_out + c] += X[s, j] * g
            grad[offset + d * n_out + c] += g


@njit(cache=True)
def _dlogits(logits, y):
    m, C = logits.shape
    probs = np.empty(C)
    dlog = np.empty((m, C))
    loss = 0.0
    for s in range(m):
        loss += _row_softmax_xent(logits[s], y[s], probs)
        for c in range(C):
            dlog[s, c] = probs[c] / m
        dlog[s, y[s]] -= 1.0 / m
    return loss / m, dlog


@njit(cache=True)
def linear_logits(X, params, num_classes):
    return _affine(X, params, 0, num_classes)


@njit(cache=True)
def linear_loss_grad(X, y, params, num_classes):
    loss, dlog = _dlogits(_affine(X, params, 0, num_classes), y)
    grad = np.zeros(params.shape[0])
    _affine_backward(X, dlog, grad, 0)
    return loss, grad


@njit(cache=True)
def _activate(pre, act):
    out = np.empty_like(pre)
    m, H = pre.shape
    for s in range(m):
        for k in range(H):
            v = pre[s, k]
            if act == 0:
                out[s, k] = v if v > 0.0 else 0.0
            else:
                out[s, k] = np.tanh(v)
    return out


@njit(cache=True)
def mlp_logits(X, params, hidden, num_classes, act):
    d = X.shape[1]
    h = _activate(_affine(X, params, 0, hidden), act)
    return _affine(h, params, (d + 1) * hidden, num_classes)


@njit(cache=True)
def mlp_loss_grad(X, y, params, hidden, num_classes, act):
    m, d = X.shape
    off2 = (d + 1) * hidden
    pre = _affine(X, params, 0, hidden)
    h = _activate(pre, act)
    loss, dlog = _dlogits(_affine(h, params, off2, num_classes), y)

    grad = np.zeros(params.shape[0])
    _affine_backward(h, dlog, grad, off2)
    dpre = np.empty((m, hidden))
    for s in range(m):
        for k in range(hidden):
            acc = 0.0
            for c in range(num_classes):
                acc += dlog[s, c] * params[off2 + k * num_classes + c]
            if act == 0:
                dpre[s, k] = acc if pre[s, k] > 0.0 else 0.0
            else:
                dpre[s, k] = acc * (1.0 - h[s, k] * h[s, k])
    _affine_backward(X, dpre, grad, 0)
    return loss, grad


@njit(cache=True)
def quadratic_loss_grad(X, params):
    m, d = X.shape
    loss = 0.0
    mean = np.zeros(d)
    for s in range(m):
        sq = 0.0
        for j in range(d):
            diff = params[j] - X[s, j]
            sq += diff * diff
            mean[j] += X[s, j]
        loss += 0.5 * sq
    grad = np.empty(d)
    for j in range(d):
        grad[j] = params[j] - mean[j] / m
    return loss / m, grad


@njit(cache=True)
def row_norms(W):
    n, d = W.shape
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(d):
            acc += W[i, j] * W[i, j]
        out[i] = np.sqrt(acc)
    return out


@njit(cache=True)
def cosine_matrix(W, norms):
    n, d = W.shape
    S = np.empty((n, n))
    for i in range(n):
        S[i, i] = 1.0
        for k in range(i + 1, n):
            acc = 0.0
            for j in range(d):
                acc += W[i, j] * W[k, j]
            v = acc / (norms[i] * norms[k])
            if v > 1.0:
                v = 1.0
            elif v < -1.0:
                v = -1.0
            S[i, k] = v
            S[k, i] = v
    return S


@njit(cache=True)
def attention_weights(S, delta):
    n = S.shape[0]
    A = np.zeros((n, n))
    for i in range(n):
        tot = 0.0
        for j in range(n):
            s = S[i, j]
            if j == i or (s > delta and s > 0.0):
                A[i, j] = s
                tot += s
        for j in range(n):
            A[i, j] /= tot
    return A


@njit(cache=True)
def regularizer(W, S):
    n, d = W.shape
    total = 0.0
    for i in range(n):
        for k in range(n):
            sq = 0.0
            for j in range(d):
                diff = W[i, j] - W[k, j]
                sq += diff * diff
            total += S[i, k] * sq
    return total
