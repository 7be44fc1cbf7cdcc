"""Pure-numpy kernels.

Every function here has a twin with the same signature in ``_numba``.
Parameter layouts are row-major flat vectors:

* linear: ``(input_dim + 1) x num_classes``; the last row is the bias.
* mlp: first block ``(input_dim + 1) x hidden`` then ``(hidden + 1) x num_classes``.

Activation codes: 0 = relu, 1 = tanh.
"""

import numpy as np


def _xent_and_dlogits(logits, y):
    m = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    tot = ez.sum(axis=1)
    rows = np.arange(m)
    loss = float(np.mean(np.log(tot) - z[rows, y]))
    dlogits = ez / tot[:, None]
    dlogits[rows, y] -= 1.0
    dlogits /= m
    return loss, dlogits


def mean_xent(logits, y):
    z = logits - logits.max(axis=1, keepdims=True)
    tot = np.exp(z).sum(axis=1)
    return float(np.mean(np.log(tot) - z[np.arange(logits.shape[0]), y]))


def linear_logits(X, params, num_classes):
    d = X.shape[1]
    W = params.reshape(d + 1, num_classes)
    return X @ W[:d] + W[d]


def linear_loss_grad(X, y, params, num_classes):
    d = X.shape[1]
    loss, dlog = _xent_and_dlogits(linear_logits(X, params, num_classes), y)
    grad = np.empty((d + 1, num_classes))
    grad[:d] = X.T @ dlog
    grad[d] = dlog.sum(axis=0)
    return loss, grad.ravel()


def _split_mlp(params, d, hidden, num_classes):
    n1 = (d + 1) * hidden
    W1 = params[:n1].reshape(d + 1, hidden)
    W2 = params[n1:].reshape(hidden + 1, num_classes)
    return W1, W2


def _activate(pre, act):
    if act == 0:
        return np.maximum(pre, 0.0)
    return np.tanh(pre)


def mlp_logits(X, params, hidden, num_classes, act):
    d = X.shape[1]
    W1, W2 = _split_mlp(params, d, hidden, num_classes)
    h = _activate(X @ W1[:d] + W1[d], act)
    return h @ W2[:hidden] + W2[hidden]


def mlp_loss_grad(X, y, params, hidden, num_classes, act):
    d = X.shape[1]
    W1, W2 = _split_mlp(params, d, hidden, num_classes)
    pre = X @ W1[:d] + W1[d]
    h = _activate(pre, act)
    loss, dlog = _xent_and_dlogits(h @ W2[:hidden] + W2[hidden], y)

    g2 = np.empty_like(W2)
    g2[:hidden] = h.T @ dlog
    g2[hidden] = dlog.sum(axis=0)
    dh = dlog @ W2[:hidden].T
    if act == 0:
        dpre = dh * (pre > 0.0)
    else:
        dpre = dh * (1.0 - h * h)
    g1 = np.empty_like(W1)
    g1[:d] = X.T @ dpre
    g1[d] = dpre.sum(axis=0)
    return loss, np.concatenate((g1.ravel(), g2.ravel()))


def quadratic_loss_grad(X, params):
    # mean_s 1/2 ||w - x_s||^2, gradient w - mean(x)
    diff = params[None, :] - X
    loss = 0.5 * float(np.mean(np.einsum("ij,ij->i", diff, diff)))
    return loss, params - X.mean(axis=0)


def row_norms(W):
    return np.sqrt(np.einsum("ij,ij->i", W, W))


def cosine_matrix(W, norms):
    S = (W @ W.T) / np.outer(norms, norms)
    np.clip(S, -1.0, 1.0, out=S)
    # mirror the upper triangle so S is exactly symmetric
    upper = np.triu(S, 1)
    S = upper + upper.T
    np.fill_diagonal(S, 1.0)
    return S


def attention_weights(S, delta):
    n = S.shape[0]
    keep = (S > delta) & (S > 0.0)
    keep[np.arange(n), np.arange(n)] = True
    A = np.where(keep, S, 0.0)
    A /= A.sum(axis=1, keepdims=True)
    return A


def regularizer(W, S):
    total = 0.0
    for i in range(W.shape[0]):
        diff = W[i] - W
        total += float(S[i] @ np.einsum("ij,ij->i", diff, diff))
    return total
