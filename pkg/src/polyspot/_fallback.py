"""Pure numpy versions of the trellis kernels.

Same signatures and semantics as the compiled ``_kernels`` module. Used when
the extension was not built; also the reference side of the kernel
benchmark.
"""
import numpy as np


def _logsumexp_cols(m):
    """log-sum-exp over axis 0 that maps an all ``-inf`` column to ``-inf``."""
    peak = m.max(axis=0)
    safe = np.where(np.isfinite(peak), peak, 0.0)
    with np.errstate(divide="ignore", invalid="ignore", under="ignore"):
        total = np.exp(m - safe).sum(axis=0)
        out = np.log(total) + safe
    out[~np.isfinite(peak)] = -np.inf
    return out


def forward(log_b, log_pi, log_a, log_final):
    T, N = log_b.shape
    alpha = np.empty((T, N))
    alpha[0] = log_pi + log_b[0]
    for t in range(1, T):
        with np.errstate(invalid="ignore"):
            alpha[t] = _logsumexp_cols(alpha[t - 1][:, None] + log_a) + log_b[t]
    alpha[np.isnan(alpha)] = -np.inf
    end = alpha[T - 1] + log_final
    return alpha, float(_logsumexp_cols(end[:, None])[0])


def backward(log_b, log_a, log_final):
    T, N = log_b.shape
    beta = np.empty((T, N))
    beta[T - 1] = log_final
    for t in range(T - 2, -1, -1):
        nxt = log_b[t + 1] + beta[t + 1]
        beta[t] = _logsumexp_cols((log_a + nxt[None, :]).T)
    return beta


def viterbi(log_b, log_pi, log_a, log_final):
    T, N = log_b.shape
    delta = np.empty((T, N))
    back = np.zeros((T, N), dtype=np.int64)
    delta[0] = log_pi + log_b[0]
    for t in range(1, T):
        scores = delta[t - 1][:, None] + log_a
        back[t] = np.argmax(scores, axis=0)
        delta[t] = scores[back[t], np.arange(N)] + log_b[t]
    end = delta[T - 1] + log_final
    best = int(np.argmax(end))
    path = np.empty(T, dtype=np.int64)
    if not np.isfinite(end[best]):
        return path, -np.inf
    path[T - 1] = best
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(end[best])
