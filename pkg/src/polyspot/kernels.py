"""Backend selection for the trellis kernels.

The compiled extension is used when importable. Setting
``POLYSPOT_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("POLYSPOT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _fallback


def _prep(log_b, log_pi, log_a, log_final):
    return (np.ascontiguousarray(log_b, dtype=np.float64),
            np.ascontiguousarray(log_pi, dtype=np.float64),
            np.ascontiguousarray(log_a, dtype=np.float64),
            np.ascontiguousarray(log_final, dtype=np.float64))


def forward(log_b, log_pi, log_a, log_final):
    """Log forward lattice and total log-likelihood.

    Args:
        log_b: (T, N) per-frame state log emissions.
        log_pi: (N,) initial log probabilities.
        log_a: (N, N) log transition matrix, ``-inf`` for missing arcs.
        log_final: (N,) log weight for ending in each state.

    Returns:
        ``(alpha, loglik)`` with ``alpha`` of shape (T, N).
    """
    return _impl.forward(*_prep(log_b, log_pi, log_a, log_final))


def backward(log_b, log_a, log_final):
    log_b = np.ascontiguousarray(log_b, dtype=np.float64)
    log_a = np.ascontiguousarray(log_a, dtype=np.float64)
    log_final = np.ascontiguousarray(log_final, dtype=np.float64)
    return _impl.backward(log_b, log_a, log_final)


def viterbi(log_b, log_pi, log_a, log_final):
    """Best state path and its log score; ties go to the lower state index."""
    return _impl.viterbi(*_prep(log_b, log_pi, log_a, log_final))


def using(backend):
    """Return the kernel module for ``"python"`` or ``"cython"``."""
    if backend == "python":
        return _fallback
    from . import _kernels
    return _kernels
