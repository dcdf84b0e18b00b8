"""Numpy implementation of the row kernels.

This is the reference backend and the fallback when the compiled extension
is not available. Every exponential goes through ``_exp`` so tests can
instrument it.
"""
import numpy as np

NAME = "python"

_exp = np.exp


def stable_softmax(Z, labels):
    """Stabilized softmax statistics for logits ``Z`` (n x (C-1)).

    Returns ``(data_loss, M, alpha, H)`` where ``M`` is the row maximum
    clipped at zero, ``alpha = exp(-M) + sum_c exp(Z - M)`` and ``H`` holds
    the class probabilities of the first C-1 classes. ``labels`` are 1-based;
    a label equal to C contributes no logit term.
    """
    n, k = Z.shape
    if k:
        M = np.maximum(Z.max(axis=1), 0.0)
    else:
        M = np.zeros(n)
    E = _exp(Z - M[:, None])
    alpha = _exp(-M) + E.sum(axis=1)
    H = E / alpha[:, None]
    rows = np.flatnonzero(labels <= k)
    data_loss = float(np.sum(M + np.log(alpha)) - np.sum(Z[rows, labels[rows] - 1]))
    return data_loss, M, alpha, H


def hvp_mix(V, H):
    """``U = V*H - H * rowsum(V*H)``."""
    VH = V * H
    return VH - H * VH.sum(axis=1, keepdims=True)


def csr_matmul(A, WT):
    """``A @ WT`` for CSR ``A`` (n x p) and dense ``WT`` (p x k)."""
    return np.ascontiguousarray(A @ WT)


def csr_rmatmul(A, U):
    """``U.T @ A`` as a dense (k x p) array."""
    return np.ascontiguousarray((A.T @ U).T)


def csr_hvp(A, H, VT):
    """Hessian-vector data term ``U.T @ A`` with ``V = A @ VT``."""
    return csr_rmatmul(A, hvp_mix(csr_matmul(A, VT), H))
