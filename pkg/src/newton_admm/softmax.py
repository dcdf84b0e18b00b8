"""Softmax cross-entropy model with a reference class.

Weights are a flat vector of length ``d = (C-1)*p``; block ``c`` (0-based
here) occupies ``w[c*p:(c+1)*p]``. Class ``C`` is the reference class whose
logit is fixed at zero. All exponentials are stabilized by subtracting the
row maximum clipped at zero, so every exponent is non-positive.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ConfigError, InputError


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with 1-based integer labels.

    ``features`` is a dense C-contiguous float64 array or a CSR matrix.
    ``label_map[c-1]`` is the raw label that class ``c`` came from, when the
    loader remapped labels.
    """

    features: object
    labels: np.ndarray
    num_classes: int
    label_map: tuple = None
    normalized: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = self.features
        if sp.issparse(X):
            X = sp.csr_matrix(X, dtype=np.float64)
            X.sum_duplicates()
            X.sort_indices()
            values = X.data
        else:
            X = np.array(X, dtype=np.float64, order="C", copy=True)
            if X.ndim != 2:
                raise ConfigError(f"features must be 2-D, got shape {X.shape}")
            X.setflags(write=False)
            values = X
        if not np.all(np.isfinite(values)):
            raise InputError("features contain NaN or infinite values")
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ConfigError(f"{y.shape[0] if y.ndim else 0} labels for {X.shape[0]} rows")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.mod(y, 1) == 0):
                raise InputError("labels must be integers")
        y = np.array(y, dtype=np.int64)
        y.setflags(write=False)
        C = int(self.num_classes)
        if C < 2:
            raise ConfigError(f"need at least 2 classes, got {C}")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ConfigError(f"empty dataset of shape {X.shape}")
        if y.min() < 1 or y.max() > C:
            raise InputError(f"labels must lie in 1..{C}, found {y.min()}..{y.max()}")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "num_classes", C)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]

    @property
    def d(self):
        return (self.num_classes - 1) * self.p

    @property
    def is_sparse(self):
        return sp.issparse(self.features)

    def subset(self, rows):
        """Dataset restricted to ``rows`` (slice or index array)."""
        X = self.features[rows]
        return Dataset(X, self.labels[rows], self.num_classes, self.label_map,
                       self.normalized, dict(self.meta))

    def to_dense(self):
        if not self.is_sparse:
            return self
        return Dataset(self.features.toarray(), self.labels, self.num_classes,
                       self.label_map, self.normalized, dict(self.meta))

    def to_sparse(self):
        if self.is_sparse:
            return self
        return Dataset(sp.csr_matrix(self.features), self.labels, self.num_classes,
                       self.label_map, self.normalized, dict(self.meta))


@dataclass(frozen=True)
class StableExpCache:
    """Per-row stabilization terms and probabilities at one weight vector.

    ``max_logit`` is M(a) >= 0, ``normalizer`` is alpha(a) >= 1, ``probs``
    the n x (C-1) probabilities of the non-reference classes, ``logits`` the
    n x (C-1) inner products and ``data_loss`` the unregularized loss.
    """

    max_logit: np.ndarray
    normalizer: np.ndarray
    probs: np.ndarray
    logits: np.ndarray
    data_loss: float


def weight_blocks(w, num_classes, p):
    """View ``w`` as a (C-1) x p matrix (row c is the weight of class c+1)."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != ((num_classes - 1) * p,):
        raise ConfigError(
            f"weights of shape {w.shape} do not match d=(C-1)*p={(num_classes - 1) * p}")
    return w.reshape(num_classes - 1, p)


def _check_lambda(lam):
    if lam < 0:
        raise ConfigError(f"regularization must be non-negative, got {lam}")


def _times_blocks_t(data, B):
    """``A @ B.T`` for a (C-1) x p block matrix ``B``."""
    if data.is_sparse:
        return kernels.active().csr_matmul(data.features, np.ascontiguousarray(B.T))
    return np.ascontiguousarray(data.features @ B.T)


def _rmatmul(data, U):
    """``U.T @ A`` as a (C-1) x p array."""
    if data.is_sparse:
        return kernels.active().csr_rmatmul(data.features, U)
    return U.T @ data.features


def logits(data, w):
    return _times_blocks_t(data, weight_blocks(w, data.num_classes, data.p))


def stable_cache(data, w):
    Z = logits(data, w)
    data_loss, M, alpha, H = kernels.active().stable_softmax(Z, data.labels)
    return StableExpCache(M, alpha, H, Z, data_loss)


def loss(data, w, lam=0.0):
    """Cross-entropy summed over rows plus ``lam/2 * ||w||^2``."""
    _check_lambda(lam)
    w = np.asarray(w, dtype=np.float64)
    return stable_cache(data, w).data_loss + 0.5 * lam * float(w @ w)


def _gradient_from_cache(data, w, cache, lam):
    R = cache.probs.copy()
    k = data.num_classes - 1
    rows = np.flatnonzero(data.labels <= k)
    R[rows, data.labels[rows] - 1] -= 1.0
    G = _rmatmul(data, R).ravel()
    if lam:
        G = G + lam * w
    return G


def gradient(data, w, lam=0.0):
    """Block c is ``sum_i (h_ic - 1[b_i = c]) a_i + lam * w_c``."""
    _check_lambda(lam)
    w = np.asarray(w, dtype=np.float64)
    return _gradient_from_cache(data, w, stable_cache(data, w), lam)


def loss_and_gradient(data, w, lam=0.0):
    _check_lambda(lam)
    w = np.asarray(w, dtype=np.float64)
    cache = stable_cache(data, w)
    value = cache.data_loss + 0.5 * lam * float(w @ w)
    return value, _gradient_from_cache(data, w, cache, lam)


def hessian_vec_cached(data, probs, v, lam=0.0):
    """Hessian-vector product given the probability matrix at the current w.

    Computes V = A v-blocks, U = V*W - W*((V*W) e) e^T and returns
    vec(A^T U) + lam v without forming the Hessian.
    """
    v = np.asarray(v, dtype=np.float64)
    Vb = weight_blocks(v, data.num_classes, data.p)
    backend = kernels.active()
    if data.is_sparse:
        out = backend.csr_hvp(data.features, probs, np.ascontiguousarray(Vb.T))
    else:
        V = np.ascontiguousarray(data.features @ Vb.T)
        out = backend.hvp_mix(V, probs).T @ data.features
    out = out.ravel()
    if lam:
        out = out + lam * v
    return out


def hessian_vec(data, w, v, lam=0.0):
    _check_lambda(lam)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (data.d,):
        raise ConfigError(f"vector of shape {v.shape} does not match d={data.d}")
    return hessian_vec_cached(data, stable_cache(data, w).probs, v, lam)


def probabilities(data, w):
    """n x C class probabilities; the last column is the reference class."""
    cache = stable_cache(data, w)
    last = np.exp(-cache.max_logit) / cache.normalizer
    return np.column_stack([cache.probs, last])


def predict(data, w):
    """Most probable class per row (1-based); ties go to the smaller index."""
    return np.argmax(probabilities(data, w), axis=1) + 1


def accuracy(predicted, truth):
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ConfigError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    if predicted.size == 0:
        raise ConfigError("accuracy of an empty label vector is undefined")
    return float(np.mean(predicted == truth))


class SoftmaxObjective:
    """Regularized softmax loss as an objective for the Newton and L-BFGS solvers.

    ``hessian_operator`` computes the probability matrix once per point and
    reuses it for every product, which is what CG needs.
    """

    def __init__(self, data, lam=0.0):
        _check_lambda(lam)
        self.data = data
        self.lam = float(lam)
        self.dim = data.d

    def value(self, x):
        return loss(self.data, x, self.lam)

    def gradient(self, x):
        return gradient(self.data, x, self.lam)

    def value_and_gradient(self, x):
        return loss_and_gradient(self.data, x, self.lam)

    def hvp(self, x, v):
        return hessian_vec(self.data, x, v, self.lam)

    def hessian_operator(self, x):
        probs = stable_cache(self.data, x).probs
        data, lam = self.data, self.lam
        return lambda v: hessian_vec_cached(data, probs, v, lam)
