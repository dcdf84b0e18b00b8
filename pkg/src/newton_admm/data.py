"""Dataset loaders, partitioning and synthetic data.

Supported formats are LIBSVM text (sparse, 1-based feature indices), CSV
(label in the last column) and the IDX binary format used by MNIST. Files
ending in ``.gz`` are decompressed transparently.
"""
import gzip
import logging
import math
import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, InputError
from .softmax import Dataset

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _open(path, mode="rb"):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def _parse_label(token, lineno):
    try:
        value = float(token)
    except ValueError:
        raise InputError(f"line {lineno}: label {token!r} is not a number") from None
    if not value.is_integer():
        raise InputError(f"line {lineno}: label {token!r} is not an integer")
    return int(value)


def remap_labels(raw, num_classes=None):
    """Map raw integer labels onto ``1..C``.

    Labels that already lie in ``1..K`` (K >= 2) are kept, with ``C = K``;
    anything else (e.g. ``{-1, +1}`` or ``0..9``) is mapped in sorted order.
    Returns ``(labels, C, label_map)`` with ``label_map[c-1]`` the raw label
    of class ``c``.
    """
    raw = np.asarray(raw, dtype=np.int64)
    uniq = np.unique(raw)
    top = int(uniq.max())
    if uniq.min() >= 1 and max(top, num_classes or 0) >= 2:
        C = max(top, num_classes or 0)
        return raw.copy(), C, tuple(range(1, C + 1))
    C = max(len(uniq), num_classes or 0, 2)
    labels = np.searchsorted(uniq, raw) + 1
    return labels.astype(np.int64), C, tuple(int(u) for u in uniq)


def load_libsvm(path, n_features=None, num_classes=None):
    """Read a LIBSVM/svmlight text file into a CSR dataset."""
    raw_labels, indptr, indices, values = [], [0], [], []
    max_index = 0
    with _open(path, "rb") as fh:
        for lineno, raw_line in enumerate(fh, start=1):
            line = raw_line.decode("utf-8").split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            raw_labels.append(_parse_label(tokens[0], lineno))
            last = 0
            for tok in tokens[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise InputError(f"line {lineno}: malformed feature {tok!r}")
                try:
                    j = int(idx)
                    x = float(val)
                except ValueError:
                    raise InputError(f"line {lineno}: malformed feature {tok!r}") from None
                if j < 1:
                    raise InputError(f"line {lineno}: feature index {j} is not 1-based")
                if j <= last:
                    raise InputError(f"line {lineno}: feature indices must increase")
                last = j
                indices.append(j - 1)
                values.append(x)
            max_index = max(max_index, last)
            indptr.append(len(indices))
    if not raw_labels:
        raise InputError(f"{path}: no data rows")
    p = n_features or max_index
    if p < max_index:
        raise ConfigError(f"n_features={p} but file uses index {max_index}")
    p = max(p, 1)
    X = sp.csr_matrix((np.asarray(values, dtype=np.float64),
                       np.asarray(indices, dtype=np.int32),
                       np.asarray(indptr, dtype=np.int64)), shape=(len(raw_labels), p))
    labels, C, label_map = remap_labels(raw_labels, num_classes)
    return Dataset(X, labels, C, label_map, meta={"source": str(path), "format": "libsvm"})


def save_libsvm(data, path):
    """Write ``data`` as LIBSVM text; values use ``repr`` so they round-trip."""
    X = data.features if data.is_sparse else sp.csr_matrix(data.features)
    label_map = data.label_map or tuple(range(1, data.num_classes + 1))
    with open(path, "w") as fh:
        for i in range(X.shape[0]):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            feats = " ".join(f"{j + 1}:{float(v)!r}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi]))
            fh.write(f"{label_map[data.labels[i] - 1]} {feats}".rstrip() + "\n")


def load_csv(path, header=False, num_classes=None):
    """Dense CSV with the label in the last column."""
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if table.size == 0:
        raise InputError(f"{path}: no data rows")
    raw = table[:, -1]
    bad = np.flatnonzero(np.mod(raw, 1) != 0)
    if bad.size:
        raise InputError(f"{path}: row {bad[0] + 1 + int(header)} has non-integer label {raw[bad[0]]}")
    labels, C, label_map = remap_labels(raw.astype(np.int64), num_classes)
    return Dataset(table[:, :-1], labels, C, label_map, meta={"source": str(path), "format": "csv"})


def _read_idx(path, magic, what):
    with _open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise InputError(f"{path}: truncated {what} header: expected at least 8 bytes, found {len(blob)}")
    found = struct.unpack(">I", blob[:4])[0]
    if found != magic:
        raise InputError(f"{path}: bad IDX magic 0x{found:08x} for {what}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise InputError(f"{path}: truncated {what} header: expected {header} bytes, found {len(blob)}")
    dims = struct.unpack(f">{ndim}I", blob[4:header])
    expected = header + int(np.prod(dims))
    if len(blob) != expected:
        raise InputError(f"{path}: {what} file length mismatch: expected {expected} bytes, found {len(blob)}")
    return np.frombuffer(blob, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, limit=None):
    """MNIST-style IDX pair; pixels scaled to [0, 1], digits 0-9 become 1-10."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, "images")
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, "labels")
    if images.shape[0] != labels.shape[0]:
        raise InputError(f"count mismatch: {images.shape[0]} images but {labels.shape[0]} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(X, labels.astype(np.int64) + 1, 10, tuple(range(10)),
                   meta={"source": str(images_path), "format": "idx"})


def write_idx(images, labels, images_path, labels_path):
    """Write uint8 images (n x rows x cols) and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with _open(images_path, "wb") as fh:
        fh.write(struct.pack(">I", IDX_IMAGES_MAGIC))
        fh.write(struct.pack(">3I", *images.shape))
        fh.write(images.tobytes())
    with _open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def normalize_maxabs(train, *others):
    """Scale every column by its max-abs value on ``train``.

    Returns the scaled datasets in the order given. Zero columns are left
    alone. Sparsity is preserved.
    """
    X = train.features
    scale = np.asarray(abs(X).max(axis=0).todense()).ravel() if train.is_sparse else np.abs(X).max(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    out = []
    for ds in (train,) + others:
        if ds.p != train.p:
            raise ConfigError(f"cannot normalize {ds.p} columns with a {train.p}-column scale")
        if ds.is_sparse:
            Xs = ds.features @ sp.diags(1.0 / scale)
        else:
            Xs = ds.features / scale
        out.append(Dataset(Xs, ds.labels, ds.num_classes, ds.label_map, True, dict(ds.meta)))
    return out[0] if not others else tuple(out)


@dataclass
class PartitionPlan:
    """How rows are split over workers.

    ``contiguous`` gives worker i the rows starting at ``i*ceil(n/N)``;
    ``strided`` sends row j to worker ``j mod N``.
    """

    n_workers: int
    scheme: str = "contiguous"

    def __post_init__(self):
        if self.n_workers < 1:
            raise ConfigError(f"n_workers must be >= 1, got {self.n_workers}")
        if self.scheme not in ("contiguous", "strided"):
            raise ConfigError(f"unknown partition scheme {self.scheme!r}")

    def ranges(self, n):
        """Row indices per worker."""
        N = self.n_workers
        if n < N:
            raise ConfigError(f"cannot split {n} rows over {N} workers")
        if self.scheme == "strided":
            return [np.arange(i, n, N) for i in range(N)]
        chunk = math.ceil(n / N)
        if chunk * (N - 1) >= n:
            # the ceiling rule would starve the last worker; balance instead
            return [np.asarray(part) for part in np.array_split(np.arange(n), N)]
        return [np.arange(i * chunk, min((i + 1) * chunk, n)) for i in range(N)]


def partition(data, plan):
    """Disjoint, covering per-worker datasets."""
    parts = []
    for rows in plan.ranges(data.n):
        if plan.scheme == "contiguous" and rows.size:
            rows = slice(int(rows[0]), int(rows[-1]) + 1)
        parts.append(data.subset(rows))
    return parts


@dataclass
class SyntheticSpec:
    """Gaussian class clusters.

    Class centers are ``separation`` times independent random unit vectors,
    so every pair of centers is about ``separation*sqrt(2)`` apart and all
    centers have the same norm (a linear model without intercept can then
    separate them). Each row adds isotropic noise of standard deviation
    ``noise``.
    """

    n: int = 1000
    p: int = 10
    num_classes: int = 4
    separation: float = 10.0
    noise: float = 0.1
    seed: int = 0
    test_fraction: float = 0.1

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("need at least 2 classes")
        if self.num_classes > self.n:
            raise ConfigError(f"{self.num_classes} classes but only {self.n} rows")
        if self.p < 1 or self.noise < 0 or self.separation < 0:
            raise ConfigError("p must be >= 1 and noise, separation >= 0")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must be in (0, 1)")


def generate_synthetic(spec):
    """Deterministic (train, test) pair; the last ``test_fraction`` rows are test."""
    rng = np.random.default_rng(spec.seed)
    C = spec.num_classes
    directions = rng.standard_normal((C, spec.p))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    centers = spec.separation * directions
    labels = np.arange(spec.n) % C + 1
    rng.shuffle(labels)
    X = centers[labels - 1] + spec.noise * rng.standard_normal((spec.n, spec.p))
    n_test = max(1, int(round(spec.test_fraction * spec.n)))
    n_train = spec.n - n_test
    meta = {"source": "synthetic", "seed": spec.seed}
    train = Dataset(X[:n_train], labels[:n_train], C, meta=dict(meta))
    test = Dataset(X[n_train:], labels[n_train:], C, meta=dict(meta))
    return train, test
