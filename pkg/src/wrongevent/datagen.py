"""Synthetic datasets and label-noise injection.

Datasets are plain containers of numpy arrays. Every generator takes an explicit
integer seed and is bitwise deterministic for a given (parameters, seed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import ParameterError, ParseError, SchemaError


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    given_labels: np.ndarray
    true_labels: np.ndarray
    n_classes: int
    has_oracle: bool = True
    noise_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        given = np.asarray(self.given_labels, dtype=np.int64)
        true = np.asarray(self.true_labels, dtype=np.int64)
        if features.ndim != 2:
            raise ParameterError(f"features must be 2-D, got shape {features.shape}")
        n = features.shape[0]
        if given.shape != (n,) or true.shape != (n,):
            raise ParameterError("features, given_labels and true_labels must have equal length")
        if self.n_classes < 1:
            raise ParameterError("n_classes must be >= 1")
        for name, arr in (("given_labels", given), ("true_labels", true)):
            if n and (arr.min() < 0 or arr.max() >= self.n_classes):
                raise ParameterError(f"{name} outside [0, {self.n_classes})")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "given_labels", given)
        object.__setattr__(self, "true_labels", true)
        object.__setattr__(self, "noise_mask", given != true)

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def noise_rate(self) -> float:
        return float(self.noise_mask.mean()) if len(self) else 0.0

    def with_given(self, given_labels) -> "Dataset":
        return Dataset(self.features, given_labels, self.true_labels, self.n_classes, self.has_oracle)


@dataclass(frozen=True)
class TransitionMatrix:
    entries: np.ndarray
    noise_rate: float

    def __post_init__(self):
        T = np.asarray(self.entries, dtype=np.float64)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise ParameterError(f"transition matrix must be square, got {T.shape}")
        if np.any(T < 0) or np.any(T > 1):
            raise ParameterError("transition entries must lie in [0, 1]")
        if np.any(np.abs(T.sum(axis=1) - 1.0) > 1e-12):
            raise ParameterError("transition rows must sum to 1")
        object.__setattr__(self, "entries", T)

    @property
    def n_classes(self) -> int:
        return self.entries.shape[0]

    def expected_flip_rate(self, class_freq=None) -> float:
        """Probability that a resampled label differs from the true one."""
        K = self.n_classes
        freq = np.full(K, 1.0 / K) if class_freq is None else np.asarray(class_freq, dtype=float)
        return float(np.sum(freq * (1.0 - np.diag(self.entries))))


def _check_rate(eta, upper_inclusive=True):
    ok = 0.0 <= eta <= 1.0 if upper_inclusive else 0.0 <= eta < 1.0
    if not ok or not np.isfinite(eta):
        raise ParameterError(f"noise rate must lie in [0, 1{']' if upper_inclusive else ')'}, got {eta}")


def make_gaussian_clusters(K, n_per_class, d, sep, spread, seed) -> Dataset:
    """Isotropic Gaussian blobs, one per class.

    Class centers sit on a circle in the first two coordinates with radius chosen
    so neighbouring centers are exactly ``sep`` apart; every other pair is further.
    """
    if K < 2 or n_per_class < 1 or d < 2:
        raise ParameterError(f"need K>=2, n_per_class>=1, d>=2; got K={K}, n={n_per_class}, d={d}")
    if not (sep > 0 and spread > 0):
        raise ParameterError("sep and spread must be positive")
    centers = cluster_centers(K, d, sep)
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(K), n_per_class)
    X = centers[labels] + spread * rng.standard_normal((K * n_per_class, d))
    perm = rng.permutation(len(labels))
    return Dataset(X[perm], labels[perm], labels[perm].copy(), K)


def cluster_centers(K, d, sep) -> np.ndarray:
    radius = sep / (2.0 * np.sin(np.pi / K))
    angles = 2.0 * np.pi * np.arange(K) / K
    centers = np.zeros((K, d))
    centers[:, 0] = radius * np.cos(angles)
    centers[:, 1] = radius * np.sin(angles)
    return centers


def symmetric_noise_matrix(K, eta) -> TransitionMatrix:
    # self-flips allowed: the diagonal keeps eta/K of the mass
    _check_rate(eta)
    if K < 2:
        raise ParameterError("K must be >= 2")
    T = np.full((K, K), eta / K)
    np.fill_diagonal(T, 1.0 - eta * (K - 1) / K)
    return TransitionMatrix(T, eta)


def asymmetric_noise_matrix(K, eta) -> TransitionMatrix:
    """Class i flips to its cyclic neighbour i+1 with probability eta."""
    _check_rate(eta)
    if K < 2:
        raise ParameterError("K must be >= 2")
    T = np.eye(K) * (1.0 - eta)
    T[np.arange(K), (np.arange(K) + 1) % K] += eta
    return TransitionMatrix(T, eta)


def apply_transition(ds: Dataset, T: TransitionMatrix, seed) -> Dataset:
    if T.n_classes != ds.n_classes:
        raise ParameterError(f"matrix has {T.n_classes} classes, dataset has {ds.n_classes}")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(T.entries, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(len(ds))
    rows = cdf[ds.true_labels]
    given = (u[:, None] >= rows).sum(axis=1)
    return ds.with_given(given)


def instance_noise(ds: Dataset, eta, seed, std=0.1) -> Dataset:
    """Instance-dependent corruption.

    Each sample gets a flip rate q_i from N(eta, std^2) truncated to [0, 1]. A fixed
    Gaussian projection per true class maps x_i to scores over the other classes;
    the softmax of those scores, scaled by q_i, is the flip distribution and the
    true class keeps 1 - q_i.
    """
    _check_rate(eta, upper_inclusive=False)
    rng = np.random.default_rng(seed)
    n, d, K = len(ds), ds.dim, ds.n_classes
    if eta == 0.0:
        q = np.zeros(n)
    else:
        a, b = (0.0 - eta) / std, (1.0 - eta) / std
        q = stats.truncnorm.rvs(a, b, loc=eta, scale=std, size=n, random_state=rng)
    q = np.clip(q, 0.0, 1.0)
    W = rng.standard_normal((K, d, K))

    probs = instance_flip_distribution(ds.features, ds.true_labels, q, W)

    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(n)
    given = (u[:, None] >= cdf).sum(axis=1)
    return ds.with_given(given)


def instance_flip_distribution(X, y, q, W):
    """Per-sample label distribution: 1 - q on the true class, q spread by softmax(x @ W[y]) elsewhere."""
    n = len(y)
    scores = np.einsum("nd,ndk->nk", X, W[y])
    scores[np.arange(n), y] = -np.inf
    scores -= scores.max(axis=1, keepdims=True)
    probs = np.exp(scores)
    probs /= probs.sum(axis=1, keepdims=True)
    probs *= q[:, None]
    probs[np.arange(n), y] = 1.0 - q
    return probs


def load_csv(path, n_classes=None) -> Dataset:
    """Read the ``f0..f{d-1},given[,true]`` format.

    Without a ``true`` column the given labels double as truth and the dataset is
    flagged as having no oracle.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        feat_cols = [h for h in header if h.startswith("f")]
        expected = [f"f{j}" for j in range(len(feat_cols))]
        if feat_cols != expected or header[: len(expected)] != expected:
            raise SchemaError(f"{path}: feature columns must be f0..f{{d-1}} in order, got {header}")
        rest = header[len(expected):]
        if rest not in (["given"], ["given", "true"]):
            raise SchemaError(f"{path}: expected 'given' and optional 'true' after features, got {rest}")
        has_true = len(rest) == 2
        d = len(expected)
        if d == 0:
            raise SchemaError(f"{path}: no feature columns")

        feats, given, true = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                feats.append([float(c) for c in row[:d]])
                given.append(int(row[d]))
                true.append(int(row[d + 1]) if has_true else int(row[d]))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None

    X = np.array(feats, dtype=np.float64).reshape(-1, d)
    g = np.array(given, dtype=np.int64)
    t = np.array(true, dtype=np.int64)
    if len(g) and (g.min() < 0 or t.min() < 0):
        raise ParseError(f"{path}: negative label")
    K = int(max(g.max(initial=-1), t.max(initial=-1)) + 1)
    if n_classes is not None:
        if K > n_classes:
            raise SchemaError(f"{path}: label {K - 1} outside n_classes={n_classes}")
        K = n_classes
    return Dataset(X, g, t, max(K, 1), has_oracle=has_true)


def save_csv(ds: Dataset, path, include_true=True):
    path = Path(path)
    header = [f"f{j}" for j in range(ds.dim)] + ["given"] + (["true"] if include_true else [])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, g, t in zip(ds.features, ds.given_labels, ds.true_labels):
            row = [format(float(v), ".17g") for v in x] + [str(int(g))]
            if include_true:
                row.append(str(int(t)))
            w.writerow(row)
