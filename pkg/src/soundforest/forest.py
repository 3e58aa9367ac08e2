"""Seeded random-forest classifier for binary pre/post labels.

Class 0 is pre-evolution and class 1 post-evolution.  Tie rules:

* a leaf with equal class counts votes 0;
* a forest (or OOB pool) with equal votes predicts the class with more
  training rows, and 0 if those are equal too.

Tree ``i`` draws all its randomness from ``derive(seed, TREES, i)`` (see
:mod:`soundforest.rng`), so a forest is bit-identical however many threads
build it.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import _kernels
from .errors import DataError, ValidationError
from .rng import TREES, derive

FORMAT = "soundforest.forest"
FORMAT_VERSION = 1
CHUNK = 256


@dataclass(frozen=True)
class Hyperparameters:
    num_trees: int = 20000
    mtry: int | None = None
    sample_fraction: float = 1.0
    replace: bool = True
    min_node_size: int = 1
    seed: int = 1

    def resolve(self, n_rows, n_features):
        """Copy with ``mtry`` filled in (default ``floor(sqrt(p))``), validated."""
        mtry = self.mtry if self.mtry is not None else max(1, int(math.isqrt(n_features)))
        hp = Hyperparameters(self.num_trees, mtry, self.sample_fraction, self.replace,
                             self.min_node_size, self.seed)
        hp.validate(n_rows, n_features)
        return hp

    def validate(self, n_rows=None, n_features=None):
        if int(self.num_trees) != self.num_trees or self.num_trees < 1:
            raise ValidationError(f"num_trees must be a positive integer, got {self.num_trees}")
        if self.mtry is not None:
            if int(self.mtry) != self.mtry or self.mtry < 1:
                raise ValidationError(f"mtry must be >= 1, got {self.mtry}")
            if n_features is not None and self.mtry > n_features:
                raise ValidationError(f"mtry={self.mtry} exceeds {n_features} features")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ValidationError(f"sample_fraction must be in (0, 1], got {self.sample_fraction}")
        if int(self.min_node_size) != self.min_node_size or self.min_node_size < 1:
            raise ValidationError(f"min_node_size must be >= 1, got {self.min_node_size}")
        if n_rows is not None and bag_size(n_rows, self.sample_fraction) < 1:
            raise ValidationError("sample_fraction * N must be at least 1")

    def replace_(self, **changes):
        return Hyperparameters(**{**asdict(self), **changes})


def bag_size(n_rows, sample_fraction):
    # round half up
    return int(math.floor(sample_fraction * n_rows + 0.5))


def gini(class_counts):
    c0, c1 = class_counts
    if c0 < 0 or c1 < 0 or c0 + c1 == 0:
        raise ValidationError("gini needs non-negative counts, not both zero")
    n = c0 + c1
    return 1.0 - (c0 * c0 + c1 * c1) / (n * n)


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    impurity_decrease: float


def _rank_encode(X):
    """Dense per-feature ranks plus the sorted distinct values."""
    n, p = X.shape
    ranks = np.empty((n, p), dtype=np.int64)
    uniq_list = []
    for j in range(p):
        u, inv = np.unique(X[:, j], return_inverse=True)
        ranks[:, j] = inv.ravel()
        uniq_list.append(u)
    kmax = max((len(u) for u in uniq_list), default=1)
    uniq = np.zeros((p, max(kmax, 1)), dtype=np.float64)
    for j, u in enumerate(uniq_list):
        uniq[j, : len(u)] = u
    n_uniq = np.array([len(u) for u in uniq_list], dtype=np.int64)
    return ranks, uniq, n_uniq


def best_split(X, y, candidate_features):
    """Highest Gini decrease split over all midpoint thresholds.

    Returns None unless some split decreases impurity strictly.  Ties go to
    the lower feature index, then the lower threshold.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValidationError("best_split needs at least one row")
    cand = np.array(sorted(set(int(c) for c in candidate_features)), dtype=np.int64)
    if cand.size == 0:
        raise ValidationError("no candidate features")
    ranks, uniq, n_uniq = _rank_encode(X)
    kmax = uniq.shape[1]
    h0 = np.zeros(kmax, np.int64)
    h1 = np.zeros(kmax, np.int64)
    samples = np.arange(len(y), dtype=np.int64)
    f, _, thr, num, den, _, _ = _kernels.node_best_split(
        ranks, uniq, n_uniq, y, samples, 0, len(y), cand, h0, h1, len(y) <= _kernels.EXACT_LIMIT)
    if f < 0:
        return None
    n = len(y)
    c1 = int(y.sum())
    c0 = n - c1
    # strictly positive decrease: num/den > (c0^2 + c1^2)/n
    if not num * n > (c0 * c0 + c1 * c1) * den:
        return None
    return Split(int(f), float(thr), (num / den) / n - (c0 * c0 + c1 * c1) / (n * n))


@dataclass
class DecisionTree:
    """One grown tree; ``left[i] + 1`` is the right child of internal node i."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    counts: np.ndarray
    gain: np.ndarray
    inbag: np.ndarray = field(repr=False)

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def bag(self):
        """Bagged training row indices as a multiset (sorted)."""
        return np.repeat(np.arange(len(self.inbag)), self.inbag.astype(np.int64))

    def is_leaf(self, node):
        return self.feature[node] < 0

    def split(self, node):
        if self.is_leaf(node):
            return None
        return Split(int(self.feature[node]), float(self.threshold[node]), float(self.gain[node]))

    def apply(self, x):
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] + (0 if x[self.feature[node]] <= self.threshold[node] else 1)
        return node

    def vote(self, x):
        c0, c1 = self.counts[self.apply(x)]
        return 1 if c1 > c0 else 0

    def structurally_equal(self, other):
        return all(
            np.array_equal(getattr(self, a), getattr(other, a))
            for a in ("feature", "threshold", "left", "counts", "inbag")
        )


def _grow_chunk(ranks, uniq, n_uniq, y, hp, seeds):
    N = ranks.shape[0]
    n_draw = bag_size(N, hp.sample_fraction)
    max_nodes = 2 * n_draw + 1
    return _kernels.grow_trees(ranks, uniq, n_uniq, y, n_draw, hp.replace, hp.mtry,
                               hp.min_node_size, seeds, max_nodes)


def train_tree(X, y, hp, tree_seed):
    """Grow one tree from ``tree_seed`` (a raw 64-bit stream seed)."""
    X, y = _check_training(X, y)
    hp = hp.resolve(*X.shape)
    ranks, uniq, n_uniq = _rank_encode(X)
    seeds = np.array([int(tree_seed) & ((1 << 64) - 1)], dtype=np.uint64)
    feature, threshold, left, counts, gain, inbag, n_nodes = _grow_chunk(
        ranks, uniq, n_uniq, y, hp, seeds)
    k = int(n_nodes[0])
    return DecisionTree(feature[0, :k].copy(), threshold[0, :k].copy(), left[0, :k].copy(),
                        counts[0, :k].copy(), gain[0, :k].copy(), inbag[0].copy())


def _check_training(X, y):
    X, y = check_X_y(X, y, dtype=np.float64)
    y = np.asarray(y)
    if not np.isin(y, (0, 1)).all():
        raise ValidationError("labels must be 0 (pre) or 1 (post)")
    return X, y.astype(np.int64)


def _decide(votes, class_counts):
    """Majority over ``(v0, v1)`` vote rows with the forest tie rule."""
    tie_class = 1 if class_counts[1] > class_counts[0] else 0
    out = np.where(votes[:, 1] > votes[:, 0], 1, 0)
    tie = votes[:, 1] == votes[:, 0]
    out[tie] = tie_class
    return out


class SoundForestClassifier(ClassifierMixin, BaseEstimator):
    """Random forest of Gini CART trees with deterministic seeded bagging.

    Parameters
    ----------
    num_trees : int
        Number of trees.
    mtry : int or None
        Features drawn (without replacement) at each node; None means
        ``floor(sqrt(n_features))``.
    sample_fraction : float
        Bag size as a fraction of the training rows (rounded half up).
    replace : bool
        Bootstrap with replacement, otherwise subsample without.
    min_node_size : int
        Nodes with at most this many bagged samples become leaves.
    seed : int
        Master seed.
    n_jobs : int or None
        Threads for growing and traversal; never changes results.
    """

    def __init__(self, num_trees=20000, mtry=None, sample_fraction=1.0, replace=True,
                 min_node_size=1, seed=1, n_jobs=None):
        self.num_trees = num_trees
        self.mtry = mtry
        self.sample_fraction = sample_fraction
        self.replace = replace
        self.min_node_size = min_node_size
        self.seed = seed
        self.n_jobs = n_jobs

    @property
    def hyperparameters(self):
        return Hyperparameters(self.num_trees, self.mtry, self.sample_fraction, self.replace,
                               self.min_node_size, self.seed)

    def _threads(self):
        limit = numba.config.NUMBA_NUM_THREADS
        if self.n_jobs is None or self.n_jobs < 1:
            return limit
        return min(int(self.n_jobs), limit)

    def fit(self, X, y, feature_names=None, provenance=None):
        X, y = _check_training(X, y)
        hp = self.hyperparameters.resolve(*X.shape)
        ranks, uniq, n_uniq = _rank_encode(X)
        seeds = np.array([derive(hp.seed, TREES, i) for i in range(hp.num_trees)],
                         dtype=np.uint64)
        parts = []
        prev = numba.get_num_threads()
        numba.set_num_threads(self._threads())
        try:
            for start in range(0, hp.num_trees, CHUNK):
                f, t, l, c, g, inbag, n_nodes = _grow_chunk(
                    ranks, uniq, n_uniq, y, hp, seeds[start:start + CHUNK])
                parts.append(_compact(f, t, l, c, g, n_nodes) + (inbag,))
        finally:
            numba.set_num_threads(prev)
        self._set_trees(*_concat(parts))
        self.hp_ = hp
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([0, 1])
        self.class_counts_ = np.bincount(y, minlength=2)
        self.train_size_ = len(y)
        self.feature_names_ = tuple(feature_names) if feature_names is not None else None
        self.train_provenance_ = provenance
        self._X_train = X
        self._y_train = y
        votes = self.oob_votes(X)
        self.oob_prediction_, self.oob_error_ = _oob_decision(votes, y, self.class_counts_)
        return self

    def _set_trees(self, feature, threshold, left, counts, gain, offsets, inbag):
        self.feature_ = feature
        self.threshold_ = threshold
        self.left_ = left
        self.leaf_counts_ = counts
        self.gain_ = gain
        self.tree_offsets_ = offsets
        self.inbag_ = inbag

    @property
    def n_trees_(self):
        return len(self.tree_offsets_) - 1

    def tree(self, i):
        check_is_fitted(self, "tree_offsets_")
        a, b = self.tree_offsets_[i], self.tree_offsets_[i + 1]
        return DecisionTree(self.feature_[a:b], self.threshold_[a:b], self.left_[a:b],
                            self.leaf_counts_[a:b], self.gain_[a:b], self.inbag_[i])

    def _arrays(self):
        return self.feature_, self.threshold_, self.left_, self.leaf_counts_, self.tree_offsets_

    def _check_X(self, X):
        check_is_fitted(self, "tree_offsets_")
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(
                f"X has {X.shape[1]} features, forest was trained on {self.n_features_in_}")
        return X

    def _run(self, kernel, *args):
        prev = numba.get_num_threads()
        numba.set_num_threads(self._threads())
        try:
            return kernel(*args)
        finally:
            numba.set_num_threads(prev)

    def predict_votes(self, X):
        X = self._check_X(X)
        return self._run(_kernels.forest_votes, X, *self._arrays())

    def tree_votes(self, X):
        X = self._check_X(X)
        return self._run(_kernels.tree_votes, X, *self._arrays())

    def predict(self, X):
        return _decide(self.predict_votes(X), self.class_counts_)

    def predict_proba(self, X):
        votes = self.predict_votes(X)
        return votes / votes.sum(axis=1, keepdims=True)

    def oob_votes(self, X=None):
        """OOB votes for the training rows, optionally with altered features."""
        if X is None:
            X = self._X_train
        X = self._check_X(X)
        if X.shape[0] != self.inbag_.shape[1]:
            raise ValidationError("OOB votes need one row per training row")
        return self._run(_kernels.oob_votes, X, *self._arrays(), self.inbag_)

    def oob_error(self, X=None):
        return _oob_decision(self.oob_votes(X), self._y_train, self.class_counts_)[1]

    # -- serialization --------------------------------------------------

    def to_dict(self):
        check_is_fitted(self, "tree_offsets_")
        trees = []
        for i in range(self.n_trees_):
            t = self.tree(i)
            trees.append({
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "counts": t.counts.tolist(),
                "gain": t.gain.tolist(),
                "bag": t.bag.tolist(),
            })
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "hyperparameters": asdict(self.hp_),
            "feature_names": list(self.feature_names_) if self.feature_names_ else None,
            "class_labels": ["pre", "post"],
            "class_counts": self.class_counts_.tolist(),
            "train_size": int(self.train_size_),
            "train_provenance": self.train_provenance_,
            "train_X": self._X_train.tolist(),
            "train_y": self._y_train.tolist(),
            "trees": trees,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT:
            raise DataError("not a serialized forest")
        if d.get("version") != FORMAT_VERSION:
            raise DataError(f"unsupported forest format version {d.get('version')}")
        hp = Hyperparameters(**d["hyperparameters"])
        est = cls(**asdict(hp))
        N = int(d["train_size"])
        feature, threshold, left, counts, gain, inbag, offsets = [], [], [], [], [], [], [0]
        for t in d["trees"]:
            feature.extend(t["feature"])
            threshold.extend(t["threshold"])
            left.extend(t["left"])
            counts.extend(t["counts"])
            gain.extend(t["gain"])
            inbag.append(np.bincount(np.asarray(t["bag"], dtype=np.int64), minlength=N))
            offsets.append(len(feature))
        est._set_trees(
            np.asarray(feature, dtype=np.int32),
            np.asarray(threshold, dtype=np.float64),
            np.asarray(left, dtype=np.int32),
            np.asarray(counts, dtype=np.int32).reshape(-1, 2),
            np.asarray(gain, dtype=np.float64),
            np.asarray(offsets, dtype=np.int64),
            np.vstack(inbag).astype(np.uint16),
        )
        est.hp_ = hp
        est._X_train = np.asarray(d["train_X"], dtype=np.float64)
        est._y_train = np.asarray(d["train_y"], dtype=np.int64)
        est.n_features_in_ = est._X_train.shape[1]
        est.classes_ = np.array([0, 1])
        est.class_counts_ = np.asarray(d["class_counts"], dtype=np.int64)
        est.train_size_ = N
        est.feature_names_ = tuple(d["feature_names"]) if d["feature_names"] else None
        est.train_provenance_ = d.get("train_provenance")
        est.oob_prediction_, est.oob_error_ = _oob_decision(
            est.oob_votes(), est._y_train, est.class_counts_)
        return est

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d)


def _compact(feature, threshold, left, counts, gain, n_nodes):
    keep = np.arange(feature.shape[1])[None, :] < n_nodes[:, None]
    offsets = np.concatenate([[0], np.cumsum(n_nodes)])
    return (feature[keep], threshold[keep], left[keep], counts[keep], gain[keep], offsets)


def _concat(parts):
    feature = np.concatenate([p[0] for p in parts])
    threshold = np.concatenate([p[1] for p in parts])
    left = np.concatenate([p[2] for p in parts])
    counts = np.concatenate([p[3] for p in parts])
    gain = np.concatenate([p[4] for p in parts])
    offsets = [np.zeros(1, dtype=np.int64)]
    base = 0
    for p in parts:
        offsets.append(p[5][1:] + base)
        base += p[5][-1]
    inbag = np.concatenate([p[6] for p in parts])
    return feature, threshold, left, counts, gain, np.concatenate(offsets).astype(np.int64), inbag


def _oob_decision(votes, y, class_counts):
    """Per-row OOB label (-1 where no tree left the row out) and error."""
    pred = _decide(votes, class_counts)
    voted = votes.sum(axis=1) > 0
    pred[~voted] = -1
    n = int(voted.sum())
    err = float((pred[voted] != y[voted]).sum() / n) if n else float("nan")
    return pred, err


# -- functional surface -------------------------------------------------

def train_forest(X, y, hp, n_jobs=None, feature_names=None, provenance=None):
    hp.validate()
    return SoundForestClassifier(**asdict(hp), n_jobs=n_jobs).fit(
        X, y, feature_names=feature_names, provenance=provenance)


def predict(forest, X):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    out = forest.predict(X.reshape(1, -1) if single else X)
    return int(out[0]) if single else out


def oob_predictions(forest):
    """``(per-row OOB label or -1, oob_error)`` for the training rows."""
    check_is_fitted(forest, "oob_error_")
    return forest.oob_prediction_.copy(), forest.oob_error_


@dataclass(frozen=True)
class ConfusionMatrix:
    """2x2 counts indexed ``[true][predicted]`` with 0 = pre, 1 = post."""

    counts: tuple = ((0, 0), (0, 0))

    @classmethod
    def from_labels(cls, y_true, y_pred):
        y_true = np.asarray(y_true, dtype=np.int64)
        y_pred = np.asarray(y_pred, dtype=np.int64)
        if y_true.shape != y_pred.shape:
            raise ValidationError("label arrays differ in length")
        m = np.zeros((2, 2), dtype=np.int64)
        np.add.at(m, (y_true, y_pred), 1)
        return cls(tuple(tuple(int(v) for v in row) for row in m))

    @property
    def array(self):
        return np.asarray(self.counts, dtype=np.int64)

    @property
    def total(self):
        return int(self.array.sum())

    @property
    def errors(self):
        return self.counts[0][1] + self.counts[1][0]

    @property
    def error(self):
        return self.errors / self.total if self.total else float("nan")

    @property
    def accuracy(self):
        return 1.0 - self.error

    def __add__(self, other):
        return ConfusionMatrix(tuple(
            tuple(a + b for a, b in zip(r1, r2)) for r1, r2 in zip(self.counts, other.counts)))

    def to_dict(self):
        (a, b), (c, d) = self.counts
        return {"pre_as_pre": a, "pre_as_post": b, "post_as_pre": c, "post_as_post": d,
                "total": self.total, "error": self.error}


def evaluate(forest, X, y):
    y = np.asarray(y)
    if len(y) == 0:
        raise ValidationError("empty evaluation set")
    return ConfusionMatrix.from_labels(y, forest.predict(X))
