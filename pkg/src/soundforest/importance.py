"""Permutation importance, response-permutation p-values and class directionality.

Raw importance permutes one feature column through the fitted forest and
measures the OOB error increase.  Significance retrains forests on permuted
labels (Altmann et al. 2010) and uses the +1-smoothed estimate
``p = (1 + #{null >= observed}) / (1 + n_perm)``.
"""

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError
from .forest import SoundForestClassifier
from .rng import ALTMANN, PERMUTE, SplitMix64, derive

REPORT_THRESHOLD_PCT = 0.1


def permutation_importance(forest, X, perm_seed):
    """OOB error increase (fraction) per feature after permuting its column.

    Column ``j`` is shuffled with the ``(perm_seed, PERMUTE, j)`` stream.
    """
    X = np.asarray(X, dtype=np.float64)
    base = forest.oob_error(X)
    out = np.empty(X.shape[1])
    work = X.copy()
    for j in range(X.shape[1]):
        perm = SplitMix64.stream(perm_seed, PERMUTE, j).permutation(X.shape[0])
        work[:, j] = X[perm, j]
        out[j] = forest.oob_error(work) - base
        work[:, j] = X[:, j]
    return out


def altmann_pvalues(X, y, hp, observed, n_perm=100, num_trees=None, perm_seed=None,
                    n_jobs=None, return_null=False):
    """Permutation p-values for ``observed`` importances.

    Each of the ``n_perm`` rounds permutes ``y`` with stream
    ``(hp.seed, ALTMANN, k)``, refits with ``hp`` (``num_trees`` overrides the
    tree count to keep the refits affordable) seeded from the same stream,
    and recomputes permutation importance.
    """
    if n_perm < 1:
        raise ValidationError("n_perm must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    observed = np.asarray(observed, dtype=np.float64)
    if perm_seed is None:
        perm_seed = hp.seed
    null = np.empty((n_perm, X.shape[1]))
    for k in range(n_perm):
        stream = derive(hp.seed, ALTMANN, k)
        y_perm = y[SplitMix64(stream).permutation(len(y))]
        hp_k = hp.replace_(seed=stream, num_trees=num_trees or hp.num_trees)
        forest = SoundForestClassifier(**asdict(hp_k), n_jobs=n_jobs).fit(X, y_perm)
        null[k] = permutation_importance(forest, X, derive(perm_seed, ALTMANN, k))
    p = (1 + (null >= observed[None, :]).sum(axis=0)) / (1 + n_perm)
    return (p, null) if return_null else p


def directionality(X, y, feature_names=None):
    """Mean count per name in each class, shape ``(p, 2)`` as (pre, post)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if not ((y == 0).any() and (y == 1).any()):
        raise ValidationError("directionality needs both classes")
    return np.column_stack([X[y == 0].mean(axis=0), X[y == 1].mean(axis=0)])


@dataclass
class ImportanceReport:
    feature_names: tuple
    importance: np.ndarray
    pre_mean: np.ndarray
    post_mean: np.ndarray
    p_value: np.ndarray | None = None

    @property
    def importance_pct(self):
        return 100.0 * self.importance

    @property
    def skew(self):
        return np.where(self.post_mean > self.pre_mean, "post",
                        np.where(self.post_mean < self.pre_mean, "pre", "none"))

    def ranked(self):
        """Feature indices by decreasing importance (stable on ties)."""
        return np.argsort(-self.importance, kind="stable")

    def rows(self, threshold_pct=None):
        out = []
        for j, name in enumerate(self.feature_names):
            if threshold_pct is not None and not self.importance_pct[j] > threshold_pct:
                continue
            out.append({
                "feature": name,
                "importance_pct": float(self.importance_pct[j]),
                "p_value": None if self.p_value is None else float(self.p_value[j]),
                "pre_mean": float(self.pre_mean[j]),
                "post_mean": float(self.post_mean[j]),
                "skew": str(self.skew[j]),
            })
        return out

    def to_csv(self, threshold_pct=None):
        """Inventory-ordered CSV; ``threshold_pct`` gives the filtered table view."""
        buf = io.StringIO(newline="")
        cols = ["feature", "importance_pct", "p_value", "pre_mean", "post_mean", "skew"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["# importance_pct = OOB error increase in percentage points"])
        w.writerow(cols)
        for r in self.rows(threshold_pct):
            w.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                        for c in cols])
        return buf.getvalue()


def importance_report(forest, X, y, perm_seed, feature_names=None, altmann=0,
                      altmann_trees=None, n_jobs=None):
    """Importance, optional p-values and training-set directionality."""
    imp = permutation_importance(forest, X, perm_seed)
    p = None
    if altmann:
        p = altmann_pvalues(X, y, forest.hp_, imp, n_perm=altmann, num_trees=altmann_trees,
                            perm_seed=perm_seed, n_jobs=n_jobs)
    d = directionality(X, y)
    names = feature_names or forest.feature_names_ or tuple(f"x{j}" for j in range(X.shape[1]))
    return ImportanceReport(tuple(names), imp, d[:, 0], d[:, 1], p)
