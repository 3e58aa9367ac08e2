from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..errors import DataError
from .inventory import default_inventory, load_inventory
from .tokenize import tokenize

LENGTH = "length"


@dataclass(frozen=True)
class FeatureVector:
    counts: dict
    length: int | None = None

    def as_array(self, feature_names):
        row = [self.counts[f] if f != LENGTH else self.length for f in feature_names]
        return np.asarray(row, dtype=np.int64)


def featurize(tokens, inv, with_length=False):
    """Count every inventory symbol in ``tokens``.

    ``length`` is the number of non-tone tokens.
    """
    counts = dict.fromkeys(inv.symbols, 0)
    for s in tokens:
        if s not in counts:
            raise DataError(f"symbol {s!r} is not in the inventory")
        counts[s] += 1
    length = None
    if with_length:
        length = sum(n for s, n in counts.items() if s not in inv.tone_symbols)
    return FeatureVector(counts, length)


def feature_names(inv, with_length=False):
    names = list(inv.symbols)
    if with_length:
        names.append(LENGTH)
    return tuple(names)


def resolve_inventory(language=None, inventory=None):
    if inventory is None:
        if language is None:
            raise ValueError("need a language or an inventory")
        return default_inventory(language)
    if isinstance(inventory, str) or hasattr(inventory, "__fspath__"):
        return load_inventory(inventory)
    return inventory


class NameFeaturizer(TransformerMixin, BaseEstimator):
    """Transform raw name strings into symbol-count rows.

    Parameters
    ----------
    language : {"ja", "zh", "ko"}
        Selects the default inventory when ``inventory`` is None.
    inventory : path or PhonemeInventory, optional
        Custom inventory overriding the shipped one.
    with_length : bool
        Append the ``length`` column (sum of non-tone counts).
    """

    def __init__(self, language="ja", inventory=None, with_length=False):
        self.language = language
        self.inventory = inventory
        self.with_length = with_length

    def fit(self, X=None, y=None):
        self.inventory_ = resolve_inventory(self.language, self.inventory)
        self.feature_names_in_ = None
        self.n_features_out_ = len(feature_names(self.inventory_, self.with_length))
        return self

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "inventory_")
        return np.asarray(feature_names(self.inventory_, self.with_length), dtype=object)

    def tokenize(self, names):
        check_is_fitted(self, "inventory_")
        return [tokenize(n, self.inventory_) for n in names]

    def transform(self, X):
        names = self.get_feature_names_out()
        rows = [
            featurize(t, self.inventory_, self.with_length).as_array(names)
            for t in self.tokenize(X)
        ]
        if not rows:
            return np.zeros((0, len(names)), dtype=np.int64)
        return np.vstack(rows)
