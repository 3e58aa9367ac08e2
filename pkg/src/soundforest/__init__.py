"""Sound-symbolism classification of names with seeded random forests."""

import numba

# prefer OpenMP/workqueue over a possibly mismatched TBB install
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

__version__ = "0.1.0"

from .dataset import Dataset, Label, NameRecord, Stage, build_dataset, naive_baseline, split  # noqa: E402
from .errors import DataError, SoundForestError, ValidationError  # noqa: E402
from .forest import (  # noqa: E402
    ConfusionMatrix,
    Hyperparameters,
    SoundForestClassifier,
    best_split,
    evaluate,
    gini,
    train_forest,
    train_tree,
)
from .importance import altmann_pvalues, directionality, permutation_importance  # noqa: E402
from .phonemizer import Language, NameFeaturizer, default_inventory, tokenize  # noqa: E402
from .rng import SplitMix64  # noqa: E402
from .tuning import tune  # noqa: E402

__all__ = [
    "ConfusionMatrix",
    "DataError",
    "Dataset",
    "Hyperparameters",
    "Label",
    "Language",
    "NameFeaturizer",
    "NameRecord",
    "SoundForestClassifier",
    "SoundForestError",
    "SplitMix64",
    "Stage",
    "ValidationError",
    "altmann_pvalues",
    "best_split",
    "build_dataset",
    "default_inventory",
    "directionality",
    "evaluate",
    "gini",
    "naive_baseline",
    "permutation_importance",
    "split",
    "tokenize",
    "train_forest",
    "train_tree",
    "tune",
]
