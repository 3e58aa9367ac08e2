"""Seeded grid search over forest hyperparameters by OOB error."""

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .forest import Hyperparameters, SoundForestClassifier
from .rng import TREE_COUNT, TUNE, derive

DEFAULT_TUNE_TREES = 500


DEFAULT_GRID = {
    "mtry": ("1", "sqrt", "p/4", "p/2", "p"),
    "sample_fraction": (0.4, 0.632, 0.8, 1.0),
    "min_node_size": (1, 5, 10),
}


def _unique(values):
    out = []
    for v in values:
        if v not in out:
            out.append(v)
    return out


def _mtry_value(token, p):
    t = str(token).strip().lower()
    symbolic = {"sqrt": math.isqrt(p), "p/4": p // 4, "p/2": p // 2, "p": p}
    if t in symbolic:
        return max(1, symbolic[t])
    try:
        v = int(t)
    except ValueError:
        raise ValidationError(f"bad mtry grid value {token!r}") from None
    return v


def expand_grid(grid, p):
    """Concrete ``(mtry, sample_fraction, min_node_size)`` points in scan order.

    Scan order is mtry, then sample_fraction, then min_node_size, each in the
    order given; duplicate mtry values (small p) are dropped.
    """
    grid = {**DEFAULT_GRID, **(grid or {})}
    unknown = set(grid) - set(DEFAULT_GRID) - {"replace"}
    if unknown:
        raise ValidationError(f"unknown grid keys {sorted(unknown)}")
    mtry = _unique([_mtry_value(t, p) for t in grid["mtry"]])
    fractions = [float(v) for v in grid["sample_fraction"]]
    sizes = [int(v) for v in grid["min_node_size"]]
    if not mtry or not fractions or not sizes:
        raise ValidationError("grid must be non-empty in every dimension")
    return list(product(mtry, fractions, sizes))


def read_grid(path):
    """Parse ``key = v1, v2, ...`` lines (``#`` comments)."""
    grid = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected 'key = values'")
        key, values = (s.strip() for s in line.split("=", 1))
        grid[key] = tuple(v.strip() for v in values.split(",") if v.strip())
    return grid


@dataclass
class TuningResult:
    chosen: Hyperparameters
    trials: list = field(default_factory=list)
    seed: int = 1

    def to_csv(self):
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mtry", "sample_fraction", "replace", "min_node_size", "num_trees", "oob_error"])
        for hp, err in self.trials:
            w.writerow([hp.mtry, repr(hp.sample_fraction), hp.replace, hp.min_node_size,
                        hp.num_trees, repr(err)])
        return buf.getvalue()


def tune(X, y, grid=None, hp_base=None, seed=1, num_trees=DEFAULT_TUNE_TREES, n_jobs=None):
    """Fit one forest per grid point and keep the lowest OOB error.

    Every trial uses the same forest seed ``derive(seed, TUNE)``; fractions
    below 1 subsample without replacement, a fraction of 1 bootstraps.  Ties
    keep the earliest point in scan order.  The returned hyperparameters
    carry ``hp_base``'s tree count and seed, not the tuning ones.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    hp_base = hp_base or Hyperparameters()
    p = X.shape[1]
    points = expand_grid(grid, p)
    replace_override = None
    if grid and "replace" in grid:
        replace_override = [str(v).lower() in ("1", "true", "yes") for v in grid["replace"]]
    trial_seed = derive(seed, TUNE)
    candidates = []
    for mtry, frac, size in points:
        for rep in replace_override or [frac >= 1.0]:
            hp = hp_base.replace_(mtry=mtry, sample_fraction=frac, min_node_size=size,
                                  replace=rep, num_trees=num_trees, seed=trial_seed)
            hp.validate(len(y), p)
            candidates.append(hp)
    trials = []
    for hp in candidates:
        f = SoundForestClassifier(**asdict(hp), n_jobs=n_jobs).fit(X, y)
        trials.append((hp, f.oob_error_))
    best = min(range(len(trials)), key=lambda i: (trials[i][1], i))
    win = trials[best][0]
    chosen = hp_base.replace_(mtry=win.mtry, sample_fraction=win.sample_fraction,
                              replace=win.replace, min_node_size=win.min_node_size)
    return TuningResult(chosen, trials, seed)


@dataclass
class TreeCountResult:
    chosen: int
    mean: dict
    sd: dict
    errors: dict


def tune_num_trees(X, y, candidates, hp_base=None, n_seeds=9, n_jobs=None):
    """OOB error mean/SD over ``n_seeds`` forests per candidate tree count.

    Chooses the smallest count whose mean is within one SD (of the best
    count's runs) of the best mean.
    """
    if not candidates:
        raise ValidationError("no candidate tree counts")
    hp_base = hp_base or Hyperparameters()
    errors = {}
    for count in sorted(set(int(c) for c in candidates)):
        runs = []
        for s in range(1, n_seeds + 1):
            hp = hp_base.replace_(num_trees=count, seed=derive(s, TREE_COUNT))
            runs.append(SoundForestClassifier(**asdict(hp), n_jobs=n_jobs).fit(X, y).oob_error_)
        errors[count] = runs
    mean = {c: float(np.mean(v)) for c, v in errors.items()}
    sd = {c: float(np.std(v, ddof=1)) if len(v) > 1 else 0.0 for c, v in errors.items()}
    best = min(mean, key=lambda c: (mean[c], c))
    chosen = min(c for c in mean if mean[c] <= mean[best] + sd[best])
    return TreeCountResult(chosen, mean, sd, errors)
