"""Experiment designs: single forest, seed-swept forests (MRF), cross-dataset
transfer, tuned vs default comparison, human majority vote and the
class-balance regression.

Throughout, ``test_error`` is the error on held-out (or cross-dataset) rows
and ``oob_error`` is the forest's own out-of-bag error on its training rows.
"""

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .dataset import Label, split
from .errors import DataError, ValidationError
from .forest import ConfusionMatrix, Hyperparameters, SoundForestClassifier, evaluate
from .importance import importance_report
from .phonemizer import LENGTH
from .tuning import DEFAULT_TUNE_TREES, tune

log = logging.getLogger(__name__)

TIE_POLICIES = ("incorrect", "exclude", "pre", "post")


def _sd(values):
    """Sample SD (n - 1); 0.0 for a single value."""
    values = np.asarray(values, dtype=np.float64)
    return float(np.std(values, ddof=1)) if values.size > 1 else 0.0


@dataclass
class ExperimentConfig:
    with_length: bool = False
    tune: bool = True
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    n_runs: int = 9
    altmann: int = 0
    altmann_trees: int | None = None
    tune_trees: int = DEFAULT_TUNE_TREES
    grid: dict | None = None
    importance: bool = True
    tie_policy: str = "incorrect"
    n_jobs: int | None = None

    def validate(self):
        if int(self.n_runs) != self.n_runs or self.n_runs < 1:
            raise ValidationError(f"n_runs must be >= 1, got {self.n_runs}")
        if self.altmann < 0:
            raise ValidationError("altmann permutation count must be >= 0")
        if self.tie_policy not in TIE_POLICIES:
            raise ValidationError(f"tie_policy must be one of {TIE_POLICIES}")
        self.hp.validate()
        return self

    def to_dict(self):
        # n_jobs is left out: it never changes results
        d = asdict(self)
        d.pop("n_jobs")
        d["grid"] = {k: list(v) for k, v in (self.grid or {}).items()} or None
        return d


def align_features(dataset, with_length):
    """The dataset in the requested feature space (dropping length if needed)."""
    if with_length and not dataset.with_length:
        raise ValidationError(f"{dataset.provenance or 'dataset'} has no length column")
    return dataset if with_length else dataset.drop_length()


def _tag(dataset, role):
    return f"{role}:{dataset.provenance}#{dataset.digest()[:16]}"


@dataclass
class RunResult:
    seed: int
    hp: Hyperparameters
    confusion: ConfusionMatrix
    oob_error: float
    post_fraction_test: float
    train_indices: np.ndarray | None = None
    test_indices: np.ndarray | None = None
    importance: object = None
    train_tag: str = ""
    test_tag: str = ""

    @property
    def test_error(self):
        return self.confusion.error

    def to_dict(self):
        d = {
            "seed": self.seed,
            "hyperparameters": asdict(self.hp),
            "test_error": self.test_error,
            "oob_error": self.oob_error,
            "post_fraction_test": self.post_fraction_test,
            "confusion": self.confusion.to_dict(),
            "train_data": self.train_tag,
            "test_data": self.test_tag,
        }
        if self.train_indices is not None:
            d["train_indices"] = self.train_indices.tolist()
            d["test_indices"] = self.test_indices.tolist()
        if self.importance is not None:
            d["importance"] = self.importance.importance.tolist()
            if self.importance.p_value is not None:
                d["p_value"] = self.importance.p_value.tolist()
        return d


@dataclass
class MrfResult:
    kind: str
    runs: list
    feature_names: tuple
    tuning: object = None

    @property
    def errors(self):
        return np.array([r.test_error for r in self.runs])

    @property
    def mean_error(self):
        return float(np.mean(self.errors))

    @property
    def sd_error(self):
        return _sd(self.errors)

    @property
    def mean_oob_error(self):
        return float(np.mean([r.oob_error for r in self.runs]))

    @property
    def pooled_confusion(self):
        total = ConfusionMatrix()
        for r in self.runs:
            total = total + r.confusion
        return total

    def _importance_matrix(self, attr):
        reps = [r.importance for r in self.runs if r.importance is not None]
        if not reps:
            return None
        return np.vstack([getattr(rep, attr) for rep in reps])

    def importance_summary(self):
        """Per-feature mean/SD of importance (fraction) and mean directionality."""
        imp = self._importance_matrix("importance")
        if imp is None:
            return None
        pv = [r.importance.p_value for r in self.runs if r.importance is not None]
        out = {
            "mean": imp.mean(axis=0),
            "sd": np.array([_sd(imp[:, j]) for j in range(imp.shape[1])]),
            "pre_mean": self._importance_matrix("pre_mean").mean(axis=0),
            "post_mean": self._importance_matrix("post_mean").mean(axis=0),
            "p_value": None if any(p is None for p in pv) else np.vstack(pv).mean(axis=0),
        }
        return out

    def to_dict(self):
        d = {
            "kind": self.kind,
            "n_runs": len(self.runs),
            "mean_test_error": self.mean_error,
            "sd_test_error": self.sd_error,
            "mean_oob_error": self.mean_oob_error,
            "pooled_confusion": self.pooled_confusion.to_dict(),
            "runs": [r.to_dict() for r in self.runs],
        }
        if self.tuning is not None:
            d["tuned_hyperparameters"] = asdict(self.tuning.chosen)
            d["tuning_seed"] = self.tuning.seed
        return d


def _tuned_hp(X, y, config, seed):
    result = tune(X, y, config.grid, config.hp, seed=seed, num_trees=config.tune_trees,
                  n_jobs=config.n_jobs)
    return result.chosen, result


def _fit_and_score(train, test, hp, seed, config, train_idx=None, test_idx=None):
    hp = hp.replace_(seed=seed)
    train_tag, test_tag = _tag(train, "train"), _tag(test, "test")
    forest = SoundForestClassifier(**asdict(hp), n_jobs=config.n_jobs).fit(
        train.X, train.y, feature_names=train.feature_names, provenance=train_tag)
    if forest.train_provenance_ != train_tag or forest.train_size_ != len(train):
        raise AssertionError("forest provenance does not match its training data")
    confusion = evaluate(forest, test.X, test.y)
    report = None
    if config.importance:
        report = importance_report(forest, train.X, train.y, perm_seed=seed,
                                   feature_names=train.feature_names, altmann=config.altmann,
                                   altmann_trees=config.altmann_trees, n_jobs=config.n_jobs)
    run = RunResult(seed, forest.hp_, confusion, forest.oob_error_, float(np.mean(test.y == 1)),
                    train_idx, test_idx, report, train_tag, test_tag)
    return run, forest


def _split_runs(dataset, config, seeds, keep_forests=False):
    config.validate()
    ds = align_features(dataset, config.with_length)
    hp, tuning, runs, forests = config.hp, None, [], []
    for k, seed in enumerate(seeds):
        sp = split(ds, seed)
        train = ds.subset(sp.train_indices, f"train:{seed}")
        test = ds.subset(sp.test_indices, f"test:{seed}")
        if k == 0 and config.tune:
            hp, tuning = _tuned_hp(train.X, train.y, config, seed)
        run, forest = _fit_and_score(train, test, hp, seed, config,
                                     sp.train_indices, sp.test_indices)
        runs.append(run)
        if keep_forests:
            forests.append(forest)
    result = MrfResult("mrf", runs, ds.feature_names, tuning)
    return (result, forests) if keep_forests else result


def run_single(dataset, config, seed=1):
    """One split/forest with ``seed``; same as a one-run MRF starting at ``seed``."""
    result = _split_runs(dataset, config, [seed])
    result.kind = "single"
    return result


def run_mrf(dataset, config, keep_forests=False):
    """Runs ``1..n_runs``; run i seeds both its split and its forest with i.

    With tuning, hyperparameters are tuned once on run 1's training rows and
    reused for every run.
    """
    return _split_runs(dataset, config, range(1, config.n_runs + 1), keep_forests)


def run_cross(train_dataset, test_dataset, config, keep_forests=False):
    """Train on all of one dataset, test on all of the other; run i varies the forest seed."""
    config.validate()
    train = align_features(train_dataset, config.with_length)
    test = align_features(test_dataset, config.with_length)
    if train.feature_names != test.feature_names:
        raise ValidationError("training and test datasets have different feature spaces")
    hp, tuning = config.hp, None
    if config.tune:
        hp, tuning = _tuned_hp(train.X, train.y, config, 1)
    runs, forests = [], []
    for seed in range(1, config.n_runs + 1):
        run, forest = _fit_and_score(train, test, hp, seed, config)
        runs.append(run)
        if keep_forests:
            forests.append(forest)
    result = MrfResult("cross", runs, train.feature_names, tuning)
    return (result, forests) if keep_forests else result


def default_hyperparameters(config):
    """Untuned settings: sqrt(p) features, full bootstrap, leaves of size 1."""
    return Hyperparameters(num_trees=config.hp.num_trees, mtry=None, sample_fraction=1.0,
                           replace=True, min_node_size=1, seed=config.hp.seed)


def run_untuned_comparison(dataset, config, test_dataset=None):
    """``(tuned, untuned)`` results; cross-dataset when ``test_dataset`` is given."""
    untuned_cfg = ExperimentConfig(**{**_config_fields(config), "tune": False,
                                      "hp": default_hyperparameters(config)})
    if test_dataset is None:
        return run_mrf(dataset, config), run_mrf(dataset, untuned_cfg)
    return (run_cross(dataset, test_dataset, config),
            run_cross(dataset, test_dataset, untuned_cfg))


def _config_fields(config):
    return {f: getattr(config, f) for f in config.__dataclass_fields__}


# -- human responses ----------------------------------------------------

@dataclass
class HumanResponses:
    """Votes as a respondent x sample int8 matrix (-1 = missing)."""

    respondents: tuple
    samples: tuple
    votes: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        self.votes = np.asarray(self.votes, dtype=np.int8)
        self.truth = np.asarray(self.truth, dtype=np.int64)
        if self.votes.shape != (len(self.respondents), len(self.samples)):
            raise ValidationError("vote matrix shape does not match respondents x samples")
        if len(self.truth) != len(self.samples):
            raise ValidationError("one truth label per sample required")
        if not np.isin(self.votes, (-1, 0, 1)).all():
            raise ValidationError("votes must be 0, 1 or -1 (missing)")

    @classmethod
    def from_predictions(cls, samples, truth, predictions, names=None):
        """Treat each row of ``predictions`` (e.g. forests) as a respondent."""
        predictions = np.atleast_2d(np.asarray(predictions))
        names = names or tuple(f"r{i}" for i in range(len(predictions)))
        return cls(tuple(names), tuple(samples), predictions, truth)


def _read_vote(value):
    v = (value or "").strip()
    if v == "" or v.lower() in ("na", "nan", "missing", "none"):
        return -1
    return int(Label.parse(v))


def read_responses(path, truth_path):
    """Read ``respondent_id,sample_id,vote`` plus a ``sample_id,label`` sidecar."""
    truth = {}
    with Path(truth_path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"sample_id", "label"} <= set(reader.fieldnames or ()):
            raise DataError(f"{truth_path}: need sample_id,label columns")
        for row in reader:
            truth[row["sample_id"].strip()] = int(Label.parse(row["label"]))
    entries = {}
    respondents = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"respondent_id", "sample_id", "vote"} <= set(reader.fieldnames or ()):
            raise DataError(f"{path}: need respondent_id,sample_id,vote columns")
        for lineno, row in enumerate(reader, start=2):
            rid, sid = row["respondent_id"].strip(), row["sample_id"].strip()
            if sid not in truth:
                raise DataError(f"{path}:{lineno}: sample {sid!r} has no truth label")
            if (rid, sid) in entries:
                raise DataError(f"{path}:{lineno}: duplicate vote by {rid!r} on {sid!r}")
            try:
                entries[(rid, sid)] = _read_vote(row["vote"])
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if rid not in respondents:
                respondents.append(rid)
    samples = tuple(truth)
    col = {s: j for j, s in enumerate(samples)}
    votes = np.full((len(respondents), len(samples)), -1, dtype=np.int8)
    for i, rid in enumerate(respondents):
        for s in samples:
            votes[i, col[s]] = entries.get((rid, s), -1)
    return HumanResponses(tuple(respondents), samples, votes, [truth[s] for s in samples])


@dataclass
class MajorityVoteResult:
    samples: tuple
    mode: np.ndarray  # -1 tie, -2 no votes
    correct: np.ndarray
    scored: np.ndarray
    ties: tuple
    excluded: tuple
    respondent_accuracy: np.ndarray
    tie_policy: str = "incorrect"

    @property
    def n_scored(self):
        return int(self.scored.sum())

    @property
    def accuracy(self):
        return float(self.correct[self.scored].mean()) if self.n_scored else float("nan")

    @property
    def respondent_mean(self):
        acc = self.respondent_accuracy[~np.isnan(self.respondent_accuracy)]
        return float(acc.mean()) if acc.size else float("nan")

    @property
    def respondent_sd(self):
        return _sd(self.respondent_accuracy[~np.isnan(self.respondent_accuracy)])

    def to_dict(self):
        return {
            "majority_accuracy": self.accuracy,
            "n_scored": self.n_scored,
            "ties": list(self.ties),
            "excluded": list(self.excluded),
            "tie_policy": self.tie_policy,
            "respondent_mean_accuracy": self.respondent_mean,
            "respondent_sd_accuracy": self.respondent_sd,
            "n_respondents": int((~np.isnan(self.respondent_accuracy)).sum()),
        }


def majority_vote_eval(responses, tie_policy="incorrect"):
    """Per-sample mode of the votes, plus per-respondent accuracy.

    A tied sample is flagged and, by default, counted incorrect; the
    ``tie_policy`` alternatives are ``exclude``, ``pre`` and ``post``.
    Samples nobody voted on are left out with a warning.
    """
    if tie_policy not in TIE_POLICIES:
        raise ValidationError(f"tie_policy must be one of {TIE_POLICIES}")
    V = responses.votes
    if V.size == 0:
        raise ValidationError("no responses")
    n_pre = (V == 0).sum(axis=0)
    n_post = (V == 1).sum(axis=0)
    mode = np.where(n_post > n_pre, 1, 0)
    tie = n_post == n_pre
    mode[tie] = -1
    empty = (n_pre + n_post) == 0
    mode[empty] = -2
    excluded = tuple(s for s, e in zip(responses.samples, empty) if e)
    if excluded:
        log.warning("excluding %d sample(s) with no votes: %s", len(excluded), list(excluded))
    ties = tuple(s for s, t, e in zip(responses.samples, tie, empty) if t and not e)
    decided = mode.copy()
    if tie_policy in ("pre", "post"):
        decided[tie & ~empty] = 0 if tie_policy == "pre" else 1
    correct = decided == responses.truth
    scored = ~empty
    if tie_policy == "exclude":
        scored &= ~tie
    answered = (V >= 0) & scored[None, :]
    hits = ((V == responses.truth[None, :]) & answered).sum(axis=1)
    n_ans = answered.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        resp_acc = np.where(n_ans > 0, hits / np.maximum(n_ans, 1), np.nan)
    return MajorityVoteResult(responses.samples, mode, correct, scored, ties, excluded,
                              resp_acc, tie_policy)


@dataclass
class HumanComparison:
    forest_accuracy: np.ndarray
    human: MajorityVoteResult

    @property
    def mean_accuracy(self):
        return float(np.mean(self.forest_accuracy))

    @property
    def sd_accuracy(self):
        return _sd(self.forest_accuracy)

    def to_dict(self):
        return {
            "forest_accuracy": self.forest_accuracy.tolist(),
            "forest_mean_accuracy": self.mean_accuracy,
            "forest_sd_accuracy": self.sd_accuracy,
            "human": self.human.to_dict(),
        }


def human_vs_mrf(forests, samples, responses, tie_policy="incorrect"):
    """Score each forest on the survey samples next to the human majority vote.

    ``samples`` is a dataset in the forests' feature space whose ids match
    the responses' sample ids.
    """
    if not forests:
        raise ValidationError("no forests to compare")
    index = {sid: i for i, sid in enumerate(samples.ids)}
    missing = [s for s in responses.samples if s not in index]
    if missing:
        raise DataError(f"response samples missing from the sample dataset: {missing}")
    rows = np.array([index[s] for s in responses.samples], dtype=np.int64)
    y = samples.y[rows]
    if not np.array_equal(y, responses.truth):
        bad = [s for s, a, b in zip(responses.samples, y, responses.truth) if a != b]
        raise DataError(f"truth labels disagree with the sample dataset for {bad}")
    X = samples.X[rows]
    acc = np.array([float(np.mean(f.predict(X) == y)) for f in forests])
    return HumanComparison(acc, majority_vote_eval(responses, tie_policy))


# -- regression and length statistics -----------------------------------

@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r_squared: float
    f_statistic: float
    df: tuple
    p_value: float
    n: int

    def to_dict(self):
        d = asdict(self)
        d["df"] = list(self.df)
        return d


def distribution_regression(points):
    """OLS of test error on post-evolution fraction with an F-test of the slope.

    ``points`` is a sequence of ``(post_fraction_test, test_error)`` pairs.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValidationError("need at least 3 (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    n = len(x)
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0:
        raise ValidationError("x has zero variance")
    if syy == 0.0:
        raise ValidationError("y has zero variance")
    slope = float(dx @ dy) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss_res = float(resid @ resid)
    r2 = min(1.0, max(0.0, 1.0 - ss_res / syy))
    df = (1, n - 2)
    ss_reg = syy - ss_res
    if ss_res == 0.0:
        f_stat, p = float("inf"), 0.0
    else:
        f_stat = max(0.0, ss_reg / (ss_res / df[1]))
        p = float(stats.f.sf(f_stat, *df))
    return RegressionResult(slope, intercept, r2, f_stat, df, p, n)


@dataclass(frozen=True)
class LengthStats:
    label: str
    n: int
    median: float
    mean: float
    sd: float


def length_statistics(dataset):
    """Median, mean and sample SD of name length (sounds, tones excluded) per class."""
    if not dataset.with_length:
        raise ValidationError("length statistics need a dataset built with the length column")
    col = dataset.X[:, dataset.feature_names.index(LENGTH)].astype(np.float64)
    out = []
    for label in (Label.PRE, Label.POST):
        v = col[dataset.y == label]
        if v.size == 0:
            raise ValidationError(f"no {label.name.lower()} rows")
        out.append(LengthStats(label.name.lower(), int(v.size), float(np.median(v)),
                               float(v.mean()), _sd(v)))
    return out
