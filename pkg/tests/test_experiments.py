import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from soundforest.dataset import Dataset
from soundforest.errors import DataError, ValidationError
from soundforest.experiments import (
    ExperimentConfig,
    HumanResponses,
    align_features,
    default_hyperparameters,
    distribution_regression,
    human_vs_mrf,
    length_statistics,
    majority_vote_eval,
    read_responses,
    run_cross,
    run_mrf,
    run_single,
    run_untuned_comparison,
)
from soundforest.forest import Hyperparameters, SoundForestClassifier
from soundforest.phonemizer import LENGTH


def toy(n=60, seed=0, provenance="toy"):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 3, size=(n, 5))
    y = (X[:, 0] + rng.integers(0, 2, n) > 1).astype(int)
    length = X.sum(axis=1) + 2 * y
    X = np.column_stack([X, length])
    return Dataset(("a", "b", "c", "d", "e", LENGTH), X, y, provenance=provenance)


def cfg(**kw):
    base = dict(tune=False, hp=Hyperparameters(num_trees=25), n_runs=3)
    base.update(kw)
    return ExperimentConfig(**base)


# -- regression ------------------------------------------------------------

def test_regression_hand_example():
    r = distribution_regression([(1, 1), (2, 2), (3, 2)])
    assert r.slope == pytest.approx(0.5, abs=1e-9)
    assert r.intercept == pytest.approx(2 / 3, abs=1e-9)
    assert r.r_squared == pytest.approx(0.75, abs=1e-9)
    assert r.f_statistic == pytest.approx(3.0, abs=1e-9)
    assert r.df == (1, 1)
    assert r.p_value == pytest.approx(stats.f.sf(3.0, 1, 1), abs=1e-12)


def test_regression_perfect_fit_and_degenerate():
    r = distribution_regression([(0.1, 1.2), (0.4, 1.8), (0.7, 2.4)])
    assert r.r_squared == pytest.approx(1.0, abs=1e-12) and r.p_value < 1e-12
    with pytest.raises(ValidationError):
        distribution_regression([(0.5, 0.1), (0.5, 0.2), (0.5, 0.3)])
    with pytest.raises(ValidationError):
        distribution_regression([(0.1, 0.1), (0.2, 0.2)])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=3, max_size=20))
def test_regression_matches_linregress(points):
    pts = np.array(points)
    if np.ptp(pts[:, 0]) < 1e-6 or np.ptp(pts[:, 1]) < 1e-6:
        return
    ref = stats.linregress(pts[:, 0], pts[:, 1])
    r = distribution_regression(points)
    assert r.slope == pytest.approx(ref.slope, rel=1e-6, abs=1e-9)
    assert r.r_squared == pytest.approx(ref.rvalue ** 2, abs=1e-9)
    if len(points) > 2 and r.r_squared < 1 - 1e-9:
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-9)


# -- forest experiments -----------------------------------------------------

def test_mrf_summary_recomputable():
    res = run_mrf(toy(), cfg(n_runs=4))
    errs = [r.confusion.error for r in res.runs]
    assert res.mean_error == pytest.approx(np.mean(errs), abs=1e-12)
    assert res.sd_error == pytest.approx(np.std(errs, ddof=1), abs=1e-12)
    assert [r.seed for r in res.runs] == [1, 2, 3, 4]
    assert res.pooled_confusion.total == sum(len(r.test_indices) for r in res.runs)
    for r in res.runs:
        assert len(r.train_indices) == 40 and len(r.test_indices) == 20
        assert r.train_tag.startswith("train:") and r.test_tag.startswith("test:")
    assert res.feature_names == ("a", "b", "c", "d", "e")


def test_mrf_one_run_equals_single():
    ds = toy()
    a = run_mrf(ds, cfg(n_runs=1, tune=True, tune_trees=10, grid={"mtry": ("1", "p")}))
    b = run_single(ds, cfg(n_runs=1, tune=True, tune_trees=10, grid={"mtry": ("1", "p")}))
    da, db = a.to_dict(), b.to_dict()
    da.pop("kind"), db.pop("kind")
    assert da == db


def test_mrf_deterministic_and_length_toggle():
    ds = toy()
    a = run_mrf(ds, cfg(with_length=True)).to_dict()
    b = run_mrf(ds, cfg(with_length=True)).to_dict()
    assert a == b
    res = run_mrf(ds, cfg(with_length=True))
    assert LENGTH in res.feature_names
    with pytest.raises(ValidationError):
        run_mrf(ds.drop_length(), cfg(with_length=True))
    assert align_features(ds, False).feature_names == ("a", "b", "c", "d", "e")


def test_config_validation():
    with pytest.raises(ValidationError):
        run_mrf(toy(), cfg(n_runs=0))
    with pytest.raises(ValidationError):
        cfg(tie_policy="coin").validate()
    assert "n_jobs" not in cfg().to_dict()


def test_untuned_with_default_grid_matches_tuned():
    ds = toy()
    c = cfg(hp=Hyperparameters(num_trees=25), tune=True, tune_trees=10,
            grid={"mtry": ("sqrt",), "sample_fraction": (1.0,), "min_node_size": (1,)})
    tuned, untuned = run_untuned_comparison(ds, c)
    assert tuned.errors.tolist() == untuned.errors.tolist()
    d = default_hyperparameters(c)
    assert (d.mtry, d.sample_fraction, d.replace, d.min_node_size) == (None, 1.0, True, 1)


def test_cross_dataset():
    train, test = toy(seed=1, provenance="A"), toy(seed=2, provenance="B")
    res = run_cross(train, test, cfg())
    assert res.kind == "cross" and len(res.runs) == 3
    assert all(r.train_tag.startswith("train:A") and r.test_tag.startswith("test:B")
               for r in res.runs)
    assert all(r.confusion.total == len(test) for r in res.runs)
    # memorising the training rows is never worse than held-out data
    self_res = run_cross(train, train, cfg(hp=Hyperparameters(num_trees=25, sample_fraction=1.0,
                                                              replace=True, min_node_size=1)))
    assert self_res.mean_error <= res.mean_error
    other = Dataset(("a", "b"), np.zeros((4, 2)), [0, 1, 0, 1])
    with pytest.raises(ValidationError):
        run_cross(train.drop_length(), other, cfg())


def test_tiny_dataset_end_to_end():
    ds = Dataset(("a", "b"), [[0, 1], [1, 0], [0, 1], [1, 0], [1, 1], [0, 0]], [0, 1, 0, 1, 1, 0])
    res = run_mrf(ds, cfg(n_runs=2, hp=Hyperparameters(num_trees=5)))
    assert len(res.runs) == 2
    assert 0.0 <= res.mean_error <= 1.0


def test_importance_summary():
    res = run_mrf(toy(), cfg(n_runs=3))
    s = res.importance_summary()
    imp = np.vstack([r.importance.importance for r in res.runs])
    assert np.allclose(s["mean"], imp.mean(axis=0), atol=1e-12)
    assert s["p_value"] is None
    assert run_mrf(toy(), cfg(importance=False)).importance_summary() is None


# -- human responses ------------------------------------------------------

def responses(votes, truth):
    votes = np.asarray(votes)
    return HumanResponses(tuple(f"r{i}" for i in range(votes.shape[0])),
                          tuple(f"s{j}" for j in range(votes.shape[1])), votes, truth)


def test_majority_vote_tie_and_policies():
    r = responses([[0, 1, 1], [1, 1, 0]], [0, 1, 1])
    res = majority_vote_eval(r)
    assert res.mode.tolist() == [-1, 1, -1]
    assert res.ties == ("s0", "s2")
    assert res.correct.tolist() == [False, True, False]
    assert res.accuracy == pytest.approx(1 / 3)
    assert majority_vote_eval(r, "exclude").accuracy == 1.0
    assert majority_vote_eval(r, "pre").accuracy == pytest.approx(2 / 3)
    assert majority_vote_eval(r, "post").accuracy == pytest.approx(2 / 3)
    assert res.respondent_accuracy.tolist() == [1.0, 1 / 3]


def test_single_correct_respondent():
    res = majority_vote_eval(responses([[0, 1, 1, 0]], [0, 1, 1, 0]))
    assert res.accuracy == 1.0 and res.respondent_mean == 1.0 and res.respondent_sd == 0.0


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_majority_vote_invariant_to_duplication(data):
    n_r = data.draw(st.integers(1, 5))
    n_s = data.draw(st.integers(1, 6))
    votes = np.array(data.draw(st.lists(st.lists(st.sampled_from([-1, 0, 1]), min_size=n_s,
                                                 max_size=n_s), min_size=n_r, max_size=n_r)))
    truth = data.draw(st.lists(st.integers(0, 1), min_size=n_s, max_size=n_s))
    a = majority_vote_eval(responses(votes, truth))
    b = majority_vote_eval(responses(np.vstack([votes, votes]), truth))
    assert a.mode.tolist() == b.mode.tolist()
    assert a.correct.tolist() == b.correct.tolist()


def test_empty_samples_excluded(caplog):
    r = responses([[0, -1], [0, -1]], [0, 1])
    with caplog.at_level(logging.WARNING):
        res = majority_vote_eval(r)
    assert res.excluded == ("s1",) and res.n_scored == 1 and res.accuracy == 1.0
    assert "no votes" in caplog.text


def test_read_responses(tmp_path):
    truth = tmp_path / "truth.csv"
    truth.write_text("sample_id,label\na,pre\nb,post\n")
    resp = tmp_path / "resp.csv"
    resp.write_text("respondent_id,sample_id,vote\n1,a,pre\n1,b,1\n2,a,post\n")
    r = read_responses(resp, truth)
    assert r.respondents == ("1", "2") and r.samples == ("a", "b")
    assert r.votes.tolist() == [[0, 1], [1, -1]]
    resp.write_text("respondent_id,sample_id,vote\n1,a,pre\n1,a,post\n")
    with pytest.raises(DataError, match="duplicate"):
        read_responses(resp, truth)
    resp.write_text("respondent_id,sample_id,vote\n1,z,pre\n")
    with pytest.raises(DataError, match="no truth"):
        read_responses(resp, truth)


def test_human_vs_mrf_consistency():
    ds = toy()
    forests = [SoundForestClassifier(num_trees=15, seed=s).fit(ds.X, ds.y) for s in (1, 2, 3)]
    preds = np.vstack([f.predict(ds.X) for f in forests])
    r = HumanResponses.from_predictions(ds.ids, ds.y, preds)
    cmp = human_vs_mrf(forests, ds, r)
    per_respondent = majority_vote_eval(r).respondent_accuracy
    assert np.allclose(cmp.forest_accuracy, per_respondent)
    # three forests never tie, so the majority equals the ensemble-of-forests vote
    maj = (preds.sum(axis=0) >= 2).astype(int)
    assert cmp.human.accuracy == pytest.approx(np.mean(maj == ds.y))
    with pytest.raises(DataError):
        human_vs_mrf(forests, ds, HumanResponses.from_predictions(("nope",), [0], [[0]]))


# -- lengths ----------------------------------------------------------------

def test_length_statistics():
    ds = Dataset(("a", LENGTH), [[0, 3], [0, 5], [0, 4], [0, 10], [0, 6]], [0, 0, 0, 1, 1])
    pre, post = length_statistics(ds)
    assert (pre.label, pre.n, pre.median, pre.mean, pre.sd) == ("pre", 3, 4.0, 4.0, 1.0)
    assert (post.median, post.mean) == (8.0, 8.0)
    assert post.sd == pytest.approx(np.std([10, 6], ddof=1))
    with pytest.raises(ValidationError):
        length_statistics(ds.drop_length())
