import numpy as np
import pytest

from soundforest.errors import ValidationError
from soundforest.forest import Hyperparameters
from soundforest.tuning import (
    DEFAULT_GRID,
    expand_grid,
    read_grid,
    tune,
    tune_num_trees,
)


@pytest.fixture(scope="module")
def separable():
    rng = np.random.default_rng(0)
    X = rng.integers(0, 3, size=(45, 8)).astype(float)
    y = (X[:, 3] > 0).astype(int)
    return X, y


def test_expand_default_grid():
    pts = expand_grid(None, 40)
    assert {m for m, _, _ in pts} == {1, 6, 10, 20, 40}
    assert len(pts) == 5 * len(DEFAULT_GRID["sample_fraction"]) * 3
    # duplicate mtry values collapse for tiny p
    assert sorted({m for m, _, _ in expand_grid(None, 2)}) == [1, 2]
    with pytest.raises(ValidationError):
        expand_grid({"depth": (1,)}, 4)
    with pytest.raises(ValidationError):
        expand_grid({"mtry": ()}, 4)


def test_read_grid(tmp_path):
    p = tmp_path / "grid.txt"
    p.write_text("# grid\nmtry = 1, sqrt\nsample_fraction = 0.5\nmin_node_size = 1, 5\n")
    assert read_grid(p) == {"mtry": ("1", "sqrt"), "sample_fraction": ("0.5",),
                            "min_node_size": ("1", "5")}
    p.write_text("mtry 1\n")
    with pytest.raises(ValidationError):
        read_grid(p)


def test_single_point_grid(separable):
    X, y = separable
    grid = {"mtry": ("2",), "sample_fraction": (0.8,), "min_node_size": (5,)}
    base = Hyperparameters(num_trees=777, seed=4)
    res = tune(X, y, grid, base, seed=1, num_trees=20)
    assert (res.chosen.mtry, res.chosen.sample_fraction, res.chosen.min_node_size) == (2, 0.8, 5)
    assert res.chosen.replace is False
    assert res.chosen.num_trees == 777 and res.chosen.seed == 4
    assert len(res.trials) == 1


def test_tune_minimizer_and_determinism(separable):
    X, y = separable
    X0 = X.copy()
    grid = {"mtry": ("1", "sqrt", "p"), "sample_fraction": (0.632, 1.0), "min_node_size": (1, 5)}
    a = tune(X, y, grid, seed=3, num_trees=25)
    b = tune(X, y, grid, seed=3, num_trees=25)
    assert np.array_equal(X, X0)
    assert [(h, e) for h, e in a.trials] == [(h, e) for h, e in b.trials]
    errs = [e for _, e in a.trials]
    first_best = a.trials[errs.index(min(errs))][0]
    assert (a.chosen.mtry, a.chosen.sample_fraction, a.chosen.min_node_size) == (
        first_best.mtry, first_best.sample_fraction, first_best.min_node_size)
    assert any(h.mtry == a.chosen.mtry and h.sample_fraction == a.chosen.sample_fraction
               for h, _ in a.trials)
    assert a.to_csv().splitlines()[0].startswith("mtry,sample_fraction")


def test_tune_rejects_invalid_grid(separable):
    X, y = separable
    with pytest.raises(ValidationError):
        tune(X, y, {"mtry": ("99",)}, num_trees=5)
    with pytest.raises(ValidationError):
        tune(X, y, {"sample_fraction": (0.0,)}, num_trees=5)


def test_tune_num_trees(separable):
    X, y = separable
    res = tune_num_trees(X, y, [1, 150], Hyperparameters(mtry=2), n_seeds=5)
    assert res.mean[150] <= res.mean[1]
    assert len(res.errors[1]) == 5 and res.chosen in (1, 150)
    one = tune_num_trees(X, y, [10], n_seeds=2)
    assert one.chosen == 10
    with pytest.raises(ValidationError):
        tune_num_trees(X, y, [])
