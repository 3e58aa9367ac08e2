import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soundforest.dataset import (
    Dataset,
    Label,
    NameRecord,
    SplitPair,
    Stage,
    build_dataset,
    dedupe_records,
    filter_records,
    labelled,
    naive_baseline,
    read_records,
    split,
)
from soundforest.errors import DataError, ValidationError
from soundforest.phonemizer import Language, default_inventory, featurize, feature_names, tokenize

JA = default_inventory("ja")


def rec(name, stage=None, label=None, id=None):
    return NameRecord(name, Language.JAPANESE, label, stage, id)


def test_filter_records():
    records = [rec("ピチュー", Stage.PRE, id="1"), rec("ピカチュウ", Stage.MID, id="2"),
               rec("ライチュウ", Stage.POST, id="3"), rec("ケンタロス", Stage.NON_EVOLVING, id="4"),
               rec("メガリザードンX", Stage.MEGA, id="5")]
    out = filter_records(records)
    assert [r.id for r in out] == ["1", "3"]
    assert [r.label for r in out] == [Label.PRE, Label.POST]
    assert filter_records(out) == out
    assert filter_records([rec("a", Stage.MID)]) == []
    with pytest.raises(ValidationError, match="x9"):
        filter_records([rec("a", None, id="x9")])


def test_stage_and_label_parsing():
    assert Stage.parse("Non-evolving") is Stage.NON_EVOLVING
    assert Stage.parse("Mega") is Stage.MEGA
    assert Label.parse("post-evolution") is Label.POST and Label.parse("0") is Label.PRE
    with pytest.raises(DataError):
        Stage.parse("baby")


def test_dedupe(caplog):
    with caplog.at_level(logging.WARNING):
        out = dedupe_records([rec("ア", label=Label.PRE), rec(" ア ", label=Label.POST),
                              rec("イ", label=Label.PRE)])
    assert [r.name for r in out] == ["ア", "イ"]
    assert "duplicate" in caplog.text


def test_build_dataset_single_record():
    ds = build_dataset([rec("ピカチュウ", label=Label.POST)], JA, with_length=True)
    names = feature_names(JA, True)
    assert ds.feature_names == names and names[-1] == "length"
    expected = featurize(tokenize("ピカチュウ", JA), JA, True).as_array(names)
    assert ds.X.shape == (1, len(names)) and np.array_equal(ds.X[0], expected)
    assert ds.y.tolist() == [1]


def test_build_dataset_aggregates_failures():
    records = [rec("ア", label=Label.PRE, id="a"), rec("✕", label=Label.PRE, id="b"),
               rec("Ω", label=Label.POST, id="c")]
    with pytest.raises(DataError) as exc:
        build_dataset(records, JA)
    assert "2 record(s)" in str(exc.value) and "'✕'" in str(exc.value) and "'Ω'" in str(exc.value)
    with pytest.raises(ValidationError):
        build_dataset([NameRecord("ka", Language.KOREAN, Label.PRE)], JA)


KANA = ["カ", "キ", "ン", "ー", "ッ", "ピ", "チュ", "ア", "ラ", "メ"]


@given(st.lists(st.tuples(st.lists(st.sampled_from(KANA), min_size=1, max_size=5).map("".join),
                          st.sampled_from([Label.PRE, Label.POST])), min_size=1, max_size=12),
       st.randoms())
@settings(max_examples=50, deadline=None)
def test_build_dataset_order_preserving(items, rnd):
    records = [rec(n, label=l, id=str(i)) for i, (n, l) in enumerate(items)]
    ds = build_dataset(records, JA)
    perm = list(range(len(records)))
    rnd.shuffle(perm)
    ds2 = build_dataset([records[i] for i in perm], JA)
    assert np.array_equal(ds2.X, ds.X[perm]) and np.array_equal(ds2.y, ds.y[perm])


def test_dataset_invariants_and_roundtrip(tmp_path):
    with pytest.raises(ValidationError):
        Dataset(("a", "a"), [[1, 2]], [0])
    with pytest.raises(ValidationError):
        Dataset(("a",), [[1, 2]], [0])
    with pytest.raises(ValidationError):
        Dataset(("a",), [[1]], [2])
    ds = build_dataset([rec("ピカチュウ", label=Label.POST, id="25"),
                        rec("ピチュー", label=Label.PRE, id="172")], JA, with_length=True,
                       provenance="toy")
    p = tmp_path / "d.csv"
    ds.to_csv(p)
    back = Dataset.from_csv(p)
    assert back.feature_names == ds.feature_names and np.array_equal(back.X, ds.X)
    assert back.ids == ("25", "172") and back.digest() == ds.digest()
    short = ds.drop_length()
    assert "length" not in short.feature_names and short.X.shape[1] == ds.X.shape[1] - 1
    assert 0 < ds.zero_fraction() < 1


def test_read_records(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("id,name,language,stage\n1,ピチュー,ja,pre\n2,ピカチュウ,ja,mid\n3,ライチュウ,ja,post\n",
                 encoding="utf-8")
    records = labelled(read_records(p))
    assert [r.id for r in records] == ["1", "3"]
    p.write_text("id,name,language,label\n1,ア,ja,pre\n2,イ,japanese,post\n", encoding="utf-8")
    assert [r.label for r in labelled(read_records(p))] == [Label.PRE, Label.POST]
    p.write_text("id,name,language,label\n1,ア,xx,pre\n", encoding="utf-8")
    with pytest.raises(DataError, match=":2"):
        read_records(p)


@pytest.mark.parametrize("n,train", [(628, 418), (967, 644), (3, 2), (4, 2), (5, 3)])
def test_split_sizes(n, train):
    sp = split(n, 1)
    assert len(sp.train_indices) == train and len(sp.test_indices) == n - train


@given(st.integers(3, 60), st.integers(0, 2**64 - 1))
@settings(max_examples=200, deadline=None)
def test_split_partition(n, seed):
    sp = split(n, seed)
    both = np.concatenate([sp.train_indices, sp.test_indices])
    assert sorted(both.tolist()) == list(range(n))
    assert len(sp.train_indices) == (2 * n) // 3
    assert sp == split(n, seed)


def test_split_errors_and_determinism():
    with pytest.raises(ValidationError):
        split(2, 1)
    assert split(100, 1) == split(100, 1)
    assert split(100, 1) != split(100, 2)
    assert isinstance(split(10, 1), SplitPair)


def test_naive_baseline():
    assert naive_baseline([0] * 303 + [1] * 325) == 325 / 628
    assert naive_baseline([0] * 482 + [1] * 485) == pytest.approx(0.5016, abs=5e-5)
    assert naive_baseline([1, 1, 1]) == 1.0
    with pytest.raises(ValidationError):
        naive_baseline([])
