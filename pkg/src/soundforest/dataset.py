"""Name records, evolution-stage filtering, feature matrices and seeded splits."""

import csv
import hashlib
import io
import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

from .errors import DataError, ValidationError
from .phonemizer import LENGTH, Language, feature_names, featurize, tokenize
from .rng import SPLIT, SplitMix64

log = logging.getLogger(__name__)


class Label(IntEnum):
    PRE = 0
    POST = 1

    @classmethod
    def parse(cls, value):
        key = str(value).strip().lower().replace("-", "").replace("_", "").replace(" ", "")
        if key in ("pre", "preevolution", "0"):
            return cls.PRE
        if key in ("post", "postevolution", "1"):
            return cls.POST
        raise DataError(f"unknown label {value!r}")


class Stage(str, Enum):
    NON_EVOLVING = "nonevolving"
    PRE = "pre"
    MID = "mid"
    POST = "post"
    MEGA = "mega"

    @classmethod
    def parse(cls, value):
        key = str(value).strip().lower().replace("-", "").replace("_", "").replace(" ", "")
        aliases = {"none": cls.NON_EVOLVING, "preevolution": cls.PRE,
                   "postevolution": cls.POST, "middle": cls.MID, "midstage": cls.MID}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise DataError(f"unknown stage {value!r}") from None


@dataclass(frozen=True)
class NameRecord:
    name: str
    language: Language
    label: Label | None = None
    stage: Stage | None = None
    id: str | None = None


def filter_records(records):
    """Keep pre- and post-evolution records, labelled from their stage.

    Non-evolving, mid-stage and Mega records are dropped.
    """
    missing = [r.id if r.id is not None else r.name for r in records if r.stage is None]
    if missing:
        raise ValidationError(f"records without stage: {missing}")
    keep = {Stage.PRE: Label.PRE, Stage.POST: Label.POST}
    return [
        NameRecord(r.name, r.language, keep[r.stage], r.stage, r.id)
        for r in records
        if r.stage in keep
    ]


def dedupe_records(records):
    """Drop exact duplicate names (after trimming), keeping the first."""
    seen = set()
    out = []
    for r in records:
        key = r.name.strip()
        if key in seen:
            log.warning("dropping duplicate name %r (id=%s)", key, r.id)
            continue
        seen.add(key)
        out.append(r)
    return out


def read_records(path, language=None):
    """Read ``id,name,language,stage`` or ``id,name,language,label`` CSV."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or ())
        if "name" not in cols:
            raise DataError(f"{path}: missing 'name' column")
        if "language" not in cols and language is None:
            raise DataError(f"{path}: missing 'language' column")
        records = []
        for lineno, row in enumerate(reader, start=2):
            try:
                lang = Language.parse(row.get("language") or language)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            stage = Stage.parse(row["stage"]) if row.get("stage") else None
            label = Label.parse(row["label"]) if row.get("label") else None
            records.append(NameRecord(row["name"].strip(), lang, label, stage, row.get("id") or None))
    return records


def labelled(records):
    """Records ready for a dataset: stage-filtered when stages are present."""
    if records and all(r.stage is not None for r in records):
        return filter_records(records)
    unlabelled = [r.id or r.name for r in records if r.label is None]
    if unlabelled:
        raise ValidationError(f"records without label or stage: {unlabelled}")
    return list(records)


@dataclass
class Dataset:
    feature_names: tuple
    X: np.ndarray
    y: np.ndarray
    names: tuple = ()
    ids: tuple = ()
    provenance: str = ""
    language: Language | None = None
    _digest: str | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.feature_names = tuple(self.feature_names)
        if self.X.ndim != 2 or self.X.shape[0] != len(self.y):
            raise ValidationError("rows and labels disagree in length")
        if self.X.shape[1] != len(self.feature_names):
            raise ValidationError("row width differs from feature_names")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValidationError("feature_names must be unique")
        if not np.isin(self.y, (0, 1)).all():
            raise ValidationError("labels must be 0 (pre) or 1 (post)")
        n = len(self.y)
        if not self.names:
            self.names = tuple("" for _ in range(n))
        if not self.ids:
            self.ids = tuple(str(i) for i in range(n))

    def __len__(self):
        return len(self.y)

    @property
    def with_length(self):
        return LENGTH in self.feature_names

    def subset(self, indices, tag=None):
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.feature_names,
            self.X[idx],
            self.y[idx],
            tuple(self.names[i] for i in idx),
            tuple(self.ids[i] for i in idx),
            f"{self.provenance}[{tag}]" if tag else self.provenance,
            self.language,
        )

    def drop_length(self):
        if not self.with_length:
            return self
        keep = [i for i, f in enumerate(self.feature_names) if f != LENGTH]
        return Dataset(
            tuple(self.feature_names[i] for i in keep),
            self.X[:, keep], self.y, self.names, self.ids,
            self.provenance + "[-L]", self.language,
        )

    def zero_fraction(self):
        return float((self.X == 0).mean()) if self.X.size else 0.0

    def to_csv(self, path=None):
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "name", *self.feature_names, "label"])
        for i in range(len(self)):
            w.writerow([self.ids[i], self.names[i], *map(int, self.X[i]), int(self.y[i])])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def digest(self):
        if self._digest is None:
            self._digest = hashlib.sha256(self.to_csv().encode("utf-8")).hexdigest()
        return self._digest

    @classmethod
    def from_csv(cls, path, provenance=None):
        path = Path(path)
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            if "label" not in header:
                raise DataError(f"{path}: missing 'label' column")
            skip = {"id", "name", "label"}
            fcols = [i for i, h in enumerate(header) if h not in skip]
            li = header.index("label")
            ii = header.index("id") if "id" in header else None
            ni = header.index("name") if "name" in header else None
            X, y, names, ids = [], [], [], []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    X.append([int(row[i]) for i in fcols])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: non-integer feature value") from None
                y.append(int(Label.parse(row[li])))
                names.append(row[ni] if ni is not None else "")
                ids.append(row[ii] if ii is not None else str(lineno - 2))
        fnames = [header[i] for i in fcols]
        X = np.asarray(X, dtype=np.int64).reshape(len(y), len(fnames))
        return cls(fnames, X, y, tuple(names), tuple(ids), provenance or path.name)


def build_dataset(records, inventory, with_length=False, provenance=""):
    """One row per record, in input order; columns are inventory symbols (+ length)."""
    langs = {r.language for r in records}
    if langs and langs != {inventory.language}:
        raise ValidationError(
            f"record languages {sorted(l.value for l in langs)} do not match "
            f"inventory {inventory.language.value!r}"
        )
    names = feature_names(inventory, with_length)
    rows, failures = [], []
    for r in records:
        if r.label is None:
            raise ValidationError(f"record {r.id or r.name!r} has no label")
        try:
            fv = featurize(tokenize(r.name, inventory), inventory, with_length)
        except DataError as exc:
            failures.append(f"{r.id or '-'} {r.name!r}: {exc}")
            continue
        rows.append(fv.as_array(names))
    if failures:
        raise DataError(
            f"{len(failures)} record(s) failed to transcribe:\n  " + "\n  ".join(failures)
        )
    X = np.vstack(rows) if rows else np.zeros((0, len(names)), dtype=np.int64)
    return Dataset(
        names, X, [int(r.label) for r in records],
        tuple(r.name for r in records),
        tuple(r.id if r.id is not None else str(i) for i, r in enumerate(records)),
        provenance, inventory.language,
    )


@dataclass(frozen=True)
class SplitPair:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int

    def __eq__(self, other):
        return (
            isinstance(other, SplitPair)
            and self.seed == other.seed
            and np.array_equal(self.train_indices, other.train_indices)
            and np.array_equal(self.test_indices, other.test_indices)
        )


def split(n_or_dataset, seed):
    """Uniform two-thirds/one-third split drawn from the ``(seed, SPLIT)`` stream.

    The permutation's first ``floor(2N/3)`` entries are the training rows.
    """
    n = n_or_dataset if isinstance(n_or_dataset, (int, np.integer)) else len(n_or_dataset)
    if n < 3:
        raise ValidationError(f"need at least 3 rows to split, got {n}")
    perm = SplitMix64.stream(seed, SPLIT).permutation(n)
    k = (2 * n) // 3
    return SplitPair(perm[:k].copy(), perm[k:].copy(), seed)


def naive_baseline(labels):
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValidationError("no labels")
    _, counts = np.unique(labels, return_counts=True)
    return counts.max() / labels.size
