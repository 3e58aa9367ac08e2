"""Deterministic experiment outputs: tables, a manifest and optional SVG charts.

Everything lands under one output directory.  The manifest records the
configuration, data digests, seeds, hyperparameters, all metrics and the
sha256 of every table, and carries no timestamps, so repeated runs give
byte-identical files.
"""

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .importance import REPORT_THRESHOLD_PCT
from .phonemizer import LENGTH

MANIFEST = "manifest.json"


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        v = float(v)
    if isinstance(v, float) and not np.isfinite(v):
        return None if np.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


class OutputDir:
    """Writer confined to ``root``; tables go out as CSV or JSON."""

    def __init__(self, root, fmt="csv"):
        if fmt not in ("csv", "json"):
            raise ValidationError(f"format must be csv or json, got {fmt!r}")
        self.root = Path(root).resolve()
        if self.root.exists() and not self.root.is_dir():
            raise ValidationError(f"{self.root} exists and is not a directory")
        self.fmt = fmt
        self.files = {}

    def path(self, name):
        p = (self.root / name).resolve()
        if self.root != p.parent and self.root not in p.parents:
            raise ValidationError(f"refusing to write outside {self.root}: {name}")
        return p

    def write_bytes(self, name, data):
        p = self.path(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()
        return p

    def text(self, name, content):
        return self.write_bytes(name, content.encode("utf-8"))

    def table(self, stem, header, rows, comment=None):
        if self.fmt == "json":
            payload = {"columns": list(header), "rows": [[_plain(c) for c in r] for r in rows]}
            if comment:
                payload["note"] = comment
            return self.text(f"{stem}.json", json.dumps(payload, indent=2, ensure_ascii=False) + "\n")
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        if comment:
            w.writerow([f"# {comment}"])
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(c) for c in r])
        return self.text(f"{stem}.csv", buf.getvalue())

    def manifest(self, payload):
        body = dict(payload)
        body["files"] = dict(sorted(self.files.items()))
        text = json.dumps(_plain(body), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        p = self.path(MANIFEST)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        return p


def dataset_info(ds):
    return {"provenance": ds.provenance, "rows": len(ds), "features": len(ds.feature_names),
            "sha256": ds.digest(),
            "pre": int((ds.y == 0).sum()), "post": int((ds.y == 1).sum())}


# -- tables ---------------------------------------------------------------

def _confusion_rows(cm):
    (a, b), (c, d) = cm.counts
    return [["pre", a, b], ["post", c, d]]


def write_mrf(out, result, prefix=""):
    """Runs, summary, pooled confusion, importance and directionality tables."""
    out.table(f"{prefix}runs", [
        "run", "seed", "test_error", "oob_error", "post_fraction_test",
        "pre_as_pre", "pre_as_post", "post_as_pre", "post_as_post",
        "mtry", "sample_fraction", "replace", "min_node_size", "num_trees",
    ], [
        [k + 1, r.seed, r.test_error, r.oob_error, r.post_fraction_test,
         *np.ravel(r.confusion.counts), r.hp.mtry, r.hp.sample_fraction, r.hp.replace,
         r.hp.min_node_size, r.hp.num_trees]
        for k, r in enumerate(result.runs)
    ])
    summary = result.importance_summary()
    length_imp = None
    if summary is not None and LENGTH in result.feature_names:
        length_imp = 100.0 * summary["mean"][result.feature_names.index(LENGTH)]
    out.table(f"{prefix}summary", [
        "kind", "n_runs", "with_length", "mean_test_error_pct", "sd_test_error_pct",
        "mean_oob_error_pct", "length_importance_pct",
    ], [[result.kind, len(result.runs), LENGTH in result.feature_names,
         100.0 * result.mean_error, 100.0 * result.sd_error, 100.0 * result.mean_oob_error,
         length_imp]])
    out.table(f"{prefix}confusion", ["true", "pred_pre", "pred_post"],
              _confusion_rows(result.pooled_confusion),
              comment="pooled over runs; rows are true labels")
    if summary is not None:
        write_importance_summary(out, result.feature_names, summary, prefix)
    if result.tuning is not None:
        trials = result.tuning.trials
        out.table(f"{prefix}tuning", [
            "mtry", "sample_fraction", "replace", "min_node_size", "num_trees", "oob_error",
        ], [[hp.mtry, hp.sample_fraction, hp.replace, hp.min_node_size, hp.num_trees, err]
            for hp, err in trials])


def _skew(pre, post):
    return "post" if post > pre else ("pre" if post < pre else "none")


def write_importance_summary(out, names, summary, prefix=""):
    header = ["feature", "mean_importance_pct", "sd_importance_pct", "p_value",
              "pre_mean", "post_mean", "skew"]
    rows = []
    for j, name in enumerate(names):
        pre, post = summary["pre_mean"][j], summary["post_mean"][j]
        rows.append([name, 100.0 * summary["mean"][j], 100.0 * summary["sd"][j],
                     None if summary["p_value"] is None else summary["p_value"][j],
                     pre, post, _skew(pre, post)])
    note = "importance = OOB error increase in percentage points, mean over runs"
    out.table(f"{prefix}importance", header, rows, comment=note)
    order = np.argsort(-summary["mean"], kind="stable")
    kept = [rows[j] for j in order if 100.0 * summary["mean"][j] > REPORT_THRESHOLD_PCT]
    out.table(f"{prefix}importance_filtered", header, kept,
              comment=note + f"; features above {REPORT_THRESHOLD_PCT}% by rank")
    out.table(f"{prefix}directionality", ["feature", "pre_mean", "post_mean"],
              [[r[0], r[4], r[5]] for r in rows],
              comment="mean count per name in the training rows, averaged over runs")


def write_lengths(out, stats, prefix=""):
    out.table(f"{prefix}lengths", ["class", "n", "median", "mean", "sd"],
              [[s.label, s.n, s.median, s.mean, s.sd] for s in stats])


def write_human(out, comparison, prefix=""):
    h = comparison.human
    out.table(f"{prefix}human_forests", ["forest", "accuracy"],
              [[i + 1, a] for i, a in enumerate(comparison.forest_accuracy)])
    out.table(f"{prefix}human_samples", ["sample_id", "mode", "correct", "scored", "tie"],
              [[s, int(m), bool(c), bool(sc), s in h.ties]
               for s, m, c, sc in zip(h.samples, h.mode, h.correct, h.scored)],
              comment="mode: 0 pre, 1 post, -1 tie, -2 no votes")
    out.table(f"{prefix}human_summary", ["measure", "mean", "sd"], [
        ["forest_accuracy", comparison.mean_accuracy, comparison.sd_accuracy],
        ["human_majority_accuracy", h.accuracy, None],
        ["human_respondent_accuracy", h.respondent_mean, h.respondent_sd],
    ])


def write_regression(out, reg, points, prefix=""):
    out.table(f"{prefix}regression_points", ["post_fraction_test", "test_error"],
              [list(p) for p in points])
    out.table(f"{prefix}regression", [
        "slope", "intercept", "r_squared", "f_statistic", "df1", "df2", "p_value", "n",
    ], [[reg.slope, reg.intercept, reg.r_squared, reg.f_statistic, *reg.df, reg.p_value, reg.n]])


# -- SVG ------------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "soundforest"
    matplotlib.rcParams["svg.fonttype"] = "none"
    return plt


def _save_svg(out, fig, name):
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    out.write_bytes(name, buf.getvalue())


def svg_directionality(out, names, pre, post, name="directionality.svg"):
    plt = _pyplot()
    idx = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(max(6, 0.3 * len(names)), 4))
    ax.bar(idx - 0.2, pre, width=0.4, label="pre")
    ax.bar(idx + 0.2, post, width=0.4, label="post")
    ax.set_xticks(idx, names, rotation=90)
    ax.set_ylabel("mean count per name")
    ax.legend()
    fig.tight_layout()
    _save_svg(out, fig, name)
    plt.close(fig)


def svg_lengths(out, pre_lengths, post_lengths, name="lengths.svg"):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.boxplot([pre_lengths, post_lengths])
    ax.set_xticks([1, 2], ["pre", "post"])
    ax.set_ylabel("sounds per name")
    fig.tight_layout()
    _save_svg(out, fig, name)
    plt.close(fig)
