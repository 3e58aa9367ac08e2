"""``soundforest`` command line.

Exit codes: 0 success, 2 invalid arguments or configuration, 3 bad input
data, 4 internal error.  Files are only written under ``--out``.
"""

import argparse
import csv
import logging
import sys
from dataclasses import asdict
from pathlib import Path


from . import __version__
from . import experiments as ex
from . import report
from .dataset import Dataset, build_dataset, dedupe_records, labelled, read_records
from .errors import DataError, SoundForestError, ValidationError
from .forest import Hyperparameters, SoundForestClassifier, evaluate
from .importance import importance_report
from .phonemizer import Language, default_inventory, featurize, feature_names, load_inventory, tokenize
from .tuning import DEFAULT_TUNE_TREES, read_grid, tune

log = logging.getLogger("soundforest")

EXIT_OK, EXIT_VALIDATION, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


# -- input helpers --------------------------------------------------------

def _existing(path):
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"input file not found: {path}")
    return p


def _inventory(args):
    if getattr(args, "inventory", None):
        inv = load_inventory(_existing(args.inventory))
        if args.lang and inv.language != Language.parse(args.lang):
            raise ValidationError(f"inventory is for {inv.language.value}, not {args.lang}")
        return inv
    if not args.lang:
        raise ValidationError("--lang is required")
    return default_inventory(Language.parse(args.lang))


def _header(path):
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return next(csv.reader(fh), [])


def _is_records(header):
    cols = set(header)
    return "name" in cols and ("stage" in cols or "language" in cols or cols <= {"id", "name", "label"})


def load_dataset(path, args):
    """A records CSV (name + stage/label) is transcribed; a feature CSV is read as is.

    Records are always built with the length column so either feature
    space can be selected later.
    """
    path = _existing(path)
    header = _header(path)
    if not _is_records(header):
        return Dataset.from_csv(path, provenance=path.name)
    if "language" not in header and not args.lang and not args.inventory:
        raise ValidationError(f"{path.name} has no language column; pass --lang")
    records = read_records(path, language=args.lang)
    if not args.lang and not args.inventory:
        langs = {r.language for r in records}
        if len(langs) != 1:
            raise ValidationError("--lang is required")
        args.lang = langs.pop().value
    inv = _inventory(args)
    records = dedupe_records(labelled(records))
    return build_dataset(records, inv, with_length=True, provenance=path.name)


def _hp(args, num_trees=None):
    return Hyperparameters(
        num_trees=num_trees or args.trees, mtry=args.mtry, sample_fraction=args.sample_fraction,
        replace=args.replace, min_node_size=args.min_node_size, seed=args.seed)


def _config(args, n_runs=None):
    grid = read_grid(_existing(args.grid)) if args.grid else None
    cfg = ex.ExperimentConfig(
        with_length=args.with_length, tune=args.tune, hp=_hp(args),
        n_runs=n_runs or args.runs, altmann=args.altmann, altmann_trees=args.altmann_trees,
        tune_trees=args.tune_trees, grid=grid, importance=not args.no_importance,
        tie_policy=args.tie_policy, n_jobs=args.threads)
    return cfg.validate()


def _out(args):
    if not args.out:
        raise ValidationError("--out DIR is required")
    return report.OutputDir(args.out, args.format)


def _base_manifest(args, command):
    return {"tool": "soundforest", "version": __version__, "command": command,
            "seed": args.seed}


# -- commands ---------------------------------------------------------------

def _read_names(path):
    path = _existing(path)
    text = path.read_text(encoding="utf-8")
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        return []
    if "name" in rows[0]:
        ni = rows[0].index("name")
        ii = rows[0].index("id") if "id" in rows[0] else None
        return [(r[ii] if ii is not None else str(k), r[ni].strip())
                for k, r in enumerate(rows[1:]) if r]
    return [(str(k), line.strip()) for k, line in enumerate(text.splitlines()) if line.strip()]


def cmd_transcribe(args):
    inv = _inventory(args)
    names = _read_names(args.input)
    out = _out(args) if args.out else None
    fnames = feature_names(inv, args.with_length)
    if not names:
        log.warning("%s: no names to transcribe", args.input)
    rows, failures = [], []
    for sid, name in names:
        try:
            tokens = tokenize(name, inv)
        except DataError as exc:
            failures.append(f"{sid} {name!r}: {exc}")
            continue
        fv = featurize(tokens, inv, args.with_length)
        rows.append([sid, name, " ".join(tokens.symbols), *fv.as_array(fnames).tolist()])
    if failures:
        for f in failures:
            print(f"error: {f}", file=sys.stderr)
        raise DataError(f"{len(failures)} name(s) could not be transcribed")
    header = ["id", "name", "tokens", *fnames]
    if out is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return EXIT_OK
    out.table("transcriptions", header, rows)
    out.manifest({**_base_manifest(args, "transcribe"), "language": inv.language.value,
                  "rows": len(rows)})
    return EXIT_OK


def cmd_featurize(args):
    ds = load_dataset(args.input, args)
    ds = ex.align_features(ds, args.with_length)
    out = _out(args)
    out.text("dataset.csv", ds.to_csv())
    out.manifest({**_base_manifest(args, "featurize"), "data": report.dataset_info(ds),
                  "zero_fraction": ds.zero_fraction()})
    return EXIT_OK


def cmd_train(args):
    ds = ex.align_features(load_dataset(args.input, args), args.with_length)
    out = _out(args)
    hp = _hp(args)
    hp.validate(len(ds), len(ds.feature_names))
    tuning = None
    if args.tune:
        grid = read_grid(_existing(args.grid)) if args.grid else None
        tuning = tune(ds.X, ds.y, grid, hp, seed=args.seed, num_trees=args.tune_trees,
                      n_jobs=args.threads)
        hp = tuning.chosen
    forest = SoundForestClassifier(**asdict(hp), n_jobs=args.threads).fit(
        ds.X, ds.y, feature_names=ds.feature_names, provenance=ds.provenance)
    out.text("forest.json", forest.to_json())
    if tuning is not None:
        out.text("tuning.csv", tuning.to_csv())
    out.manifest({**_base_manifest(args, "train"), "data": report.dataset_info(ds),
                  "hyperparameters": asdict(forest.hp_), "oob_error": forest.oob_error_})
    return EXIT_OK


def _load_forest(args):
    return SoundForestClassifier.load(_existing(args.forest))


def cmd_evaluate(args):
    forest = _load_forest(args)
    ds = load_dataset(args.input, args)
    if forest.feature_names_ and tuple(ds.feature_names) != forest.feature_names_:
        ds = ex.align_features(ds, "length" in forest.feature_names_)
        if tuple(ds.feature_names) != forest.feature_names_:
            raise ValidationError("dataset features do not match the forest's")
    forest.n_jobs = args.threads
    out = _out(args)
    cm = evaluate(forest, ds.X, ds.y)
    out.table("confusion", ["true", "pred_pre", "pred_post"], report._confusion_rows(cm),
              comment="rows are true labels")
    out.manifest({**_base_manifest(args, "evaluate"), "data": report.dataset_info(ds),
                  "test_error": cm.error, "confusion": cm.to_dict(),
                  "forest_oob_error": forest.oob_error_})
    return EXIT_OK


def cmd_importance(args):
    forest = _load_forest(args)
    forest.n_jobs = args.threads
    out = _out(args)
    rep = importance_report(forest, forest._X_train, forest._y_train, perm_seed=args.seed,
                            altmann=args.altmann, altmann_trees=args.altmann_trees,
                            n_jobs=args.threads)
    out.text("importance.csv", rep.to_csv())
    out.text("importance_filtered.csv", rep.to_csv(threshold_pct=0.1))
    if args.svg:
        report.svg_directionality(out, rep.feature_names, rep.pre_mean, rep.post_mean)
    out.manifest({**_base_manifest(args, "importance"), "altmann": args.altmann,
                  "importance": rep.importance.tolist(),
                  "p_value": None if rep.p_value is None else rep.p_value.tolist()})
    return EXIT_OK


def cmd_tune(args):
    ds = ex.align_features(load_dataset(args.input, args), args.with_length)
    out = _out(args)
    grid = read_grid(_existing(args.grid)) if args.grid else None
    result = tune(ds.X, ds.y, grid, _hp(args), seed=args.seed, num_trees=args.tune_trees,
                  n_jobs=args.threads)
    out.text("tuning.csv", result.to_csv())
    out.manifest({**_base_manifest(args, "tune"), "data": report.dataset_info(ds),
                  "chosen": asdict(result.chosen)})
    return EXIT_OK


def _write_result(out, args, result, prefix=""):
    report.write_mrf(out, result, prefix)
    summary = result.importance_summary()
    if args.svg and summary is not None:
        report.svg_directionality(out, result.feature_names, summary["pre_mean"],
                                  summary["post_mean"], name=f"{prefix}directionality.svg")


def cmd_experiment(args):
    kind = args.kind
    manifest = {**_base_manifest(args, f"experiment {kind}")}
    if kind == "regression":
        return _experiment_regression(args, manifest)
    if kind == "human":
        return _experiment_human(args, manifest)
    if kind == "lengths":
        return _experiment_lengths(args, manifest)
    cfg = _config(args, n_runs=1 if kind == "single" else None)
    if kind == "cross":
        if not args.test:
            raise ValidationError("experiment cross needs --test DATA")
        train, test = load_dataset(args.input, args), load_dataset(args.test, args)
        ex.align_features(test, cfg.with_length)
    else:
        train, test = load_dataset(args.input, args), None
    out = _out(args)
    manifest["config"] = cfg.to_dict()
    manifest["data"] = {"train": report.dataset_info(ex.align_features(train, cfg.with_length))}
    if test is not None:
        manifest["data"]["test"] = report.dataset_info(ex.align_features(test, cfg.with_length))
    if kind == "single":
        result = ex.run_single(train, cfg, seed=args.seed)
    elif kind == "mrf":
        result = ex.run_mrf(train, cfg)
    elif kind == "cross":
        result = ex.run_cross(train, test, cfg)
    else:
        tuned, untuned = ex.run_untuned_comparison(train, cfg, test_dataset=test)
        _write_result(out, args, tuned, "tuned_")
        _write_result(out, args, untuned, "untuned_")
        out.table("comparison", ["variant", "mean_test_error", "sd_test_error"], [
            ["tuned", tuned.mean_error, tuned.sd_error],
            ["untuned", untuned.mean_error, untuned.sd_error]])
        manifest["result"] = {"tuned": tuned.to_dict(), "untuned": untuned.to_dict()}
        out.manifest(manifest)
        return EXIT_OK
    _write_result(out, args, result)
    manifest["result"] = result.to_dict()
    out.manifest(manifest)
    return EXIT_OK


def _experiment_lengths(args, manifest):
    ds = load_dataset(args.input, args)
    out = _out(args)
    stats = ex.length_statistics(ds)
    report.write_lengths(out, stats)
    if args.svg:
        col = ds.X[:, ds.feature_names.index("length")]
        report.svg_lengths(out, col[ds.y == 0], col[ds.y == 1])
    manifest["data"] = report.dataset_info(ds)
    manifest["result"] = [asdict(s) for s in stats]
    out.manifest(manifest)
    return EXIT_OK


def _read_points(paths):
    points = []
    for path in paths:
        path = _existing(path)
        lines = [l for l in path.read_text(encoding="utf-8").splitlines()
                 if l and not l.startswith(("#", '"#'))]
        reader = csv.DictReader(lines)
        if not {"post_fraction_test", "test_error"} <= set(reader.fieldnames or ()):
            raise DataError(f"{path}: need post_fraction_test,test_error columns")
        for row in reader:
            try:
                points.append((float(row["post_fraction_test"]), float(row["test_error"])))
            except ValueError:
                raise DataError(f"{path}: non-numeric value in {row}") from None
    return points


def _experiment_regression(args, manifest):
    paths = [args.input, *(args.extra or [])]
    points = _read_points(paths)
    out = _out(args)
    reg = ex.distribution_regression(points)
    report.write_regression(out, reg, points)
    manifest["inputs"] = [Path(p).name for p in paths]
    manifest["result"] = reg.to_dict()
    out.manifest(manifest)
    return EXIT_OK


def _experiment_human(args, manifest):
    for flag in ("samples", "responses", "truth"):
        if not getattr(args, flag):
            raise ValidationError(f"experiment human needs --{flag}")
    responses = ex.read_responses(_existing(args.responses), _existing(args.truth))
    cfg = _config(args)
    train = load_dataset(args.input, args)
    samples = ex.align_features(load_dataset(args.samples, args), cfg.with_length)
    out = _out(args)
    result, forests = ex.run_mrf(train, cfg, keep_forests=True)
    comparison = ex.human_vs_mrf(forests, samples, responses, tie_policy=cfg.tie_policy)
    _write_result(out, args, result)
    report.write_human(out, comparison)
    manifest["config"] = cfg.to_dict()
    manifest["data"] = {"train": report.dataset_info(ex.align_features(train, cfg.with_length)),
                        "samples": report.dataset_info(samples)}
    manifest["result"] = {"mrf": result.to_dict(), "human": comparison.to_dict()}
    out.manifest(manifest)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _add_common(p, data=True):
    p.add_argument("--lang", choices=[l.value for l in Language])
    p.add_argument("--inventory", help="custom inventory TSV")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--seed", type=int, default=1, help="master seed (default 1)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads; results do not depend on it")
    p.add_argument("--with-length", action="store_true", help="add the name-length feature")
    p.add_argument("--svg", action="store_true", help="also render SVG charts")


def _add_forest(p, tune_default):
    p.add_argument("--trees", type=int, default=20000)
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--sample-fraction", type=float, default=1.0)
    p.add_argument("--replace", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--min-node-size", type=int, default=1)
    p.add_argument("--tune", action=argparse.BooleanOptionalAction, default=tune_default)
    p.add_argument("--tune-trees", type=int, default=DEFAULT_TUNE_TREES)
    p.add_argument("--grid", help="tuning grid file ('key = v1, v2' lines)")
    p.add_argument("--altmann", type=int, default=0, metavar="N",
                   help="response permutations for p-values (0 = off)")
    p.add_argument("--altmann-trees", type=int, default=None)


def build_parser():
    parser = _Parser(prog="soundforest", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("transcribe", help="names -> tokens and feature counts")
    p.add_argument("input")
    _add_common(p)
    p.set_defaults(func=cmd_transcribe)

    p = sub.add_parser("featurize", help="labelled records -> dataset CSV")
    p.add_argument("input")
    _add_common(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="fit and save a forest")
    p.add_argument("input")
    _add_common(p)
    _add_forest(p, tune_default=False)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="test error of a saved forest")
    p.add_argument("input")
    p.add_argument("--forest", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("importance", help="permutation importance of a saved forest")
    p.add_argument("--forest", required=True)
    _add_common(p)
    p.add_argument("--altmann", type=int, default=0, metavar="N")
    p.add_argument("--altmann-trees", type=int, default=None)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("tune", help="grid search by OOB error")
    p.add_argument("input")
    _add_common(p)
    _add_forest(p, tune_default=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("experiment", help="run an experiment design")
    p.add_argument("kind", choices=("single", "mrf", "cross", "untuned", "human",
                                    "lengths", "regression"))
    p.add_argument("input", help="training data (regression: a runs table)")
    p.add_argument("extra", nargs="*", help="more runs tables (regression only)")
    p.add_argument("--test", help="test data for cross (and cross untuned)")
    p.add_argument("--samples", help="survey samples dataset (human)")
    p.add_argument("--responses", help="responses CSV (human)")
    p.add_argument("--truth", help="sample_id,label sidecar (human)")
    p.add_argument("--runs", type=int, default=9)
    p.add_argument("--no-importance", action="store_true")
    p.add_argument("--tie-policy", choices=ex.TIE_POLICIES, default="incorrect")
    _add_common(p)
    _add_forest(p, tune_default=True)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if getattr(args, "extra", None) and args.kind != "regression":
            raise ValidationError("extra positional inputs are only accepted by 'regression'")
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SoundForestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
