"""Command-line entry point: synth, extract, select, eval and run.

Exit codes: 0 success, 1 usage, 2 data or validation error, 3 internal error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import pickle
import sys
import time
from pathlib import Path

from .core import CLASSES, DataError, RunConfig
from .evaluation import EvalReport, confusion_csv, confusion_svg
from .features import FeatureMatrix
from .learners import DISPLAY_NAMES
from .pipeline import eval_stage, extract_dataset, select_stage
from .selection import METHODS, SelectionReport
from .synth import SynthSpec, generate_dataset

log = logging.getLogger("eegflow")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage} stage failed: {cause}")
        self.stage = stage
        self.cause = cause


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _require(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _config(args) -> RunConfig:
    cfg = RunConfig.load(_require(args.config, "config file")) if args.config else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.per_channel:
        changes["per_channel_mode"] = True
    if args.selected_k is not None:
        changes["selected_k"] = args.selected_k
    return cfg.replace(**changes) if changes else cfg


def _run_stage(stage: str, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (DataError, ValueError, OSError) as exc:
        raise StageError(stage, exc) from exc


# ---------------------------------------------------------------------------
# stage writers

def write_features(fm: FeatureMatrix, epochs, cleaned, out: Path) -> list[Path]:
    paths = [out / "features.csv", out / "features.json", out / "epochs.npz", out / "cleaning_log.json"]
    fm.to_csv(paths[0])
    _write(paths[1], fm.to_json())
    epochs.save(paths[2])
    logs = {f"{c.meta.subject_id}_trial{c.meta.trial_index:02d}": [a._asdict() for a in c.log] for c in cleaned}
    _write(paths[3], json.dumps(logs, indent=2, sort_keys=True))
    return paths


def write_selection(report: SelectionReport, out: Path) -> list[Path]:
    paths = [
        _write(out / "selection.json", report.to_json()),
        _write(out / "table2.csv", report.table2_csv()),
        _write(out / "fused.csv", report.fused_csv()),
    ]
    for method in METHODS:
        paths.append(_write(out / f"scores_{method}.csv", report.scores_csv(method)))
    if report.sweep is not None:
        paths.append(_write(out / "sweep.csv", report.sweep_csv()))
    return paths


def write_eval(report: EvalReport, out: Path) -> list[Path]:
    paths = [
        _write(out / "eval_report.json", report.to_json()),
        _write(out / "table4.csv", report.table4_csv()),
        _write(out / "accuracy.csv", report.accuracy_csv()),
    ]
    for e in report.entries:
        stem = f"confusion_{e.family}_{e.feature_set}"
        paths.append(_write(out / f"{stem}.csv", confusion_csv(e)))
        title = f"{DISPLAY_NAMES.get(e.family, e.family)} ({e.feature_set} features)"
        paths.append(_write(out / f"{stem}.svg", confusion_svg(e.normalized, e.classes, title)))
    models = out / "models.pkl"
    with open(models, "wb") as fh:
        pickle.dump(report.models, fh, protocol=4)
    paths.append(models)
    return paths


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, artifacts: list[Path], cfg: RunConfig) -> Path:
    manifest = {
        "artifacts": {p.name: {"path": str(p), "sha256": _sha256(p)} for p in artifacts},
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    return _write(out / "manifest.json", json.dumps(manifest, indent=2))


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    spec = SynthSpec.load(_require(args.spec, "synth spec"))
    if args.seed is not None:
        spec = SynthSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    out = _out_dir(args)
    paths = _run_stage("synth", generate_dataset, spec, out)
    print(f"wrote {len(paths)} trials for {spec.n_subjects} subjects "
          f"({spec.trials_per_type} per type x {len(CLASSES)} types) to {out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _config(args)
    dataset = _require(args.dataset, "dataset directory")
    out = _out_dir(args)
    fm, epochs, cleaned = _run_stage("extract", extract_dataset, dataset, cfg)
    write_features(fm, epochs, cleaned, out)
    n_actions = sum(len(c.log) for c in cleaned)
    print(f"{len(fm)} epochs x {fm.n_features} features from {len(cleaned)} trials "
          f"({n_actions} cleaning actions) -> {out / 'features.csv'}")
    return EXIT_OK


def _load_features(path: str) -> FeatureMatrix:
    return FeatureMatrix.from_csv(_require(path, "feature file"))


def cmd_select(args) -> int:
    cfg = _config(args)
    fm = _run_stage("select", _load_features, args.features)
    out = _out_dir(args)
    report = _run_stage("select", select_stage, fm, cfg, args.sweep)
    write_selection(report, out)
    print(report.table2_csv(), end="")
    print(f"fused set ({len(report.fused)}): {', '.join(report.fused)}")
    return EXIT_OK


def _load_selection(path: str) -> SelectionReport:
    p = _require(path, "selection report")
    try:
        return SelectionReport.from_json(p.read_text())
    except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
        raise DataError(f"{p}: not a selection report ({exc})") from None


def cmd_eval(args) -> int:
    cfg = _config(args)
    fm = _run_stage("eval", _load_features, args.features)
    selection = _run_stage("eval", _load_selection, args.selection)
    missing = [n for n in selection.fused if n not in fm.names]
    if missing:
        raise StageError("eval", DataError(f"selection does not match feature file; unknown features {missing}"))
    out = _out_dir(args)
    report = _run_stage("eval", eval_stage, fm, selection, cfg)
    write_eval(report, out)
    print(report.format_table())
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    dataset = _require(args.dataset, "dataset directory")
    out = _out_dir(args)
    t0 = time.perf_counter()
    fm, epochs, cleaned = _run_stage("extract", extract_dataset, dataset, cfg)
    artifacts = _run_stage("extract", write_features, fm, epochs, cleaned, out)
    selection = _run_stage("select", select_stage, fm, cfg, args.sweep)
    artifacts += _run_stage("select", write_selection, selection, out)
    report = _run_stage("eval", eval_stage, fm, selection, cfg)
    artifacts += _run_stage("eval", write_eval, report, out)
    manifest = write_manifest(out, artifacts, cfg)
    print(report.format_table())
    print(f"{len(artifacts)} artifacts in {time.perf_counter() - t0:.1f} s; manifest {manifest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--per-channel", action="store_true", help="keep one feature block per channel")
    common.add_argument("--selected-k", type=int, help="size of the fused feature set")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="eegflow", description="EEG workload pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("spec", help="SynthSpec JSON file")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", parents=[common], help="preprocess trials and extract features")
    p.add_argument("dataset", help="directory of trial CSV + JSON files")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("select", parents=[common], help="rank and fuse features")
    p.add_argument("features", help="features.csv from extract")
    p.add_argument("--sweep", action="store_true", help="also write accuracy vs feature count")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("eval", parents=[common], help="train and score the six classifiers")
    p.add_argument("features", help="features.csv from extract")
    p.add_argument("selection", help="selection.json from select")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", parents=[common], help="extract, select and eval in one go")
    p.add_argument("dataset", help="directory of trial CSV + JSON files")
    p.add_argument("--sweep", action="store_true", help="also write accuracy vs feature count")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args)
    except UsageError as exc:
        print(f"eegflow: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"eegflow: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, ValueError, OSError) as exc:
        print(f"eegflow: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"eegflow: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
