"""Stage functions chaining preprocessing, extraction, selection and evaluation."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor

from .core import DataError, RunConfig, find_trials, load_recording, validate_recording
from .evaluation import EvalReport, run_table4, split
from .features import FeatureConfig, FeatureMatrix, build_registry, extract_matrix
from .learners import default_specs
from .preprocess import CleanRecording, EpochSet, bandpass, segment, suppress_artifacts
from .selection import SelectionReport, accuracy_vs_feature_count, select_features

log = logging.getLogger(__name__)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("EEGFLOW_THREADS", "1")))
    except ValueError:
        raise DataError("EEGFLOW_THREADS must be an integer") from None


def preprocess_trial(csv_path, manifest, cfg: RunConfig) -> tuple[CleanRecording, EpochSet]:
    rec = load_recording(csv_path, manifest)
    for w in validate_recording(rec):
        log.warning("%s: %s", csv_path, w)
    clean = suppress_artifacts(
        bandpass(rec, *cfg.bandpass), cfg.amp_limit, cfg.wavelet_threshold, cfg.wavelet_levels
    )
    return clean, segment(clean, cfg.epoch_s)


def extract_dataset(dataset_dir, cfg: RunConfig) -> tuple[FeatureMatrix, EpochSet, list[CleanRecording]]:
    """bandpass -> artifact suppression -> segmentation -> features for every trial."""
    pairs = find_trials(dataset_dir)
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(lambda p: preprocess_trial(*p, cfg), pairs))
    cleaned = [r[0] for r in results]
    layouts = {c.layout.names for c in cleaned}
    rates = {c.fs for c in cleaned}
    if len(layouts) != 1 or len(rates) != 1:
        raise DataError("all trials in a dataset must share one channel layout and sampling rate")
    epochs = EpochSet(tuple(e for r in results for e in r[1].epochs), results[0][1].config)
    fcfg = FeatureConfig.from_run(cfg, rates.pop())
    channels = layouts.pop()
    fm = extract_matrix(epochs, fcfg, build_registry(fcfg), cfg.per_channel_mode, channels)
    return fm, epochs, cleaned


def select_stage(fm: FeatureMatrix, cfg: RunConfig, sweep: bool = False) -> SelectionReport:
    """Rank and fuse on the training rows of the shared split only."""
    train, _ = split(fm, cfg.split_fraction, cfg.seed)
    report = select_features(train, cfg)
    if sweep or cfg.sweep_counts:
        counts = cfg.sweep_counts or default_sweep_counts(fm.n_features)
        gbt_order = [n for n, _ in report.rankings["gbt"]]
        report.sweep = accuracy_vs_feature_count(fm, gbt_order, counts, cfg)
    return report


def default_sweep_counts(n_features: int) -> tuple[int, ...]:
    counts = {1, 2, 3, 5, 8, 10, 14, 20, 30, 40, n_features}
    return tuple(sorted(c for c in counts if c <= n_features))


def eval_stage(fm: FeatureMatrix, selection: SelectionReport, cfg: RunConfig) -> EvalReport:
    fused = set(selection.fused)
    selected = fm.select([n for n in fm.names if n in fused])
    overrides = {**cfg.learners, "gbt": gbt_params(cfg)}
    return run_table4(
        fm, selected, default_specs(cfg.seed, overrides), cfg.split_fraction, cfg.seed,
        cfg.timing_repeats,
    )


def gbt_params(cfg: RunConfig) -> dict:
    params = dict(n_estimators=cfg.gbt_rounds, max_depth=cfg.gbt_depth,
                  learning_rate=cfg.gbt_learning_rate)
    params.update(cfg.learners.get("gbt", {}))
    return params
