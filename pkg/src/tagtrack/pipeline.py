"""Dataset-level orchestration: synthesize, track, featurize, classify.

Per-sample child seeds come from the run seed plus the sample index, so a
dataset is reproducible sample by sample and samples can be generated in
any order or in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classify import (EvalReport, LabeledDataset, dtw_1nn_classify, evaluate,
                       knn_feature_classify, stratified_split)
from .features import FEATURE_CONFIGS, featurize_dataset, prepare_channel
from .geometry import ArrayGeometry
from .readerlog import ReaderLog
from .simulate import (GESTURE_CLASSES, GestureSample, SASSchedule,
                       build_gesture_spec, gesture_scene, simulate_gesture)
from .tracking import KalmanConfig, track_aoa


@dataclass
class DatasetSpec:
    """Synthetic gesture dataset description."""

    classes: tuple[str, ...] = GESTURE_CLASSES
    samples_per_class: int = 40
    windows: int = 24
    snr_db: float = 10.0
    misdetect_prob: float = 0.05
    nlos_paths: int = 2
    nlos_gain_db: float = -13.5
    angle_gain_db: float = 2.5
    angle_phase_rad: float = 1.2
    tag_ids: tuple[str, str] = ("tag1", "tag2")


def synthesize_gesture(class_id: str, geometry: ArrayGeometry, schedule: SASSchedule,
                       spec: DatasetSpec, seed) -> tuple[GestureSample, ReaderLog]:
    "One labeled gesture recording with per-sample scene nuisances."
    base = list(seed) if isinstance(seed, (list, tuple)) else [seed]
    rng = np.random.default_rng([*base, 0])
    scene = gesture_scene(geometry, spec.snr_db, rng, tag_ids=spec.tag_ids,
                          misdetect_prob=spec.misdetect_prob, n_paths=spec.nlos_paths,
                          nlos_gain_db=spec.nlos_gain_db, angle_gain_db=spec.angle_gain_db,
                          angle_phase_rad=spec.angle_phase_rad)
    gesture = build_gesture_spec(class_id, rng,
                                 duration_s=spec.windows * schedule.window_duration_s,
                                 windows=spec.windows)
    return simulate_gesture(gesture, scene, schedule, rng_seed=[*base, 1])


def attach_tracks(sample: GestureSample, log: ReaderLog, geometry: ArrayGeometry,
                  kalman: KalmanConfig | None = None,
                  samples_per_window: int | None = None) -> GestureSample:
    """Run the tracking chain on the log and fill the sample's AoA channel.

    Smoothed estimates land on the acquisition-window grid via their
    midpoints; windows missing from the track stay NaN (imputed at feature
    time).
    """
    tracks = track_aoa(log, geometry, samples_per_window=samples_per_window, kalman=kalman)
    dt_acq = sample.dt_s
    for tag in sample.tag_ids:
        series = np.full(sample.n_windows, np.nan)
        track = tracks.get(tag)
        if track is not None and track.smoothed is not None:
            smoothed = track.smoothed_series()
            for slot in range(track.n_windows):
                mid = track.midpoint_s[slot] if track.midpoint_s is not None else None
                w = int(round(mid / dt_acq - 0.5)) if mid is not None and dt_acq > 0 else slot
                if 0 <= w < sample.n_windows:
                    series[w] = smoothed[slot]
        sample.aoa[tag] = series
    return sample


def synthesize_dataset(geometry: ArrayGeometry, schedule: SASSchedule, spec: DatasetSpec,
                       seed: int, tracked: bool = True,
                       kalman: KalmanConfig | None = None,
                       keep_logs: bool = False):
    """Full labeled dataset; returns samples (and logs when keep_logs).

    Sample i of class c uses child seed [seed, class_index, i].
    """
    samples, logs = [], []
    for ci, class_id in enumerate(spec.classes):
        for i in range(spec.samples_per_class):
            sample, log = synthesize_gesture(class_id, geometry, schedule, spec,
                                             seed=[seed, ci, i])
            if tracked:
                attach_tracks(sample, log, geometry, kalman=kalman)
            samples.append(sample)
            if keep_logs:
                logs.append(log)
    return (samples, logs) if keep_logs else samples


def series_bundle(sample: GestureSample, channel: str) -> dict[str, np.ndarray]:
    "Per-tag prepared series of one channel, keyed for bundle DTW."
    out = {}
    for tag in sorted(sample.tag_ids):
        raw = getattr(sample, channel)[tag]
        out[f"{tag}:{channel}"] = prepare_channel(channel, raw, sample.n_windows)
    return out


def knn_experiment(samples: list[GestureSample], config_name: str,
                   split_seed: int = 0, k: int = 5) -> EvalReport:
    "Stratified 70/30 split, k-NN on the named feature config, metrics."
    x, layout, labels = featurize_dataset(samples, FEATURE_CONFIGS[config_name])
    train_idx, test_idx = stratified_split(labels, seed=split_seed)
    classes = tuple(sorted(set(labels)))
    train = LabeledDataset(labels=[labels[i] for i in train_idx],
                           features=x[train_idx], config_name=config_name,
                           classes=classes, split_seed=split_seed)
    preds = [knn_feature_classify(train, x[i], k=k) for i in test_idx]
    return evaluate(preds, [labels[i] for i in test_idx], classes)


def dtw_experiment(samples: list[GestureSample], channel: str,
                   split_seed: int = 0) -> EvalReport:
    "Stratified 70/30 split, 1-NN DTW on one raw channel, metrics."
    labels = [s.label for s in samples]
    bundles = [series_bundle(s, channel) for s in samples]
    train_idx, test_idx = stratified_split(labels, seed=split_seed)
    classes = tuple(sorted(set(labels)))
    train = LabeledDataset(labels=[labels[i] for i in train_idx],
                           bundles=[bundles[i] for i in train_idx],
                           classes=classes, split_seed=split_seed)
    preds = [dtw_1nn_classify(train, bundles[i]) for i in test_idx]
    return evaluate(preds, [labels[i] for i in test_idx], classes)


def tracking_rmse(sample: GestureSample, log: ReaderLog, geometry: ArrayGeometry,
                  kalman: KalmanConfig | None = None) -> dict[str, dict[str, float]]:
    """Raw / filtered / smoothed RMSE vs ground truth per tag (radians).

    Only windows with a raw measurement enter the raw RMSE; filtered and
    smoothed RMSEs cover every tracked window.
    """
    tracks = track_aoa(log, geometry, kalman=kalman)
    out = {}
    for tag, track in tracks.items():
        truth_full = log.truth[tag]
        dt_acq = sample.dt_s
        idx = np.array([int(round(m / dt_acq - 0.5)) for m in track.midpoint_s])
        keep = (idx >= 0) & (idx < truth_full.size)
        truth = truth_full[idx[keep]]
        raw = track.raw_series()[keep]
        filt = track.filtered_series()[keep]
        smooth = track.smoothed_series()[keep]
        ok = np.isfinite(raw)
        out[tag] = {
            "raw": float(np.sqrt(np.mean((raw[ok] - truth[ok]) ** 2))) if ok.any() else math.nan,
            "filtered": float(np.sqrt(np.mean((filt - truth) ** 2))),
            "smoothed": float(np.sqrt(np.mean((smooth - truth) ** 2))),
        }
    return out
