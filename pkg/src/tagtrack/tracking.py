"""Constant-rate Kalman filtering and RTS smoothing of per-window AoA measurements.

State is [angle, angular rate]; dynamics x_t = F x_{t-1} + w with
F = [[1, dt], [0, 1]], measurements z_t = angle + v.  Windows without a valid
measurement skip the update step (posterior := prior), and the smoother runs
the standard backward recursion over the stored forward sequences.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ArrayGeometry
from .music import estimate_aoa
from .preprocess import (measurement_slots, prune_single_antenna_segments,
                         split_by_tag, window_segments)
from .readerlog import ReaderLog

logger = logging.getLogger(__name__)


@dataclass
class KalmanConfig:
    """Tracker tuning.

    Defaults: process noise stds 0.01 rad / 0.1 rad/s, measurement std
    0.035 rad (about 2 deg, the order of lab MUSIC scatter).  dt filled from
    the measurement grid when None.  x0 defaults to (first valid
    measurement, 0); the rate can optionally be seeded from the first two
    measurements instead.
    """

    dt: float | None = None
    sigma_theta: float = 0.01
    sigma_omega: float = 0.1
    sigma_v: float = 0.035
    x0: np.ndarray | None = None
    p0: np.ndarray = field(default_factory=lambda: np.eye(2))
    seed_rate_from_first_two: bool = False

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.sigma_theta < 0 or self.sigma_omega < 0:
            raise ValueError("process noise stds must be >= 0")
        if self.sigma_v <= 0:
            raise ValueError("sigma_v must be > 0")

    @property
    def f_matrix(self) -> np.ndarray:
        return np.array([[1.0, self.dt], [0.0, 1.0]])

    @property
    def q_matrix(self) -> np.ndarray:
        return np.diag([self.sigma_theta ** 2, self.sigma_omega ** 2])


H = np.array([1.0, 0.0])


def _sym(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def predict(state: np.ndarray, cov: np.ndarray, cfg: KalmanConfig):
    "Prior state F x and covariance F P F^T + Q (symmetrized)."
    f = cfg.f_matrix
    return f @ state, _sym(f @ cov @ f.T + cfg.q_matrix)


def update(prior_state: np.ndarray, prior_cov: np.ndarray, z: float, cfg: KalmanConfig):
    """Measurement update; returns (posterior state, posterior cov, gain)."""
    s = prior_cov[0, 0] + cfg.sigma_v ** 2
    if s <= 0:
        raise FloatingPointError("innovation variance is not positive")
    gain = prior_cov @ H / s
    post = prior_state + gain * (z - prior_state[0])
    post_cov = _sym((np.eye(2) - np.outer(gain, H)) @ prior_cov)
    return post, post_cov, gain


@dataclass
class AoATrack:
    """Measurement sequence with filtered and smoothed state histories."""

    z: np.ndarray                   # (T,), NaN where missing
    valid: np.ndarray               # (T,) bool
    priors: np.ndarray              # (T, 2)
    prior_covs: np.ndarray          # (T, 2, 2)
    posts: np.ndarray               # (T, 2)
    post_covs: np.ndarray           # (T, 2, 2)
    gains: np.ndarray               # (T, 2), NaN rows where update skipped
    smoothed: np.ndarray | None = None
    smoothed_covs: np.ndarray | None = None
    smoother_gains: np.ndarray | None = None
    low_confidence: bool = False
    midpoint_s: np.ndarray | None = None
    dt: float = 0.0

    @property
    def n_windows(self) -> int:
        return self.z.size

    def raw_series(self) -> np.ndarray:
        return self.z

    def filtered_series(self) -> np.ndarray:
        return self.posts[:, 0]

    def smoothed_series(self) -> np.ndarray:
        if self.smoothed is None:
            raise ValueError("run rts_smooth first")
        return self.smoothed[:, 0]


def filter_sequence(z: np.ndarray, cfg: KalmanConfig,
                    valid: np.ndarray | None = None) -> AoATrack:
    """Forward Kalman pass over a measurement sequence with gaps.

    ``z`` entries that are NaN (or masked out by ``valid``) skip the update:
    the posterior and its covariance are the prior, unchanged.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size == 0:
        raise ValueError("z must be a non-empty 1-D sequence")
    valid = np.isfinite(z) if valid is None else np.asarray(valid, bool) & np.isfinite(z)
    T = z.size
    if cfg.dt is None:
        cfg = KalmanConfig(dt=1.0, sigma_theta=cfg.sigma_theta, sigma_omega=cfg.sigma_omega,
                           sigma_v=cfg.sigma_v, x0=cfg.x0, p0=cfg.p0,
                           seed_rate_from_first_two=cfg.seed_rate_from_first_two)
    x0 = cfg.x0
    if x0 is None:
        idx = np.nonzero(valid)[0]
        theta0 = z[idx[0]] if idx.size else 0.0
        rate0 = 0.0
        if cfg.seed_rate_from_first_two and idx.size >= 2:
            rate0 = (z[idx[1]] - z[idx[0]]) / ((idx[1] - idx[0]) * cfg.dt)
        x0 = np.array([theta0, rate0])
    state, cov = np.asarray(x0, float), np.asarray(cfg.p0, float)
    priors = np.empty((T, 2))
    prior_covs = np.empty((T, 2, 2))
    posts = np.empty((T, 2))
    post_covs = np.empty((T, 2, 2))
    gains = np.full((T, 2), np.nan)
    for t in range(T):
        state, cov = predict(state, cov, cfg)
        priors[t], prior_covs[t] = state, cov
        if valid[t]:
            state, cov, gains[t] = update(state, cov, z[t], cfg)
        posts[t], post_covs[t] = state, cov
    return AoATrack(z=z, valid=valid, priors=priors, prior_covs=prior_covs,
                    posts=posts, post_covs=post_covs, gains=gains,
                    low_confidence=not valid.any(), dt=cfg.dt)


def rts_smooth(track: AoATrack, cfg: KalmanConfig) -> AoATrack:
    """Backward smoothing pass; fills the smoothed fields of the track.

    A singular next-step prior covariance gets 1e-12 diagonal loading
    (logged) before inversion.
    """
    T = track.n_windows
    f = cfg.f_matrix if cfg.dt is not None else KalmanConfig(dt=track.dt or 1.0).f_matrix
    xs = track.posts.copy()
    ps = track.post_covs.copy()
    gs = np.zeros((max(T - 1, 0), 2, 2))
    for t in range(T - 2, -1, -1):
        p_pred = track.prior_covs[t + 1]
        det = p_pred[0, 0] * p_pred[1, 1] - p_pred[0, 1] * p_pred[1, 0]
        if not np.isfinite(det) or abs(det) < 1e-300:
            logger.warning("singular prior covariance at window %d; loading diagonal", t + 1)
            p_pred = p_pred + 1e-12 * np.eye(2)
        g = track.post_covs[t] @ f.T @ np.linalg.inv(p_pred)
        gs[t] = g
        xs[t] = track.posts[t] + g @ (xs[t + 1] - track.priors[t + 1])
        ps[t] = _sym(track.post_covs[t] + g @ (ps[t + 1] - track.prior_covs[t + 1]) @ g.T)
    track.smoothed = xs
    track.smoothed_covs = ps
    track.smoother_gains = gs
    return track


@dataclass
class TrackingResult:
    """Per-tag track plus the slot grid it lives on."""

    track: AoATrack
    slots: list[int]
    dt: float


def track_aoa(log: ReaderLog, geometry: ArrayGeometry,
              samples_per_window: int | None = None,
              music_search: tuple[float, float] | None = None,
              music_grid_step: float = math.radians(0.1),
              kalman: KalmanConfig | None = None) -> dict[str, AoATrack]:
    """Full per-tag chain: split, prune, window, measure, filter, smooth.

    ``samples_per_window`` defaults to the log's own acquisition window size.
    Pruned or misdetected acquisition windows surface as missing measurement
    slots.  Returns the smoothed track per tag; tags with no usable window
    are omitted.
    """
    out: dict[str, AoATrack] = {}
    for tag, records in split_by_tag(log).items():
        pruned = prune_single_antenna_segments(records)
        if not pruned:
            continue
        spw = samples_per_window
        if spw is None:
            spw = 2 * max(r.iq.size for r in pruned)
        windows = window_segments(pruned, spw, tag_id=tag)
        if not windows:
            continue
        slots, dt = measurement_slots(windows)
        T = slots[-1] + 1
        z = np.full(T, np.nan)
        mids = np.full(T, np.nan)
        for w, slot in zip(windows, slots):
            meas = estimate_aoa(w, geometry, search=music_search, grid_step=music_grid_step)
            if meas.valid:
                z[slot] = meas.theta_hat
            mids[slot] = w.midpoint_time_s
        base = kalman or KalmanConfig()
        cfg = KalmanConfig(dt=base.dt if base.dt is not None else (dt if dt > 0 else 1.0),
                           sigma_theta=base.sigma_theta, sigma_omega=base.sigma_omega,
                           sigma_v=base.sigma_v, x0=base.x0, p0=base.p0,
                           seed_rate_from_first_two=base.seed_rate_from_first_two)
        track = rts_smooth(filter_sequence(z, cfg), cfg)
        if np.isnan(mids).any() and np.isfinite(mids).any():
            first = np.nanmin(mids)
            step = cfg.dt
            idx = np.arange(T, dtype=float)
            first_slot = int(np.nanargmin(mids))
            mids = first + (idx - first_slot) * step
        track.midpoint_s = mids
        out[tag] = track
    return out
