"""Synthetic two-antenna reader data.

Per acquisition window each tag's received row m is

    y_m(k) = sum_paths g * sqrt(P) * a_m(theta_path) * s_m(k) + noise(k)

with the round-trip steering vector a, circular Gaussian noise of variance
``noise_var`` per complex sample, and the switching schedule assigning
interleaved sample slots to (antenna, tag) pairs.  The common-oscillator
downconversion cancels the carrier, so s_m(k) = 1 by default; the true
per-slot carrier phase can be re-enabled through the schedule for
sensitivity studies.

Gesture trajectories are parametric synthetic shapes (ramps, sinusoids,
arcs); only their coarse direction-of-motion character is modeled after the
named gestures, and mirrored gesture classes are exact sign-flips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import ArrayGeometry, steering_vector, unambiguous_fov
from .preprocess import IQWindow
from .readerlog import ReaderLog, ReadRecord


class OutOfFovError(ValueError):
    "A requested trajectory leaves the unambiguous field of view."


@dataclass(frozen=True)
class PathSpec:
    """One propagation path: complex round-trip gain and arrival angle."""

    gain: complex
    aoa: float
    is_los: bool = False


@dataclass
class SASSchedule:
    """Sample interleaving of the switching reader.

    ``samples_per_window`` counts one tag's samples per window over both
    antennas, so each antenna row holds half of them.  Global ADC slot n for
    snapshot k of (antenna m, tag slot i) is n = 4k + 2(m-1) + (i-1).
    """

    samples_per_window: int = 100
    sample_period_s: float = 2.5e-4
    residual_phase: bool = False

    def __post_init__(self):
        if self.samples_per_window < 4 or self.samples_per_window % 2:
            raise ValueError("samples_per_window must be even and >= 4")
        if self.sample_period_s <= 0:
            raise ValueError("sample_period_s must be > 0")

    @property
    def cols(self) -> int:
        "Snapshots per antenna per tag per window."
        return self.samples_per_window // 2

    @property
    def window_duration_s(self) -> float:
        return 4 * self.cols * self.sample_period_s

    def global_slots(self, window_idx: int, antenna: int, tag_slot: int) -> np.ndarray:
        k = window_idx * self.cols + np.arange(self.cols)
        return 4 * k + 2 * (antenna - 1) + (tag_slot - 1)

    def sample_times(self, window_idx: int, antenna: int, tag_slot: int) -> np.ndarray:
        return self.global_slots(window_idx, antenna, tag_slot) * self.sample_period_s

    def tx_sequence(self, window_idx: int, antenna: int, tag_slot: int,
                    carrier_freq_hz: float) -> np.ndarray:
        """Unit-modulus transmit samples x(n) at this row's slots.

        All ones when the residual carrier phase is disabled (the coherent
        common-oscillator default).
        """
        if not self.residual_phase:
            return np.ones(self.cols, dtype=complex)
        slots = self.global_slots(window_idx, antenna, tag_slot)
        frac = math.fmod(carrier_freq_hz * self.sample_period_s, 1.0)
        return np.exp(2j * np.pi * ((frac * slots) % 1.0))


@dataclass
class SimScene:
    """Scene description: geometry, per-tag path lists, power and noise.

    ``misdetect_prob`` is the per-tag per-window per-antenna probability of a
    lost read; a scalar applies to both antennas, a pair sets them
    separately.  ``modulation_gain`` folds the tag's reflection coefficient
    into every path gain.  ``angle_gain_db``/``angle_phase_rad`` optionally
    modulate the tag's gain with |theta|/fov (an even function of the angle),
    giving the RSS and phase channels motion texture that cannot separate
    mirrored gestures.
    """

    geometry: ArrayGeometry
    tags: list[tuple[str, list[PathSpec]]]
    tx_power: float = 1.0
    noise_var: float = 0.0
    misdetect_prob: float | tuple[float, float] = 0.0
    modulation_gain: float = 1.0
    angle_gain_db: float = 0.0
    angle_phase_rad: float = 0.0

    def __post_init__(self):
        if self.tx_power <= 0:
            raise ValueError("tx_power must be > 0")
        if self.noise_var < 0:
            raise ValueError("noise_var must be >= 0")
        if not 0.0 < self.modulation_gain <= 1.0:
            raise ValueError("modulation_gain must be in (0, 1]")
        p = self.misdetect_prob
        probs = (p, p) if np.isscalar(p) else tuple(p)
        if len(probs) != 2 or any(not 0.0 <= q <= 1.0 for q in probs):
            raise ValueError("misdetect_prob must be in [0, 1] per antenna")
        self.misdetect_prob = (float(probs[0]), float(probs[1]))
        for tag_id, paths in self.tags:
            if not paths or not paths[0].is_los:
                raise ValueError(f"tag {tag_id}: first path must be the LoS path")
            los = abs(paths[0].gain)
            for p_ in paths[1:]:
                if p_.is_los:
                    raise ValueError(f"tag {tag_id}: only one LoS path allowed")
                if abs(p_.gain) >= los:
                    raise ValueError(f"tag {tag_id}: NLoS paths must be weaker than LoS")

    def tag_ids(self) -> list[str]:
        return [t for t, _ in self.tags]


def _angle_factor(scene: SimScene, theta: float) -> complex:
    if scene.angle_gain_db == 0.0 and scene.angle_phase_rad == 0.0:
        return 1.0 + 0.0j
    r = min(abs(theta) / unambiguous_fov(scene.geometry), 1.0)
    mag = 10.0 ** (-scene.angle_gain_db * r / 20.0)
    return mag * np.exp(1j * scene.angle_phase_rad * r)


def simulate_window(scene: SimScene, schedule: SASSchedule, true_aoa_per_tag: list[float],
                    rng_seed, window_idx: int = 0) -> list[IQWindow]:
    """Simulate one acquisition window; returns one IQWindow per detected tag.

    The LoS path of each tag is steered to the corresponding entry of
    ``true_aoa_per_tag``; NLoS paths keep their fixed scene angles.  A tag
    misdetected on one antenna yields a partial window with that row
    NaN-filled; a tag misdetected on both antennas is omitted.
    """
    if not scene.tags:
        raise ValueError("scene has no tags")
    if len(scene.tags) > 2:
        raise ValueError("the 4-slot switching cycle serves at most two tags")
    if len(true_aoa_per_tag) != len(scene.tags):
        raise ValueError("need one true AoA per scene tag")
    rng = np.random.default_rng(rng_seed)
    amp = math.sqrt(scene.tx_power) * scene.modulation_gain
    sigma = math.sqrt(scene.noise_var / 2.0)
    cols = schedule.cols
    mid_t = (window_idx + 0.5) * schedule.window_duration_s
    out = []
    for slot, ((tag_id, paths), theta) in enumerate(zip(scene.tags, true_aoa_per_tag), start=1):
        missing = [rng.random() < scene.misdetect_prob[m] for m in (0, 1)]
        steer = np.zeros(2, dtype=complex)
        factor = _angle_factor(scene, theta)
        for path in paths:
            path_theta = theta if path.is_los else path.aoa
            steer += path.gain * factor * amp * steering_vector(path_theta, scene.geometry)
        matrix = np.empty((2, cols), dtype=complex)
        for m in (1, 2):
            tx = schedule.tx_sequence(window_idx, m, min(slot, 2), scene.geometry.carrier_freq_hz)
            noise = rng.normal(scale=sigma, size=cols) + 1j * rng.normal(scale=sigma, size=cols) \
                if sigma > 0 else 0.0
            matrix[m - 1] = steer[m - 1] * tx + noise
        if all(missing):
            continue
        for m in (0, 1):
            if missing[m]:
                matrix[m] = np.nan
        out.append(IQWindow(tag_id=tag_id, window_idx=window_idx, matrix=matrix,
                            midpoint_time_s=mid_t, complete=not any(missing)))
    return out


# --- gesture trajectories ------------------------------------------------

TRAJECTORY_KINDS = ("ramp", "sine", "arc", "const")


@dataclass(frozen=True)
class TagTrajectory:
    """Parametric angle-vs-time shape for one tag (angles in radians).

    ramp(start, end): smoothstep from start to end.
    sine(center, amp, cycles, phase0): center + amp*sin(2*pi*cycles*u + phase0).
    arc(start, amp): start + amp*(1 - cos(2*pi*u))/2, out and back.
    const(value): fixed angle.
    """

    kind: str
    params: tuple[float, ...]

    def __call__(self, u: np.ndarray) -> np.ndarray:
        p = self.params
        if self.kind == "ramp":
            s = u * u * (3.0 - 2.0 * u)
            return p[0] + (p[1] - p[0]) * s
        if self.kind == "sine":
            return p[0] + p[1] * np.sin(2.0 * np.pi * p[2] * u + p[3])
        if self.kind == "arc":
            return p[0] + p[1] * 0.5 * (1.0 - np.cos(2.0 * np.pi * u))
        if self.kind == "const":
            return np.full_like(u, p[0])
        raise ValueError(f"unknown trajectory kind {self.kind!r}")

    def mirrored(self) -> "TagTrajectory":
        "Exact sign-flip of the angle series."
        if self.kind == "sine":
            center, ampl, cycles, phase0 = self.params
            return TagTrajectory("sine", (-center, -ampl, cycles, phase0))
        return TagTrajectory(self.kind, tuple(-v for v in self.params))


@dataclass(frozen=True)
class GestureSpec:
    """A labeled multi-tag gesture: per-tag trajectories on a window grid."""

    class_id: str
    trajectories: tuple[TagTrajectory, ...]
    duration_s: float
    windows: int

    def mirrored(self, class_id: str) -> "GestureSpec":
        return GestureSpec(class_id, tuple(t.mirrored() for t in self.trajectories),
                           self.duration_s, self.windows)


def gesture_trajectory(spec: GestureSpec, tag_index: int) -> np.ndarray:
    "Angle series (radians) at the window midpoints for one tag."
    if not 0 <= tag_index < len(spec.trajectories):
        raise IndexError(f"tag_index {tag_index} out of range")
    u = (np.arange(spec.windows) + 0.5) / spec.windows
    return spec.trajectories[tag_index](u)


def _deg(x):
    return math.radians(x)


def build_gesture_spec(class_id: str, rng: np.random.Generator,
                       duration_s: float = 2.0, windows: int = 24) -> GestureSpec:
    """Draw a jittered trajectory pair for one of the eight gesture classes.

    SR, RAC, 2HLD and 2HOC are exact mirrors of SL, LAC, 2HLR and 2HIC; the
    same generator draw is negated so mirrored pairs stay sign-symmetric.
    """
    mirrors = {"SR": "SL", "RAC": "LAC", "2HLD": "2HLR", "2HOC": "2HIC"}
    if class_id in mirrors:
        return build_gesture_spec(mirrors[class_id], rng, duration_s, windows).mirrored(class_id)
    scale = rng.uniform(0.9, 1.1)
    off = _deg(rng.normal(0.0, 1.0))
    if class_id == "SL":
        traj = (TagTrajectory("ramp", (off - scale * _deg(12), off + scale * _deg(12))),
                TagTrajectory("const", (off - _deg(6),)))
    elif class_id == "LAC":
        traj = (TagTrajectory("sine", (off - _deg(4), scale * _deg(9), 1.0, -math.pi / 2)),
                TagTrajectory("const", (off - _deg(8),)))
    elif class_id == "2HLR":
        traj = (TagTrajectory("ramp", (off - _deg(3), off - scale * _deg(14))),
                TagTrajectory("ramp", (off + _deg(3), off + scale * _deg(14))))
    elif class_id == "2HIC":
        traj = (TagTrajectory("arc", (off - _deg(11), scale * _deg(9))),
                TagTrajectory("arc", (off + _deg(11), -scale * _deg(9))))
    else:
        raise ValueError(f"unknown gesture class {class_id!r}")
    return GestureSpec(class_id, traj, duration_s, windows)


GESTURE_CLASSES = ("SL", "SR", "LAC", "RAC", "2HLR", "2HLD", "2HIC", "2HOC")


# --- gesture-level simulation ---------------------------------------------

@dataclass
class GestureSample:
    """One labeled recording: per-tag truth, RSS and phase series.

    The smoothed AoA channel is filled in by the tracking stage; RSS/phase
    are the antenna-1 window aggregates, NaN where the read was lost.
    """

    label: str
    tag_ids: list[str]
    truth: dict[str, np.ndarray]
    rss: dict[str, np.ndarray]
    phase: dict[str, np.ndarray]
    aoa: dict[str, np.ndarray] = field(default_factory=dict)
    n_windows: int = 0
    dt_s: float = 0.0


def simulate_gesture(spec: GestureSpec, scene: SimScene, schedule: SASSchedule,
                     rng_seed) -> tuple[GestureSample, ReaderLog]:
    """Simulate a full gesture: reader log plus derived channel series.

    Window t of the log uses the trajectory angles at that window's midpoint
    and a per-window child seed, so logs are reproducible sample by sample.
    """
    n_tags = len(scene.tags)
    if len(spec.trajectories) != n_tags:
        raise ValueError(f"gesture needs {len(spec.trajectories)} tags, scene has {n_tags}")
    fov = unambiguous_fov(scene.geometry)
    trajs = [gesture_trajectory(spec, i) for i in range(n_tags)]
    for tag_i, series in enumerate(trajs):
        if np.max(np.abs(series)) > fov:
            raise OutOfFovError(
                f"tag {tag_i} trajectory reaches {math.degrees(np.max(np.abs(series))):.1f} deg, "
                f"outside the +-{math.degrees(fov):.1f} deg field of view")
    T = spec.windows
    tag_ids = scene.tag_ids()
    rss = {t: np.full(T, np.nan) for t in tag_ids}
    phase = {t: np.full(T, np.nan) for t in tag_ids}
    records: list[ReadRecord] = []
    base = rng_seed if isinstance(rng_seed, (list, tuple)) else [rng_seed]
    for t in range(T):
        angles = [traj[t] for traj in trajs]
        windows = {w.tag_id: w for w in
                   simulate_window(scene, schedule, angles, [*base, t], window_idx=t)}
        for slot, tag in enumerate(tag_ids, start=1):
            w = windows.get(tag)
            for m in (1, 2):
                t_row = float(schedule.sample_times(t, m, min(slot, 2))[0])
                row = None if w is None else w.matrix[m - 1]
                ok = row is not None and not np.isnan(row[0].real)
                if ok:
                    mean_iq = complex(np.mean(row))
                    rec = ReadRecord(t, t_row, tag, m, np.asarray(row),
                                     20.0 * math.log10(abs(mean_iq)),
                                     math.atan2(mean_iq.imag, mean_iq.real), True)
                    if m == 1:
                        rss[tag][t] = rec.rss_dbm
                        phase[tag][t] = rec.phase_rad
                else:
                    rec = ReadRecord(t, t_row, tag, m, None, math.nan, math.nan, False)
                records.append(rec)
    records.sort(key=lambda r: r.timestamp_s)
    truth = {tag: trajs[i].copy() for i, tag in enumerate(tag_ids)}
    log = ReaderLog(records=records, truth=truth).validate()
    sample = GestureSample(label=spec.class_id, tag_ids=tag_ids, truth=truth,
                           rss=rss, phase=phase, n_windows=T,
                           dt_s=schedule.window_duration_s)
    return sample, log


# --- canned scenes ---------------------------------------------------------

def paper_geometry() -> ArrayGeometry:
    "865.7 MHz carrier with 0.8-wavelength element spacing."
    from .geometry import SPEED_OF_LIGHT
    lam = SPEED_OF_LIGHT / 865.7e6
    return ArrayGeometry(865.7e6, 0.8 * lam)


def los_paths() -> list[PathSpec]:
    return [PathSpec(1.0 + 0.0j, 0.0, is_los=True)]


def nlos_paths(rng: np.random.Generator, geometry: ArrayGeometry,
               n_paths: int = 2, gain_db: float = -13.5) -> list[PathSpec]:
    "Random scatterer paths, each gain_db below the unit LoS gain."
    fov = unambiguous_fov(geometry)
    mag = 10.0 ** (gain_db / 20.0)
    return [PathSpec(mag * np.exp(2j * np.pi * rng.random()),
                     rng.uniform(-fov, fov), is_los=False)
            for _ in range(n_paths)]


def anechoic_scene(geometry: ArrayGeometry, snr_db: float,
                   tag_ids: tuple[str, ...] = ("tag1",), **kwargs) -> SimScene:
    "Line-of-sight only; unit LoS gain so SNR sets the noise floor directly."
    noise_var = 10.0 ** (-snr_db / 10.0)
    return SimScene(geometry, [(t, los_paths()) for t in tag_ids],
                    noise_var=noise_var, **kwargs)


def lab_scene(geometry: ArrayGeometry, snr_db: float, rng: np.random.Generator,
              tag_ids: tuple[str, ...] = ("tag1",), n_paths: int = 2,
              nlos_gain_db: float = -13.5, **kwargs) -> SimScene:
    "Anechoic scene plus random weak scatterer paths per tag."
    noise_var = 10.0 ** (-snr_db / 10.0)
    tags = [(t, los_paths() + nlos_paths(rng, geometry, n_paths, nlos_gain_db))
            for t in tag_ids]
    return SimScene(geometry, tags, noise_var=noise_var, **kwargs)


def gesture_scene(geometry: ArrayGeometry, snr_db: float, rng: np.random.Generator,
                  tag_ids: tuple[str, str] = ("tag1", "tag2"),
                  misdetect_prob: float = 0.05, n_paths: int = 2,
                  nlos_gain_db: float = -13.5, angle_gain_db: float = 2.5,
                  angle_phase_rad: float = 1.2, gain_jitter_db: float = 1.0,
                  phase_jitter_rad: float = 0.4) -> SimScene:
    """Lab-like two-tag scene with per-sample nuisance draws.

    Each tag's LoS gain gets a random level and phase offset so absolute
    RSS/phase are weak class cues; the angle-modulated texture remains.
    """
    scene = lab_scene(geometry, snr_db, rng, tag_ids, n_paths, nlos_gain_db,
                      misdetect_prob=misdetect_prob, angle_gain_db=angle_gain_db,
                      angle_phase_rad=angle_phase_rad)
    tags = []
    for tag_id, paths in scene.tags:
        level = 10.0 ** (rng.uniform(-gain_jitter_db, gain_jitter_db) / 20.0)
        rot = np.exp(1j * rng.uniform(-phase_jitter_rad, phase_jitter_rad))
        tags.append((tag_id, [replace(p, gain=p.gain * level * rot) for p in paths]))
    scene.tags = tags
    return scene
