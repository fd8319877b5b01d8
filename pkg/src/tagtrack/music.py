"""Per-window subspace AoA estimation for the two-antenna reader.

The snapshot covariance of a window is eigendecomposed in closed form (2x2
Hermitian), the eigenvector of the smaller eigenvalue spans the noise
subspace, and the pseudospectrum 1 / |a(theta)^H u_n|^2 is maximized by a
coarse grid sweep refined with a golden-section pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ArrayGeometry, steering_phase, unambiguous_fov
from .preprocess import IQWindow

SPECTRUM_FLOOR = 1e-15
"Denominator clamp; exact orthogonality would otherwise divide by zero."

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class CovEstimate:
    """Snapshot sample covariance (Hermitian 2x2) and its snapshot count."""

    matrix: np.ndarray
    num_snapshots: int


@dataclass
class Eig2:
    """Ordered eigenpairs of a 2x2 Hermitian matrix: lam_s >= lam_n."""

    lam_s: float
    lam_n: float
    u_s: np.ndarray
    u_n: np.ndarray


@dataclass
class AoAMeasurement:
    """One window's AoA estimate; invalid when the window was incomplete."""

    theta_hat: float
    spectrum_peak: float
    window_idx: int
    valid: bool


def sample_covariance(window: IQWindow) -> CovEstimate:
    "Snapshot covariance Y Y^H / n of a complete window (n >= 2 snapshots)."
    if not window.complete:
        raise ValueError("sample covariance needs both antenna rows; "
                         "incomplete windows become missing measurements")
    y = window.matrix
    n = y.shape[1]
    if n < 2:
        raise ValueError("need at least 2 snapshots")
    return CovEstimate(matrix=y @ y.conj().T / n, num_snapshots=n)


def eig2_hermitian(cov: CovEstimate | np.ndarray) -> Eig2:
    """Closed-form eigendecomposition of a Hermitian 2x2 matrix.

    The noise eigenvector is built as the exact orthogonal complement of the
    signal eigenvector, so u_s^H u_n = 0 to machine precision.
    """
    r = cov.matrix if isinstance(cov, CovEstimate) else np.asarray(cov)
    scale = float(np.abs(r).max()) or 1.0
    if abs(r[0, 1] - np.conj(r[1, 0])) > 1e-9 * scale or \
            max(abs(r[0, 0].imag), abs(r[1, 1].imag)) > 1e-9 * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    a = r[0, 0].real
    c = r[1, 1].real
    b = r[0, 1]
    disc = math.hypot(a - c, 2.0 * abs(b))
    lam_s = 0.5 * (a + c + disc)
    lam_n = 0.5 * (a + c - disc)
    if abs(b) > 1e-15 * scale:
        u_s = np.array([b, lam_s - a])
        u_s = u_s / np.linalg.norm(u_s)
    else:
        u_s = np.array([1.0 + 0.0j, 0.0j]) if a >= c else np.array([0.0j, 1.0 + 0.0j])
    u_n = np.array([-np.conj(u_s[1]), np.conj(u_s[0])])
    return Eig2(lam_s=lam_s, lam_n=lam_n, u_s=u_s, u_n=u_n)


def music_spectrum(theta, noise_vec: np.ndarray, geometry: ArrayGeometry):
    """Pseudospectrum 1 / (a^H u_n u_n^H a); accepts scalar or array theta.

    The denominator is clamped at SPECTRUM_FLOOR, so a noiseless window
    produces a finite, very large peak at the true angle.
    """
    phase = steering_phase(np.asarray(theta, dtype=float), geometry)
    proj = noise_vec[0] + np.exp(-1j * phase) * noise_vec[1]
    denom = np.maximum(np.abs(proj) ** 2, SPECTRUM_FLOOR)
    out = 1.0 / denom
    return float(out) if np.isscalar(theta) else out


def _golden_max(f, lo: float, hi: float, tol: float) -> float:
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc < fd:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
        else:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
    return 0.5 * (lo + hi)


def default_search_range(geometry: ArrayGeometry) -> tuple[float, float]:
    "Symmetric search range: +-18 deg, clamped into the unambiguous FOV."
    half = min(math.radians(18.0), unambiguous_fov(geometry))
    return (-half, half)


def estimate_aoa(window: IQWindow, geometry: ArrayGeometry,
                 search: tuple[float, float] | None = None,
                 grid_step: float = math.radians(0.1),
                 tx_sequence: np.ndarray | None = None) -> AoAMeasurement:
    """Grid + golden-section peak search of the pseudospectrum.

    ``tx_sequence`` (2 x n) divides out a known non-constant transmit
    sequence before the covariance, the reader knowing its own signal.
    Incomplete windows return an invalid measurement rather than raising.
    """
    if search is None:
        search = default_search_range(geometry)
    lo, hi = search
    fov = unambiguous_fov(geometry) + 1e-12
    if not lo < hi:
        raise ValueError("search range must satisfy theta_min < theta_max")
    if abs(lo) > fov or abs(hi) > fov:
        raise ValueError("search range must lie within the unambiguous field of view")
    if not window.complete:
        return AoAMeasurement(math.nan, math.nan, window.window_idx, False)
    w = window
    if tx_sequence is not None:
        w = IQWindow(window.tag_id, window.window_idx, window.matrix / tx_sequence,
                     window.midpoint_time_s, window.complete)
    eig = eig2_hermitian(sample_covariance(w))
    grid = np.arange(lo, hi + 0.5 * grid_step, grid_step)
    grid[-1] = min(grid[-1], hi)
    values = music_spectrum(grid, eig.u_n, geometry)
    k = int(np.argmax(values))
    b_lo = grid[max(k - 1, 0)]
    b_hi = grid[min(k + 1, grid.size - 1)]
    theta = _golden_max(lambda t: music_spectrum(t, eig.u_n, geometry),
                        float(b_lo), float(b_hi), tol=math.radians(0.002))
    return AoAMeasurement(theta_hat=float(theta),
                          spectrum_peak=music_spectrum(float(theta), eig.u_n, geometry),
                          window_idx=window.window_idx, valid=True)
