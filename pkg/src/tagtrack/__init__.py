"""AoA estimation and tracking for two-antenna RFID readers.

Pipeline: synthesize (or import) reader IQ logs -> per-window subspace AoA
measurements -> Kalman filter + RTS smoother tracks -> statistical/wavelet
feature vectors -> distance-based gesture classification.
"""

__version__ = "0.1.0"
