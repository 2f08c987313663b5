"""Preprocessing for Muse EEG: filtering, window extraction, scaling, pooled targets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

SAMPLE_RATE = 256
CHANNELS = ("TP9", "AF7", "AF8", "TP10")
INTERVAL_SECONDS = 10
WINDOW_SECONDS = 2
INTERVAL_SAMPLES = INTERVAL_SECONDS * SAMPLE_RATE  # 2560
WINDOW_SAMPLES = WINDOW_SECONDS * SAMPLE_RATE  # 512
POOL_WINDOW = 32

BANDPASS_LOW = 0.1
BANDPASS_HIGH = 75.0
BANDPASS_ORDER = 4
NOTCH_FREQ = 60.0
NOTCH_Q = 30.0

_STD_FLOOR = 1e-8


class SignalError(ValueError):
    """Raised when a signal violates a preprocessing precondition."""


@dataclass(frozen=True)
class RawRecording:
    """One subject's continuous recording, channels in canonical order."""

    subject_id: str
    samples: np.ndarray  # (n_channels, n_samples), microvolts
    sample_rate: int = SAMPLE_RATE
    channels: tuple[str, ...] = CHANNELS

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise SignalError(f"sample_rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")
        if len(self.channels) != len(CHANNELS):
            raise SignalError(f"expected {len(CHANNELS)} channels, got {len(self.channels)}")
        if self.samples.ndim != 2 or self.samples.shape[0] != len(self.channels):
            raise SignalError(
                f"samples must have shape ({len(self.channels)}, n), got {self.samples.shape}"
            )

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class EegSegment:
    """A 4 x 512 model input window and where it came from."""

    data: np.ndarray
    source: tuple[str, int] = field(default=("", -1))

    def __post_init__(self):
        expected = (len(CHANNELS), WINDOW_SAMPLES)
        if self.data.shape != expected:
            raise SignalError(f"segment must have shape {expected}, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise SignalError("segment contains non-finite values")


def _as_2d(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise SignalError(f"expected 1-D or (channels, samples) input, got ndim={x.ndim}")
    return x, False


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise SignalError("input contains non-finite values")


def _filtfilt_min_length(n_sections: int) -> int:
    # sosfiltfilt's default odd-extension pad length, plus one sample
    return 3 * (2 * n_sections + 1) + 1


def bandpass_filter(
    x: np.ndarray,
    low: float = BANDPASS_LOW,
    high: float = BANDPASS_HIGH,
    fs: float = SAMPLE_RATE,
    order: int = BANDPASS_ORDER,
) -> np.ndarray:
    """Zero-phase Butterworth band-pass along the last axis.

    The design is an order-``order`` Butterworth band-pass in second-order
    sections, run forward and backward, so the magnitude response is the
    square of the single-pass response and the phase is zero.

    Args:
        x: 1-D signal or ``(channels, samples)`` array.
        low, high: cutoff frequencies in Hz, ``0 < low < high < fs / 2``.
        fs: sampling rate in Hz.
        order: Butterworth prototype order.

    Returns:
        Filtered array with the same shape as ``x``.
    """
    if not 0 < low < high < fs / 2:
        raise SignalError(f"need 0 < low < high < fs/2, got low={low}, high={high}, fs={fs}")
    x2, squeeze = _as_2d(x)
    _check_finite(x2)
    sos = signal.butter(order, [low, high], btype="bandpass", fs=fs, output="sos")
    min_len = max(4 * order, _filtfilt_min_length(len(sos)))
    if x2.shape[1] < min_len:
        raise SignalError(
            f"signal too short for stable filtering: {x2.shape[1]} samples, need >= {min_len}"
        )
    y = signal.sosfiltfilt(sos, x2, axis=-1)
    return y[0] if squeeze else y


def notch_filter(
    x: np.ndarray,
    center: float = NOTCH_FREQ,
    quality: float = NOTCH_Q,
    fs: float = SAMPLE_RATE,
) -> np.ndarray:
    """Zero-phase second-order IIR notch along the last axis."""
    if not 0 < center < fs / 2:
        raise SignalError(f"need 0 < center < fs/2, got center={center}, fs={fs}")
    if quality <= 0:
        raise SignalError(f"quality must be positive, got {quality}")
    x2, squeeze = _as_2d(x)
    _check_finite(x2)
    b, a = signal.iirnotch(center, quality, fs=fs)
    sos = signal.tf2sos(b, a)
    min_len = _filtfilt_min_length(len(sos))
    if x2.shape[1] < min_len:
        raise SignalError(
            f"signal too short for stable filtering: {x2.shape[1]} samples, need >= {min_len}"
        )
    y = signal.sosfiltfilt(sos, x2, axis=-1)
    return y[0] if squeeze else y


def preprocess_recording(samples: np.ndarray, fs: float = SAMPLE_RATE) -> np.ndarray:
    """Band-pass 0.1-75 Hz then notch at 60 Hz over a whole recording."""
    return notch_filter(bandpass_filter(samples, fs=fs), fs=fs)


def extract_window(interval: np.ndarray) -> np.ndarray:
    """Return the final two seconds (samples 2048..2559) of a 10-second interval."""
    interval = np.asarray(interval)
    if interval.ndim != 2 or interval.shape[1] != INTERVAL_SAMPLES:
        actual = interval.shape[-1] if interval.ndim else 0
        raise SignalError(
            f"interval must have {INTERVAL_SAMPLES} samples per channel, got {actual}"
        )
    return interval[:, INTERVAL_SAMPLES - WINDOW_SAMPLES :].copy()


def normalize_segment(segment: np.ndarray) -> np.ndarray:
    """Z-score each channel (population std); flat channels become zeros."""
    x = np.asarray(segment, dtype=np.float64)
    mean = x.mean(axis=-1, keepdims=True)
    std = x.std(axis=-1, keepdims=True)
    flat = std < _STD_FLOOR
    out = (x - mean) / np.where(flat, 1.0, std)
    return np.where(flat, 0.0, out)


def avg_pool_target(segment: np.ndarray, window: int = POOL_WINDOW) -> np.ndarray:
    """Non-overlapping window means along time: ``(..., T) -> (..., T // window)``."""
    x = np.asarray(segment, dtype=np.float64)
    n = x.shape[-1]
    if window <= 0 or n % window:
        raise SignalError(f"length {n} is not divisible by pool window {window}")
    return x.reshape(*x.shape[:-1], n // window, window).mean(axis=-1)
