"""
Preprocessing a Muse recording
==============================

Raw Muse EEG arrives as four channels (TP9, AF7, AF8, TP10) at 256 Hz.
Before anything reaches the network it is band-passed to 0.1-75 Hz,
notched at 60 Hz, cut into 10-second intervals, and the last two seconds
of each interval are z-scored into a 4 x 512 window.

Run: python3 demos/01_preprocessing.py
"""

import numpy as np

from musecognet.signal_prep import (
    INTERVAL_SAMPLES,
    SAMPLE_RATE,
    avg_pool_target,
    bandpass_filter,
    extract_window,
    normalize_segment,
    notch_filter,
    preprocess_recording,
)

rng = np.random.default_rng(0)
t = np.arange(3 * INTERVAL_SAMPLES) / SAMPLE_RATE

# a 10 Hz "alpha" rhythm, mains hum at 60 Hz, a slow electrode drift and noise
alpha = np.sin(2 * np.pi * 10 * t)
hum = 0.8 * np.sin(2 * np.pi * 60 * t)
drift = 3.0 * t / t[-1]
raw = np.stack([alpha + hum + drift + 0.2 * rng.standard_normal(t.size) for _ in range(4)])
print("raw recording:", raw.shape)


def amplitude(x, f):
    # magnitude of the DFT bin at f, scaled to sinusoid amplitude
    spec = np.fft.rfft(x) * 2 / x.size
    freqs = np.fft.rfftfreq(x.size, 1 / SAMPLE_RATE)
    return abs(spec[np.argmin(abs(freqs - f))])


# Both filters run forward and backward, so there is no phase shift.
clean = preprocess_recording(raw)
for f in (10, 60):
    print(f"{f:>3} Hz amplitude  raw {amplitude(raw[0], f):.3f}  ->  filtered {amplitude(clean[0], f):.5f}")
print(f"mean of channel 0 (drift removed): {clean[0].mean():+.4f}")

# the individual stages are usable on their own too
only_band = bandpass_filter(raw)
only_notch = notch_filter(raw)
print("band-pass only keeps hum:", round(amplitude(only_band[0], 60), 3))
print("notch only keeps drift:  ", round(only_notch[0, -SAMPLE_RATE:].mean(), 3))

# Windowing: interval i covers samples [i*2560, (i+1)*2560)
for i in range(3):
    interval = clean[:, i * INTERVAL_SAMPLES : (i + 1) * INTERVAL_SAMPLES]
    window = normalize_segment(extract_window(interval))
    print(f"interval {i}: window {window.shape}, per-channel mean {window.mean(1).round(6)}, std {window.std(1).round(6)}")

# The self-supervised target: 32-sample average pooling of the window
target = avg_pool_target(window)
print("pooled reconstruction target:", target.shape)

# Short recordings are refused instead of silently mis-filtered
try:
    bandpass_filter(np.zeros(10))
except ValueError as err:
    print("short input:", err)
