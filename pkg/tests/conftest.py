import numpy as np
import pytest

FS = 256.0


def tone(freq, seconds=20.0, fs=FS, amp=1.0, phase=0.3):
    t = np.arange(int(seconds * fs)) / fs
    return amp * np.sin(2 * np.pi * freq * t + phase)


def fitted_amplitude(y, freq, fs=FS, trim=0.25):
    """Least-squares amplitude of a sinusoid at ``freq`` over the central part of ``y``."""
    n = len(y)
    lo, hi = int(n * trim), int(n * (1 - trim))
    t = np.arange(n)[lo:hi] / fs
    basis = np.column_stack([np.sin(2 * np.pi * freq * t), np.cos(2 * np.pi * freq * t)])
    coef, *_ = np.linalg.lstsq(basis, y[lo:hi], rcond=None)
    return float(np.hypot(*coef))


def butter_bandpass_gain(f, low, high, order, fs=FS):
    """|H(f)| of a bilinear-transformed Butterworth band-pass, from the analog prototype."""
    warp = lambda x: 2 * fs * np.tan(np.pi * x / fs)  # noqa: E731
    w, wl, wh = warp(f), warp(low), warp(high)
    w0sq, bw = wl * wh, wh - wl
    lp = (w * w - w0sq) / (w * bw)
    return 1.0 / np.sqrt(1.0 + lp ** (2 * order))


def biquad_notch_gain(f, f0, q, fs=FS):
    """|H(f)| of the standard second-order IIR notch, coefficients in closed form."""
    w0 = 2 * np.pi * f0 / fs
    beta = np.tan(w0 / q / 2)
    g = 1.0 / (1.0 + beta)
    b = g * np.array([1.0, -2 * np.cos(w0), 1.0])
    a = np.array([1.0, -2 * g * np.cos(w0), 2 * g - 1])
    z = np.exp(-1j * 2 * np.pi * f / fs * np.arange(3))
    return float(abs(b @ z) / abs(a @ z))


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, name, passed, detail):
    line = f"[criterion {number}] {'PASS' if passed else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
