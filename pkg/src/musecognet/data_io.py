"""Reading recordings and labels, label binning, LOSO folds and synthetic data."""

from __future__ import annotations

import configparser
import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .signal_prep import (
    CHANNELS,
    INTERVAL_SAMPLES,
    SAMPLE_RATE,
    EegSegment,
    RawRecording,
    extract_window,
    normalize_segment,
    preprocess_recording,
)

logger = logging.getLogger(__name__)

LABELS_FILE = "labels.csv"
LABEL_HEADER = ("subject_id", "interval_index", "score")
RECORDING_HEADER = ("timestamp", *CHANNELS)
PREFILTERED_MARKER = "# musecognet prefiltered=1"

# inclusive upper score bound for each class
DEFAULT_BINS = (3, 6, 9)

SYNTH_FREQS = (6.0, 10.0, 20.0)
SYNTH_SNR_DB = 6.0
SYNTH_SCORES = (2, 5, 8)


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class LabeledWindow:
    segment: EegSegment
    label: int
    subject_id: str
    interval_index: int

    def __post_init__(self):
        if self.label not in (0, 1, 2):
            raise DataError(f"label must be 0, 1 or 2, got {self.label}")


@dataclass(frozen=True)
class LosoFold:
    held_out_subject: str
    train: list[LabeledWindow]
    test: list[LabeledWindow]


# ---------------------------------------------------------------------------
# CSV ingestion


def read_schema(path: str | Path) -> dict[str, str]:
    """Read a ``canonical = source`` column mapping (no section header needed)."""
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string("[schema]\n" + Path(path).read_text())
    return dict(parser["schema"])


def _open_text(source) -> TextIO:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, (str, Path)):
        return open(source, newline="", encoding="utf-8")
    if isinstance(source, io.BufferedIOBase) or hasattr(source, "mode") and "b" in source.mode:
        return io.TextIOWrapper(source, encoding="utf-8", newline="")
    return source


def ingest_recording(
    source, subject_id: str = "", schema: dict[str, str] | None = None
) -> RawRecording:
    """Parse a recording CSV into a :class:`RawRecording`.

    Args:
        source: path, bytes, or text/binary stream of CSV.
        subject_id: identifier stored on the recording.
        schema: optional mapping from canonical channel name to the column
            name used in the file.
    """
    schema = schema or {}
    fh = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("recording CSV is empty (no header row)") from None
        cols = []
        for ch in CHANNELS:
            name = schema.get(ch, ch)
            if name not in header:
                raise DataError(f"missing column {name!r}" + (f" (for {ch})" if name != ch else ""))
            cols.append(header.index(name))
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            values = []
            for ch, col in zip(CHANNELS, cols):
                try:
                    v = float(row[col])
                except (IndexError, ValueError):
                    raise DataError(f"row {lineno}: cannot parse {ch} value") from None
                if not math.isfinite(v):
                    raise DataError(f"row {lineno}: non-finite {ch} value {row[col]!r}")
                values.append(v)
            rows.append(values)
    finally:
        if fh is not source:
            fh.close()
    samples = np.array(rows, dtype=np.float64).reshape(-1, len(CHANNELS)).T
    return RawRecording(subject_id=subject_id, samples=samples)


def _data_lines(fh: TextIO) -> Iterable[tuple[int, str]]:
    for lineno, line in enumerate(fh, start=1):
        if line.startswith("#") or not line.strip():
            continue
        yield lineno, line


def ingest_labels(source) -> list[tuple[str, int, int]]:
    """Parse a label CSV into ``(subject_id, interval_index, score)`` tuples in file order."""
    fh = _open_text(source)
    try:
        lines = list(_data_lines(fh))
    finally:
        if fh is not source:
            fh.close()
    if not lines:
        raise DataError("label CSV is empty (no header row)")
    header = tuple(h.strip() for h in next(csv.reader([lines[0][1]])))
    if header != LABEL_HEADER:
        raise DataError(f"label header must be {','.join(LABEL_HEADER)}, got {','.join(header)}")
    out = []
    for lineno, line in lines[1:]:
        row = next(csv.reader([line]))
        if len(row) != 3:
            raise DataError(f"row {lineno}: expected 3 fields, got {len(row)}")
        try:
            interval, score = int(row[1]), int(row[2])
        except ValueError:
            raise DataError(f"row {lineno}: interval_index and score must be integers") from None
        if not 1 <= score <= 9:
            raise DataError(f"row {lineno}: score {score} outside 1..9")
        out.append((row[0].strip(), interval, score))
    return out


def labels_prefiltered(source) -> bool:
    """True if the label file carries the pre-filtered marker line."""
    fh = _open_text(source)
    try:
        return any(line.strip() == PREFILTERED_MARKER for line in fh)
    finally:
        if fh is not source:
            fh.close()


def bin_label(score: int, bins: Sequence[int] = DEFAULT_BINS) -> int:
    """Map a 1..9 score to class 0/1/2 using inclusive upper bounds ``bins``."""
    if not 1 <= score <= 9:
        raise DataError(f"score {score} outside 1..9")
    for cls, upper in enumerate(bins):
        if score <= upper:
            return cls
    raise DataError(f"score {score} above the last bin bound {bins[-1]}")


def windows_from_recording(
    recording: RawRecording,
    labels: Iterable[tuple[int, int]],
    prefiltered: bool = False,
    bins: Sequence[int] = DEFAULT_BINS,
) -> list[LabeledWindow]:
    """Filter a recording and cut one normalized window per labelled interval.

    ``labels`` holds ``(interval_index, score)`` pairs; interval ``i`` spans
    samples ``[i * 2560, (i + 1) * 2560)``. Incomplete intervals are dropped.
    """
    samples = recording.samples if prefiltered else preprocess_recording(recording.samples)
    out = []
    for interval, score in labels:
        start = interval * INTERVAL_SAMPLES
        stop = start + INTERVAL_SAMPLES
        if interval < 0 or stop > samples.shape[1]:
            logger.warning(
                "subject %s interval %d: fewer than %d samples, dropped",
                recording.subject_id, interval, INTERVAL_SAMPLES,
            )
            continue
        seg = normalize_segment(extract_window(samples[:, start:stop]))
        out.append(
            LabeledWindow(
                segment=EegSegment(seg, (recording.subject_id, interval)),
                label=bin_label(score, bins),
                subject_id=recording.subject_id,
                interval_index=interval,
            )
        )
    return out


def load_dataset(
    data_dir: str | Path,
    schema: dict[str, str] | None = None,
    bins: Sequence[int] = DEFAULT_BINS,
) -> list[LabeledWindow]:
    """Load ``labels.csv`` plus one ``<subject_id>.csv`` recording per subject."""
    data_dir = Path(data_dir)
    label_path = data_dir / LABELS_FILE
    if not label_path.is_file():
        raise DataError(f"no {LABELS_FILE} in {data_dir}")
    rows = ingest_labels(label_path)
    prefiltered = labels_prefiltered(label_path)
    by_subject: dict[str, list[tuple[int, int]]] = {}
    for subject, interval, score in rows:
        by_subject.setdefault(subject, []).append((interval, score))
    windows = []
    for subject in sorted(by_subject):
        path = data_dir / f"{subject}.csv"
        if not path.is_file():
            raise DataError(f"missing recording file {path}")
        rec = ingest_recording(path, subject_id=subject, schema=schema)
        windows.extend(windows_from_recording(rec, by_subject[subject], prefiltered, bins))
    return windows


# ---------------------------------------------------------------------------
# folds


def loso_splits(windows: Sequence[LabeledWindow]) -> list[LosoFold]:
    """One fold per subject, ordered by subject id; input order kept inside folds."""
    subjects = sorted({w.subject_id for w in windows})
    if len(subjects) < 2:
        raise DataError(f"leave-one-subject-out needs at least 2 subjects, got {len(subjects)}")
    return [
        LosoFold(
            held_out_subject=s,
            train=[w for w in windows if w.subject_id != s],
            test=[w for w in windows if w.subject_id == s],
        )
        for s in subjects
    ]


# ---------------------------------------------------------------------------
# synthetic data


def subject_name(i: int) -> str:
    return f"s{i + 1:02d}"


def synth_intervals(
    n_subjects: int, windows_per_class_per_subject: int, seed: int
) -> dict[str, list[tuple[np.ndarray, int]]]:
    """Raw 10-second synthetic intervals, keyed by subject.

    Each interval is a 4-channel sinusoid at the class frequency (6, 10 or
    20 Hz) with a per-subject amplitude in [0.8, 1.2], a random phase per
    interval and channel, and white noise 6 dB below the sinusoid power.
    Returns ``{subject: [(interval (4, 2560), class), ...]}``.
    """
    if n_subjects < 2:
        raise DataError(f"n_subjects must be >= 2, got {n_subjects}")
    if windows_per_class_per_subject < 1:
        raise DataError("windows_per_class_per_subject must be >= 1")
    t = np.arange(INTERVAL_SAMPLES) / SAMPLE_RATE
    subject_seeds = np.random.SeedSequence(seed).spawn(n_subjects)
    out = {}
    for i, ss in enumerate(subject_seeds):
        rng = np.random.Generator(np.random.Philox(ss))
        amp = rng.uniform(0.8, 1.2)
        noise_std = math.sqrt(amp**2 / 2 / 10 ** (SYNTH_SNR_DB / 10))
        items = []
        for _ in range(windows_per_class_per_subject):
            for cls, freq in enumerate(SYNTH_FREQS):
                phase = rng.uniform(0, 2 * np.pi, size=(len(CHANNELS), 1))
                sig = amp * np.sin(2 * np.pi * freq * t[None, :] + phase)
                noise = noise_std * rng.standard_normal((len(CHANNELS), INTERVAL_SAMPLES))
                items.append((sig + noise, cls))
        out[subject_name(i)] = items
    return out


def synth_generate(
    n_subjects: int, windows_per_class_per_subject: int, seed: int
) -> list[LabeledWindow]:
    """Labelled synthetic windows, deterministic in ``seed``.

    The windows are the final two seconds of :func:`synth_intervals`,
    normalized, so they match what :func:`load_dataset` returns for the
    files written by :func:`write_synthetic`.
    """
    windows = []
    for subject, items in synth_intervals(n_subjects, windows_per_class_per_subject, seed).items():
        for idx, (interval, cls) in enumerate(items):
            windows.append(
                LabeledWindow(
                    segment=EegSegment(normalize_segment(extract_window(interval)), (subject, idx)),
                    label=cls,
                    subject_id=subject,
                    interval_index=idx,
                )
            )
    return windows


def write_synthetic(
    out_dir: str | Path, n_subjects: int, windows_per_class_per_subject: int, seed: int
) -> list[Path]:
    """Write synthetic recordings and a pre-filtered label file to ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = synth_intervals(n_subjects, windows_per_class_per_subject, seed)
    written = []
    label_lines = [PREFILTERED_MARKER, ",".join(LABEL_HEADER)]
    for subject, items in data.items():
        samples = np.concatenate([iv for iv, _ in items], axis=1)
        path = out_dir / f"{subject}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(",".join(RECORDING_HEADER) + "\n")
            for j in range(samples.shape[1]):
                fh.write(repr(j / SAMPLE_RATE) + "," + ",".join(repr(float(v)) for v in samples[:, j]) + "\n")
        written.append(path)
        for idx, (_, cls) in enumerate(items):
            label_lines.append(f"{subject},{idx},{SYNTH_SCORES[cls]}")
    label_path = out_dir / LABELS_FILE
    label_path.write_text("\n".join(label_lines) + "\n", encoding="utf-8")
    written.append(label_path)
    return written
