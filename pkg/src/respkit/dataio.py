"""ICBHI-style data ingestion.

Parses cycle annotations, loads and resamples audio, extracts respiratory
cycles, normalizes their duration, and builds the patient-disjoint
train/test split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from respkit.errors import (
    AnnotationParseError,
    ContractError,
    SplitConfigError,
    SplitIntegrityError,
)

# Every clip is resampled to this rate at load time so downstream frame
# math (hop sizes, frame counts) is fixed.
PIPELINE_RATE = 32000

# Annotated offsets may exceed the audio length by a little due to
# rounding in the annotation files; spans within this slack are clamped.
ANNOTATION_SLACK_S = 0.05

CYCLE_SECONDS = 10.0


class Label(IntEnum):
    NORMAL = 0
    CRACKLE = 1
    WHEEZE = 2
    BOTH = 3


class Split(Enum):
    TRAIN = "train"
    TEST = "test"


def label_from_flags(crackle: bool, wheeze: bool) -> Label:
    if crackle and wheeze:
        return Label.BOTH
    if crackle:
        return Label.CRACKLE
    if wheeze:
        return Label.WHEEZE
    return Label.NORMAL


def patient_id_of(recording_id: str) -> str:
    """Patient id is the first underscore-delimited token of the file stem."""
    return recording_id.split("_")[0]


@dataclass(frozen=True)
class CycleRecord:
    """One labeled respiratory cycle inside a recording."""

    recording_id: str
    onset: float
    offset: float
    crackle: bool
    wheeze: bool

    def __post_init__(self):
        if not (self.onset >= 0 and self.offset > self.onset):
            raise ContractError(
                f"bad cycle span [{self.onset}, {self.offset}] in {self.recording_id}"
            )

    @property
    def patient_id(self) -> str:
        return patient_id_of(self.recording_id)

    @property
    def label(self) -> Label:
        return label_from_flags(self.crackle, self.wheeze)

    @property
    def cycle_id(self) -> str:
        return f"{self.recording_id}@{self.onset:.3f}-{self.offset:.3f}"


@dataclass
class AudioClip:
    """Mono audio samples at a known sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise ContractError("AudioClip samples must be 1-D")
        if self.sample_rate <= 0:
            raise ContractError("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def parse_annotations(annotation_text: str, recording_id: str) -> list[CycleRecord]:
    """Parse whitespace-delimited rows of (onset, offset, crackle, wheeze).

    Raises AnnotationParseError naming the 1-based line number on any
    malformed row.
    """
    records = []
    for lineno, raw in enumerate(annotation_text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        cols = line.split()
        if len(cols) != 4:
            raise AnnotationParseError(
                f"{recording_id} line {lineno}: expected 4 columns, got {len(cols)}"
            )
        try:
            onset, offset = float(cols[0]), float(cols[1])
            crackle, wheeze = int(cols[2]), int(cols[3])
        except ValueError as exc:
            raise AnnotationParseError(
                f"{recording_id} line {lineno}: non-numeric field ({exc})"
            ) from None
        if crackle not in (0, 1) or wheeze not in (0, 1):
            raise AnnotationParseError(
                f"{recording_id} line {lineno}: flags must be 0 or 1"
            )
        if not (math.isfinite(onset) and math.isfinite(offset)) or offset <= onset:
            raise AnnotationParseError(
                f"{recording_id} line {lineno}: offset must exceed onset"
            )
        if onset < 0:
            raise AnnotationParseError(f"{recording_id} line {lineno}: negative onset")
        records.append(
            CycleRecord(recording_id, onset, offset, bool(crackle), bool(wheeze))
        )
    return records


def load_wav(path: str | Path, target_rate: int = PIPELINE_RATE) -> AudioClip:
    """Read a PCM WAV file as mono float32 at the pipeline rate.

    Integer formats are scaled to [-1, 1); multi-channel audio is averaged
    down to mono.
    """
    sr, data = wavfile.read(str(path))
    if data.dtype.kind == "i":
        data = data.astype(np.float32) / float(np.iinfo(data.dtype).max + 1)
    elif data.dtype == np.uint8:
        data = (data.astype(np.float32) - 128.0) / 128.0
    else:
        data = data.astype(np.float32)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if sr != target_rate:
        ratio = Fraction(target_rate, sr)
        data = resample_poly(data, ratio.numerator, ratio.denominator).astype(
            np.float32
        )
    return AudioClip(data, target_rate)


@dataclass
class SplitAssignment:
    """Recording-level train/test assignment with no patient on both sides."""

    assignment: dict[str, Split] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        sides: dict[str, Split] = {}
        for rec_id, split in self.assignment.items():
            pid = patient_id_of(rec_id)
            if pid in sides and sides[pid] is not split:
                raise SplitIntegrityError(
                    f"patient {pid} appears in both train and test"
                )
            sides[pid] = split

    def side(self, recording_id: str) -> Split:
        return self.assignment[recording_id]

    def ids(self, split: Split) -> list[str]:
        return sorted(r for r, s in self.assignment.items() if s is split)


def parse_split_table(text: str) -> dict[str, Split]:
    """Parse the two-column (recording stem, train|test) split table."""
    table: dict[str, Split] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        cols = line.split()
        if len(cols) != 2 or cols[1].lower() not in ("train", "test"):
            raise AnnotationParseError(
                f"split table line {lineno}: expected '<stem> train|test'"
            )
        table[cols[0]] = Split(cols[1].lower())
    return table


def make_split(
    records: list[CycleRecord], official_split_table: dict[str, Split]
) -> SplitAssignment:
    """Assign each recording per the table, enforcing patient disjointness."""
    assignment = {}
    for rec in records:
        if rec.recording_id not in official_split_table:
            raise SplitConfigError(
                f"recording {rec.recording_id} missing from split table"
            )
        assignment[rec.recording_id] = official_split_table[rec.recording_id]
    return SplitAssignment(assignment)


def extract_cycle(recording: AudioClip, rec: CycleRecord) -> AudioClip:
    """Slice [onset, offset) out of a recording, clamping slight overhang."""
    dur = recording.duration
    if rec.onset >= dur:
        raise ContractError(
            f"cycle onset {rec.onset:.2f}s beyond recording end {dur:.2f}s"
        )
    if rec.offset > dur + ANNOTATION_SLACK_S:
        raise ContractError(
            f"cycle offset {rec.offset:.2f}s exceeds recording end {dur:.2f}s "
            f"by more than {ANNOTATION_SLACK_S}s"
        )
    start = int(round(rec.onset * recording.sample_rate))
    stop = min(int(round(rec.offset * recording.sample_rate)), len(recording.samples))
    return AudioClip(recording.samples[start:stop].copy(), recording.sample_rate)


def fix_duration(clip: AudioClip, target: float = CYCLE_SECONDS) -> AudioClip:
    """Tile short clips / truncate long clips to exactly `target` seconds.

    The trailing partial copy is taken from the clip's beginning, so the
    output is phase-continuous with the tiling.
    """
    if len(clip.samples) == 0:
        raise ContractError("cannot fix duration of an empty clip")
    n_target = int(round(target * clip.sample_rate))
    if len(clip.samples) >= n_target:
        out = clip.samples[:n_target]
    else:
        reps = -(-n_target // len(clip.samples))
        out = np.tile(clip.samples, reps)[:n_target]
    return AudioClip(out.copy(), clip.sample_rate)
