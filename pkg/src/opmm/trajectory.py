"""Recording ingestion, cleaning, I-VT classification and saccade extraction."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .errors import FormatError, InputError, ParseError

RECORDING_HEADER = ("timestamp_ms", "position_deg", "valid")

FIXATION = 0
SACCADE = 1

DEFAULT_IVT_THRESHOLD = 30.0   # deg/s
DEFAULT_MIN_AMPLITUDE = 4.0    # deg
DEFAULT_MIN_DURATION = 6.0     # ms
# Invalid runs shorter than this many samples are bridged by interpolation.
MAX_INTERPOLATED_GAP = 2

_DT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RecordingSample:
    timestamp: float
    position: float
    valid: bool = True


@dataclass(frozen=True)
class SaccadeTrajectory:
    """One uniformly sampled saccade, positions in degrees."""

    saccade_id: int
    dt: float
    positions: np.ndarray
    onset_time: float = 0.0

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float)
        if positions.ndim != 1 or positions.size < 2:
            raise InputError(f"saccade {self.saccade_id}: needs at least 2 samples")
        if not np.isfinite(positions).all():
            raise InputError(f"saccade {self.saccade_id}: non-finite position")
        if not self.dt > 0:
            raise InputError(f"saccade {self.saccade_id}: dt must be positive")
        positions.flags.writeable = False
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_samples(self) -> int:
        return self.positions.size

    @property
    def duration(self) -> float:
        return (self.n_samples - 1) * self.dt

    @property
    def displacement(self) -> float:
        return float(self.positions[-1] - self.positions[0])

    @property
    def amplitude(self) -> float:
        return abs(self.displacement)


def parse_recording(source, format: str = "csv") -> list[RecordingSample]:
    """Parse a ``timestamp_ms,position_deg,valid`` CSV from a path, text or byte stream."""
    if format != "csv":
        raise FormatError(f"unsupported recording format {format!r}")
    if isinstance(source, (bytes, bytearray)):
        text = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, str):
        text = io.StringIO(source)
    elif isinstance(source, io.RawIOBase | io.BufferedIOBase):
        text = io.TextIOWrapper(source, encoding="utf-8")
    else:
        text = source
    return _parse_rows(csv.reader(text))


def _parse_rows(reader: Iterable[list[str]]) -> list[RecordingSample]:
    samples: list[RecordingSample] = []
    header_seen = False
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        cells = [cell.strip() for cell in row]
        if not header_seen:
            if tuple(cells) != RECORDING_HEADER:
                raise ParseError(f"expected header {','.join(RECORDING_HEADER)}", line=lineno)
            header_seen = True
            continue
        if len(cells) != 3:
            raise ParseError(f"expected 3 columns, got {len(cells)}", line=lineno)
        try:
            timestamp = float(cells[0])
            position = float(cells[1])
        except ValueError:
            raise ParseError(f"non-numeric value in {row!r}", line=lineno) from None
        if cells[2] not in ("0", "1"):
            raise ParseError(f"valid flag must be 0 or 1, got {cells[2]!r}", line=lineno)
        if not np.isfinite(timestamp):
            raise ParseError("non-finite timestamp", line=lineno)
        if samples and timestamp <= samples[-1].timestamp:
            raise FormatError(f"line {lineno}: timestamps must be strictly increasing")
        valid = cells[2] == "1" and bool(np.isfinite(position))
        samples.append(RecordingSample(timestamp, position, valid))
    if not header_seen:
        raise ParseError("empty recording", line=1)
    return samples


def clean(samples: list[RecordingSample]) -> list[list[RecordingSample]]:
    """Drop invalid runs, bridging short ones and splitting at long ones.

    Returns the list of clean, all-valid segments in temporal order.  Runs of
    up to ``MAX_INTERPOLATED_GAP`` invalid samples between two valid ones are
    linearly interpolated in time; longer runs end the current segment.
    """
    segments: list[list[RecordingSample]] = []
    current: list[RecordingSample] = []
    gap: list[RecordingSample] = []
    for sample in samples:
        if not sample.valid:
            gap.append(sample)
            continue
        if gap:
            if current and len(gap) <= MAX_INTERPOLATED_GAP:
                left = current[-1]
                span = sample.timestamp - left.timestamp
                for g in gap:
                    w = (g.timestamp - left.timestamp) / span
                    current.append(RecordingSample(
                        g.timestamp, left.position + w * (sample.position - left.position), True))
            elif current:
                segments.append(current)
                current = []
            gap = []
        current.append(sample)
    if current:
        segments.append(current)
    return segments


def compute_velocity(positions, dt: float) -> np.ndarray:
    """Velocity in deg/s from positions in deg sampled every ``dt`` ms.

    Central differences inside, one-sided differences at both ends.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.size < 2:
        raise InputError("velocity needs at least 2 samples")
    return np.gradient(positions, dt) * 1000.0


def classify_ivt(velocities, threshold: float = DEFAULT_IVT_THRESHOLD) -> np.ndarray:
    """Label each sample SACCADE where ``|velocity| > threshold``, else FIXATION."""
    if not threshold > 0:
        raise InputError("I-VT threshold must be positive")
    return np.where(np.abs(np.asarray(velocities, dtype=float)) > threshold, SACCADE, FIXATION)


def saccade_runs(labels) -> list[tuple[int, int]]:
    """Half-open ``[start, stop)`` index ranges of maximal saccade runs."""
    labels = np.asarray(labels) == SACCADE
    edges = np.diff(np.concatenate(([False], labels, [False])).astype(np.int8))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), stops.tolist()))


def extract_saccades(samples: list[RecordingSample], labels, first_id: int = 1
                     ) -> list[SaccadeTrajectory]:
    """Turn each maximal saccade run into a trajectory, ids counted from ``first_id``.

    Single-sample runs cannot form a trajectory and are skipped.
    """
    if len(samples) != len(labels):
        raise InputError("labels are not aligned with samples")
    out = []
    next_id = first_id
    for start, stop in saccade_runs(labels):
        if stop - start < 2:
            continue
        run = samples[start:stop]
        times = np.array([s.timestamp for s in run])
        steps = np.diff(times)
        dt = float((times[-1] - times[0]) / (len(run) - 1))
        if np.max(np.abs(steps - dt)) > _DT_TOLERANCE * max(1.0, abs(times[-1])):
            raise InputError(f"saccade starting at {times[0]} ms is not uniformly sampled")
        out.append(SaccadeTrajectory(next_id, dt, [s.position for s in run], float(times[0])))
        next_id += 1
    return out


def filter_saccades(saccades: list[SaccadeTrajectory], min_amplitude: float = DEFAULT_MIN_AMPLITUDE,
                    min_duration: float = DEFAULT_MIN_DURATION) -> list[SaccadeTrajectory]:
    return [s for s in saccades if s.amplitude >= min_amplitude and s.duration >= min_duration]


def segment_dt(segment: list[RecordingSample]) -> float:
    times = np.array([s.timestamp for s in segment])
    return float(np.median(np.diff(times)))


def detect_saccades(samples: list[RecordingSample], threshold: float = DEFAULT_IVT_THRESHOLD,
                    min_amplitude: float = DEFAULT_MIN_AMPLITUDE,
                    min_duration: float = DEFAULT_MIN_DURATION, first_id: int = 1
                    ) -> list[SaccadeTrajectory]:
    """Clean, classify, extract and filter; ids are renumbered after filtering."""
    found: list[SaccadeTrajectory] = []
    for segment in clean(samples):
        if len(segment) < 2:
            continue
        velocity = compute_velocity([s.position for s in segment], segment_dt(segment))
        found.extend(extract_saccades(segment, classify_ivt(velocity, threshold)))
    kept = filter_saccades(found, min_amplitude, min_duration)
    return [SaccadeTrajectory(first_id + i, s.dt, s.positions, s.onset_time)
            for i, s in enumerate(kept)]


def write_recording(samples: Iterable[RecordingSample], sink: TextIO) -> None:
    sink.write(",".join(RECORDING_HEADER) + "\n")
    for s in samples:
        sink.write(f"{s.timestamp:.6f},{s.position:.6f},{int(s.valid)}\n")
