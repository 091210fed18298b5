"""Timed chord sequences: ``.lab`` I/O, fixed-rate sampling and beat sync.

A chord annotation is a list of non-overlapping ``(start, end, label)``
segments sorted by start time.  Gaps between segments are interpreted as
no-chord, so estimated sequences need not cover a song end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from .chords import NO_CHORD, ChordLabel, format_harte, parse_harte
from .errors import MalformedLine, OverlapError, UnparsableChord

_TIME_EPS = 1e-9


@dataclass(frozen=True)
class ChordSegment:
    start: float
    end: float
    label: ChordLabel

    def __post_init__(self):
        if self.start < 0:
            raise ValueError(f"segment start must be >= 0, got {self.start}")
        if self.end <= self.start:
            raise ValueError(f"segment end must exceed start: [{self.start}, {self.end}]")

    @property
    def duration(self) -> float:
        return self.end - self.start

    def overlap(self, start: float, end: float) -> float:
        return max(0.0, min(self.end, end) - max(self.start, start))


class ChordSequence:
    """Sorted, non-overlapping chord segments covering (parts of) a song."""

    def __init__(self, segments: Iterable[ChordSegment] = ()):
        ordered = sorted(segments, key=lambda s: (s.start, s.end))
        for prev, cur in zip(ordered, ordered[1:]):
            if cur.start < prev.end - _TIME_EPS:
                raise OverlapError(
                    f"segments overlap: [{prev.start}, {prev.end}] and [{cur.start}, {cur.end}]"
                )
        self.segments: tuple[ChordSegment, ...] = tuple(ordered)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self) -> Iterator[ChordSegment]:
        return iter(self.segments)

    def __eq__(self, other) -> bool:
        return isinstance(other, ChordSequence) and self.segments == other.segments

    def __repr__(self) -> str:
        return f"ChordSequence({len(self.segments)} segments)"

    @property
    def span_start(self) -> float:
        return self.segments[0].start if self.segments else 0.0

    @property
    def span_end(self) -> float:
        return self.segments[-1].end if self.segments else 0.0

    @property
    def duration(self) -> float:
        """Total annotated duration (gaps excluded)."""
        return sum(s.duration for s in self.segments)

    def label_at(self, t: float) -> ChordLabel:
        """The label covering time ``t``; gaps and out-of-range times are no-chord."""
        for seg in self.segments:
            if seg.start <= t < seg.end:
                return seg.label
            if seg.start > t:
                break
        return NO_CHORD

    def filled(self, span_start: float, span_end: float) -> "ChordSequence":
        """A copy whose gaps (and the given span ends) are explicit no-chord segments."""
        out = []
        cursor = min(span_start, self.span_start if self.segments else span_start)
        for seg in self.segments:
            if seg.start > cursor + _TIME_EPS:
                out.append(ChordSegment(cursor, seg.start, NO_CHORD))
            out.append(seg)
            cursor = max(cursor, seg.end)
        if span_end > cursor + _TIME_EPS:
            out.append(ChordSegment(cursor, span_end, NO_CHORD))
        return ChordSequence(out)

    def shifted(self, offset: float) -> "ChordSequence":
        return ChordSequence(
            ChordSegment(s.start + offset, s.end + offset, s.label) for s in self.segments
        )


@dataclass(frozen=True)
class SampledSequence:
    """A chord label per fixed-length sample of a song."""

    labels: tuple[ChordLabel, ...]
    sample_period: float

    def __post_init__(self):
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def duration(self) -> float:
        return len(self.labels) * self.sample_period


@dataclass(frozen=True)
class BeatGrid:
    """Beat times in seconds, optionally flagged as downbeats."""

    times: tuple[float, ...]
    downbeat_flags: Optional[tuple[bool, ...]] = None

    def __post_init__(self):
        if self.times and self.times[0] < 0:
            raise ValueError("first beat time must be >= 0")
        for a, b in zip(self.times, self.times[1:]):
            if b <= a:
                raise ValueError("beat times must be strictly increasing")
        if self.downbeat_flags is not None and len(self.downbeat_flags) != len(self.times):
            raise ValueError("downbeat_flags must parallel times")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def downbeats(self) -> tuple[float, ...]:
        if self.downbeat_flags is None:
            return ()
        return tuple(t for t, f in zip(self.times, self.downbeat_flags) if f)


def read_lab(path) -> ChordSequence:
    """Read a ``.lab`` file of ``start end label`` lines into a sequence.

    Raises
    ------
    MalformedLine
        If a non-empty line does not have two leading floats and a label.
    OverlapError
        If the parsed segments overlap.
    OSError
        If the file cannot be read.
    """
    segments = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(None, 2)
            if len(parts) != 3:
                raise MalformedLine(line_no, f"expected 'start end label', got {line!r}")
            try:
                start, end = float(parts[0]), float(parts[1])
            except ValueError:
                raise MalformedLine(line_no, f"bad timestamps in {line!r}") from None
            try:
                label = parse_harte(parts[2])
            except UnparsableChord as exc:
                raise MalformedLine(line_no, str(exc)) from None
            try:
                segments.append(ChordSegment(start, end, label))
            except ValueError as exc:
                raise MalformedLine(line_no, str(exc)) from None
    return ChordSequence(segments)


def write_lab(seq: ChordSequence, path) -> None:
    """Write a sequence as ``start end label`` lines with microsecond precision."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for seg in seq:
            handle.write(f"{seg.start:.6f} {seg.end:.6f} {format_harte(seg.label)}\n")


def sample(seq: ChordSequence, period: float, duration: float) -> SampledSequence:
    """Sample a sequence at a fixed period over ``[0, duration]``.

    Sample ``i`` takes the label covering the midpoint ``(i + 0.5) * period``;
    uncovered midpoints yield no-chord.
    """
    if period <= 0:
        raise ValueError("period must be positive")
    n = math.ceil(duration / period - _TIME_EPS) if duration > 0 else 0
    labels = []
    segments = seq.segments
    idx = 0
    for i in range(n):
        t = (i + 0.5) * period
        while idx < len(segments) and segments[idx].end <= t:
            idx += 1
        if idx < len(segments) and segments[idx].start <= t < segments[idx].end:
            labels.append(segments[idx].label)
        else:
            labels.append(NO_CHORD)
    return SampledSequence(tuple(labels), period)


def merge_samples(s: SampledSequence) -> ChordSequence:
    """Collapse runs of identical labels into segments; no-chord runs become gaps."""
    segments = []
    run_start = 0
    for i in range(1, len(s.labels) + 1):
        if i == len(s.labels) or s.labels[i] != s.labels[run_start]:
            label = s.labels[run_start]
            if not label.is_nochord:
                segments.append(
                    ChordSegment(run_start * s.sample_period, i * s.sample_period, label)
                )
            run_start = i
    return ChordSequence(segments)


def beat_sync_labels(seq: ChordSequence, beats: BeatGrid) -> list[ChordLabel]:
    """One label per inter-beat interval: the label covering the most time.

    Gaps count as no-chord.  Ties break toward the label whose coverage
    starts earliest within the interval.
    """
    if len(beats) < 2:
        raise ValueError("need at least two beat times")
    out = []
    for b0, b1 in zip(beats.times, beats.times[1:]):
        coverage: dict[ChordLabel, float] = {}
        first_seen: dict[ChordLabel, float] = {}
        cursor = b0
        for seg in seq.segments:
            if seg.end <= b0:
                continue
            if seg.start >= b1:
                break
            lo, hi = max(seg.start, b0), min(seg.end, b1)
            if lo > cursor + _TIME_EPS:
                coverage[NO_CHORD] = coverage.get(NO_CHORD, 0.0) + (lo - cursor)
                first_seen.setdefault(NO_CHORD, cursor)
            coverage[seg.label] = coverage.get(seg.label, 0.0) + (hi - lo)
            first_seen.setdefault(seg.label, lo)
            cursor = max(cursor, hi)
        if b1 > cursor + _TIME_EPS:
            coverage[NO_CHORD] = coverage.get(NO_CHORD, 0.0) + (b1 - cursor)
            first_seen.setdefault(NO_CHORD, cursor)
        best = max(coverage.items(), key=lambda kv: (kv[1], -first_seen[kv[0]]))
        out.append(best[0])
    return out
