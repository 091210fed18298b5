"""Template-matching chord estimation on (aligned) MIDI files.

Segments a song on bar or beat boundaries, builds a weighted chroma per
segment from note velocities and durations, and scores it against the 24
major/minor triad templates.  The per-segment scores average into a
single quality figure used later to rank candidate MIDI files.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .annotations import ChordSegment, ChordSequence
from .chords import NO_CHORD, VOCABULARY, ChordLabel, ChordVocabulary
from .errors import NoBeats
from .midi import MidiSong, NoteEvent, beats_and_downbeats

NO_CHORD_SCORE = -3.0


class SegmentationLevel(enum.Enum):
    BAR = "bar"
    BEAT = "beat"


@dataclass(frozen=True)
class WeightedChroma:
    """Pitch-class weights for one segment, normalized to sum to one.

    Silent segments stay all-zero.
    """

    weights: np.ndarray


@dataclass(frozen=True)
class CassetteResult:
    sequence: ChordSequence
    ats: float
    level: SegmentationLevel


def weighted_chroma(
    notes: Sequence[NoteEvent], seg_start: float, seg_end: float, normalize: bool = True
) -> WeightedChroma:
    """Chroma weighted by velocity times the fraction of the segment covered.

    Each non-drum note overlapping the segment adds
    ``velocity * overlap / segment_length`` to its pitch class.
    """
    if seg_end <= seg_start:
        raise ValueError("segment end must exceed start")
    length = seg_end - seg_start
    weights = np.zeros(12)
    for note in notes:
        if note.is_drum:
            continue
        overlap = min(note.end, seg_end) - max(note.start, seg_start)
        if overlap > 0:
            weights[note.pitch % 12] += note.velocity * overlap / length
    if normalize:
        total = weights.sum()
        if total > 0:
            weights = weights / total
    return WeightedChroma(weights)


def template_score(chroma: WeightedChroma, template_chroma) -> float:
    """Positive evidence minus negative evidence and misses.

    ``P`` sums chroma weights at template ones, ``N`` sums weights at
    template zeros, ``M`` counts template ones with zero chroma weight;
    the score is ``P - (N + M)``.
    """
    t = np.asarray(template_chroma, dtype=float)
    w = chroma.weights
    ones = t > 0
    p = float(w[ones].sum())
    n = float(w[~ones].sum())
    misses = int(np.count_nonzero(ones & (w == 0)))
    return p - (n + misses)


def best_chord(
    chroma: WeightedChroma, vocab: ChordVocabulary = VOCABULARY
) -> tuple[ChordLabel, float]:
    """The vocabulary chord with the highest template score.

    Scores of ``-3`` or lower return no-chord.  Equal scores break toward
    the template whose root pitch class carries the most chroma weight,
    then toward vocabulary order.
    """
    scores = [template_score(chroma, t.chroma) for t in vocab.templates]
    best_score = max(scores)
    if best_score <= NO_CHORD_SCORE:
        return NO_CHORD, best_score
    tied = [i for i, s in enumerate(scores) if s == best_score]
    winner = max(tied, key=lambda i: (chroma.weights[int(vocab.templates[i].label.root)], -i))
    return vocab.templates[winner].label, best_score


def _segment_boundaries(m: MidiSong, level: SegmentationLevel) -> list[float]:
    grid = beats_and_downbeats(m)
    if level is SegmentationLevel.BAR:
        times = list(grid.downbeats)
    else:
        times = list(grid.times)
    if not times:
        raise NoBeats("no beat or bar boundaries could be derived")
    end = m.end_time
    if end > times[-1] + 1e-9:
        times.append(end)
    return times


def estimate(
    m: MidiSong, level: SegmentationLevel, vocab: ChordVocabulary = VOCABULARY
) -> CassetteResult:
    """Chord sequence for a song at the requested segmentation level.

    Adjacent equal labels merge; the quality figure ``ats`` is the plain
    mean of per-segment best scores before merging.
    """
    boundaries = _segment_boundaries(m, level)
    if len(boundaries) < 2:
        raise NoBeats("need at least one segment")
    labels: list[tuple[float, float, ChordLabel]] = []
    scores: list[float] = []
    for lo, hi in zip(boundaries, boundaries[1:]):
        if hi - lo <= 1e-9:
            continue
        chroma = weighted_chroma(m.notes, lo, hi)
        label, score = best_chord(chroma, vocab)
        labels.append((lo, hi, label))
        scores.append(score)
    segments: list[ChordSegment] = []
    for lo, hi, label in labels:
        if segments and segments[-1].label == label and abs(segments[-1].end - lo) < 1e-9:
            segments[-1] = ChordSegment(segments[-1].start, hi, label)
        else:
            segments.append(ChordSegment(lo, hi, label))
    ats = float(np.mean(scores)) if scores else NO_CHORD_SCORE
    return CassetteResult(ChordSequence(segments), ats, level)
