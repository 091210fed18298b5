"""Chord labels, Harte-style chord strings and the 25-label major/minor vocabulary.

Every chord is reduced to one of 25 labels: twelve major triads, twelve
minor triads and the no-chord symbol ``N``.  The reduction keeps extensions
and bass notes only long enough to decide whether the chord carries a minor
third: a chord maps to minor iff its interval content contains a minor
third above the root and no major third, otherwise to major.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import UnparsableChord

PITCH_CLASS_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")

_NATURALS = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}

MAJOR = "maj"
MINOR = "min"

# Interval content of the shorthand qualities we recognize.  Anything not
# listed here must spell out its components, e.g. ``C:(b3,5)``.
SHORTHAND_INTERVALS: dict[str, tuple[int, ...]] = {
    "maj": (0, 4, 7),
    "min": (0, 3, 7),
    "dim": (0, 3, 6),
    "aug": (0, 4, 8),
    "maj7": (0, 4, 7, 11),
    "min7": (0, 3, 7, 10),
    "7": (0, 4, 7, 10),
    "dim7": (0, 3, 6, 9),
    "hdim7": (0, 3, 6, 10),
    "minmaj7": (0, 3, 7, 11),
    "maj6": (0, 4, 7, 9),
    "6": (0, 4, 7, 9),
    "min6": (0, 3, 7, 9),
    "9": (0, 2, 4, 7, 10),
    "maj9": (0, 2, 4, 7, 11),
    "min9": (0, 2, 3, 7, 10),
    "11": (0, 2, 4, 5, 7, 10),
    "min11": (0, 2, 3, 5, 7, 10),
    "13": (0, 2, 4, 5, 7, 9, 10),
    "maj13": (0, 2, 4, 5, 7, 9, 11),
    "min13": (0, 2, 3, 5, 7, 9, 10),
    "sus2": (0, 2, 7),
    "sus4": (0, 5, 7),
    "sus": (0, 5, 7),
    "5": (0, 7),
    "1": (0,),
}

# Semitone offsets of unaltered scale degrees 1..13.
_DEGREE_SEMITONES = {
    1: 0, 2: 2, 3: 4, 4: 5, 5: 7, 6: 9, 7: 11,
    8: 12, 9: 14, 10: 16, 11: 17, 12: 19, 13: 21,
}


class PitchClass(int):
    """A pitch class as an integer in [0, 11], with 0 = C.

    Enharmonic spellings collapse onto the same index; the constructor
    reduces any integer mod 12.
    """

    def __new__(cls, index: int) -> "PitchClass":
        return super().__new__(cls, int(index) % 12)

    @classmethod
    def from_name(cls, name: str) -> "PitchClass":
        m = re.fullmatch(r"([A-Ga-g])([#b]*)", name.strip())
        if m is None:
            raise UnparsableChord(f"not a pitch class name: {name!r}")
        index = _NATURALS[m.group(1).upper()]
        index += m.group(2).count("#") - m.group(2).count("b")
        return cls(index)

    @property
    def name(self) -> str:
        return PITCH_CLASS_NAMES[self]

    def __repr__(self) -> str:
        return f"PitchClass({int(self)})"


@dataclass(frozen=True)
class ChordLabel:
    """A reduced chord label: a root and mode, or the no-chord symbol.

    ``root is None`` encodes no-chord; in that case ``mode`` is None too.
    """

    root: Optional[PitchClass] = None
    mode: Optional[str] = None

    def __post_init__(self):
        if (self.root is None) != (self.mode is None):
            raise ValueError("root and mode must both be set or both be None")
        if self.mode is not None and self.mode not in (MAJOR, MINOR):
            raise ValueError(f"mode must be {MAJOR!r} or {MINOR!r}, got {self.mode!r}")

    @property
    def is_nochord(self) -> bool:
        return self.root is None

    def __str__(self) -> str:
        return format_harte(self)


NO_CHORD = ChordLabel()


def major(root: int) -> ChordLabel:
    return ChordLabel(PitchClass(root), MAJOR)


def minor(root: int) -> ChordLabel:
    return ChordLabel(PitchClass(root), MINOR)


def format_harte(c: ChordLabel) -> str:
    """Render a label as ``N``, ``<root>:maj`` or ``<root>:min`` with sharps."""
    if c.is_nochord:
        return "N"
    return f"{c.root.name}:{c.mode}"


def transpose(c: ChordLabel, k: int) -> ChordLabel:
    """Shift the root by ``k`` semitones (mod 12); no-chord is unchanged."""
    if c.is_nochord:
        return c
    return ChordLabel(PitchClass(c.root + k), c.mode)


def _degree_to_semitones(token: str) -> int:
    m = re.fullmatch(r"([#b]*)(\d+)", token)
    if m is None:
        raise UnparsableChord(f"not a scale degree: {token!r}")
    number = int(m.group(2))
    if number not in _DEGREE_SEMITONES:
        raise UnparsableChord(f"scale degree out of range: {token!r}")
    offset = _DEGREE_SEMITONES[number]
    offset += m.group(1).count("#") - m.group(1).count("b")
    return offset % 12


def _intervals_from_quality(shorthand: str | None, components: str | None) -> set[int]:
    if shorthand:
        if shorthand not in SHORTHAND_INTERVALS:
            raise UnparsableChord(f"unknown shorthand: {shorthand!r}")
        intervals = set(SHORTHAND_INTERVALS[shorthand])
    elif components is not None:
        intervals = {0}
    else:
        raise UnparsableChord("empty chord quality")
    if components is not None:
        for token in components.split(","):
            token = token.strip()
            if not token:
                continue
            if token.startswith("*"):
                intervals.discard(_degree_to_semitones(token[1:]))
            else:
                intervals.add(_degree_to_semitones(token))
    return intervals


def _mode_from_intervals(intervals: Iterable[int]) -> str:
    ivals = set(intervals)
    return MINOR if 3 in ivals and 4 not in ivals else MAJOR


_HARTE_RE = re.compile(
    r"""
    ([A-G][#b]*)                 # root
    (?: : ([a-z0-9]+)? (?:\(([^)]*)\))? )?   # optional quality and components
    (?: / (\S+) )?               # optional bass
    """,
    re.VERBOSE,
)


def parse_harte(s: str) -> ChordLabel:
    """Parse a Harte-style chord string into the 25-label vocabulary.

    Recognizes a root letter with accidentals, an optional ``:`` quality
    (shorthand, component list in parentheses, or both) and an optional
    ``/`` bass.  Bass notes and extensions are discarded after the reduction
    to major or minor; the literal ``N`` is the no-chord.

    Raises
    ------
    UnparsableChord
        If the string violates the grammar or uses an unknown shorthand.
    """
    s = s.strip()
    if not s:
        raise UnparsableChord("empty chord string")
    if s == "N":
        return NO_CHORD
    m = _HARTE_RE.fullmatch(s)
    if m is None:
        raise UnparsableChord(f"not a chord string: {s!r}")
    root_txt, shorthand, components, bass = m.groups()
    root = PitchClass.from_name(root_txt)
    if shorthand is None and components is None:
        if ":" in s:
            raise UnparsableChord(f"empty quality in {s!r}")
        intervals = set(SHORTHAND_INTERVALS[MAJOR])
    else:
        intervals = _intervals_from_quality(shorthand, components)
    if bass is not None:
        _parse_bass(bass)
    return ChordLabel(root, _mode_from_intervals(intervals))


def _parse_bass(bass: str) -> int:
    """Validate a bass token (scale degree or note name); the value is discarded."""
    try:
        return _degree_to_semitones(bass)
    except UnparsableChord:
        return int(PitchClass.from_name(bass))


@dataclass(frozen=True)
class ChordTemplate:
    """Binary 12-vector marking the pitch classes of a vocabulary chord."""

    label: ChordLabel
    chroma: tuple[int, ...]

    @classmethod
    def for_label(cls, label: ChordLabel) -> "ChordTemplate":
        if label.is_nochord:
            raise ValueError("no-chord has no template")
        third = 4 if label.mode == MAJOR else 3
        weights = [0] * 12
        for interval in (0, third, 7):
            weights[(label.root + interval) % 12] = 1
        return cls(label, tuple(weights))


@dataclass(frozen=True)
class ChordVocabulary:
    """The ordered 25-label vocabulary: N, then C..B major, then C..B minor."""

    labels: tuple[ChordLabel, ...]
    templates: tuple[ChordTemplate, ...] = field(repr=False)

    @classmethod
    def major_minor(cls) -> "ChordVocabulary":
        labels = [NO_CHORD]
        labels += [major(pc) for pc in range(12)]
        labels += [minor(pc) for pc in range(12)]
        templates = tuple(ChordTemplate.for_label(lbl) for lbl in labels[1:])
        return cls(tuple(labels), templates)

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: ChordLabel) -> int:
        if label.is_nochord:
            return 0
        base = 1 if label.mode == MAJOR else 13
        return base + int(label.root)

    def label(self, index: int) -> ChordLabel:
        return self.labels[index]

    def template_matrix(self) -> np.ndarray:
        """The 24 triad templates stacked as a (24, 12) float array."""
        return np.array([t.chroma for t in self.templates], dtype=float)


VOCABULARY = ChordVocabulary.major_minor()


def chord_from_pitch_classes(notes: Iterable[int]) -> ChordLabel:
    """Map a set of pitch classes to the nearest vocabulary chord.

    Builds a binary 12-vector and returns the template with minimum cosine
    distance; the empty set maps to no-chord.  Ties break in vocabulary
    order.
    """
    pcs = {int(pc) % 12 for pc in notes}
    if not pcs:
        return NO_CHORD
    vec = np.zeros(12)
    vec[list(pcs)] = 1.0
    templates = VOCABULARY.template_matrix()
    sims = templates @ vec / (np.linalg.norm(templates, axis=1) * np.linalg.norm(vec))
    best = int(np.argmax(sims))
    return VOCABULARY.templates[best].label
