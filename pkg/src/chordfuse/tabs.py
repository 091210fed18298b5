"""Heuristic parsing of guitar tablature and chord sheets.

Each line of a tab file is classified by a fixed set of rules, lines are
grouped into systems (a chord line over six tablature lines, a lone chord
line, and so on), and chords are extracted from each system together with
the line and column where they appear.  No timing information exists in a
tab, so the result is an untimed chord sequence.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .chords import (
    SHORTHAND_INTERVALS,
    ChordLabel,
    PitchClass,
    _mode_from_intervals,
    chord_from_pitch_classes,
)
from .errors import UnparsableChord

log = logging.getLogger(__name__)

# Open-string pitches of the six tab lines, top (high e) to bottom (low E).
STANDARD_TUNING = (64, 59, 55, 50, 45, 40)
MAX_FRET = 24

_ALLOWED_TRIGRAMS = {"min", "add", "aug", "dim", "maj", "sus", "fla"}
_CHORD_CHARSET = set("ABCDEFGabcdefg0123456789#b/:()+Δ") | set("dimaugsusmajinflat")
_STRUCTURE_WORDS = (
    "verse", "chorus", "bridge", "intro", "outro", "solo",
    "interlude", "refrain", "coda", "instrumental",
)

# Quality spellings seen in the wild, mapped onto interval content.
_TAB_QUALITIES: dict[str, tuple[int, ...]] = {
    "": (0, 4, 7),
    "m": (0, 3, 7),
    "mi": (0, 3, 7),
    "min": (0, 3, 7),
    "-": (0, 3, 7),
    "M": (0, 4, 7),
    "major": (0, 4, 7),
    "minor": (0, 3, 7),
    "+": (0, 4, 8),
    "o": (0, 3, 6),
    "0": (0, 3, 6),
    "Δ": (0, 4, 7, 11),
    "Δ7": (0, 4, 7, 11),
    "m7": (0, 3, 7, 10),
    "min7": (0, 3, 7, 10),
    "mi7": (0, 3, 7, 10),
    "-7": (0, 3, 7, 10),
    "M7": (0, 4, 7, 11),
    "mmaj7": (0, 3, 7, 11),
    "mM7": (0, 3, 7, 11),
    "m6": (0, 3, 7, 9),
    "m9": (0, 2, 3, 7, 10),
    "m11": (0, 2, 3, 5, 7, 10),
    "m13": (0, 2, 3, 5, 7, 9, 10),
    "add9": (0, 2, 4, 7),
    "madd9": (0, 2, 3, 7),
    "add11": (0, 4, 5, 7),
    "7sus4": (0, 5, 7, 10),
    "7sus2": (0, 2, 7, 10),
    "m7b5": (0, 3, 6, 10),
    "dim": (0, 3, 6),
    "aug": (0, 4, 8),
    "aug7": (0, 4, 8, 10),
    "6add9": (0, 2, 4, 7, 9),
    "69": (0, 2, 4, 7, 9),
    "7b9": (0, 1, 4, 7, 10),
    "7#9": (0, 3, 4, 7, 10),
}


class LineType(enum.Enum):
    EMPTY = "empty"
    CHORDS = "chords"
    TUNING_DEFINITION = "tuning_definition"
    CAPO_CHANGE = "capo_change"
    STRUCTURAL_MARKER = "structural_marker"
    CHORD_DEFINITION = "chord_definition"
    TABLATURE = "tablature"
    LYRICS = "lyrics"
    CHORDS_AND_LYRICS = "chords_and_lyrics"
    UNDEFINED = "undefined"


class SystemKind(enum.Enum):
    CHORDS_AND_LYRICS = "chords_and_lyrics"
    CHORD_LINE = "chord_line"
    CHORD_TAB = "chord_line_tablature"
    CHORD_TAB_LYRICS = "chord_line_tablature_lyrics"
    TAB = "tablature"
    TAB_LYRICS = "tablature_lyrics"


@dataclass(frozen=True)
class TabLine:
    number: int
    text: str
    kind: LineType


@dataclass(frozen=True)
class TabSystem:
    kind: SystemKind
    lines: tuple[TabLine, ...]


@dataclass(frozen=True)
class UcsEntry:
    label: ChordLabel
    line_no: int
    char_index: int
    line_is_first_of_system: bool


@dataclass(frozen=True)
class UntimedChordSequence:
    entries: tuple[UcsEntry, ...]
    warnings: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def labels(self) -> tuple[ChordLabel, ...]:
        return tuple(e.label for e in self.entries)


def tab_chord_to_label(token: str) -> ChordLabel:
    """Reduce one chord token from a tab (``D7/F#``, ``Am``, ``Esus4``...).

    Splits the token into root, quality and optional bass note, then maps
    it to major or minor by its third.

    Raises
    ------
    UnparsableChord
        If the token is not recognizable as a chord.
    """
    token = token.strip().strip("|")
    m = re.fullmatch(r"([A-Ga-g])([#b]?)([^/]*)(?:/([A-Ga-g][#b]?|[#b]?\d+))?", token)
    if m is None:
        raise UnparsableChord(f"not a tab chord: {token!r}")
    root_txt, accidental, quality, _bass = m.groups()
    root = PitchClass.from_name(root_txt.upper() + accidental)
    quality = quality.strip()
    intervals = _TAB_QUALITIES.get(quality)
    if intervals is None:
        intervals = SHORTHAND_INTERVALS.get(quality.lower())
    if intervals is None:
        # Strip trailing extensions like "maj7" typed as "Maj7" or "MAJ7".
        intervals = SHORTHAND_INTERVALS.get(quality.lower().replace("(", "").replace(")", ""))
    if intervals is None:
        raise UnparsableChord(f"unknown chord quality {quality!r} in {token!r}")
    return ChordLabel(root, _mode_from_intervals(intervals))


def _is_chord_token(token: str) -> bool:
    if not token or len(token) > 10:
        return False
    if token[0].upper() not in "ABCDEFG":
        return False
    if re.search(r"\d{4}", token):
        return False
    if any(ch not in _CHORD_CHARSET for ch in token):
        return False
    for run in re.findall(r"[A-Za-zΔ]+", token[1:]):
        if len(run) >= 3 and run[:3].lower() not in _ALLOWED_TRIGRAMS:
            return False
    return True


def _is_chords_line(line: str) -> bool:
    tokens = [t for t in line.split() if t]
    return bool(tokens) and all(_is_chord_token(t) for t in tokens)


def _is_tablature_line(line: str) -> bool:
    relevant = sum(1 for ch in line if ch.isdigit() or ch in "-|/hbp ")
    return relevant >= 10 and line.count("-") > line.count(" ")


def _is_lyrics_line(line: str) -> bool:
    if any(ch in line for ch in "[]=@"):
        return False
    if line.count("-") > 10:
        return False
    words = line.split()
    if len(words) >= 2:
        return True
    if len(words) == 1 and words[0].isalpha():
        return bool(re.search(r"([A-Za-z])\1\1", words[0]))
    return False


_BRACKETED = re.compile(r"\[([^\]]*)\]")


def _is_chords_and_lyrics_line(line: str) -> bool:
    tokens = _BRACKETED.findall(line)
    if not tokens:
        return False
    if not all(_is_chord_token(t.strip()) for t in tokens):
        return False
    remainder = _BRACKETED.sub("", line)
    return _is_lyrics_line(remainder)


def classify_line(line: str) -> LineType:
    """Assign exactly one line type using fixed-precedence heuristics."""
    stripped = line.rstrip("\n")
    if not stripped.strip():
        return LineType.EMPTY
    if re.search(r"(?<!\d)\d{6}(?!\d)", stripped):
        return LineType.CHORD_DEFINITION
    if _is_tablature_line(stripped):
        return LineType.TABLATURE
    if _is_chords_line(stripped):
        return LineType.CHORDS
    lowered = stripped.lower()
    if "tuning" in lowered:
        return LineType.TUNING_DEFINITION
    if "capo" in lowered:
        return LineType.CAPO_CHANGE
    if any(word in lowered for word in _STRUCTURE_WORDS):
        return LineType.STRUCTURAL_MARKER
    if _is_chords_and_lyrics_line(stripped):
        return LineType.CHORDS_AND_LYRICS
    if _is_lyrics_line(stripped):
        return LineType.LYRICS
    return LineType.UNDEFINED


def segment_tab(lines: Iterable[str]) -> list[list[TabLine]]:
    """Split classified lines into maximal runs without empty lines."""
    segments: list[list[TabLine]] = []
    current: list[TabLine] = []
    for number, text in enumerate(lines):
        text = text.rstrip("\n")
        kind = classify_line(text)
        if kind is LineType.EMPTY:
            if current:
                segments.append(current)
                current = []
        else:
            current.append(TabLine(number, text, kind))
    if current:
        segments.append(current)
    return segments


def _match_system(lines: Sequence[TabLine], start: int) -> Optional[TabSystem]:
    """The longest system pattern starting at ``start``, if any."""
    kinds = [line.kind for line in lines]
    n = len(lines)

    def run_of(kind: LineType, begin: int, count: int) -> bool:
        return begin + count <= n and all(k is kind for k in kinds[begin : begin + count])

    def lyrics_run(begin: int, maximum: int = 3) -> int:
        count = 0
        while begin + count < n and count < maximum and kinds[begin + count] is LineType.LYRICS:
            count += 1
        return count

    if kinds[start] is LineType.CHORDS_AND_LYRICS:
        return TabSystem(SystemKind.CHORDS_AND_LYRICS, (lines[start],))
    if kinds[start] is LineType.CHORDS:
        if run_of(LineType.TABLATURE, start + 1, 6):
            n_lyrics = lyrics_run(start + 7)
            span = lines[start : start + 7 + n_lyrics]
            kind = SystemKind.CHORD_TAB_LYRICS if n_lyrics else SystemKind.CHORD_TAB
            return TabSystem(kind, tuple(span))
        return TabSystem(SystemKind.CHORD_LINE, (lines[start],))
    if run_of(LineType.TABLATURE, start, 6):
        n_lyrics = lyrics_run(start + 6)
        span = lines[start : start + 6 + n_lyrics]
        kind = SystemKind.TAB_LYRICS if n_lyrics else SystemKind.TAB
        return TabSystem(kind, tuple(span))
    return None


def detect_systems(segment: Sequence[TabLine]) -> list[TabSystem]:
    """Greedy top-down scan assigning each line to the largest possible system."""
    systems = []
    i = 0
    while i < len(segment):
        system = _match_system(segment, i)
        if system is None:
            i += 1
        else:
            systems.append(system)
            i += len(system.lines)
    return systems


def _chord_line_tokens(text: str) -> list[tuple[int, str]]:
    """(column, token) pairs from a chord line, split on spaces and bars."""
    return [
        (m.start(), m.group()) for m in re.finditer(r"[^\s|]+", text) if m.group()
    ]


def _extract_from_chord_line(line: TabLine, first_line: int) -> tuple[list[UcsEntry], int]:
    entries = []
    warnings = 0
    for column, token in _chord_line_tokens(line.text):
        try:
            label = tab_chord_to_label(token)
        except UnparsableChord:
            log.warning("skipping unparsable chord %r at line %d", token, line.number)
            warnings += 1
            continue
        entries.append(UcsEntry(label, line.number, column, line.number == first_line))
    return entries, warnings


def _extract_from_chords_and_lyrics(line: TabLine, first_line: int) -> tuple[list[UcsEntry], int]:
    entries = []
    warnings = 0
    for m in _BRACKETED.finditer(line.text):
        token = m.group(1).strip()
        try:
            label = tab_chord_to_label(token)
        except UnparsableChord:
            log.warning("skipping unparsable chord %r at line %d", token, line.number)
            warnings += 1
            continue
        entries.append(UcsEntry(label, line.number, m.start(), line.number == first_line))
    return entries, warnings


def _extract_from_tablature(lines: Sequence[TabLine], first_line: int) -> tuple[list[UcsEntry], int]:
    texts = [line.text for line in lines]
    width = max(len(t) for t in texts)
    padded = [t.ljust(width) for t in texts]
    entries = []
    for column in range(width):
        chars = [t[column] for t in padded]
        if not all(ch.isdigit() or ch in "xX" for ch in chars):
            continue
        # Skip columns that continue a multi-digit fret begun one column left.
        if any(ch.isdigit() and column > 0 and padded[i][column - 1].isdigit()
               for i, ch in enumerate(chars)):
            continue
        pitch_classes = set()
        for string, ch in enumerate(chars):
            if ch in "xX":
                continue
            digits = re.match(r"\d+", padded[string][column:]).group()
            fret = min(int(digits), MAX_FRET)
            pitch_classes.add((STANDARD_TUNING[string] + fret) % 12)
        if pitch_classes:
            label = chord_from_pitch_classes(pitch_classes)
            entries.append(UcsEntry(label, lines[0].number, column, lines[0].number == first_line))
    return entries, 0


def extract_chords(system: TabSystem) -> tuple[list[UcsEntry], int]:
    """Chord entries from one system, with a count of skipped tokens.

    A chord line above matching tablature wins: the tab lines are ignored
    so each chord is extracted exactly once.
    """
    first_line = system.lines[0].number
    if system.kind is SystemKind.CHORDS_AND_LYRICS:
        return _extract_from_chords_and_lyrics(system.lines[0], first_line)
    if system.kind in (SystemKind.CHORD_LINE, SystemKind.CHORD_TAB, SystemKind.CHORD_TAB_LYRICS):
        return _extract_from_chord_line(system.lines[0], first_line)
    tab_lines = [line for line in system.lines if line.kind is LineType.TABLATURE]
    return _extract_from_tablature(tab_lines, first_line)


def parse_tab_text(text: str) -> UntimedChordSequence:
    """Parse tab text: classify, segment, detect systems, extract chords."""
    entries: list[UcsEntry] = []
    warnings = 0
    for segment in segment_tab(text.splitlines()):
        for system in detect_systems(segment):
            found, skipped = extract_chords(system)
            entries.extend(found)
            warnings += skipped
    entries.sort(key=lambda e: (e.line_no, e.char_index))
    return UntimedChordSequence(tuple(entries), warnings)


def parse_tab(path) -> UntimedChordSequence:
    """Parse a tab file; a file with no recognizable chords yields an empty result."""
    with open(path, "r", encoding="utf-8", errors="replace") as handle:
        return parse_tab_text(handle.read())


def ucs_to_jsonl(ucs: UntimedChordSequence) -> str:
    """One JSON object per entry: ``{label, line, char, line_start}``."""
    import json

    rows = [
        json.dumps(
            {
                "label": str(e.label),
                "line": e.line_no,
                "char": e.char_index,
                "line_start": e.line_is_first_of_system,
            }
        )
        for e in ucs.entries
    ]
    return "\n".join(rows) + ("\n" if rows else "")
