"""Dynamic time warping between feature sequences, full and subsequence.

The full variant computes the classic accumulated-cost recursion with
its backpointer matrix.  The subsequence variant adds an additive penalty
on non-diagonal steps (the median of the cost matrix by default) and
relaxes both path endpoints under a gully parameter, so a partial
transcription can still be matched to a full recording.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .audio import Waveform, cqt
from .errors import DimensionMismatch
from .midi import MidiSong, midi_alignment_features

# Backpointer codes, matching the order of the recursion's tie-breaking.
START = 0
DIAGONAL = 1
VERTICAL = 2  # predecessor (n, m - 1)
HORIZONTAL = 3  # predecessor (n - 1, m)


@dataclass(frozen=True)
class AlignmentPath:
    """Matched index (or time) pairs, with total cost and a confidence score.

    ``p`` indexes the first sequence and ``q`` the second; the confidence
    is the mean raw cost along the path, lower meaning better matched.
    """

    p: np.ndarray
    q: np.ndarray
    cost: float
    confidence: float

    def __len__(self) -> int:
        return len(self.p)


@dataclass(frozen=True)
class DtwConfig:
    """Alignment parameters: 46 ms hop at 22050 Hz, median penalty, 0.96 gully."""

    hop: int = 1024
    gully: float = 0.96
    penalty: Optional[float] = None  # None: median of the cost matrix
    band: None = None

    def __post_init__(self):
        if not 0 < self.gully <= 1:
            raise ValueError("gully must be in (0, 1]")


def cost_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise cosine distances; all-zero rows are at distance 1 from anything."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch(f"feature dimensions differ: {x.shape[1]} vs {y.shape[1]}")
    xn = np.linalg.norm(x, axis=1)
    yn = np.linalg.norm(y, axis=1)
    xs = x / np.where(xn > 0, xn, 1.0)[:, None]
    ys = y / np.where(yn > 0, yn, 1.0)[:, None]
    return np.clip(1.0 - xs @ ys.T, 0.0, 2.0)


def dtw_matrices(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Accumulated cost and backpointers for the full alignment.

    Ties among predecessors resolve diagonal first, then vertical, then
    horizontal.
    """
    c = np.asarray(c, dtype=np.float64)
    n, m = c.shape
    d = np.zeros((n, m))
    p = np.zeros((n, m), dtype=np.int8)
    d[0, 0] = c[0, 0]
    p[0, 0] = START
    for i in range(1, n):
        d[i, 0] = c[i, 0] + d[i - 1, 0]
        p[i, 0] = HORIZONTAL
    for j in range(1, m):
        d[0, j] = c[0, j] + d[0, j - 1]
        p[0, j] = VERTICAL
    for i in range(1, n):
        for j in range(1, m):
            diag = d[i - 1, j - 1]
            vert = d[i, j - 1]
            horiz = d[i - 1, j]
            s = min(diag, vert, horiz)
            if s == diag:
                d[i, j] = c[i, j] + diag
                p[i, j] = DIAGONAL
            elif s == vert:
                d[i, j] = c[i, j] + vert
                p[i, j] = VERTICAL
            else:
                d[i, j] = c[i, j] + horiz
                p[i, j] = HORIZONTAL
    return d, p


def _traceback(pointers: np.ndarray, end: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    i, j = end
    ps, qs = [i], [j]
    while pointers[i, j] != START:
        code = pointers[i, j]
        if code == DIAGONAL:
            i, j = i - 1, j - 1
        elif code == VERTICAL:
            j -= 1
        else:
            i -= 1
        ps.append(i)
        qs.append(j)
    return np.array(ps[::-1]), np.array(qs[::-1])


def dtw_full(c: np.ndarray) -> AlignmentPath:
    """Optimal monotone path from (0, 0) to (N-1, M-1) under unit steps."""
    c = np.asarray(c, dtype=np.float64)
    d, pointers = dtw_matrices(c)
    end = (c.shape[0] - 1, c.shape[1] - 1)
    p, q = _traceback(pointers, end)
    return AlignmentPath(p, q, float(d[end]), float(c[p, q].mean()))


def dtw_subsequence(c: np.ndarray, config: DtwConfig | None = None) -> AlignmentPath:
    """Relaxed-endpoint alignment with a penalty on non-diagonal steps.

    The path may start within the first ``1 - gully`` fraction of either
    sequence (on the facing edge) and must end on an edge after consuming
    at least the ``gully`` fraction of one sequence.  With a gully of 1
    and zero penalty this reduces exactly to the full alignment.
    """
    config = config or DtwConfig()
    c = np.asarray(c, dtype=np.float64)
    n, m = c.shape
    phi = float(np.median(c)) if config.penalty is None else float(config.penalty)
    g = config.gully

    # 1-indexed start positions <= these values may begin a fresh path.
    start_n = math.floor((1.0 - g) * n) + 1
    start_m = math.floor((1.0 - g) * m) + 1

    d = np.zeros((n, m))
    pointers = np.zeros((n, m), dtype=np.int8)
    d[0, 0] = c[0, 0]
    for i in range(1, n):
        if i + 1 <= start_n:
            d[i, 0] = c[i, 0]
            pointers[i, 0] = START
        else:
            d[i, 0] = c[i, 0] + d[i - 1, 0] + phi
            pointers[i, 0] = HORIZONTAL
    for j in range(1, m):
        if j + 1 <= start_m:
            d[0, j] = c[0, j]
            pointers[0, j] = START
        else:
            d[0, j] = c[0, j] + d[0, j - 1] + phi
            pointers[0, j] = VERTICAL
    for i in range(1, n):
        row = d[i - 1]
        for j in range(1, m):
            diag = row[j - 1]
            vert = d[i, j - 1] + phi
            horiz = row[j] + phi
            s = min(diag, vert, horiz)
            if s == diag:
                pointers[i, j] = DIAGONAL
            elif s == vert:
                pointers[i, j] = VERTICAL
            else:
                pointers[i, j] = HORIZONTAL
            d[i, j] = c[i, j] + s

    end_min = (math.ceil(g * n) - 1, math.ceil(g * m) - 1)
    best: tuple[int, int] | None = None
    for i in range(end_min[0], n):
        if best is None or d[i, m - 1] < d[best]:
            best = (i, m - 1)
    for j in range(end_min[1], m):
        if d[n - 1, j] < d[best]:
            best = (n - 1, j)
    p, q = _traceback(pointers, best)
    return AlignmentPath(p, q, float(d[best]), float(c[p, q].mean()))


def write_alignment(path_obj: AlignmentPath, path) -> None:
    """Write a seconds-valued path: a ``confidence=`` header, then ``midi_s audio_s`` lines."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"confidence={path_obj.confidence:.9f}\n")
        for a, b in zip(path_obj.p, path_obj.q):
            handle.write(f"{a:.6f} {b:.6f}\n")


def read_alignment(path) -> AlignmentPath:
    """Read a path written by :func:`write_alignment`."""
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().strip()
        if not header.startswith("confidence="):
            raise ValueError(f"missing confidence header in {path}")
        confidence = float(header.split("=", 1)[1])
        ps, qs = [], []
        for line in handle:
            line = line.strip()
            if not line:
                continue
            a, b = line.split()
            ps.append(float(a))
            qs.append(float(b))
    return AlignmentPath(np.array(ps), np.array(qs), math.nan, confidence)


def align_midi_to_audio(
    m: MidiSong, audio: Waveform, config: DtwConfig | None = None
) -> AlignmentPath:
    """Align a MIDI file to a recording in log-magnitude constant-Q space.

    Returns the matched times in seconds (``p`` on the MIDI clock, ``q``
    on the audio clock) with the mean pairwise frame distance along the
    path as the confidence score.
    """
    config = config or DtwConfig()
    hop_seconds = config.hop / audio.sample_rate
    midi_features = midi_alignment_features(m, hop_seconds)
    if midi_features.n_frames == 0:
        raise ValueError("cannot align an empty MIDI file")
    audio_cqt = cqt(audio, hop=config.hop)
    audio_features = np.log1p(audio_cqt.magnitudes)
    c = cost_matrix(midi_features.magnitudes, audio_features)
    path = dtw_subsequence(c, config)
    midi_seconds = (path.p + 0.5) * hop_seconds
    audio_seconds = (path.q + 0.5) * hop_seconds
    return AlignmentPath(midi_seconds, audio_seconds, path.cost, path.confidence)
