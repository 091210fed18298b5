"""Aligning untimed tab chords to audio with a jump-transition HMM.

A 25-state Gaussian-emission HMM over the chord vocabulary is trained on
beat-synchronized chroma.  To align a tab, its chord entries become the
hidden states; transitions follow the tab order but may jump from a line
end to any line start with small forward/backward probabilities, which
absorbs repeats and skipped verses.  Decoding runs over all 12
transpositions of the tab and keeps the most likely one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .annotations import BeatGrid, ChordSegment, ChordSequence
from .audio import Waveform, beat_track, chroma_from_cqt, cqt, hpss
from .chords import VOCABULARY, ChordLabel, ChordVocabulary, transpose
from .errors import EmptyCorpus, EmptyUcs
from .tabs import UntimedChordSequence

HMM_FILE_VERSION = 1
COVARIANCE_REGULARIZER = 1e-4
_LOG_ZERO = -np.inf


@dataclass(frozen=True)
class HmmParameters:
    """Initial, transition and Gaussian emission parameters per vocabulary label."""

    p_ini: np.ndarray
    p_tr: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    vocabulary: ChordVocabulary = field(default_factory=lambda: VOCABULARY, repr=False)

    def __post_init__(self):
        n = len(self.vocabulary)
        if self.p_ini.shape != (n,) or self.p_tr.shape != (n, n):
            raise ValueError("probability shapes do not match the vocabulary")
        if self.means.shape != (n, 12) or self.covariances.shape != (n, 12, 12):
            raise ValueError("emission shapes do not match the vocabulary")

    def to_json(self) -> str:
        payload = {
            "version": HMM_FILE_VERSION,
            "p_ini": self.p_ini.tolist(),
            "p_tr": self.p_tr.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }
        return json.dumps(payload, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "HmmParameters":
        payload = json.loads(text)
        if payload.get("version") != HMM_FILE_VERSION:
            raise ValueError(f"unsupported parameter file version: {payload.get('version')}")
        return cls(
            np.array(payload["p_ini"], dtype=np.float64),
            np.array(payload["p_tr"], dtype=np.float64),
            np.array(payload["means"], dtype=np.float64),
            np.array(payload["covariances"], dtype=np.float64),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.to_json())

    @classmethod
    def load(cls, path) -> "HmmParameters":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_json(handle.read())


@dataclass(frozen=True)
class JumpConfig:
    """Probabilities of jumping to a later (forward) or not-later line start."""

    p_f: float = 0.05
    p_b: float = 0.05

    def __post_init__(self):
        if self.p_f < 0 or self.p_b < 0:
            raise ValueError("jump probabilities must be non-negative")


@dataclass(frozen=True)
class JumpStateSpace:
    """One hidden state per tab chord entry, with line boundary index sets."""

    labels: tuple[ChordLabel, ...]
    line_numbers: tuple[int, ...]
    transposition: int = 0

    def __post_init__(self):
        if len(self.labels) != len(self.line_numbers):
            raise ValueError("labels and line_numbers must be parallel")

    @classmethod
    def from_ucs(cls, ucs: UntimedChordSequence, transposition: int = 0) -> "JumpStateSpace":
        labels = tuple(transpose(e.label, -transposition) for e in ucs.entries)
        lines = tuple(e.line_no for e in ucs.entries)
        return cls(labels, lines, transposition)

    @property
    def line_starts(self) -> tuple[int, ...]:
        return tuple(
            i
            for i in range(len(self.labels))
            if i == 0 or self.line_numbers[i] != self.line_numbers[i - 1]
        )

    @property
    def line_ends(self) -> tuple[int, ...]:
        last = len(self.labels) - 1
        return tuple(
            i
            for i in range(len(self.labels))
            if i == last or self.line_numbers[i] != self.line_numbers[i + 1]
        )


def train_hmm(
    corpus: Sequence[tuple[np.ndarray, Sequence[ChordLabel]]],
    vocab: ChordVocabulary = VOCABULARY,
) -> HmmParameters:
    """Estimate HMM parameters from (beat-synced chroma, labels) pairs.

    Initial and transition probabilities come from frequency counts with
    add-one smoothing; emissions are the per-label sample mean and
    covariance, regularized by ``1e-4`` on the diagonal.  A label never
    observed keeps the smoothed uniform transitions, the global mean and
    an identity covariance.
    """
    if not corpus:
        raise EmptyCorpus("no training songs")
    n = len(vocab)
    ini_counts = np.zeros(n)
    tr_counts = np.zeros((n, n))
    frames_per_label: list[list[np.ndarray]] = [[] for _ in range(n)]
    total_frames = 0
    for chroma, labels in corpus:
        chroma = np.asarray(chroma, dtype=np.float64)
        if chroma.shape[0] != len(labels):
            raise ValueError("chroma frames and labels must be parallel")
        if len(labels) == 0:
            continue
        indices = [vocab.index(lbl) for lbl in labels]
        ini_counts[indices[0]] += 1
        for a, b in zip(indices, indices[1:]):
            tr_counts[a, b] += 1
        for i, idx in enumerate(indices):
            frames_per_label[idx].append(chroma[i])
        total_frames += len(labels)
    if total_frames == 0:
        raise EmptyCorpus("no training frames")

    p_ini = (ini_counts + 1.0) / (ini_counts.sum() + n)
    p_tr = (tr_counts + 1.0) / (tr_counts.sum(axis=1, keepdims=True) + n)

    all_frames = np.concatenate(
        [np.array(rows) for rows in frames_per_label if rows], axis=0
    )
    global_mean = all_frames.mean(axis=0)
    means = np.zeros((n, 12))
    covariances = np.zeros((n, 12, 12))
    for i, rows in enumerate(frames_per_label):
        if rows:
            data = np.array(rows)
            means[i] = data.mean(axis=0)
            centered = data - means[i]
            covariances[i] = centered.T @ centered / len(rows)
            covariances[i] += COVARIANCE_REGULARIZER * np.eye(12)
        else:
            means[i] = global_mean
            covariances[i] = np.eye(12)
    return HmmParameters(p_ini, p_tr, means, covariances, vocab)


def _state_log_densities(means, covariances, frames) -> np.ndarray:
    """Log N(x; mu_i, Sigma_i) for every frame and state, shape (T, S)."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    t, d = frames.shape
    s = means.shape[0]
    out = np.empty((t, s))
    const = d * math.log(2.0 * math.pi)
    for i in range(s):
        chol = np.linalg.cholesky(covariances[i])
        log_det = 2.0 * np.log(np.diag(chol)).sum()
        centered = (frames - means[i]).T
        z = np.linalg.solve(chol, centered)
        maha = (z**2).sum(axis=0)
        out[:, i] = -0.5 * (const + log_det + maha)
    return out


def _viterbi_log(
    log_ini: np.ndarray, log_tr: np.ndarray, log_emit: np.ndarray
) -> tuple[np.ndarray, float]:
    """Most likely state path given log-domain parameters.

    ``log_emit`` has shape (T, S).  Returns the path and its total log
    likelihood; if every continuation underflows to -inf the path falls
    back to state argmax at each frame with a -inf likelihood.
    """
    t_len, n_states = log_emit.shape
    v = log_ini + log_emit[0]
    back = np.zeros((t_len - 1, n_states), dtype=int) if t_len > 1 else None
    for t in range(1, t_len):
        scores = v[:, None] + log_tr
        best_prev = np.argmax(scores, axis=0)
        v = scores[best_prev, np.arange(n_states)] + log_emit[t]
        back[t - 1] = best_prev
    last = int(np.argmax(v))
    loglik = float(v[last])
    path = np.empty(t_len, dtype=int)
    path[-1] = last
    for t in range(t_len - 2, -1, -1):
        path[t] = back[t][path[t + 1]]
    return path, loglik


def viterbi(obs, hmm: HmmParameters) -> tuple[list[ChordLabel], float]:
    """Decode the most likely vocabulary label per chroma frame.

    ``obs`` is a frame array or anything with a ``vectors`` attribute.
    Runs in the log domain.  If all emission densities underflow the
    decoder returns a no-chord path with ``-inf`` likelihood rather than
    raising.
    """
    obs = getattr(obs, "vectors", obs)
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    log_emit = _state_log_densities(hmm.means, hmm.covariances, obs)
    if not np.isfinite(log_emit).any(axis=1).all():
        nochord = [hmm.vocabulary.label(0)] * obs.shape[0]
        return nochord, float(_LOG_ZERO)
    with np.errstate(divide="ignore"):
        log_ini = np.log(hmm.p_ini)
        log_tr = np.log(hmm.p_tr)
    path, loglik = _viterbi_log(log_ini, log_tr, log_emit)
    return [hmm.vocabulary.label(int(i)) for i in path], loglik


def jump_transition(
    space: JumpStateSpace, hmm: HmmParameters, cfg: JumpConfig | None = None
) -> np.ndarray:
    """Row-normalized transition matrix over tab entry states.

    From state ``i`` the chain may stay or advance to ``i + 1`` with the
    vocabulary transition weight.  If ``i`` ends a line, it may addition-
    ally jump to any line start ``j``: forward jumps (``j > i``) scale by
    ``p_f`` and backward-or-same jumps by ``p_b``.  Everything else is 0.
    """
    if not space.labels:
        raise EmptyUcs("state space has no entries")
    cfg = cfg or JumpConfig()
    vocab = hmm.vocabulary
    n = len(space.labels)
    indices = [vocab.index(lbl) for lbl in space.labels]
    line_starts = set(space.line_starts)
    line_ends = set(space.line_ends)
    matrix = np.zeros((n, n))
    for i in range(n):
        matrix[i, i] = hmm.p_tr[indices[i], indices[i]]
        if i + 1 < n:
            matrix[i, i + 1] = hmm.p_tr[indices[i], indices[i + 1]]
        if i in line_ends:
            for j in line_starts:
                if j in (i, i + 1):
                    continue
                factor = cfg.p_f if j > i else cfg.p_b
                matrix[i, j] = factor * hmm.p_tr[indices[i], indices[j]]
        total = matrix[i].sum()
        if total > 0:
            matrix[i] /= total
        else:
            matrix[i, i] = 1.0
    return matrix


def _initial_distribution(space: JumpStateSpace, hmm: HmmParameters) -> np.ndarray:
    """Initial mass restricted to line-start states, proportional to P_ini."""
    vocab = hmm.vocabulary
    dist = np.zeros(len(space.labels))
    for j in space.line_starts:
        dist[j] = hmm.p_ini[vocab.index(space.labels[j])]
    total = dist.sum()
    if total > 0:
        dist /= total
    else:
        dist[list(space.line_starts)] = 1.0 / len(space.line_starts)
    return dist


def beat_sync_chroma(w: Waveform, beats: BeatGrid, hop: int = 256) -> np.ndarray:
    """Harmonic chroma averaged per inter-beat interval, shape (beats - 1, 12)."""
    spec = cqt(w, hop=hop)
    harmonic, _ = hpss(spec)
    chroma = chroma_from_cqt(harmonic)
    frame_times = (np.arange(chroma.vectors.shape[0]) + 0.5) * chroma.frame_period
    synced = np.zeros((max(len(beats) - 1, 0), 12))
    for k, (b0, b1) in enumerate(zip(beats.times, beats.times[1:])):
        rows = chroma.vectors[(frame_times >= b0) & (frame_times < b1)]
        if len(rows):
            synced[k] = rows.mean(axis=0)
    return synced


def preprocess_audio(w: Waveform, hop: int = 256) -> tuple[np.ndarray, BeatGrid]:
    """Beat-synchronized harmonic chroma frames and the beat grid.

    The constant-Q magnitudes are split into harmonic and percussive
    parts; chroma comes from the harmonic part and beats from a tracker
    driven by percussive content.  Chroma frames between consecutive
    beats average into one frame per inter-beat interval.
    """
    beats = beat_track(w)
    return beat_sync_chroma(w, beats, hop), beats


def jump_align(
    ucs: UntimedChordSequence,
    audio_features: np.ndarray,
    beats: BeatGrid,
    hmm: HmmParameters,
    cfg: JumpConfig | None = None,
) -> tuple[ChordSequence, float, int]:
    """Align a tab to beat-synced audio features over all 12 transpositions.

    Tries every transposition of the tab, decodes each against the jump
    transition matrix and keeps the most likely.  Returns the audio-timed
    chord sequence, its log likelihood and the detected transposition
    (semitones the tab lies above the audio).
    """
    if not ucs.entries:
        raise EmptyUcs("tab contains no chords")
    frames = np.atleast_2d(np.asarray(audio_features, dtype=np.float64))
    if frames.shape[0] == 0 or len(beats) < 2:
        raise ValueError("need at least one beat-synced frame")
    cfg = cfg or JumpConfig()

    best: tuple[float, int, np.ndarray, JumpStateSpace] | None = None
    for k in range(12):
        space = JumpStateSpace.from_ucs(ucs, transposition=k)
        label_means = np.array([hmm.means[hmm.vocabulary.index(l)] for l in space.labels])
        label_covs = np.array(
            [hmm.covariances[hmm.vocabulary.index(l)] for l in space.labels]
        )
        log_emit = _state_log_densities(label_means, label_covs, frames)
        with np.errstate(divide="ignore"):
            log_ini = np.log(_initial_distribution(space, hmm))
            log_tr = np.log(jump_transition(space, hmm, cfg))
        path, loglik = _viterbi_log(log_ini, log_tr, log_emit)
        if best is None or loglik > best[0]:
            best = (loglik, k, path, space)

    loglik, transposition, path, space = best
    segments: list[ChordSegment] = []
    for t, state in enumerate(path):
        label = space.labels[int(state)]
        start, end = beats.times[t], beats.times[t + 1]
        if segments and segments[-1].label == label and abs(segments[-1].end - start) < 1e-9:
            segments[-1] = ChordSegment(segments[-1].start, end, label)
        else:
            segments.append(ChordSegment(start, end, label))
    return ChordSequence(segments), loglik, transposition
