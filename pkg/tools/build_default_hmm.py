#!/usr/bin/env python3
"""Regenerate the bundled HMM parameter file.

Synthesizes a deterministic corpus covering all 24 triads plus silence,
runs it through the audio preprocessing used at alignment time, and
trains the 25-state model on the result.  Output goes to
``src/chordfuse/data/hmm_default.json``.
"""

from pathlib import Path

import numpy as np

from chordfuse.annotations import ChordSegment, ChordSequence, beat_sync_labels
from chordfuse.audio import SAMPLE_RATE, Waveform
from chordfuse.chords import NO_CHORD, major, minor
from chordfuse.jump_align import preprocess_audio, train_hmm

SECONDS_PER_BAR = 2.0
CLICK_PERIOD = 0.5


def triad_pitches(label):
    if label.is_nochord:
        return []
    root = 48 + int(label.root)
    third = 4 if label.mode == "maj" else 3
    return [root, root + third, root + 7]


def synthesize(progression, rng):
    partials = ((1, 1.0), (2, 0.5), (3, 0.33), (4, 0.25))
    n = int(len(progression) * SECONDS_PER_BAR * SAMPLE_RATE)
    samples = np.zeros(n)
    for i, label in enumerate(progression):
        lo = int(i * SECONDS_PER_BAR * SAMPLE_RATE)
        hi = int((i + 1) * SECONDS_PER_BAR * SAMPLE_RATE)
        t = np.arange(hi - lo) / SAMPLE_RATE
        block = np.zeros(hi - lo)
        for pitch in triad_pitches(label):
            freq = 440.0 * 2.0 ** ((pitch - 69) / 12)
            for mult, weight in partials:
                block += weight * np.sin(2 * np.pi * freq * mult * t)
        samples[lo:hi] = 0.1 * block
    click_len = int(0.012 * SAMPLE_RATE)
    burst = rng.standard_normal(click_len) * np.hanning(click_len)
    t0 = 0.0
    duration = n / SAMPLE_RATE
    while t0 < duration - 0.02:
        lo = int(t0 * SAMPLE_RATE)
        samples[lo : lo + click_len] += 0.5 * burst
        t0 += CLICK_PERIOD
    peak = np.abs(samples).max()
    if peak > 0.99:
        samples *= 0.99 / peak
    return Waveform(samples, SAMPLE_RATE)


def main() -> None:
    rng = np.random.default_rng(20240101)
    corpus = []
    for root in range(12):
        progression = [
            major(root),
            minor((root + 9) % 12),
            major((root + 5) % 12),
            NO_CHORD,
            minor(root),
            major((root + 7) % 12),
        ]
        waveform = synthesize(progression, rng)
        truth = ChordSequence(
            ChordSegment(i * SECONDS_PER_BAR, (i + 1) * SECONDS_PER_BAR, label)
            for i, label in enumerate(progression)
            if not label.is_nochord
        )
        chroma, beats = preprocess_audio(waveform)
        labels = beat_sync_labels(truth, beats)
        corpus.append((chroma, labels))
    hmm = train_hmm(corpus)
    out = Path(__file__).resolve().parent.parent / "src" / "chordfuse" / "data" / "hmm_default.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    hmm.save(out)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
