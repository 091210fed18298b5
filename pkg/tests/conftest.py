"""Shared fixture helpers: synthetic audio, minimal MIDI files, tab text."""

import math
import struct

import numpy as np
import pytest

from chordfuse.audio import SAMPLE_RATE, Waveform, write_wav

# Filled by the acceptance module; echoed after the run so the per-criterion
# verdicts survive pytest's output capture.
ACCEPTANCE_RESULTS: list[tuple[int, str, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, status in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number} ({name}): {status}")

A4_HZ = 440.0


def midi_to_hz(pitch: int) -> float:
    return A4_HZ * 2.0 ** ((pitch - 69) / 12.0)


def sine_wave(freq: float, duration: float, sr: int = SAMPLE_RATE, amp: float = 0.5) -> Waveform:
    t = np.arange(int(round(duration * sr))) / sr
    return Waveform(amp * np.sin(2 * np.pi * freq * t), sr)


def chord_tone_audio(
    chord_pitches: list[list[int]],
    seconds_per_chord: float,
    click_period: float | None = None,
    amp: float = 0.18,
    sr: int = SAMPLE_RATE,
    overtones: bool = True,
) -> Waveform:
    """Tone mixture per chord block, with optional percussive clicks.

    Each pitch carries a decaying overtone ladder so the synthetic audio
    has the harmonic structure real instruments do.
    """
    partials = ((1, 1.0), (2, 0.5), (3, 0.33), (4, 0.25)) if overtones else ((1, 1.0),)
    total = seconds_per_chord * len(chord_pitches)
    n = int(round(total * sr))
    samples = np.zeros(n)
    for i, pitches in enumerate(chord_pitches):
        lo = int(round(i * seconds_per_chord * sr))
        hi = int(round((i + 1) * seconds_per_chord * sr))
        t = np.arange(hi - lo) / sr
        block = np.zeros(hi - lo)
        for pitch in pitches:
            for mult, weight in partials:
                block += weight * np.sin(2 * np.pi * midi_to_hz(pitch) * mult * t)
        if pitches:
            samples[lo:hi] = amp * block / len(pitches) * len(pitches) ** 0.5
    if click_period is not None:
        rng = np.random.default_rng(4242)
        click_len = int(0.012 * sr)
        burst = rng.standard_normal(click_len) * np.hanning(click_len)
        t0 = 0.0
        while t0 < total - 0.02:
            lo = int(round(t0 * sr))
            samples[lo : lo + click_len] += 0.6 * burst
            t0 += click_period
    peak = np.abs(samples).max()
    if peak > 0.99:
        samples = samples * 0.99 / peak
    return Waveform(samples, sr)


def click_track(bpm: float, duration: float, sr: int = SAMPLE_RATE) -> Waveform:
    return chord_tone_audio([[]], duration, click_period=60.0 / bpm, sr=sr)


# ---------------------------------------------------------------------------
# Minimal standard-MIDI-file writer (big-endian chunks, format 0).


def _varlen(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def build_smf(
    notes: list[tuple[float, float, int, int, int]],
    ticks_per_quarter: int = 480,
    us_per_quarter: int = 500000,
    time_signature: tuple[int, int] = (4, 4),
    tempo_changes: list[tuple[float, int]] | None = None,
    fmt: int = 0,
) -> bytes:
    """Serialize (start_beats, end_beats, pitch, velocity, channel) notes.

    Note times are given in quarter notes; tempo changes as
    (beat, us_per_quarter) pairs on top of the initial tempo.
    """
    events: list[tuple[int, int, bytes]] = []  # (tick, order, payload)
    numerator, denominator = time_signature
    events.append((0, 0, bytes([0xFF, 0x58, 0x04, numerator, int(math.log2(denominator)), 24, 8])))
    events.append((0, 0, bytes([0xFF, 0x51, 0x03]) + us_per_quarter.to_bytes(3, "big")))
    for beat, uspq in tempo_changes or []:
        tick = int(round(beat * ticks_per_quarter))
        events.append((tick, 0, bytes([0xFF, 0x51, 0x03]) + uspq.to_bytes(3, "big")))
    for start, end, pitch, velocity, channel in notes:
        on_tick = int(round(start * ticks_per_quarter))
        off_tick = int(round(end * ticks_per_quarter))
        events.append((on_tick, 1, bytes([0x90 | channel, pitch, velocity])))
        events.append((off_tick, 2, bytes([0x80 | channel, pitch, 0])))
    events.sort(key=lambda e: (e[0], e[1]))

    track = bytearray()
    last_tick = 0
    for tick, _, payload in events:
        track += _varlen(tick - last_tick)
        track += payload
        last_tick = tick
    track += _varlen(0) + bytes([0xFF, 0x2F, 0x00])

    header = struct.pack(">4sIHHH", b"MThd", 6, fmt, 1, ticks_per_quarter)
    return header + struct.pack(">4sI", b"MTrk", len(track)) + bytes(track)


def write_smf(path, *args, **kwargs) -> None:
    with open(path, "wb") as handle:
        handle.write(build_smf(*args, **kwargs))


@pytest.fixture
def wav_writer(tmp_path):
    def _write(name: str, waveform: Waveform):
        path = tmp_path / name
        write_wav(waveform, path)
        return path

    return _write


# ---------------------------------------------------------------------------
# Synthetic song corpora: audio, reference labels, external audio-system
# labels, MIDI transcriptions and tab files, all generated from one
# seeded progression per song.

import json

from chordfuse.annotations import ChordSegment, ChordSequence, write_lab
from chordfuse.chords import ChordLabel, major, minor, transpose

PALETTE = [major(0), major(5), major(7), minor(9), minor(2), major(4)]
SECONDS_PER_BAR = 2.0  # 4/4 at 120 BPM
BEATS_PER_BAR = 4


def triad_pitches(label: ChordLabel, octave_root: int = 48) -> list[int]:
    root = octave_root + int(label.root)
    third = 4 if label.mode == "maj" else 3
    return [root, root + third, root + 7]


def tab_token(label: ChordLabel) -> str:
    name = label.root.name
    return name + ("m" if label.mode == "min" else "")


def progression_for(rng, n_bars: int) -> list[ChordLabel]:
    chords = [PALETTE[int(rng.integers(0, len(PALETTE)))]]
    while len(chords) < n_bars:
        nxt = PALETTE[int(rng.integers(0, len(PALETTE)))]
        chords.append(nxt)
    return chords


def truth_sequence(progression) -> ChordSequence:
    return ChordSequence(
        ChordSegment(i * SECONDS_PER_BAR, (i + 1) * SECONDS_PER_BAR, label)
        for i, label in enumerate(progression)
    )


def corrupted_sequence(truth: ChordSequence, fraction: float, rng) -> ChordSequence:
    """Relabel a contiguous window covering ``fraction`` of the duration."""
    total = truth.span_end - truth.span_start
    span = fraction * total
    start_bar = int(rng.integers(0, max(1, len(truth.segments) - int(span / SECONDS_PER_BAR) - 1)))
    lo = truth.span_start + start_bar * SECONDS_PER_BAR
    hi = lo + span
    out = []
    for seg in truth:
        pieces = [(seg.start, seg.end)]
        for a, b in pieces:
            cut_lo, cut_hi = max(a, lo), min(b, hi)
            if cut_lo >= cut_hi:
                out.append(ChordSegment(a, b, seg.label))
                continue
            if a < cut_lo:
                out.append(ChordSegment(a, cut_lo, seg.label))
            out.append(ChordSegment(cut_lo, cut_hi, transpose(seg.label, 1)))
            if cut_hi < b:
                out.append(ChordSegment(cut_hi, b, seg.label))
    return ChordSequence(out)


def tab_text_for(progression, bars_per_line: int = 2) -> str:
    lines = ["[Verse]"]
    for i in range(0, len(progression), bars_per_line):
        block = progression[i : i + bars_per_line]
        lines.append("   ".join(tab_token(label) for label in block))
        lines.append("la dee dah doo dum dee")
        if i + bars_per_line < len(progression) and (i // bars_per_line) % 2 == 1:
            lines.append("")
    return "\n".join(lines) + "\n"


def midi_notes_for(progression, arpeggio: bool = False) -> list[tuple]:
    notes = []
    for i, label in enumerate(progression):
        base = i * BEATS_PER_BAR
        pitches = triad_pitches(label)
        if arpeggio:
            notes.append((base, base + BEATS_PER_BAR, pitches[0], 80, 0))
            for b in range(BEATS_PER_BAR):
                pitch = pitches[b % len(pitches)]
                notes.append((base + b, base + b + 1, pitch, 96, 0))
        else:
            for pitch in pitches:
                notes.append((base, base + BEATS_PER_BAR, pitch, 96, 0))
    return notes


def build_song_assets(
    root,
    song_id: str,
    rng,
    n_bars: int = 6,
    corrupt_fraction: float = 0.25,
    with_bad_midi: bool = False,
    n_bad_tabs: int = 0,
    with_truth: bool = True,
) -> dict:
    """Write one synthetic song's files; returns its manifest entry."""
    song_dir = root / song_id
    song_dir.mkdir(parents=True, exist_ok=True)
    progression = progression_for(rng, n_bars)
    truth = truth_sequence(progression)

    audio = chord_tone_audio(
        [triad_pitches(label) for label in progression],
        SECONDS_PER_BAR,
        click_period=SECONDS_PER_BAR / BEATS_PER_BAR,
    )
    write_wav(audio, song_dir / "audio.wav")

    entry = {"id": song_id, "audio": str(song_dir / "audio.wav")}
    if with_truth:
        write_lab(truth, song_dir / "truth.lab")
        entry["ground_truth"] = str(song_dir / "truth.lab")

    degraded = corrupted_sequence(truth, corrupt_fraction, rng)
    write_lab(degraded, song_dir / "ace.lab")
    entry["ace_labs"] = [str(song_dir / "ace.lab")]

    write_smf(song_dir / "good.mid", notes=midi_notes_for(progression))
    entry["midis"] = [str(song_dir / "good.mid")]
    if with_bad_midi:
        wrong = [transpose(label, 6) for label in progression]
        write_smf(song_dir / "bad.mid", notes=midi_notes_for(wrong))
        entry["midis"].append(str(song_dir / "bad.mid"))

    (song_dir / "good.tab").write_text(tab_text_for(progression), encoding="utf-8")
    entry["tabs"] = [str(song_dir / "good.tab")]
    for j in range(n_bad_tabs):
        wrong = progression_for(rng, n_bars)
        shift = int(rng.integers(1, 12))
        wrong = [transpose(label, shift) for label in wrong]
        (song_dir / f"bad{j}.tab").write_text(tab_text_for(wrong), encoding="utf-8")
        entry["tabs"].append(str(song_dir / f"bad{j}.tab"))
    return entry


def build_corpus(root, n_songs: int, seed: int = 0, **song_kwargs) -> str:
    rng = np.random.default_rng(seed)
    entries = [
        build_song_assets(root, f"song{i:02d}", rng, **song_kwargs)
        for i in range(n_songs)
    ]
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps({"songs": entries}, indent=2), encoding="utf-8")
    return str(manifest)


def train_corpus_hmm(manifest_path):
    """Train HMM parameters from a synthetic manifest's audio and truth."""
    from chordfuse.annotations import beat_sync_labels, read_lab
    from chordfuse.audio import load_wav
    from chordfuse.jump_align import preprocess_audio, train_hmm
    from chordfuse.pipeline import load_manifest

    corpus = []
    for bundle in load_manifest(manifest_path):
        waveform = load_wav(bundle.audio)
        chroma, beats = preprocess_audio(waveform)
        labels = beat_sync_labels(read_lab(bundle.ground_truth), beats)
        corpus.append((chroma, labels))
    return train_hmm(corpus)
