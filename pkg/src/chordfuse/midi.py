"""Standard MIDI File parsing, beat derivation and alignment features.

Parses SMF format 0 and 1 into note events timed in seconds, derives beat
and downbeat grids from the tempo map and time signatures, remaps note
times through an alignment path, and renders notes directly into
constant-Q bin space so MIDI can be compared against audio features
without synthesizing a waveform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .annotations import BeatGrid
from .audio import C2_HZ, DEFAULT_N_BINS, SAMPLE_RATE, Spectrogram
from .errors import EmptyPath, MalformedChunk, UnsupportedFormat

DRUM_CHANNEL = 9
DEFAULT_US_PER_QUARTER = 500000

# Energy placed on a note's fundamental and its first three overtones.
PARTIAL_OFFSETS = (0, 12, 19, 24)
PARTIAL_WEIGHTS = (1.0, 0.5, 0.33, 0.25)

_MIN_NOTE_LENGTH = 1e-6


@dataclass(frozen=True)
class NoteEvent:
    start: float
    end: float
    pitch: int
    velocity: int
    channel: int

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError("note end must exceed start")
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch out of range: {self.pitch}")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity out of range: {self.velocity}")
        if not 0 <= self.channel <= 15:
            raise ValueError(f"channel out of range: {self.channel}")

    @property
    def is_drum(self) -> bool:
        return self.channel == DRUM_CHANNEL


@dataclass(frozen=True)
class MidiSong:
    """Parsed note events plus the tick clock needed to derive beats.

    ``warp`` is an optional piecewise-linear remapping (source seconds,
    target seconds) applied on top of the tick clock after alignment; note
    times are already expressed in target seconds.
    """

    notes: tuple[NoteEvent, ...]
    tempo_map: tuple[tuple[int, int], ...]
    time_signatures: tuple[tuple[int, int, int], ...]
    ticks_per_quarter: int
    warp: Optional[tuple[tuple[float, ...], tuple[float, ...]]] = field(default=None)

    @property
    def end_time(self) -> float:
        return max((n.end for n in self.notes), default=0.0)

    def tick_to_seconds(self, tick: float) -> float:
        seconds = _tick_to_seconds(self.tempo_map, self.ticks_per_quarter, tick)
        if self.warp is not None:
            seconds = float(np.interp(seconds, self.warp[0], self.warp[1]))
        return seconds

    def seconds_to_tick(self, seconds: float) -> float:
        return _seconds_to_tick(self.tempo_map, self.ticks_per_quarter, seconds)


def _tick_to_seconds(tempo_map, tpq: int, tick: float) -> float:
    seconds = 0.0
    prev_tick, prev_uspq = tempo_map[0]
    for ev_tick, uspq in tempo_map[1:]:
        if ev_tick >= tick:
            break
        seconds += (ev_tick - prev_tick) * prev_uspq / (tpq * 1e6)
        prev_tick, prev_uspq = ev_tick, uspq
    return seconds + (tick - prev_tick) * prev_uspq / (tpq * 1e6)


def _seconds_to_tick(tempo_map, tpq: int, seconds: float) -> float:
    elapsed = 0.0
    prev_tick, prev_uspq = tempo_map[0]
    for ev_tick, uspq in tempo_map[1:]:
        span = (ev_tick - prev_tick) * prev_uspq / (tpq * 1e6)
        if elapsed + span >= seconds:
            break
        elapsed += span
        prev_tick, prev_uspq = ev_tick, uspq
    return prev_tick + (seconds - elapsed) * tpq * 1e6 / prev_uspq


class _Reader:
    """Byte cursor with the big-endian reads SMF chunks need."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def bytes(self, n: int) -> bytes:
        if self.remaining() < n:
            raise MalformedChunk("unexpected end of data")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.bytes(1)[0]

    def u16(self) -> int:
        return int.from_bytes(self.bytes(2), "big")

    def u32(self) -> int:
        return int.from_bytes(self.bytes(4), "big")

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            byte = self.u8()
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        raise MalformedChunk("variable-length quantity longer than 4 bytes")


def _parse_track(reader: _Reader, notes, tempi, sigs) -> None:
    tick = 0
    status = None
    open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def close_note(channel: int, pitch: int, end_tick: int) -> None:
        stack = open_notes.get((channel, pitch))
        if stack:
            start_tick, velocity = stack.pop()
            if end_tick > start_tick:
                notes.append((start_tick, end_tick, pitch, velocity, channel))

    while reader.remaining() > 0:
        tick += reader.varlen()
        byte = reader.u8()
        if byte == 0xFF:
            meta = reader.u8()
            length = reader.varlen()
            payload = reader.bytes(length)
            if meta == 0x51 and length == 3:
                tempi.append((tick, int.from_bytes(payload, "big")))
            elif meta == 0x58 and length >= 2:
                sigs.append((tick, payload[0], 2 ** payload[1]))
            elif meta == 0x2F:
                break
            continue
        if byte in (0xF0, 0xF7):
            reader.bytes(reader.varlen())
            status = None
            continue
        if byte & 0x80:
            status = byte
            data1 = reader.u8()
        else:
            if status is None:
                raise MalformedChunk("data byte with no running status")
            data1 = byte
        kind = status & 0xF0
        channel = status & 0x0F
        if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
            data2 = reader.u8()
            if kind == 0x90 and data2 > 0:
                open_notes.setdefault((channel, data1), []).append((tick, data2))
            elif kind == 0x80 or (kind == 0x90 and data2 == 0):
                close_note(channel, data1, tick)
        elif kind in (0xC0, 0xD0):
            pass
        else:
            raise MalformedChunk(f"unexpected status byte 0x{status:02x}")
    for (channel, pitch), stack in open_notes.items():
        while stack:
            start_tick, velocity = stack.pop()
            if tick > start_tick:
                notes.append((start_tick, tick, pitch, velocity, channel))


def parse_midi(path) -> MidiSong:
    """Parse an SMF format 0 or 1 file into a song timed in seconds.

    Note-ons with velocity zero close the matching note; note-ons left
    open are closed at their track's end.

    Raises
    ------
    MalformedChunk
        For truncated or structurally invalid chunks.
    UnsupportedFormat
        For SMF format 2 or SMPTE time division.
    OSError
        If the file cannot be read.
    """
    with open(path, "rb") as handle:
        data = handle.read()
    reader = _Reader(data)
    if reader.bytes(4) != b"MThd":
        raise MalformedChunk("missing MThd header")
    if reader.u32() != 6:
        raise MalformedChunk("unexpected MThd length")
    fmt = reader.u16()
    n_tracks = reader.u16()
    division = reader.u16()
    if fmt not in (0, 1):
        raise UnsupportedFormat(f"SMF format {fmt} is not supported")
    if division & 0x8000:
        raise UnsupportedFormat("SMPTE time division is not supported")
    if division == 0:
        raise MalformedChunk("ticks per quarter must be positive")

    raw_notes: list[tuple[int, int, int, int, int]] = []
    tempi: list[tuple[int, int]] = []
    sigs: list[tuple[int, int, int]] = []
    for _ in range(n_tracks):
        if reader.remaining() == 0:
            break
        if reader.bytes(4) != b"MTrk":
            raise MalformedChunk("missing MTrk header")
        length = reader.u32()
        _parse_track(_Reader(reader.bytes(length)), raw_notes, tempi, sigs)

    tempi.sort(key=lambda t: t[0])
    if not tempi or tempi[0][0] > 0:
        tempi.insert(0, (0, DEFAULT_US_PER_QUARTER))
    sigs.sort(key=lambda t: t[0])
    if not sigs or sigs[0][0] > 0:
        sigs.insert(0, (0, 4, 4))
    tempo_map = tuple(tempi)

    notes = []
    for start_tick, end_tick, pitch, velocity, channel in raw_notes:
        start = _tick_to_seconds(tempo_map, division, start_tick)
        end = _tick_to_seconds(tempo_map, division, end_tick)
        notes.append(NoteEvent(start, max(end, start + _MIN_NOTE_LENGTH), pitch, velocity, channel))
    notes.sort(key=lambda n: (n.start, n.pitch, n.channel))
    return MidiSong(tuple(notes), tempo_map, tuple(sigs), division)


def beats_and_downbeats(m: MidiSong) -> BeatGrid:
    """Beat times from the tempo map, flagged at bar starts.

    One beat per denominator note of the active time signature, restarting
    the bar grid at every signature change, up to the last note's end.
    """
    end_tick = m.seconds_to_tick(max((_unwarped_end(m)), 0.0))
    if end_tick <= 0:
        return BeatGrid((), ())
    times: list[float] = []
    flags: list[bool] = []
    sigs = list(m.time_signatures)
    for i, (sig_tick, numerator, denominator) in enumerate(sigs):
        next_tick = sigs[i + 1][0] if i + 1 < len(sigs) else end_tick
        beat_ticks = m.ticks_per_quarter * 4.0 / denominator
        beat = 0
        tick = float(sig_tick)
        while tick < min(next_tick, end_tick) - 1e-9:
            seconds = m.tick_to_seconds(tick)
            if not times or seconds > times[-1] + 1e-9:
                times.append(seconds)
                flags.append(beat % max(numerator, 1) == 0)
            tick += beat_ticks
            beat += 1
    return BeatGrid(tuple(times), tuple(flags))


def _unwarped_end(m: MidiSong) -> float:
    if m.warp is None:
        return m.end_time
    return m.warp[0][-1]


def remap_times(m: MidiSong, midi_times, audio_times) -> MidiSong:
    """Remap every note through a monotone (midi seconds -> audio seconds) path.

    Times are interpolated piecewise-linearly between path points and
    clamped to the path's ends outside the aligned portion; notes keep a
    strictly positive length.
    """
    midi_times = np.asarray(midi_times, dtype=np.float64)
    audio_times = np.asarray(audio_times, dtype=np.float64)
    if midi_times.size == 0:
        raise EmptyPath("alignment path has no points")
    keep = np.concatenate([[True], np.diff(midi_times) > 0])
    xs, ys = midi_times[keep], audio_times[keep]
    notes = []
    for note in m.notes:
        start = float(np.interp(note.start, xs, ys))
        end = float(np.interp(note.end, xs, ys))
        notes.append(replace(note, start=start, end=max(end, start + _MIN_NOTE_LENGTH)))
    return replace(m, notes=tuple(notes), warp=(tuple(xs), tuple(ys)))


def piano_roll(m: MidiSong, frame_period: float) -> np.ndarray:
    """Velocity-weighted active-pitch matrix of shape (frames, 128).

    Each note spreads its velocity over the frames it overlaps in
    proportion to the overlap; drum-channel notes are excluded.
    """
    if frame_period <= 0:
        raise ValueError("frame_period must be positive")
    n_frames = max(1, math.ceil(m.end_time / frame_period - 1e-9)) if m.notes else 0
    roll = np.zeros((n_frames, 128))
    for note in m.notes:
        if note.is_drum:
            continue
        first = int(note.start / frame_period)
        last = min(n_frames - 1, int(math.ceil(note.end / frame_period)) - 1)
        for frame in range(first, last + 1):
            lo = frame * frame_period
            hi = lo + frame_period
            overlap = min(note.end, hi) - max(note.start, lo)
            if overlap > 0:
                roll[frame, note.pitch] += note.velocity * overlap / frame_period
    return roll


def midi_alignment_features(m: MidiSong, hop: float) -> Spectrogram:
    """Render notes into constant-Q bin space for audio alignment.

    Each sounding non-drum note contributes velocity-weighted energy to
    its semitone bin plus overtone bins one, one-and-a-half and two
    octaves up; magnitudes are log-compressed as ``log(1 + x)``.  The bin
    layout matches the default audio constant-Q transform.
    """
    if hop <= 0:
        raise ValueError("hop must be positive")
    roll = piano_roll(m, hop)
    n_frames = roll.shape[0]
    features = np.zeros((n_frames, DEFAULT_N_BINS))
    base_pitch = 36  # C2, the lowest constant-Q bin
    for offset, weight in zip(PARTIAL_OFFSETS, PARTIAL_WEIGHTS):
        lo_pitch = base_pitch - offset
        for bin_index in range(DEFAULT_N_BINS):
            pitch = lo_pitch + bin_index
            if 0 <= pitch < 128:
                features[:, bin_index] += weight * roll[:, pitch]
    freqs = C2_HZ * 2.0 ** (np.arange(DEFAULT_N_BINS) / 12.0)
    return Spectrogram(
        np.log1p(features), int(round(hop * SAMPLE_RATE)), freqs, SAMPLE_RATE
    )
