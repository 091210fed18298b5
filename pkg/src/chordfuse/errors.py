"""Exception types shared across the package."""


class ChordfuseError(Exception):
    """Base class for all package-specific errors."""


class UnparsableChord(ChordfuseError):
    """A chord string does not follow the recognized grammar."""


class MalformedLine(ChordfuseError):
    """A line in an annotation file cannot be parsed."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class OverlapError(ChordfuseError):
    """Chord segments in a sequence overlap in time."""


class EmptyGroundTruth(ChordfuseError):
    """Evaluation requested against an empty reference sequence."""


class EmptyCorpus(ChordfuseError):
    """An operation over a corpus received no songs."""


class SpanMismatch(ChordfuseError):
    """Two sequences do not cover the same time span."""


class UnsupportedEncoding(ChordfuseError):
    """An audio file is not 16-bit PCM WAV with 1 or 2 channels."""


class SignalTooShort(ChordfuseError):
    """A signal is too short for the requested analysis."""


class NyquistExceeded(ChordfuseError):
    """A requested filter lies at or above the Nyquist frequency."""


class IncompatibleBinLayout(ChordfuseError):
    """Spectrogram bins cannot be folded onto the 12 pitch classes."""


class TooSmall(ChordfuseError):
    """A spectrogram is too small for median filtering."""


class MalformedChunk(ChordfuseError):
    """A MIDI file chunk is truncated or structurally invalid."""


class UnsupportedFormat(ChordfuseError):
    """A MIDI file uses an unsupported format or time division."""


class EmptyPath(ChordfuseError):
    """An alignment path with no points was supplied."""


class DimensionMismatch(ChordfuseError):
    """Two feature sequences disagree on their feature dimension."""


class NoBeats(ChordfuseError):
    """No usable beat or bar boundaries could be derived."""


class DegenerateEmission(ChordfuseError):
    """All emission densities underflowed during decoding."""


class EmptyUcs(ChordfuseError):
    """Jump alignment was asked to align an empty chord sequence."""


class NoAudioSource(ChordfuseError):
    """A song bundle contains no audio-based chord sequence."""


class SchemaError(ChordfuseError):
    """A manifest violates the expected JSON schema."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer


class MissingFile(ChordfuseError):
    """A file referenced by a manifest does not exist."""
