"""Chord estimation toolkit: audio, MIDI and tab sources fused into one annotation."""

from .annotations import (
    BeatGrid,
    ChordSegment,
    ChordSequence,
    SampledSequence,
    beat_sync_labels,
    merge_samples,
    read_lab,
    sample,
    write_lab,
)
from .chords import (
    NO_CHORD,
    VOCABULARY,
    ChordLabel,
    ChordTemplate,
    ChordVocabulary,
    PitchClass,
    chord_from_pitch_classes,
    format_harte,
    parse_harte,
    transpose,
)
from .dtw import AlignmentPath, DtwConfig, align_midi_to_audio, cost_matrix, dtw_full, dtw_subsequence
from .evaluation import EvalReport, MatchingPolicy, csr, directional_hamming, evaluate, segmentation_scores, wcsr
from .fusion import CandidateSource, Method, Origin, Strategy, fuse, fuse_df, fuse_mv, fuse_rnd
from .jump_align import HmmParameters, JumpConfig, jump_align, preprocess_audio, train_hmm, viterbi
from .midi import MidiSong, NoteEvent, beats_and_downbeats, midi_alignment_features, parse_midi, remap_times
from .midi_chords import CassetteResult, SegmentationLevel, best_chord, estimate, template_score, weighted_chroma
from .pipeline import RunConfig, SongBundle, load_manifest, run_pipeline
from .tabs import LineType, UntimedChordSequence, classify_line, parse_tab

__version__ = "0.1.0"
