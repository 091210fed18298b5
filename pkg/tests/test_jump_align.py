import itertools

import numpy as np
import pytest

from chordfuse.annotations import BeatGrid, ChordSegment, ChordSequence
from chordfuse.chords import VOCABULARY, major, minor, transpose
from chordfuse.errors import EmptyCorpus, EmptyUcs
from chordfuse.evaluation import csr
from chordfuse.jump_align import (
    HmmParameters,
    JumpConfig,
    JumpStateSpace,
    _state_log_densities,
    _viterbi_log,
    jump_align,
    jump_transition,
    preprocess_audio,
    train_hmm,
    viterbi,
)
from chordfuse.tabs import UcsEntry, UntimedChordSequence
from conftest import chord_tone_audio

C, F, G = major(0), major(5), major(7)


def template_chroma(label, noise=0.0, rng=None):
    vec = np.zeros(12)
    if not label.is_nochord:
        third = 4 if label.mode == "maj" else 3
        for iv in (0, third, 7):
            vec[(label.root + iv) % 12] = 1 / 3
    if noise and rng is not None:
        vec = np.abs(vec + rng.normal(0.0, noise, 12))
    return vec


def make_corpus(rng, n_songs=6, frames_per_song=40, labels=(C, F, G, minor(9))):
    corpus = []
    for _ in range(n_songs):
        song_labels = [labels[rng.integers(0, len(labels))]]
        for _ in range(frames_per_song - 1):
            if rng.random() < 0.7:
                song_labels.append(song_labels[-1])
            else:
                song_labels.append(labels[rng.integers(0, len(labels))])
        chroma = np.array([template_chroma(l, 0.05, rng) for l in song_labels])
        corpus.append((chroma, song_labels))
    return corpus


def ucs_from_labels(lines):
    """Build a tab chord sequence from [[label, ...], ...] line groups."""
    entries = []
    for line_no, labels in enumerate(lines):
        for col, label in enumerate(labels):
            entries.append(UcsEntry(label, line_no, col * 4, col == 0))
    return UntimedChordSequence(tuple(entries))


class TestTrainHmm:
    def test_single_label_corpus(self):
        chroma = np.array([template_chroma(C)] * 30)
        hmm = train_hmm([(chroma, [C] * 30)])
        ci = VOCABULARY.index(C)
        assert np.argmax(hmm.p_ini) == ci
        assert hmm.p_tr[ci, ci] > 0.5
        assert hmm.p_ini.sum() == pytest.approx(1.0)
        assert np.allclose(hmm.p_tr.sum(axis=1), 1.0)

    def test_generator_recovery(self):
        rng = np.random.default_rng(31)
        labels = [C, F, G]
        p_tr_true = np.array([[0.8, 0.15, 0.05], [0.1, 0.8, 0.1], [0.2, 0.2, 0.6]])
        corpus = []
        for _ in range(60):
            state = int(rng.integers(0, 3))
            song = [labels[state]]
            for _ in range(79):
                state = int(rng.choice(3, p=p_tr_true[state]))
                song.append(labels[state])
            chroma = np.array([template_chroma(l, 0.03, rng) for l in song])
            corpus.append((chroma, song))
        hmm = train_hmm(corpus)
        idx = [VOCABULARY.index(l) for l in labels]
        for a in range(3):
            row = hmm.p_tr[idx[a]][idx]
            row = row / row.sum()
            assert np.all(np.abs(row - p_tr_true[a]) < 0.05)

    def test_unobserved_label_fallback(self):
        chroma = np.array([template_chroma(C)] * 10)
        hmm = train_hmm([(chroma, [C] * 10)])
        unseen = VOCABULARY.index(minor(3))
        assert np.allclose(hmm.p_tr[unseen], 1.0 / 25)
        assert np.array_equal(hmm.covariances[unseen], np.eye(12))

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            train_hmm([])

    def test_covariances_positive_definite(self):
        rng = np.random.default_rng(5)
        hmm = train_hmm(make_corpus(rng))
        for cov in hmm.covariances:
            np.linalg.cholesky(cov)

    def test_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        hmm = train_hmm(make_corpus(rng))
        path = tmp_path / "hmm.json"
        hmm.save(path)
        loaded = HmmParameters.load(path)
        assert np.array_equal(loaded.p_ini, hmm.p_ini)
        assert np.array_equal(loaded.p_tr, hmm.p_tr)
        assert np.array_equal(loaded.means, hmm.means)
        assert np.array_equal(loaded.covariances, hmm.covariances)


def random_small_hmm(rng, n_states, dim=2):
    p_ini = rng.random(n_states) + 0.05
    p_ini /= p_ini.sum()
    p_tr = rng.random((n_states, n_states)) + 0.05
    p_tr /= p_tr.sum(axis=1, keepdims=True)
    means = rng.normal(0, 1, (n_states, dim))
    covs = np.empty((n_states, dim, dim))
    for i in range(n_states):
        a = rng.normal(0, 1, (dim, dim))
        covs[i] = a @ a.T + 0.3 * np.eye(dim)
    return p_ini, p_tr, means, covs


def enumerate_best_path(log_ini, log_tr, log_emit):
    t_len, n = log_emit.shape
    best_path, best_ll = None, -np.inf
    for states in itertools.product(range(n), repeat=t_len):
        ll = log_ini[states[0]] + log_emit[0, states[0]]
        for t in range(1, t_len):
            ll += log_tr[states[t - 1], states[t]] + log_emit[t, states[t]]
        if ll > best_ll:
            best_ll, best_path = ll, states
    return np.array(best_path), best_ll


class TestViterbi:
    def test_single_frame_argmax(self):
        rng = np.random.default_rng(3)
        corpus = make_corpus(rng)
        hmm = train_hmm(corpus)
        frame = template_chroma(F)
        labels, ll = viterbi(frame[None, :], hmm)
        dens = _state_log_densities(hmm.means, hmm.covariances, frame[None, :])[0]
        expected = int(np.argmax(np.log(hmm.p_ini) + dens))
        assert labels == [VOCABULARY.label(expected)]
        assert ll == pytest.approx(np.log(hmm.p_ini[expected]) + dens[expected])

    def test_matches_enumeration(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            n_states = int(rng.integers(2, 5))
            t_len = int(rng.integers(1, 7))
            p_ini, p_tr, means, covs = random_small_hmm(rng, n_states)
            frames = rng.normal(0, 1, (t_len, means.shape[1]))
            log_emit = _state_log_densities(means, covs, frames)
            path, ll = _viterbi_log(np.log(p_ini), np.log(p_tr), log_emit)
            ref_path, ref_ll = enumerate_best_path(np.log(p_ini), np.log(p_tr), log_emit)
            assert abs(ll - ref_ll) < 1e-9
            assert np.array_equal(path, ref_path)

    def test_deterministic_chain_forces_sequence(self):
        # Transitions form a cycle 0 -> 1 -> 2 -> 0 with certainty; flat
        # emissions cannot override it.
        log_tr = np.log(np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]]) + 1e-300)
        log_ini = np.log(np.array([1.0, 1e-300, 1e-300]))
        log_emit = np.zeros((6, 3))
        path, _ = _viterbi_log(log_ini, log_tr, log_emit)
        assert list(path) == [0, 1, 2, 0, 1, 2]

    def test_loglik_increment_bounded_by_best_emission(self):
        # Every added frame multiplies the path probability by a transition
        # factor <= 1 and one emission density, so the log likelihood can
        # grow by at most the frame's best emission log density.
        rng = np.random.default_rng(23)
        hmm = train_hmm(make_corpus(rng))
        frames = np.array([template_chroma(C, 0.05, rng) for _ in range(10)])
        dens = _state_log_densities(hmm.means, hmm.covariances, frames)
        logliks = [viterbi(frames[:t], hmm)[1] for t in range(1, 11)]
        for t, (a, b) in enumerate(zip(logliks, logliks[1:]), start=1):
            assert b <= a + dens[t].max() + 1e-9


class TestJumpTransition:
    def make_hmm(self):
        rng = np.random.default_rng(8)
        return train_hmm(make_corpus(rng))

    def test_rows_sum_to_one(self):
        hmm = self.make_hmm()
        ucs = ucs_from_labels([[C, F], [G, C], [F, G]])
        matrix = jump_transition(JumpStateSpace.from_ucs(ucs), hmm, JumpConfig())
        assert np.allclose(matrix.sum(axis=1), 1.0, atol=1e-9)

    def test_zero_jump_probabilities_strict_linear(self):
        hmm = self.make_hmm()
        ucs = ucs_from_labels([[C, F], [G, C]])
        matrix = jump_transition(JumpStateSpace.from_ucs(ucs), hmm, JumpConfig(0.0, 0.0))
        for i in range(4):
            allowed = {i, i + 1} & set(range(4))
            assert set(np.flatnonzero(matrix[i])) == allowed

    def test_single_line_has_backward_jump_to_own_start(self):
        hmm = self.make_hmm()
        ucs = ucs_from_labels([[C, F, G]])
        matrix = jump_transition(JumpStateSpace.from_ucs(ucs), hmm, JumpConfig())
        assert set(np.flatnonzero(matrix[0])) == {0, 1}
        assert set(np.flatnonzero(matrix[1])) == {1, 2}
        # The last state may close the loop back to the line start.
        assert set(np.flatnonzero(matrix[2])) == {0, 2}

    def test_two_line_jump_weights(self):
        hmm = self.make_hmm()
        cfg = JumpConfig(p_f=0.07, p_b=0.05)
        ucs = ucs_from_labels([[C, F], [G, C]])
        space = JumpStateSpace.from_ucs(ucs)
        matrix = jump_transition(space, hmm, cfg)
        idx = [VOCABULARY.index(l) for l in space.labels]
        # Row of the first line's last state (state 1): self, successor and
        # a backward jump to state 0, renormalized by hand.
        self_w = hmm.p_tr[idx[1], idx[1]]
        succ_w = hmm.p_tr[idx[1], idx[2]]
        back_w = cfg.p_b * hmm.p_tr[idx[1], idx[0]]
        z = self_w + succ_w + back_w
        assert matrix[1, 1] == pytest.approx(self_w / z)
        assert matrix[1, 2] == pytest.approx(succ_w / z)
        assert matrix[1, 0] == pytest.approx(back_w / z)
        assert matrix[1, 3] == 0.0
        # Row of the last state: self plus jumps to both line starts.
        self_w3 = hmm.p_tr[idx[3], idx[3]]
        b0 = cfg.p_b * hmm.p_tr[idx[3], idx[0]]
        b2 = cfg.p_b * hmm.p_tr[idx[3], idx[2]]
        z3 = self_w3 + b0 + b2
        assert matrix[3, 3] == pytest.approx(self_w3 / z3)
        assert matrix[3, 0] == pytest.approx(b0 / z3)
        assert matrix[3, 2] == pytest.approx(b2 / z3)

    def test_empty_ucs(self):
        hmm = self.make_hmm()
        with pytest.raises(EmptyUcs):
            jump_transition(JumpStateSpace((), ()), hmm, JumpConfig())


class TestJumpAlign:
    def synthetic_song(self, rng, progression, beats_per_chord=4):
        labels = []
        for label in progression:
            labels.extend([label] * beats_per_chord)
        chroma = np.array([template_chroma(l, 0.05, rng) for l in labels])
        beat_times = tuple(0.5 * i for i in range(len(labels) + 1))
        return chroma, BeatGrid(beat_times), labels

    def truth_sequence(self, labels):
        segs = [
            ChordSegment(0.5 * i, 0.5 * (i + 1), label) for i, label in enumerate(labels)
        ]
        return ChordSequence(segs)

    def test_matching_ucs_high_csr(self):
        rng = np.random.default_rng(44)
        hmm = train_hmm(make_corpus(rng, n_songs=10))
        progression = [C, F, G, C, minor(9), F, G, C]
        chroma, beats, labels = self.synthetic_song(rng, progression)
        ucs = ucs_from_labels([progression[:4], progression[4:]])
        seq, loglik, transposition = jump_align(ucs, chroma, beats, hmm, JumpConfig())
        assert transposition == 0
        assert csr(seq, self.truth_sequence(labels)) >= 0.95

    def test_transposed_ucs_recovered(self):
        rng = np.random.default_rng(45)
        hmm = train_hmm(make_corpus(rng, n_songs=10))
        progression = [C, F, G, C, minor(9), F, G, C]
        chroma, beats, labels = self.synthetic_song(rng, progression)
        for k in (1, 3, 7):
            shifted = [transpose(l, k) for l in progression]
            ucs = ucs_from_labels([shifted[:4], shifted[4:]])
            seq, _, transposition = jump_align(ucs, chroma, beats, hmm, JumpConfig())
            assert transposition == k
            assert csr(seq, self.truth_sequence(labels)) >= 0.95

    def test_single_chord_ucs_full_span(self):
        rng = np.random.default_rng(46)
        hmm = train_hmm(make_corpus(rng, n_songs=8))
        chroma, beats, labels = self.synthetic_song(rng, [C, C, C])
        ucs = ucs_from_labels([[C]])
        seq, _, _ = jump_align(ucs, chroma, beats, hmm, JumpConfig())
        assert len(seq) == 1
        assert seq.segments[0].label == C
        assert seq.segments[0].start == beats.times[0]
        assert seq.segments[0].end == beats.times[-1]

    def test_output_tiles_beat_span(self):
        rng = np.random.default_rng(47)
        hmm = train_hmm(make_corpus(rng, n_songs=8))
        progression = [C, G, minor(9), F]
        chroma, beats, _ = self.synthetic_song(rng, progression)
        ucs = ucs_from_labels([progression])
        seq, _, _ = jump_align(ucs, chroma, beats, hmm, JumpConfig())
        assert seq.segments[0].start == beats.times[0]
        assert seq.segments[-1].end == beats.times[-1]
        for a, b in zip(seq.segments, seq.segments[1:]):
            assert b.start == pytest.approx(a.end)

    def test_strict_alignment_monotone_states(self):
        rng = np.random.default_rng(48)
        hmm = train_hmm(make_corpus(rng, n_songs=8))
        progression = [C, F, G, C]
        chroma, beats, _ = self.synthetic_song(rng, progression, beats_per_chord=1)
        ucs = ucs_from_labels([progression])
        seq, _, transposition = jump_align(
            ucs, chroma, beats, hmm, JumpConfig(0.0, 0.0)
        )
        assert transposition == 0
        assert [s.label for s in seq] == progression

    def test_empty_ucs_rejected(self):
        rng = np.random.default_rng(49)
        hmm = train_hmm(make_corpus(rng, n_songs=4))
        with pytest.raises(EmptyUcs):
            jump_align(
                UntimedChordSequence(()),
                np.zeros((4, 12)),
                BeatGrid((0.0, 0.5, 1.0, 1.5, 2.0)),
                hmm,
            )


class TestPreprocessAudio:
    def test_beat_synced_shape_and_content(self):
        chords = [[48, 52, 55]] * 4 + [[50, 53, 57]] * 4
        wav = chord_tone_audio(chords, 1.0, click_period=0.5)
        chroma, beats = preprocess_audio(wav)
        assert chroma.shape == (len(beats) - 1, 12)
        templates = VOCABULARY.template_matrix()
        hits = 0
        total = 0
        for k, (b0, b1) in enumerate(zip(beats.times, beats.times[1:])):
            mid = (b0 + b1) / 2
            expected_root = 0 if mid < 4.0 else 2
            vec = chroma[k]
            if np.linalg.norm(vec) < 1e-9:
                continue
            sims = templates @ vec / (
                np.linalg.norm(templates, axis=1) * np.linalg.norm(vec)
            )
            total += 1
            if VOCABULARY.templates[int(np.argmax(sims))].label.root == expected_root:
                hits += 1
        assert total > 0
        assert hits / total > 0.7
