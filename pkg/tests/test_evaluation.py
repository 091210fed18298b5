import random

import pytest

from chordfuse.annotations import ChordSegment, ChordSequence
from chordfuse.chords import NO_CHORD, major, minor, transpose
from chordfuse.errors import EmptyCorpus, EmptyGroundTruth, SpanMismatch
from chordfuse.evaluation import (
    csr,
    directional_hamming,
    evaluate,
    segmentation_scores,
    wcsr,
)

C, F, G, B, Fs = major(0), major(5), major(7), major(11), major(6)
Am = minor(9)


def seq(*triples):
    return ChordSequence(ChordSegment(a, b, lbl) for a, b, lbl in triples)


def ground_truth():
    return seq((0, 5, C), (5, 8, F), (8, 10, G), (10, 13, C))


def annotation_a():
    labels = [C, B, C, Fs, C, F, B, F, B, G]
    triples = [(i, i + 1, lbl) for i, lbl in enumerate(labels)] + [(10, 13, C)]
    return seq(*triples)


def annotation_b():
    return seq((0, 5, Am), (5, 8, F), (8, 10, G), (10, 13, C))


class TestCsr:
    def test_oversegmented_annotation(self):
        assert csr(annotation_a(), ground_truth()) == pytest.approx(9 / 13, abs=1e-12)

    def test_wrong_chord_annotation(self):
        assert csr(annotation_b(), ground_truth()) == pytest.approx(8 / 13, abs=1e-12)

    def test_identity(self):
        assert csr(ground_truth(), ground_truth()) == 1.0

    def test_empty_ground_truth(self):
        with pytest.raises(EmptyGroundTruth):
            csr(ground_truth(), ChordSequence())

    def test_estimate_gaps_count_as_nochord(self):
        gt = seq((0, 1, NO_CHORD), (1, 2, C))
        est = seq((1, 2, C))
        assert csr(est, gt) == 1.0

    def test_transposition_invariance(self):
        def shift(sequence, k):
            return ChordSequence(
                ChordSegment(s.start, s.end, transpose(s.label, k)) for s in sequence
            )

        base = csr(annotation_a(), ground_truth())
        for k in range(12):
            assert csr(shift(annotation_a(), k), shift(ground_truth(), k)) == pytest.approx(
                base, abs=1e-12
            )

    def test_splitting_segment_leaves_csr_unchanged(self):
        est = annotation_b()
        split = seq((0, 2.5, Am), (2.5, 5, Am), (5, 8, F), (8, 10, G), (10, 13, C))
        gt = ground_truth()
        assert csr(split, gt) == pytest.approx(csr(est, gt), abs=1e-12)
        before = segmentation_scores(est, gt)[0]
        after = segmentation_scores(split, gt)[0]
        assert after <= before + 1e-12


class TestWcsr:
    def test_single_song(self):
        assert wcsr([(annotation_a(), ground_truth())]) == pytest.approx(9 / 13)

    def test_equal_lengths_average(self):
        gt = seq((0, 10, C))
        perfect = seq((0, 10, C))
        wrong = seq((0, 10, F))
        assert wcsr([(perfect, gt), (wrong, gt)]) == pytest.approx(0.5)

    def test_length_weighting(self):
        gt10 = seq((0, 10, C))
        gt30 = seq((0, 30, C))
        est10 = seq((0, 10, C))  # csr 1.0 over 10 s
        est30 = seq((0, 15, C), (15, 30, F))  # csr 0.5 over 30 s
        # Hand weighting: (1.0 * 10 + 0.5 * 30) / 40 = 0.625.
        assert wcsr([(est10, gt10), (est30, gt30)]) == pytest.approx(0.625)

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            wcsr([])

    def test_matches_concatenation(self):
        rng = random.Random(7)
        labels = [C, F, G, Am, B]
        pairs = []
        concat_est, concat_gt = [], []
        offset = 0.0
        for _ in range(8):
            n = rng.randint(1, 6)
            bounds = sorted(rng.uniform(0.1, 20.0) for _ in range(n))
            gt_triples, est_triples = [], []
            prev = 0.0
            for b in bounds:
                gt_triples.append((prev, b, rng.choice(labels)))
                est_triples.append((prev, b, rng.choice(labels)))
                prev = b
            gt = seq(*gt_triples)
            est = seq(*est_triples)
            pairs.append((est, gt))
            concat_gt.extend(
                ChordSegment(s.start + offset, s.end + offset, s.label) for s in gt
            )
            concat_est.extend(
                ChordSegment(s.start + offset, s.end + offset, s.label) for s in est
            )
            offset += prev
        combined = csr(ChordSequence(concat_est), ChordSequence(concat_gt))
        assert wcsr(pairs) == pytest.approx(combined, abs=1e-12)


class TestDirectionalHamming:
    def test_oversegmentation_distance(self):
        assert directional_hamming(annotation_a(), ground_truth()) == pytest.approx(7.0)

    def test_reverse_direction_zero(self):
        assert directional_hamming(ground_truth(), annotation_a()) == pytest.approx(0.0)

    def test_self_distance_zero(self):
        assert directional_hamming(ground_truth(), ground_truth()) == 0.0

    def test_span_mismatch(self):
        with pytest.raises(SpanMismatch):
            directional_hamming(seq((0, 5, C)), ground_truth())

    def test_non_negative(self):
        rng = random.Random(99)
        for _ in range(30):
            bounds_a = [0.0] + sorted(rng.uniform(0.5, 9.5) for _ in range(3)) + [10.0]
            bounds_b = [0.0] + sorted(rng.uniform(0.5, 9.5) for _ in range(5)) + [10.0]
            a = seq(*[(x, y, C) for x, y in zip(bounds_a, bounds_a[1:])])
            b = seq(*[(x, y, F) for x, y in zip(bounds_b, bounds_b[1:])])
            assert directional_hamming(a, b) >= 0.0


class TestSegmentationScores:
    def test_matching_boundaries_score_one(self):
        assert segmentation_scores(annotation_b(), ground_truth()) == pytest.approx(
            (1.0, 1.0, 1.0)
        )

    def test_oversegmented_overseg_score(self):
        overseg, underseg, seg_score = segmentation_scores(annotation_a(), ground_truth())
        assert overseg == pytest.approx(1 - 7 / 13)
        assert underseg == pytest.approx(1.0)
        assert seg_score == pytest.approx(1 - 7 / 13)

    def test_identity(self):
        assert segmentation_scores(ground_truth(), ground_truth()) == (1.0, 1.0, 1.0)


class TestEvaluate:
    def test_report_fields(self):
        report = evaluate(annotation_a(), ground_truth())
        assert report.csr == pytest.approx(9 / 13)
        assert report.seg == min(report.overseg, report.underseg)
        assert report.duration == pytest.approx(13.0)
        for value in (report.csr, report.overseg, report.underseg, report.seg):
            assert 0.0 <= value <= 1.0
