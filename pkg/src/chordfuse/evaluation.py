"""Chord symbol recall and directional-Hamming segmentation measures.

All measures use exact interval arithmetic on segment boundaries rather
than fixed-rate sampling, so results are deterministic and independent of
any sample grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .annotations import ChordSequence
from .chords import VOCABULARY, ChordLabel, ChordVocabulary
from .errors import EmptyCorpus, EmptyGroundTruth, SpanMismatch

_SPAN_EPS = 1e-6


def labels_equal(a: ChordLabel, b: ChordLabel) -> bool:
    return a == b


def roots_equal(a: ChordLabel, b: ChordLabel) -> bool:
    return a.root == b.root


@dataclass(frozen=True)
class MatchingPolicy:
    """How two reduced labels are compared during evaluation.

    The comparator must be an equivalence relation on reduced labels; the
    default compares full major/minor labels, ``root_policy`` compares only
    root pitch classes.
    """

    vocabulary: ChordVocabulary = field(default_factory=lambda: VOCABULARY)
    comparator: Callable[[ChordLabel, ChordLabel], bool] = labels_equal


def majmin_policy() -> MatchingPolicy:
    return MatchingPolicy()


def root_policy() -> MatchingPolicy:
    return MatchingPolicy(comparator=roots_equal)


@dataclass(frozen=True)
class EvalReport:
    csr: float
    overseg: float
    underseg: float
    seg: float
    duration: float


def csr(est: ChordSequence, gt: ChordSequence, policy: MatchingPolicy | None = None) -> float:
    """Chord symbol recall: the fraction of annotated time labeled correctly.

    Sums, over all intersections of ground-truth and estimated segments,
    the overlap duration where the labels match, normalized by the total
    ground-truth segment duration.  Gaps in the estimate are treated as
    no-chord.
    """
    if not gt.segments:
        raise EmptyGroundTruth("ground truth has no segments")
    policy = policy or majmin_policy()
    est_filled = est.filled(gt.span_start, gt.span_end)
    matched = 0.0
    for g in gt.segments:
        for e in est_filled.segments:
            if e.end <= g.start:
                continue
            if e.start >= g.end:
                break
            if policy.comparator(g.label, e.label):
                matched += e.overlap(g.start, g.end)
    return matched / gt.duration


def wcsr(
    pairs: Sequence[tuple[ChordSequence, ChordSequence]],
    policy: MatchingPolicy | None = None,
) -> float:
    """Corpus-level recall: per-song CSR weighted by annotated duration.

    Equals the CSR of the concatenation of all annotations.
    """
    if not pairs:
        raise EmptyCorpus("no (estimate, ground truth) pairs")
    total = 0.0
    weight = 0.0
    for est, gt in pairs:
        d = gt.duration
        total += csr(est, gt, policy) * d
        weight += d
    return total / weight


def directional_hamming(s: ChordSequence, s0: ChordSequence) -> float:
    """How fragmented segmentation ``s`` is with respect to ``s0``, in seconds.

    For each segment of ``s0``, the part not covered by the single largest
    overlapping segment of ``s``; labels are ignored, only boundaries count.
    """
    if not s.segments or not s0.segments:
        raise SpanMismatch("both sequences must be non-empty")
    if (
        abs(s.span_start - s0.span_start) > _SPAN_EPS
        or abs(s.span_end - s0.span_end) > _SPAN_EPS
    ):
        raise SpanMismatch(
            f"spans differ: [{s.span_start}, {s.span_end}] vs [{s0.span_start}, {s0.span_end}]"
        )
    total = 0.0
    for ref in s0.segments:
        best = 0.0
        for seg in s.segments:
            if seg.end <= ref.start:
                continue
            if seg.start >= ref.end:
                break
            best = max(best, seg.overlap(ref.start, ref.end))
        total += ref.duration - best
    return total


def segmentation_scores(est: ChordSequence, gt: ChordSequence) -> tuple[float, float, float]:
    """(over-segmentation, under-segmentation, combined) quality in [0, 1].

    Both sequences are padded with no-chord to a common span first; the
    combined score is the minimum of the two directional scores.
    """
    if not gt.segments:
        raise EmptyGroundTruth("ground truth has no segments")
    span_start = min(est.span_start if est.segments else gt.span_start, gt.span_start)
    span_end = max(est.span_end if est.segments else gt.span_end, gt.span_end)
    est_f = est.filled(span_start, span_end)
    gt_f = gt.filled(span_start, span_end)
    denom = gt_f.duration
    overseg = 1.0 - directional_hamming(est_f, gt_f) / denom
    underseg = 1.0 - directional_hamming(gt_f, est_f) / denom
    return overseg, underseg, min(overseg, underseg)


def evaluate(
    est: ChordSequence, gt: ChordSequence, policy: MatchingPolicy | None = None
) -> EvalReport:
    """All measures for one song against its reference annotation."""
    overseg, underseg, seg = segmentation_scores(est, gt)
    return EvalReport(
        csr=csr(est, gt, policy),
        overseg=overseg,
        underseg=underseg,
        seg=seg,
        duration=gt.duration,
    )
