"""Command-line entry points for the chord estimation toolkit.

Exit codes: 0 on success, 1 when any per-song stage failed, 2 on
configuration errors (bad arguments, malformed manifests, missing files).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .annotations import read_lab, write_lab
from .audio import load_wav, read_beat_grid
from .dtw import DtwConfig, align_midi_to_audio, write_alignment
from .errors import ChordfuseError
from .evaluation import evaluate
from .fusion import CandidateSource, Method, Origin, Strategy, fuse
from .jump_align import JumpConfig, beat_sync_chroma, jump_align, preprocess_audio, train_hmm
from .midi import parse_midi, remap_times
from .midi_chords import SegmentationLevel, estimate
from .pipeline import (
    EVAL_HEADER,
    RunConfig,
    load_hmm,
    load_manifest,
    plot_data_csv,
    read_meta,
    run_pipeline,
)
from .tabs import parse_tab, ucs_to_jsonl

CONFIG_ERROR = 2
SONG_FAILURES = 1


def _write_or_print(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _cmd_parse_tab(args) -> int:
    ucs = parse_tab(args.tab)
    _write_or_print(ucs_to_jsonl(ucs), args.output)
    return 0


def _cmd_align_midi(args) -> int:
    song = parse_midi(args.midi)
    waveform = load_wav(args.audio)
    config = DtwConfig(hop=args.hop, gully=args.gully)
    path = align_midi_to_audio(song, waveform, config)
    if args.output:
        write_alignment(path, args.output)
    else:
        sys.stdout.write(f"confidence={path.confidence:.9f}\n")
        for a, b in zip(path.p, path.q):
            sys.stdout.write(f"{a:.6f} {b:.6f}\n")
    return 0


def _cmd_cassette(args) -> int:
    song = parse_midi(args.midi)
    if args.audio:
        waveform = load_wav(args.audio)
        path = align_midi_to_audio(song, waveform, DtwConfig(hop=args.hop, gully=args.gully))
        song = remap_times(song, path.p, path.q)
    level = SegmentationLevel.BAR if args.level == "bar" else SegmentationLevel.BEAT
    result = estimate(song, level)
    out = args.output or "-"
    if out == "-":
        for seg in result.sequence:
            sys.stdout.write(f"{seg.start:.6f} {seg.end:.6f} {seg.label}\n")
    else:
        write_lab(result.sequence, out)
        Path(str(out) + ".meta").write_text(f"ats={result.ats:.9f}\n", encoding="utf-8")
    sys.stderr.write(f"ats={result.ats:.9f}\n")
    return 0


def _cmd_jump_align(args) -> int:
    ucs = parse_tab(args.tab)
    if not ucs.entries:
        sys.stderr.write("no chords found in tab\n")
        return SONG_FAILURES
    waveform = load_wav(args.audio)
    if args.beats:
        beats = read_beat_grid(args.beats)
        chroma = beat_sync_chroma(waveform, beats)
    else:
        chroma, beats = preprocess_audio(waveform)
    hmm = load_hmm(Path(args.hmm) if args.hmm else None)
    config = JumpConfig(p_f=args.p_f, p_b=args.p_b)
    seq, loglik, transposition = jump_align(ucs, chroma, beats, hmm, config)
    if args.output:
        write_lab(seq, args.output)
        Path(str(args.output) + ".meta").write_text(
            f"loglik={loglik:.9f} transposition={transposition}\n", encoding="utf-8"
        )
    else:
        for seg in seq:
            sys.stdout.write(f"{seg.start:.6f} {seg.end:.6f} {seg.label}\n")
    sys.stderr.write(f"loglik={loglik:.9f} transposition={transposition}\n")
    return 0


def _cmd_train_hmm(args) -> int:
    from .annotations import beat_sync_labels

    bundles = load_manifest(args.manifest)
    corpus = []
    for bundle in bundles:
        if bundle.ground_truth is None:
            continue
        waveform = load_wav(bundle.audio)
        chroma, beats = preprocess_audio(waveform)
        labels = beat_sync_labels(read_lab(bundle.ground_truth), beats)
        corpus.append((chroma, labels))
    if not corpus:
        sys.stderr.write("no songs with ground truth in manifest\n")
        return CONFIG_ERROR
    hmm = train_hmm(corpus)
    hmm.save(args.output)
    return 0


def _load_candidates(sources_dir: Path) -> list[CandidateSource]:
    candidates = []
    for lab_path in sorted(sources_dir.glob("*.lab")):
        meta_path = lab_path.with_suffix(".meta")
        meta = read_meta(meta_path) if meta_path.is_file() else {}
        origin = Origin(meta.get("origin", "audio"))
        candidates.append(
            CandidateSource(
                source_id=lab_path.stem,
                origin=origin,
                sequence=read_lab(lab_path),
                confidence=float(meta["confidence"]) if "confidence" in meta else None,
                ats=float(meta["ats"]) if "ats" in meta else None,
                loglik=float(meta["loglik"]) if "loglik" in meta else None,
                midi_id=meta.get("midi_id"),
            )
        )
    return candidates


def _cmd_fuse(args) -> int:
    candidates = _load_candidates(Path(args.sources))
    fused, report = fuse(
        candidates,
        Method(args.method),
        Strategy(args.strategy),
        seed=args.seed,
    )
    if args.output:
        write_lab(fused, args.output)
    else:
        for seg in fused:
            sys.stdout.write(f"{seg.start:.6f} {seg.end:.6f} {seg.label}\n")
    if args.report:
        Path(args.report).write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return 0


def _cmd_evaluate(args) -> int:
    est = read_lab(args.estimate)
    gt = read_lab(args.ground_truth)
    ev = evaluate(est, gt)
    song_id = args.song_id or Path(args.estimate).stem
    text = (
        EVAL_HEADER
        + "\n"
        + f"{song_id},{ev.csr:.6f},{ev.overseg:.6f},{ev.underseg:.6f},"
        + f"{ev.seg:.6f},{ev.duration:.6f}\n"
    )
    _write_or_print(text, args.output)
    return 0


def _cmd_plot_data(args) -> int:
    song_dir = Path(args.song_dir)
    lanes = []
    sources_dir = song_dir / "sources"
    if sources_dir.is_dir():
        for lab_path in sorted(sources_dir.glob("*.lab")):
            lanes.append((lab_path.stem, read_lab(lab_path)))
    fused_path = song_dir / "fused.lab"
    if fused_path.is_file():
        lanes.append(("fused", read_lab(fused_path)))
    _write_or_print(plot_data_csv(lanes), args.output)
    return 0


def _cmd_run(args) -> int:
    bundles = load_manifest(args.manifest)
    cfg = RunConfig(
        output_dir=Path(args.output),
        method=Method(args.method),
        strategy=Strategy(args.strategy),
        seed=args.seed,
        dtw=DtwConfig(hop=args.hop, gully=args.gully),
        jump=JumpConfig(p_f=args.p_f, p_b=args.p_b),
        hmm_path=Path(args.hmm) if args.hmm else None,
        workers=args.workers,
        use_cache=not args.no_cache,
    )
    report = run_pipeline(bundles, cfg)
    for song_id, result in sorted(report.songs.items()):
        for failure in result.failures:
            sys.stderr.write(f"{song_id}: {failure}\n")
    return SONG_FAILURES if report.any_failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chordfuse",
        description="Estimate, align, fuse and evaluate chord sequences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse-tab", help="extract an untimed chord sequence from a tab")
    p.add_argument("tab")
    p.add_argument("-o", "--output", default=None, help="JSONL output path (default stdout)")
    p.set_defaults(func=_cmd_parse_tab)

    p = sub.add_parser("align-midi", help="align a MIDI file to a recording")
    p.add_argument("midi")
    p.add_argument("audio")
    p.add_argument("-o", "--output", default=None, help="alignment file (default stdout)")
    p.add_argument("--hop", type=int, default=1024)
    p.add_argument("--gully", type=float, default=0.96)
    p.set_defaults(func=_cmd_align_midi)

    p = sub.add_parser("cassette", help="template-matching chord estimation on a MIDI file")
    p.add_argument("midi")
    p.add_argument("--audio", default=None, help="align to this recording first")
    p.add_argument("--level", choices=["bar", "beat"], default="bar")
    p.add_argument("--hop", type=int, default=1024)
    p.add_argument("--gully", type=float, default=0.96)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_cassette)

    p = sub.add_parser("jump-align", help="align a tab to a recording")
    p.add_argument("tab")
    p.add_argument("audio")
    p.add_argument("--hmm", default=None, help="HMM parameter file (default: bundled)")
    p.add_argument("--beats", default=None, help="beat override file, one time per line")
    p.add_argument("--p-f", type=float, default=0.05, dest="p_f")
    p.add_argument("--p-b", type=float, default=0.05, dest="p_b")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_jump_align)

    p = sub.add_parser("train-hmm", help="train HMM parameters on an annotated manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_train_hmm)

    p = sub.add_parser("fuse", help="fuse source .lab files from a directory")
    p.add_argument("sources", help="directory of <source>.lab and <source>.meta files")
    p.add_argument("--method", choices=[m.value for m in Method], default="df")
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default="best")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None, help="fusion report JSON path")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("evaluate", help="evaluate an estimate against a reference")
    p.add_argument("estimate")
    p.add_argument("ground_truth")
    p.add_argument("--song-id", default=None)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("plot-data", help="emit per-source segment lanes as CSV")
    p.add_argument("song_dir")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_plot_data)

    p = sub.add_parser("run", help="run the full pipeline over a manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--method", choices=[m.value for m in Method], default="df")
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default="best")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hmm", default=None)
    p.add_argument("--hop", type=int, default=1024)
    p.add_argument("--gully", type=float, default=0.96)
    p.add_argument("--p-f", type=float, default=0.05, dest="p_f")
    p.add_argument("--p-b", type=float, default=0.05, dest="p_b")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-cache", action="store_true")
    p.set_defaults(func=_cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ChordfuseError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return CONFIG_ERROR
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
