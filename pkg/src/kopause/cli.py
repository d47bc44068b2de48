"""Command-line entry points: preprocess, train, synth, analyze-pauses."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from kopause import __version__
from kopause.audio import (
    MelSpectrogram,
    detect_pauses,
    default_threshold,
    griffin_lim_invert,
    load_mel,
    load_wav,
    mel_spectrogram,
    pause_statistics,
    save_mel,
    save_wav,
)
from kopause.config import Config
from kopause.data import (
    MetadataReport,
    attach_parses,
    load_cache,
    load_metadata,
    load_parses,
    prepare_text,
    preprocess_corpus,
    split_dataset,
)
from kopause.errors import ConfigError, KoPauseError
from kopause.text import SymbolTable
from kopause.training import Trainer, latest_checkpoint, load_checkpoint, resume_trainer

log = logging.getLogger("kopause")

DEFAULT_SWEEP = tuple(float(t) for t in np.linspace(-11.0, -1.0, 11))


@dataclass
class RunManifest:
    command: str
    config_hash: str
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    seed: int | None = None
    wall_time: float = 0.0
    version: str = __version__

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        self.outputs = sorted(set(self.outputs) | {str(path)})
        path.write_text(json.dumps(dataclasses.asdict(self), ensure_ascii=False, indent=1), encoding="utf-8")
        return path


def _load_config(args) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    if args.seed is not None:
        cfg = cfg.replace(train=dataclasses.replace(cfg.train, seed=args.seed))
    return cfg


def _seed(args, cfg: Config) -> int:
    return cfg.train.seed if args.seed is None else args.seed


# --- preprocess -------------------------------------------------------------


def cmd_preprocess(args) -> int:
    t0 = time.time()
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = SymbolTable.default()
    meta_report = MetadataReport()
    records = load_metadata(args.metadata, report=meta_report)
    inputs = [str(args.metadata)]
    missing = len(records)
    if args.parses:
        missing = attach_parses(records, load_parses(args.parses))
        inputs.append(str(args.parses))
    if missing:
        log.warning("%d utterance(s) have no parse; missing parse, degraded mode (no boundary pipes)", missing)
    report = preprocess_corpus(records, out, cfg.mel, table)
    report["skipped_lines"] = [n for n, _ in meta_report.skipped]
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report, ensure_ascii=False, indent=1), encoding="utf-8")
    log.info(
        "%d utterances (%d computed, %d cached), mean clip %.2f s",
        report["utterances"], report["computed"], report["cache_hits"], report["mean_clip_seconds"],
    )
    RunManifest(
        "preprocess", cfg.digest(), inputs,
        [str(report_path), str(out / "index.json"), str(out / "symbols.txt")],
        _seed(args, cfg), time.time() - t0,
    ).write(out)
    return 0


# --- train ------------------------------------------------------------------


def _resume_key(cfg: Config) -> str:
    # run-length settings may change between resumes; everything else must match
    return cfg.replace(train=dataclasses.replace(cfg.train, max_iterations=0, checkpoint_interval=1)).digest()


def cmd_train(args) -> int:
    t0 = time.time()
    cfg = _load_config(args)
    overrides = {}
    if args.max_iters is not None:
        overrides["max_iterations"] = args.max_iters
    if args.lambda_tpgst is not None:
        overrides["lambda_tpgst"] = args.lambda_tpgst
    if args.checkpoint_interval is not None:
        overrides["checkpoint_interval"] = args.checkpoint_interval
    cfg = cfg.replace(train=dataclasses.replace(cfg.train, **overrides))
    if args.threads:
        torch.set_num_threads(args.threads)

    data = Path(args.data)
    index, cached = load_cache(data)
    table = SymbolTable.load(data / "symbols.txt")
    if index["mel_config_hash"] != cfg.mel.digest():
        raise ConfigError(f"{data}: cache was built with a different mel config; re-run preprocess")
    if index["symbol_table_hash"] != table.digest():
        raise ConfigError(f"{data}: symbol table does not match the cache index")

    records = cached
    if not args.all_data and len(cached) >= 2:
        records, valid = split_dataset(cached, cfg.train.split_ratio, cfg.train.seed)
    else:
        valid = []
    items = [(r.ids, r.mel) for r in records]

    out = Path(args.out)
    ck_dir = out / "checkpoints"
    ck_dir.mkdir(parents=True, exist_ok=True)
    (out / "split.json").write_text(
        json.dumps({"train": [str(r.wav_path) for r in records], "valid": [str(r.wav_path) for r in valid]},
                   ensure_ascii=False, indent=1),
        encoding="utf-8",
    )
    log_path = out / "train_log.jsonl"
    latest = latest_checkpoint(ck_dir)
    if latest is not None:
        ck = load_checkpoint(latest, table)
        if _resume_key(ck.config) != _resume_key(cfg):
            raise ConfigError(f"{latest}: checkpoint config differs from the requested config; refusing to resume")
        trainer = resume_trainer(ck, items)
        trainer.config = cfg
        log.info("resuming from %s at iteration %d", latest, ck.iteration)
        # drop log lines written after the checkpoint we resume from
        kept = []
        if log_path.exists():
            kept = [ln for ln in log_path.read_text(encoding="utf-8").splitlines()
                    if ln.strip() and json.loads(ln)["iteration"] < ck.iteration]
        log_path.write_text("".join(ln + "\n" for ln in kept), encoding="utf-8")
    else:
        trainer = Trainer(cfg, table, items)
        log_path.write_text("", encoding="utf-8")
    cfg.save(out / "config.yaml")

    with open(log_path, "a", encoding="utf-8") as fh:
        trainer.run(cfg.train.max_iterations, log_file=fh, checkpoint_dir=ck_dir,
                    checkpoint_interval=cfg.train.checkpoint_interval)
    final = latest_checkpoint(ck_dir)
    log.info("finished at iteration %d; checkpoint %s", trainer.iteration, final)
    RunManifest(
        "train", cfg.digest(), [str(data)],
        [str(log_path), str(out / "config.yaml"), str(out / "split.json")] + ([str(final)] if final else []),
        cfg.train.seed, time.time() - t0,
    ).write(out)
    return 0


# --- synth ------------------------------------------------------------------


def hard_alignment_monotonic(alignments: np.ndarray) -> bool:
    steps = np.diff(alignments.argmax(axis=-1))
    return bool(np.all((steps == 0) | (steps == 1)))


def cmd_synth(args) -> int:
    t0 = time.time()
    ck = load_checkpoint(args.checkpoint)
    cfg = ck.config
    seed = cfg.train.seed if args.seed is None else args.seed
    if args.parse is None:
        log.warning("no parse supplied; synthesizing without boundary pipes")
    prepared = prepare_text(args.text, ck.table, args.parse)
    if len(prepared.ids) <= 1:
        raise KoPauseError(f"text {args.text!r} contains no encodable symbols")
    model = ck.build_model().eval()
    gen = torch.Generator().manual_seed(seed)
    decoded, _ = model.infer(torch.tensor(prepared.ids), gen, args.max_frames)
    if decoded.stop_reason != "gate":
        log.warning("decoder stopped at the frame cap (%d frames) without the gate firing", decoded.n_frames)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mel = decoded.mel_post[0].double().numpy()
    align = decoded.alignments[0].double().numpy()
    gate = torch.sigmoid(decoded.gate_logits[0]).double().numpy()
    paths = {"mel": out / "mel.kpmel", "alignment": out / "alignment.npy", "gate": out / "gate.csv",
             "wav": out / "audio.wav", "summary": out / "synth.json"}
    save_mel(paths["mel"], mel, cfg.mel.digest())
    np.save(paths["alignment"], align)
    with open(paths["gate"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "stop_probability"])
        w.writerows((i, f"{p:.6f}") for i, p in enumerate(gate))
    wav = griffin_lim_invert(MelSpectrogram(mel, cfg.mel), args.gl_iters, seed)
    save_wav(paths["wav"], wav)
    summary = {
        "text": prepared.normalized, "marked": prepared.marked, "degraded": prepared.degraded,
        "frames": decoded.n_frames, "stop_reason": decoded.stop_reason,
        "monotonic": hard_alignment_monotonic(align), "seconds": wav.duration,
    }
    paths["summary"].write_text(json.dumps(summary, ensure_ascii=False, indent=1), encoding="utf-8")
    RunManifest(
        "synth", cfg.digest(), [str(args.checkpoint)], [str(p) for p in paths.values()], seed, time.time() - t0,
    ).write(out)
    return 0


# --- analyze-pauses -----------------------------------------------------------


def _load_any(path: Path, cfg: Config) -> MelSpectrogram:
    if path.suffix.lower() == ".wav":
        return mel_spectrogram(load_wav(path, cfg.mel.sample_rate), cfg.mel)
    if path.suffix.lower() == ".kpmel":
        frames, h = load_mel(path)
        if h != cfg.mel.digest():
            log.warning("%s: mel config hash differs from the active config", path)
        return MelSpectrogram(frames.astype(np.float64), cfg.mel)
    if path.suffix.lower() == ".npy":
        return MelSpectrogram(np.load(path).astype(np.float64), cfg.mel)
    raise KoPauseError(f"{path}: unsupported input type (expected .wav, .kpmel or .npy)")


def cmd_analyze_pauses(args) -> int:
    t0 = time.time()
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sweep = tuple(sorted(args.sweep)) if args.sweep else DEFAULT_SWEEP
    paths = [Path(p) for p in args.inputs]
    results, errors = [], []
    for path in paths:
        try:
            m = _load_any(path, cfg)
            thr = args.threshold if args.threshold is not None else default_threshold(m)
            segs = detect_pauses(m, thr, args.min_frames, cfg.mel)
            stats = pause_statistics(segs, m.n_frames, cfg.mel)
            swept = []
            for t in sweep:
                s = detect_pauses(m, t, args.min_frames, cfg.mel)
                swept.append({
                    "threshold": t,
                    "internal_pause_seconds": pause_statistics(s, m.n_frames, cfg.mel).total_pause_time,
                    "total_silence_seconds": sum(x.seconds for x in s),
                })
        except (KoPauseError, OSError, ValueError) as exc:
            log.error("%s: %s", path, exc)
            errors.append({"path": str(path), "error": str(exc)})
            continue
        results.append({"path": str(path), "threshold": thr, "frames": m.n_frames,
                        "segments": [s.to_dict() for s in segs], "stats": stats.to_dict(), "sweep": swept})

    results.sort(key=lambda r: r["path"])
    per_file = out / "pauses.jsonl"
    with open(per_file, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")
    plot = out / "pause_count_vs_duration.csv"
    with open(plot, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "pause_count", "mean_pause_seconds"])
        for r in results:
            w.writerow([r["path"], r["stats"]["count"], f"{r['stats']['mean_duration']:.6f}"])
    counts = [r["stats"]["count"] for r in results]
    total_pause = sum(r["stats"]["total_pause_time"] for r in results)
    summary = {
        "files": len(paths),
        "analyzed": len(results),
        "errors": errors,
        "total_pauses": int(sum(counts)),
        "mean_pauses_per_file": float(np.mean(counts)) if counts else 0.0,
        "mean_pause_seconds": total_pause / sum(counts) if sum(counts) else 0.0,
        "min_frames": args.min_frames,
        "sweep": [
            {"threshold": t, "total_silence_seconds": sum(r["sweep"][i]["total_silence_seconds"] for r in results)}
            for i, t in enumerate(sweep)
        ],
    }
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, ensure_ascii=False, indent=1), encoding="utf-8")
    RunManifest(
        "analyze-pauses", cfg.digest(), [str(p) for p in paths], [str(per_file), str(plot), str(summary_path)],
        _seed(args, cfg), time.time() - t0,
    ).write(out)
    return 0


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (defaults are used for missing keys)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="kopause", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", parents=[common], help="cache ids and mels for a corpus")
    p.add_argument("--metadata", required=True, help="wav_path|text lines")
    p.add_argument("--parses", help="bracketed parse per metadata line")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", parents=[common], help="train or resume from the latest checkpoint")
    p.add_argument("--data", required=True, help="directory written by preprocess")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--lambda", dest="lambda_tpgst", type=float, help="weight of the TAE/TPAE L1 term")
    p.add_argument("--checkpoint-interval", type=int)
    p.add_argument("--all-data", action="store_true", help="train on every utterance, no validation split")
    p.add_argument("--threads", type=int, help="torch intra-op threads")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", parents=[common], help="synthesize one sentence from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--parse", help="bracketed constituency parse of the text")
    p.add_argument("--max-frames", type=int)
    p.add_argument("--gl-iters", type=int, default=60, help="Griffin-Lim iterations")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze-pauses", parents=[common], help="detect pauses in WAV or mel files")
    p.add_argument("inputs", nargs="*", help=".wav, .kpmel or .npy files")
    p.add_argument("--threshold", type=float, help="log-mel energy threshold (default: per-file 20th percentile)")
    p.add_argument("--min-frames", type=int, default=5)
    p.add_argument("--sweep", type=float, nargs="+", help="thresholds for the sweep report")
    p.set_defaults(func=cmd_analyze_pauses)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except KoPauseError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
