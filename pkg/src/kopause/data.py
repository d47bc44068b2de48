"""Corpus ingestion: KSS-style metadata, parse sidecars, dataset split, feature cache, batching."""
from __future__ import annotations

import hashlib
import json
import math
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from kopause.audio import MelConfig, load_wav, mel_spectrogram
from kopause.errors import KoPauseError, ParseError
from kopause.syntax import DEFAULT_CATEGORIES, mark_text
from kopause.text import SymbolTable, decompose_hangul, encode_symbols, normalize_text

log = logging.getLogger(__name__)


@dataclass
class UtteranceRecord:
    wav_path: Path
    text: str
    parse: str | None = None
    ids: np.ndarray | None = None
    mel: np.ndarray | None = None
    mel_hash: str | None = None
    line: int = 0


@dataclass
class MetadataReport:
    skipped: list[tuple[int, str]] = field(default_factory=list)


def load_metadata(path: str | Path, root: str | Path | None = None, report: MetadataReport | None = None):
    """Read ``wav_path|text[|...]`` lines; malformed lines are skipped with a warning."""
    path = Path(path)
    root = Path(root) if root is not None else path.parent
    try:
        raw = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise KoPauseError(f"cannot read metadata {path}: {exc}") from exc
    records = []
    for n, line in enumerate(raw.splitlines(), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        parts = line.split("|")
        if len(parts) < 2 or not parts[0].strip() or not parts[1].strip():
            log.warning("%s:%d: malformed metadata line skipped", path, n)
            if report is not None:
                report.skipped.append((n, line))
            continue
        records.append(UtteranceRecord(root / parts[0].strip(), parts[1].strip(), line=n))
    if not records:
        raise KoPauseError(f"{path}: no valid metadata lines")
    return records


def load_parses(path: str | Path) -> list[str | None]:
    """One bracketed tree per line, paired with metadata lines in order; blank lines mean no parse."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() or None for ln in lines]


def attach_parses(records: Sequence[UtteranceRecord], parses: Sequence[str | None]) -> int:
    """Pair parses with records in order; returns how many records are left without one."""
    missing = 0
    for i, rec in enumerate(records):
        rec.parse = parses[i] if i < len(parses) else None
        missing += rec.parse is None
    return missing


def split_dataset(records: Sequence, ratio: float = 0.9, seed: int = 1234):
    """Deterministic shuffled train/validation split; validation gets round(N/10), at least 1."""
    n = len(records)
    if n < 2:
        raise ValueError("need at least 2 records to split")
    # round half up, with slack for 1 - 0.9 not being exactly 0.1
    n_valid = max(1, math.floor(n * (1.0 - ratio) + 0.5 + 1e-9))
    n_valid = min(n_valid, n - 1)
    order = np.random.default_rng(seed).permutation(n)
    valid = sorted(order[:n_valid])
    train = sorted(order[n_valid:])
    return [records[i] for i in train], [records[i] for i in valid]


@dataclass
class PreparedText:
    normalized: str
    marked: str
    jamo: str
    ids: list[int]
    stripped: list[str]
    degraded: bool  # True when no usable parse was available


def prepare_text(text: str, table: SymbolTable, parse: str | None = None, categories=DEFAULT_CATEGORIES) -> PreparedText:
    """normalize -> pipe-mark from parse -> decompose -> encode."""
    norm = normalize_text(text, table)
    marked, degraded = norm.text, parse is None
    if parse is not None:
        try:
            marked = mark_text(norm.text, parse, categories)
        except (ParseError, ValueError) as exc:
            log.warning("parse unusable for %r (%s); continuing without pipes", norm.text, exc)
            degraded = True
    jamo = decompose_hangul(marked).text
    return PreparedText(norm.text, marked, jamo, encode_symbols(jamo, table), norm.stripped, degraded)


def cache_key(rec: UtteranceRecord, mel_cfg: MelConfig, table: SymbolTable) -> str:
    h = hashlib.sha256()
    for part in (str(rec.wav_path), rec.text, rec.parse or "", mel_cfg.digest(), table.digest()):
        h.update(part.encode("utf-8"))
        h.update(b"\0")
    return h.hexdigest()[:24]


def preprocess_corpus(
    records: Sequence[UtteranceRecord],
    out_dir: str | Path,
    mel_cfg: MelConfig,
    table: SymbolTable,
    categories=DEFAULT_CATEGORIES,
) -> dict:
    """Compute and cache ids and mels per utterance; unchanged entries are cache hits."""
    out_dir = Path(out_dir)
    cache = out_dir / "cache"
    cache.mkdir(parents=True, exist_ok=True)
    entries, stripped, missing, durations = [], {}, [], []
    computed = hits = 0
    for i, rec in enumerate(records):
        key = cache_key(rec, mel_cfg, table)
        path = cache / f"{key}.npz"
        prepared = prepare_text(rec.text, table, rec.parse, categories)
        if prepared.stripped:
            stripped[str(rec.wav_path)] = prepared.stripped
        if prepared.degraded:
            missing.append(str(rec.wav_path))
        if path.exists():
            hits += 1
            with np.load(path) as z:
                n_samples = int(z["n_samples"])
        else:
            try:
                wav = load_wav(rec.wav_path, mel_cfg.sample_rate)
                mel = mel_spectrogram(wav, mel_cfg).frames.astype(np.float32)
            except KoPauseError as exc:
                raise type(exc)(f"utterance {i} ({rec.wav_path}): {exc}") from exc
            n_samples = len(wav.samples)
            tmp = path.with_suffix(".tmp.npz")
            np.savez(tmp, ids=np.asarray(prepared.ids, dtype=np.int64), mel=mel, n_samples=n_samples)
            tmp.replace(path)
            computed += 1
        durations.append(n_samples / mel_cfg.sample_rate)
        entries.append({"key": key, "wav": str(rec.wav_path), "text": rec.text, "marked": prepared.marked})
    index = {
        "mel_config_hash": mel_cfg.digest(),
        "symbol_table_hash": table.digest(),
        "entries": entries,
    }
    (out_dir / "index.json").write_text(json.dumps(index, ensure_ascii=False, indent=1), encoding="utf-8")
    table.save(out_dir / "symbols.txt")
    return {
        "utterances": len(records),
        "computed": computed,
        "cache_hits": hits,
        "stripped_characters": stripped,
        "missing_parses": missing,
        "mean_clip_seconds": float(np.mean(durations)) if durations else 0.0,
    }


def load_cache(data_dir: str | Path) -> tuple[dict, list[UtteranceRecord]]:
    data_dir = Path(data_dir)
    index = json.loads((data_dir / "index.json").read_text(encoding="utf-8"))
    records = []
    for e in index["entries"]:
        with np.load(data_dir / "cache" / f"{e['key']}.npz") as z:
            records.append(
                UtteranceRecord(Path(e["wav"]), e["text"], ids=z["ids"], mel=z["mel"], mel_hash=index["mel_config_hash"])
            )
    return index, records


@dataclass
class Batch:
    ids: torch.Tensor  # (B, T_text) long, 0-padded
    id_lengths: torch.Tensor
    mels: torch.Tensor  # (B, T_mel, n_mels), 0-padded
    mel_lengths: torch.Tensor

    def to(self, dtype) -> "Batch":
        return Batch(self.ids, self.id_lengths, self.mels.to(dtype), self.mel_lengths)


def collate(items: Sequence[tuple[Sequence[int], np.ndarray]], dtype=torch.float32) -> Batch:
    """Pad (ids, mel) pairs into a batch."""
    id_lengths = torch.tensor([len(i) for i, _ in items], dtype=torch.long)
    mel_lengths = torch.tensor([m.shape[0] for _, m in items], dtype=torch.long)
    ids = torch.zeros(len(items), int(id_lengths.max()), dtype=torch.long)
    mels = torch.zeros(len(items), int(mel_lengths.max()), items[0][1].shape[1], dtype=dtype)
    for b, (i, m) in enumerate(items):
        ids[b, : len(i)] = torch.as_tensor(np.asarray(i), dtype=torch.long)
        mels[b, : m.shape[0]] = torch.as_tensor(np.asarray(m), dtype=dtype)
    return Batch(ids, id_lengths, mels, mel_lengths)
