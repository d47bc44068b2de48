"""Synthetic KSS-style corpus for smoke tests and demos.

Each syllable becomes a short tone complex whose partials depend on its
jamo, word gaps are short silences, and phrase ends (per the bracketed
parse) get longer silences. The result is a tiny corpus in which text
determines the audio, so a model can overfit it.

Run ``python -m kopause.fixtures OUT_DIR`` to write wavs, ``metadata.csv``
and ``parses.txt``.
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from kopause.audio import SAMPLE_RATE, Waveform, save_wav
from kopause.syntax import extract_boundaries, parse_bracketed

# (text, bracketed parse)
SENTENCES = [
    ("아버지가 방에 들어가신다.", "(S (NP 아버지가) (VP (NP 방에) (VP 들어가신다.)))"),
    ("아버지 가방에 들어가신다.", "(S (NP 아버지) (VP (NP 가방에) (VP 들어가신다.)))"),
    ("오늘밤 나무 사 온다.", "(S (NP 오늘밤) (VP (NP 나무) (VP 사 온다.)))"),
    ("오늘밤 나 무 사 온다.", "(S (NP 오늘밤) (NP 나) (VP (NP 무) (VP 사 온다.)))"),
    ("안녕하세요.", "(S (VP 안녕하세요.))"),
    ("감사합니다.", "(S (VP 감사합니다.))"),
    ("사과를 먹었다.", "(S (NP 사과를) (VP 먹었다.))"),
    ("날씨가 좋다.", "(S (NP 날씨가) (VP 좋다.))"),
]

SYLLABLE_S = 0.05
WORD_GAP_S = 0.03
PHRASE_GAP_S = 0.12
FINAL_GAP_S = 0.1
EDGE_S = 0.06


def _tone(freqs, amps, n, rate):
    t = np.arange(n) / rate
    x = sum(a * np.sin(2 * np.pi * f * t) for f, a in zip(freqs, amps))
    ramp = min(n // 4, int(0.005 * rate))
    env = np.ones(n)
    if ramp:
        env[:ramp] = np.linspace(0, 1, ramp)
        env[-ramp:] = np.linspace(1, 0, ramp)
    return x * env


def _syllable(ch: str, rate: int) -> np.ndarray:
    s = ord(ch) - 0xAC00
    lead, vowel, tail = s // 588, (s % 588) // 28, s % 28
    n = int(SYLLABLE_S * rate)
    body = _tone([300 + 35 * vowel, 1100 + 70 * vowel], [0.3, 0.15], n, rate)
    onset = int(0.4 * n)
    body[:onset] += _tone([1800 + 90 * lead], [0.12], onset, rate)
    if tail:
        coda = int(0.4 * n)
        body[-coda:] += _tone([180 + 25 * tail], [0.15], coda, rate)
    return body


def synthesize(text: str, parse: str | None = None, rate: int = SAMPLE_RATE, seed: int = 0) -> Waveform:
    """Render ``text``; characters after a phrase end get a longer gap."""
    ends = set()
    if parse is not None:
        tree = parse_bracketed(parse)
        sentence = tree.sentence()
        if sentence.replace(" ", "") == text.replace(" ", ""):
            # map offsets of the tree sentence to offsets in text via non-space counts
            nonspace = [i for i, ch in enumerate(text) if ch != " "]
            count = 0
            tree_to_count = {}
            for i, ch in enumerate(sentence):
                tree_to_count[i] = count
                count += ch != " "
            tree_to_count[len(sentence)] = count
            for p in extract_boundaries(tree).positions:
                k = tree_to_count[p]
                if 0 < k < len(nonspace):
                    ends.add(nonspace[k - 1] + 1)
    pieces = [np.zeros(int(EDGE_S * rate))]
    for i, ch in enumerate(text):
        if 0xAC00 <= ord(ch) <= 0xD7A3:
            pieces.append(_syllable(ch, rate))
        elif ch == " ":
            gap = PHRASE_GAP_S if i in ends else WORD_GAP_S
            pieces.append(np.zeros(int(gap * rate)))
        elif ch in ".?!":
            pieces.append(np.zeros(int(FINAL_GAP_S * rate)))
        elif ch == ",":
            pieces.append(np.zeros(int(PHRASE_GAP_S * rate)))
    pieces.append(np.zeros(int(EDGE_S * rate)))
    x = np.concatenate(pieces)
    x += 1e-4 * np.random.default_rng(seed).standard_normal(len(x))
    return Waveform(np.clip(x, -1, 1), rate)


def write_corpus(out_dir: str | Path, sentences=SENTENCES, with_parses: bool = True) -> Path:
    """Write ``wavs/*.wav``, ``metadata.csv`` and (optionally) ``parses.txt``; returns the metadata path."""
    out_dir = Path(out_dir)
    (out_dir / "wavs").mkdir(parents=True, exist_ok=True)
    meta, parses = [], []
    for i, (text, parse) in enumerate(sentences):
        name = f"wavs/fx_{i:04d}.wav"
        save_wav(out_dir / name, synthesize(text, parse, seed=i))
        meta.append(f"{name}|{text}|{text}")
        parses.append(parse or "")
    (out_dir / "metadata.csv").write_text("\n".join(meta) + "\n", encoding="utf-8")
    if with_parses:
        (out_dir / "parses.txt").write_text("\n".join(parses) + "\n", encoding="utf-8")
    return out_dir / "metadata.csv"


if __name__ == "__main__":
    print(write_corpus(sys.argv[1] if len(sys.argv) > 1 else "fixture_corpus"))
