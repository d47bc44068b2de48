"""Hangul jamo front-end: decomposition, normalization and symbol ids.

Syllable blocks are split into positional (conjoining) jamo, so a lead
consonant and a tail consonant that look the same are different symbols:
lead ㄴ is U+1102 and tail ㄴ is U+11AB.
"""
from __future__ import annotations

import enum
import hashlib
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

from kopause import kernels
from kopause.errors import ConfigError, EncodingError

LEAD_BASE, N_LEAD = 0x1100, 19
VOWEL_BASE, N_VOWEL = 0x1161, 21
TAIL_BASE, N_TAIL = 0x11A8, 27  # first real tail; index 0 of the 28-slot arithmetic is "no tail"

PAD = "<pad>"
EOS = "<eos>"
PIPE = "|"
SPACE = " "
PUNCTUATION = "!'(),-.:;?\""


class JamoKind(enum.Enum):
    LEAD = "lead-consonant"
    VOWEL = "vowel"
    TAIL = "tail-consonant"
    OTHER = "non-hangul"


@dataclass(frozen=True)
class JamoSymbol:
    kind: JamoKind
    index: int
    literal: str

    @classmethod
    def from_char(cls, ch: str) -> "JamoSymbol":
        c = ord(ch)
        if LEAD_BASE <= c < LEAD_BASE + N_LEAD:
            return cls(JamoKind.LEAD, c - LEAD_BASE, ch)
        if VOWEL_BASE <= c < VOWEL_BASE + N_VOWEL:
            return cls(JamoKind.VOWEL, c - VOWEL_BASE, ch)
        if TAIL_BASE <= c < TAIL_BASE + N_TAIL:
            # tail indices follow the syllable arithmetic, 1..27
            return cls(JamoKind.TAIL, c - TAIL_BASE + 1, ch)
        return cls(JamoKind.OTHER, 0, ch)


class JamoSequence(Sequence[JamoSymbol]):
    """Positional jamo plus pass-through symbols, backed by a plain string."""

    __slots__ = ("text",)

    def __init__(self, text: str = ""):
        self.text = text

    @classmethod
    def from_symbols(cls, symbols: Iterable[JamoSymbol]) -> "JamoSequence":
        return cls("".join(s.literal for s in symbols))

    def __len__(self) -> int:
        return len(self.text)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return JamoSequence(self.text[i])
        return JamoSymbol.from_char(self.text[i])

    def __iter__(self) -> Iterator[JamoSymbol]:
        return (JamoSymbol.from_char(ch) for ch in self.text)

    def __eq__(self, other) -> bool:
        if isinstance(other, JamoSequence):
            return self.text == other.text
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.text)

    def __repr__(self) -> str:
        return f"JamoSequence({self.text!r})"

    def __str__(self) -> str:
        return self.text


def decompose_hangul(text: str) -> JamoSequence:
    """Split every precomposed syllable (U+AC00..U+D7A3) into 2 or 3 positional jamo.

    Everything else passes through unchanged. Bare conjoining jamo already in
    the input are indistinguishable from decomposed ones, so run
    :func:`normalize_text` first if the source may contain NFD text.
    """
    return JamoSequence(kernels.decompose_to_jamo(text))


def compose_jamo(seq: JamoSequence | str) -> str:
    """Inverse of :func:`decompose_hangul`; raises CompositionError on malformed runs."""
    return kernels.compose_from_jamo(str(seq))


def _hangul_syllable(ch: str) -> bool:
    return 0xAC00 <= ord(ch) <= 0xD7A3


class NormalizedText(NamedTuple):
    text: str
    stripped: list[str]


_WS = re.compile(r"\s+")


def normalize_text(text: str, table: "SymbolTable | None" = None) -> NormalizedText:
    """NFC-normalize, collapse whitespace, and drop characters the table cannot encode.

    Pipes are dropped too: boundary pipes only come from parse sidecars.
    """
    table = table or SymbolTable.default()
    text = _WS.sub(" ", unicodedata.normalize("NFC", text)).strip()
    kept, stripped = [], []
    for ch in text:
        if ch != PIPE and (_hangul_syllable(ch) or ch in table):
            kept.append(ch)
        else:
            stripped.append(ch)
    out = _WS.sub(" ", "".join(kept)).strip()
    return NormalizedText(out, stripped)


class SymbolTable:
    """Bijective symbol <-> id map. Id 0 is padding; the pipe has its own id."""

    def __init__(self, symbols: Sequence[str]):
        symbols = list(symbols)
        if not symbols or symbols[0] != PAD:
            raise ConfigError("symbol table must start with the padding symbol")
        if len(set(symbols)) != len(symbols):
            raise ConfigError("symbol table entries must be distinct")
        if symbols.count(PIPE) != 1 or EOS not in symbols:
            raise ConfigError("symbol table needs exactly one pipe and an end-of-sequence symbol")
        self.symbols = tuple(symbols)
        self._ids = {s: i for i, s in enumerate(self.symbols)}

    @classmethod
    def default(cls) -> "SymbolTable":
        return _DEFAULT_TABLE

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def eos_id(self) -> int:
        return self._ids[EOS]

    @property
    def pipe_id(self) -> int:
        return self._ids[PIPE]

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, SymbolTable) and self.symbols == other.symbols

    def id(self, symbol: str) -> int:
        return self._ids[symbol]

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.symbols).encode("utf-8")).hexdigest()

    def decode(self, ids: Iterable[int], strip_eos: bool = True) -> str:
        out = []
        for i in ids:
            s = self.symbols[i]
            if s == EOS and strip_eos:
                break
            if s != PAD:
                out.append(s)
        return "".join(out)

    # one symbol per line, line number = id; the space gets a placeholder name
    def save(self, path: str | Path) -> None:
        lines = ["<space>" if s == SPACE else s for s in self.symbols]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SymbolTable":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls([SPACE if s == "<space>" else s for s in lines])


def _default_symbols() -> list[str]:
    symbols = [PAD, EOS, SPACE, PIPE]
    symbols += list(PUNCTUATION)
    symbols += [chr(c) for c in range(ord("0"), ord("9") + 1)]
    symbols += [chr(c) for c in range(ord("a"), ord("z") + 1)]
    symbols += [chr(c) for c in range(ord("A"), ord("Z") + 1)]
    symbols += [chr(LEAD_BASE + i) for i in range(N_LEAD)]
    symbols += [chr(VOWEL_BASE + i) for i in range(N_VOWEL)]
    symbols += [chr(TAIL_BASE + i) for i in range(N_TAIL)]
    return symbols


_DEFAULT_TABLE = SymbolTable(_default_symbols())


def encode_symbols(marked_text: str | JamoSequence, table: SymbolTable | None = None) -> list[int]:
    """Map already-decomposed, pipe-marked text to ids, appending EOS."""
    table = table or SymbolTable.default()
    ids = []
    for pos, ch in enumerate(str(marked_text)):
        try:
            ids.append(table._ids[ch])
        except KeyError:
            raise EncodingError(ch, pos) from None
    ids.append(table.eos_id)
    return ids
