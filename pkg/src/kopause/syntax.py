"""Constituency-boundary markup from bracketed parser output.

Trees come from an external constituency parser in Penn-style brackets, e.g.
``(S (NP 아버지가) (VP (NP 방에) (VP 들어가신다)))``. The end of every
selected phrasal constituent gets a ``|`` in the text fed to the encoder.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

from kopause.errors import BoundaryRangeError, ParseError

PIPE = "|"
DEFAULT_CATEGORIES = frozenset({"NP", "VP"})

Child = Union["ParseTree", str]


@dataclass(frozen=True)
class ParseTree:
    label: str
    children: tuple[Child, ...]
    span: tuple[int, int]

    def subtrees(self) -> Iterator["ParseTree"]:
        yield self
        for c in self.children:
            if isinstance(c, ParseTree):
                yield from c.subtrees()

    def leaves(self) -> list[str]:
        out = []
        for c in self.children:
            out.extend(c.leaves() if isinstance(c, ParseTree) else [c])
        return out

    def sentence(self) -> str:
        return " ".join(self.leaves())


@dataclass
class BoundarySet:
    positions: list[int] = field(default_factory=list)
    categories: dict[int, set[str]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.positions)

    def __iter__(self):
        return iter(self.positions)


def _tokenize(s: str) -> Iterator[tuple[str, int]]:
    i, n = 0, len(s)
    while i < n:
        ch = s[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            yield ch, i
            i += 1
        else:
            j = i
            while j < n and not s[j].isspace() and s[j] not in "()":
                j += 1
            yield s[i:j], i
            i = j


def parse_bracketed(s: str) -> ParseTree:
    """Read one bracketed tree and assign ``[start, end)`` spans over its detokenized text."""
    tokens = list(_tokenize(s))
    pos = 0
    offset = 0  # running character offset into the space-joined sentence

    def peek():
        return tokens[pos] if pos < len(tokens) else (None, len(s))

    def node() -> ParseTree:
        nonlocal pos, offset
        tok, at = peek()
        if tok != "(":
            raise ParseError(at, "expected '('")
        pos += 1
        label, at = peek()
        if label is None:
            raise ParseError(at, "unexpected end of input")
        if label in "()":
            raise ParseError(at, "empty label")
        pos += 1
        children: list[Child] = []
        start = None
        while True:
            tok, at = peek()
            if tok is None:
                raise ParseError(at, "unbalanced parentheses: missing ')'")
            if tok == ")":
                pos += 1
                break
            if tok == "(":
                child = node()
                if start is None:
                    start = child.span[0]
                children.append(child)
            else:
                if offset > 0:
                    offset += 1  # separating space
                if start is None:
                    start = offset
                offset += len(tok)
                children.append(tok)
                pos += 1
        if not children:
            raise ParseError(at, f"constituent {label!r} has no children")
        return ParseTree(label, tuple(children), (start, offset))

    tree = node()
    if pos != len(tokens):
        raise ParseError(tokens[pos][1], "trailing input after tree")
    return tree


def _base_label(label: str) -> str:
    # function tags and indices: NP-SBJ, NP=2
    for sep in "-=":
        if sep in label[1:]:
            label = label[: label.index(sep, 1)]
    return label


def extract_boundaries(tree: ParseTree, categories: Iterable[str] = DEFAULT_CATEGORIES) -> BoundarySet:
    categories = set(categories)
    hits: dict[int, set[str]] = {}
    for sub in tree.subtrees():
        if sub.label in categories or _base_label(sub.label) in categories:
            hits.setdefault(sub.span[1], set()).add(sub.label)
    return BoundarySet(sorted(hits), hits)


def inject_pipes(text: str, boundaries: BoundarySet | Iterable[int]) -> str:
    """Insert ``|`` after each boundary offset.

    Offsets count characters of the pipe-free text, so re-applying the same
    boundaries to already-marked text is a no-op.
    """
    positions = sorted(set(boundaries))
    n_plain = len(text) - text.count(PIPE)
    if positions and (positions[0] < 0 or positions[-1] > n_plain):
        raise BoundaryRangeError(f"boundary offsets {positions} outside text of length {n_plain}")
    out = []
    consumed = 0
    k = 0
    i = 0
    while True:
        while k < len(positions) and positions[k] == consumed:
            if not (i < len(text) and text[i] == PIPE):
                out.append(PIPE)
            k += 1
        if i >= len(text):
            break
        ch = text[i]
        out.append(ch)
        if ch != PIPE:
            consumed += 1
        i += 1
    return "".join(out)


def align_boundaries(tree: ParseTree, text: str, boundaries: BoundarySet) -> BoundarySet:
    """Re-express boundary offsets from the tree's sentence into ``text``.

    The two may differ in spacing and trailing punctuation; alignment goes
    through the non-space characters, which must agree as a prefix of ``text``.
    Raises ValueError when the parse does not match the text.
    """
    sentence = tree.sentence()
    if sentence == text:
        return boundaries
    # tree offset -> count of non-space chars before it
    nonspace_before = [0] * (len(sentence) + 1)
    for i, ch in enumerate(sentence):
        nonspace_before[i + 1] = nonspace_before[i] + (not ch.isspace())
    tree_chars = [ch for ch in sentence if not ch.isspace()]
    text_idx = [i for i, ch in enumerate(text) if not ch.isspace()]
    text_chars = [text[i] for i in text_idx]
    if text_chars[: len(tree_chars)] != tree_chars:
        raise ValueError("parse tree does not match the utterance text")
    mapped: dict[int, set[str]] = {}
    for pos in boundaries.positions:
        k = nonspace_before[pos]
        at = 0 if k == 0 else text_idx[k - 1] + 1
        mapped.setdefault(at, set()).update(boundaries.categories.get(pos, ()))
    return BoundarySet(sorted(mapped), mapped)


def mark_text(text: str, parse: str | ParseTree | None, categories: Iterable[str] = DEFAULT_CATEGORIES) -> str:
    """Pipe-mark ``text`` using its bracketed parse; returns text unchanged when ``parse`` is None."""
    if parse is None:
        return text
    tree = parse_bracketed(parse) if isinstance(parse, str) else parse
    bounds = align_boundaries(tree, text, extract_boundaries(tree, categories))
    return inject_pipes(text, bounds)
