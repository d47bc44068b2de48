import pytest
from hypothesis import given
from hypothesis import strategies as st

from kopause.errors import BoundaryRangeError, ParseError
from kopause.syntax import (
    PIPE,
    ParseTree,
    align_boundaries,
    extract_boundaries,
    inject_pipes,
    mark_text,
    parse_bracketed,
)

FIXTURE = "(S (NP 아버지가) (VP (NP 방에) (VP 들어가신다)))"
SENTENCE = "아버지가 방에 들어가신다"


def test_parse_reads_spans():
    tree = parse_bracketed("(S (NP 아버지가) (VP 방에 들어가신다))")
    assert tree.label == "S"
    np_, vp = tree.children
    assert np_.label == "NP" and np_.span == (0, 4)
    assert vp.label == "VP" and vp.span == (5, 13)
    assert tree.span == (0, 13)
    assert tree.sentence() == SENTENCE


def test_single_node():
    tree = parse_bracketed("(NP 사과)")
    assert tree.children == ("사과",)
    assert tree.span == (0, 2)


@pytest.mark.parametrize(
    "bad, offset",
    [("(S", 2), ("(S (NP a)", 9), ("()", 1), ("(S)", 2), ("(NP a))", 6), ("NP a", 0)],
)
def test_parse_errors(bad, offset):
    with pytest.raises(ParseError) as err:
        parse_bracketed(bad)
    assert err.value.position == offset


def _check_spans(tree: ParseTree):
    kids = [c for c in tree.children if isinstance(c, ParseTree)]
    for a, b in zip(kids, kids[1:]):
        assert a.span[1] < b.span[0]
    for k in kids:
        assert tree.span[0] <= k.span[0] and k.span[1] <= tree.span[1]
        _check_spans(k)


def test_spans_nested_in_order():
    _check_spans(parse_bracketed(FIXTURE))


def test_extract_fixture_boundaries():
    # hand application: NP ends after 아버지가 (4), NP after 방에 (7), VP and VP both at 13
    b = extract_boundaries(parse_bracketed(FIXTURE), {"NP", "VP"})
    assert b.positions == [4, 7, 13]
    assert b.categories[13] == {"VP"}


def test_extract_no_match():
    assert extract_boundaries(parse_bracketed(FIXTURE), {"ADJP"}).positions == []


def test_extract_single_np():
    assert extract_boundaries(parse_bracketed("(NP 사과)"), {"NP"}).positions == [2]


def test_function_tags_match_base_category():
    tree = parse_bracketed("(S (NP-SBJ 철수가) (VP 간다))")
    assert extract_boundaries(tree, {"NP"}).positions == [3]
    assert extract_boundaries(tree, {"NP", "VP"}).positions == [3, 6]


def test_category_monotone():
    tree = parse_bracketed(FIXTURE)
    small = set(extract_boundaries(tree, {"NP"}).positions)
    large = set(extract_boundaries(tree, {"NP", "VP", "S"}).positions)
    assert small <= large


def test_inject_fixture():
    b = extract_boundaries(parse_bracketed(FIXTURE))
    marked = inject_pipes(SENTENCE, b)
    assert marked == "아버지가| 방에| 들어가신다|"
    assert inject_pipes(marked, b) == marked
    assert marked.replace(PIPE, "") == SENTENCE


def test_inject_empty_set():
    assert inject_pipes(SENTENCE, []) == SENTENCE


def test_inject_out_of_range():
    with pytest.raises(BoundaryRangeError):
        inject_pipes("abc", [4])


@given(st.text(alphabet="가나다 ", min_size=1, max_size=30), st.data())
def test_inject_properties(text, data):
    positions = data.draw(st.sets(st.integers(0, len(text))))
    marked = inject_pipes(text, positions)
    assert marked.replace(PIPE, "") == text
    assert marked.count(PIPE) == len(positions)
    assert inject_pipes(marked, positions) == marked


def test_align_through_trailing_punctuation():
    tree = parse_bracketed(FIXTURE)
    b = align_boundaries(tree, SENTENCE + ".", extract_boundaries(tree))
    assert inject_pipes(SENTENCE + ".", b) == "아버지가| 방에| 들어가신다|."


def test_mark_text_mismatched_parse():
    with pytest.raises(ValueError):
        mark_text("전혀 다른 문장", FIXTURE)


def test_mark_text_without_parse():
    assert mark_text(SENTENCE, None) == SENTENCE
