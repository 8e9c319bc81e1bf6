"""Parser golden tests (the worked example and its three figure trees) plus
round-trip and traversal properties."""

import json

import pytest
from hypothesis import given, settings

from mathtrans.parser import (COMMAND_END, CONCAT_END, EmptyInput,
                              ParserOptions, Token, UnbalancedBraces,
                              UnexpectedToken, add_end_markers, detokenize,
                              infix_to_prefix, parse_formula, parse_nary,
                              right_biggest, to_binary, tokenize, undo_swaps)
from mathtrans.trees import BinTree

from conftest import bintrees

EXAMPLE = "\\frac{2a}{n+\\sqrt{2}}+\\sqrt{3}"


def L(v):
    return {"v": v}


def N(*cs):
    return {"c": list(cs)}


def B(left, right):
    return {"l": left, "r": right, "s": 0}


def canon(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False)


# -- tokenizer ---------------------------------------------------------------

def test_tokenize_worked_example():
    texts = [t.text for t in tokenize(EXAMPLE)]
    assert texts == ["\\frac", "{", "2", "a", "}", "{", "n", "+", "\\sqrt",
                     "{", "2", "}", "}", "+", "\\sqrt", "{", "3", "}"]


def test_tokenize_single_symbol():
    assert [t.text for t in tokenize("x")] == ["x"]


def test_tokenize_scripts():
    assert [t.text for t in tokenize("a_{b}^{c}")] == \
        ["a", "_", "{", "b", "}", "^", "{", "c", "}"]


def test_tokenize_digit_runs_and_whitespace():
    toks = tokenize("12 +\n 3")
    assert [t.text for t in toks] == ["12", "+", "3"]
    assert toks[0].kind == "digit-run"


def test_tokenize_reconstructs_input_modulo_whitespace():
    for s in (EXAMPLE, "a_{b}^{c}", "\\alpha\\beta{x}[y]"):
        assert "".join(t.text for t in tokenize(s)) == s.replace(" ", "")


def test_tokenize_errors():
    with pytest.raises(EmptyInput):
        tokenize("   ")
    with pytest.raises(UnbalancedBraces) as e:
        tokenize("{a")
    assert e.value.position == 0
    with pytest.raises(UnbalancedBraces) as e:
        tokenize("a}b")
    assert e.value.position == 1


# -- figure goldens ----------------------------------------------------------

FIG3_NARY = N(
    N(L("\\frac"),
      N(N(L("2"), L("a")),
        N(L("n"), L("+"), N(L("\\sqrt"), L("2"))))),
    L("+"),
    N(L("\\sqrt"), L("3")))

FIG3_BIN = B(
    B(L("\\frac"),
      B(B(L("2"), L("a")),
        B(L("n"), B(L("+"), B(L("\\sqrt"), L("2")))))),
    B(L("+"), B(L("\\sqrt"), L("3"))))

M1 = L(COMMAND_END)
M2 = L(CONCAT_END)

FIG4_NARY = N(
    N(L("\\frac"),
      N(N(L("2"), L("a"), M2),
        N(L("n"), L("+"), N(L("\\sqrt"), L("2"), M1), M2)),
      M1),
    L("+"),
    N(L("\\sqrt"), L("3"), M1))

FIG4_BIN = B(
    B(L("\\frac"),
      B(B(B(L("2"), B(L("a"), M2)),
          B(L("n"), B(L("+"), B(B(L("\\sqrt"), B(L("2"), M1)), M2)))),
        M1)),
    B(L("+"), B(L("\\sqrt"), B(L("3"), M1))))

FIG5_NARY = N(
    L("+"),
    N(L("\\frac"),
      N(N(L("2"), L("a")),
        N(L("+"), L("n"), N(L("\\sqrt"), L("2"))))),
    N(L("\\sqrt"), L("3")))

FIG5_BIN = B(
    L("+"),
    B(B(L("\\frac"),
        B(B(L("2"), L("a")),
          B(L("+"), B(L("n"), B(L("\\sqrt"), L("2")))))),
      B(L("\\sqrt"), L("3"))))

OFF = ParserOptions(command_end=False, concat_end=False)
MARKERS = ParserOptions(command_end=True, concat_end=True)
INFIX = ParserOptions(command_end=False, concat_end=False,
                      infix_to_prefix=True)


def test_figure3_nary_and_binary():
    t = parse_nary(tokenize(EXAMPLE), OFF)
    assert t.to_json() == canon(FIG3_NARY)
    assert to_binary(t).to_json() == canon(FIG3_BIN)


def test_figure4_nary_and_binary():
    t = add_end_markers(parse_nary(tokenize(EXAMPLE), MARKERS), MARKERS)
    assert t.to_json() == canon(FIG4_NARY)
    assert to_binary(t).to_json() == canon(FIG4_BIN)


def test_figure5_nary_and_binary():
    t = infix_to_prefix(parse_nary(tokenize(EXAMPLE), INFIX))
    assert t.to_json() == canon(FIG5_NARY)
    assert to_binary(t).to_json() == canon(FIG5_BIN)


# -- parser pieces -----------------------------------------------------------

def test_parse_single_leaf_and_brace_elision():
    assert parse_nary(tokenize("x")).to_json() == canon(L("x"))
    assert parse_nary(tokenize("{a}")).to_json() == canon(L("a"))


def test_no_braces_in_leaves():
    t = parse_formula(EXAMPLE, MARKERS)
    assert not any(leaf in ("{", "}") for leaf in t.leaves())


def test_dangling_command_becomes_leaf():
    t = parse_nary(tokenize("a+\\frac"))
    assert t.to_json() == canon(N(L("a"), L("+"), L("\\frac")))


def test_script_binds_previous_item():
    t = parse_nary(tokenize("a_{b}^{c}"))
    assert t.to_json() == canon(N(N(L("a"), L("_"), L("b")), L("^"), L("c")))


def test_unexpected_script_without_base():
    with pytest.raises(UnexpectedToken):
        parse_nary(tokenize("^x"))


def test_empty_group_is_dropped():
    with pytest.raises(EmptyInput):
        parse_nary(tokenize("{}"))


def test_marker_rules():
    # command node, concat node, and root sequence
    t = add_end_markers(parse_nary(tokenize("\\sqrt{2}"), MARKERS), MARKERS)
    assert t.to_json() == canon(N(L("\\sqrt"), L("2"), M1))
    t = add_end_markers(parse_nary(tokenize("{a+b}"), MARKERS), MARKERS)
    assert t.to_json() == canon(N(L("a"), L("+"), L("b"), M2))
    # leaves are unchanged
    t = add_end_markers(parse_nary(tokenize("x"), MARKERS), MARKERS)
    assert t.to_json() == canon(L("x"))


def test_infix_to_prefix_minimal():
    t = infix_to_prefix(parse_nary(tokenize("a+b")))
    assert t.to_json() == canon(N(L("+"), L("a"), L("b")))
    t = infix_to_prefix(parse_nary(tokenize("+")))
    assert t.to_json() == canon(L("+"))


# -- traversals --------------------------------------------------------------

def test_right_biggest_examples():
    t = to_binary(parse_nary(tokenize("{ab}")))
    assert right_biggest(t) == t  # equal sizes: no swap
    deep = BinTree.from_obj(B(B(L("a"), L("b")), L("c")))
    swapped = right_biggest(deep)
    assert swapped.to_obj() == {"l": L("c"), "r": B(L("a"), L("b")), "s": 1}


@given(bintrees())
@settings(max_examples=200)
def test_right_biggest_properties(t):
    rb = right_biggest(t)

    def ordered(node):
        if node.is_leaf:
            return True
        return (node.left.size <= node.right.size and ordered(node.left)
                and ordered(node.right))

    assert ordered(rb)
    assert right_biggest(rb) == rb          # idempotent
    assert undo_swaps(rb) == undo_swaps(t)  # reversible via swap flags
    assert sorted(rb.leaves()) == sorted(t.leaves())


@given(bintrees())
@settings(max_examples=100)
def test_undo_recovers_swap_free_input(t):
    plain = undo_swaps(t)  # normalize: all swap bits zero
    assert undo_swaps(right_biggest(plain)) == plain


def test_full_pipeline_is_binary_and_leaf_labeled():
    t = parse_formula(EXAMPLE, MARKERS)
    for node in t.preorder():
        assert node.is_leaf == (node.left is None)
        if not node.is_leaf:
            assert node.label is None


def test_size_of_figure3_binary():
    # 10 leaves force 19 nodes in a strictly binary tree (2L - 1)
    t = to_binary(parse_nary(tokenize(EXAMPLE), OFF))
    assert len(t.leaves()) == 10
    assert t.size == 19


def test_detokenize_round_trip_spaced():
    for s in ("\\frac { 2 a } { n + \\sqrt { 2 } } + \\sqrt { 3 }",
              "\\bar { x } = \\frac { p + q } { n }",
              "\\cos @ { x + y }",
              "a _ { i j } ^ { 2 }"):
        assert detokenize(parse_formula(s)) == s
