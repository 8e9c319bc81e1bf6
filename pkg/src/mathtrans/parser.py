"""Heuristics-based LaTeX math parser.

Pipeline: tokenize -> n-ary parse -> end markers -> (optional) infix-to-prefix
-> left-child right-sibling binarization -> right-child-biggest traversal.

Parsing rules:

* Brace groups are structure only and never become leaves.  A group with one
  item collapses to that item; a group with several items becomes an internal
  node (a same-level concatenation).
* A command with known arity k consumes its next k arguments (brace groups or
  single atoms); the node is [cmd, arg] for k = 1 and [cmd, wrapper(args)]
  for k >= 2.  Unknown commands consume a single following brace group if one
  is present, else stay bare leaves.
* `_` and `^` bind the preceding item and the following argument into one
  node [base, op, arg].
* A command with no argument available is recorded as a dangling argument and
  degrades to a bare leaf.

End markers (the two heuristics active in the reference results): an internal
node whose first child is a command leaf gains a trailing <COMMAND_END> leaf;
one whose first child is a non-command leaf gains <CONCAT_END>.  Nodes whose
first child is itself internal (top-level sequences, command argument
wrappers) gain nothing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .trees import BinTree, NaryTree, bleaf, bnode, nleaf, nnode

log = logging.getLogger(__name__)

COMMAND_END = "<COMMAND_END>"
CONCAT_END = "<CONCAT_END>"

# token kinds
COMMAND = "command"
OPEN = "open-brace"
CLOSE = "close-brace"
SYMBOL = "symbol"
LETTER = "letter"
DIGITS = "digit-run"
SUB = "sub"
SUP = "sup"

# Argument counts for commands that take brace-group arguments.  Unknown
# commands take one following brace group if present.  Semantic-notation
# macros used by the synthetic corpus are registered here as well, the same
# way a deployment would register its macro set.
ARITIES = {
    "\\frac": 2, "\\tfrac": 2, "\\dfrac": 2, "\\binom": 2, "\\sqrt": 1,
    "\\bar": 1, "\\hat": 1, "\\tilde": 1, "\\vec": 1, "\\dot": 1, "\\ddot": 1,
    "\\overline": 1, "\\underline": 1, "\\mathrm": 1, "\\mathbf": 1,
    "\\mathcal": 1, "\\boldsymbol": 1, "\\text": 1,
    # synthetic semantic macros
    "\\Mean": 1, "\\ComplexConj": 1, "\\FourierTrans": 1, "\\UnitVector": 1,
    "\\Binomial": 2,
}

# Leaves the infix-to-prefix traversal moves to the front of a node.
INFIX_OPERATORS = {
    "+", "-", "−", "=", "<", ">", "/", "≤", "≥",
    "\\pm", "\\mp", "\\cdot", "\\times", "\\div",
    "\\le", "\\leq", "\\ge", "\\geq", "\\neq", "\\ne",
    "\\lt", "\\gt", "\\ll", "\\gg",
    "\\equiv", "\\sim", "\\simeq", "\\approx", "\\asympeq",
    "\\Rightarrow", "\\rightarrow", "\\to", "\\mapsto",
}


class ParseError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class EmptyInput(ParseError):
    pass


class UnbalancedBraces(ParseError):
    pass


class UnexpectedToken(ParseError):
    pass


@dataclass(frozen=True)
class Token:
    text: str
    kind: str
    pos: int

    @property
    def end(self) -> int:
        return self.pos + len(self.text)


@dataclass(frozen=True)
class ParserOptions:
    command_end: bool = True
    concat_end: bool = True
    infix_to_prefix: bool = False


def tokenize(s: str) -> list[Token]:
    """Split a LaTeX math string into tokens; whitespace separates only.

    Raises UnbalancedBraces on brace mismatch and EmptyInput when nothing
    but whitespace is present.
    """
    tokens: list[Token] = []
    open_stack: list[int] = []
    i, n = 0, len(s)
    while i < n:
        ch = s[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "\\":
            j = i + 1
            while j < n and s[j].isalpha():
                j += 1
            if j == i + 1 and j < n:
                j += 1  # control symbol: backslash + one non-letter
            tokens.append(Token(s[i:j], COMMAND, i))
            i = j
        elif ch == "{":
            open_stack.append(i)
            tokens.append(Token(ch, OPEN, i))
            i += 1
        elif ch == "}":
            if not open_stack:
                raise UnbalancedBraces("unmatched '}'", i)
            open_stack.pop()
            tokens.append(Token(ch, CLOSE, i))
            i += 1
        elif ch == "_":
            tokens.append(Token(ch, SUB, i))
            i += 1
        elif ch == "^":
            tokens.append(Token(ch, SUP, i))
            i += 1
        elif ch.isdigit():
            j = i
            while j < n and s[j].isdigit():
                j += 1
            tokens.append(Token(s[i:j], DIGITS, i))
            i = j
        elif ch.isalpha():
            tokens.append(Token(ch, LETTER, i))
            i += 1
        else:
            tokens.append(Token(ch, SYMBOL, i))
            i += 1
    if open_stack:
        raise UnbalancedBraces("unmatched '{'", open_stack[-1])
    if not tokens:
        raise EmptyInput("empty formula")
    return tokens


class _Stream:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0
        self.dangling: list[Token] = []

    def peek(self) -> Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok


def parse_nary(tokens: list[Token], opts: ParserOptions | None = None) -> NaryTree:
    """Token stream -> non-full n-ary tree (no markers applied yet)."""
    stream = _Stream(tokens)
    items = _parse_items(stream, until_close=False)
    for tok in stream.dangling:
        log.warning("dangling argument: %r at %d has no argument group",
                    tok.text, tok.pos)
    if not items:
        raise EmptyInput("formula has no content")
    return items[0] if len(items) == 1 else nnode(items)


def _parse_items(stream: _Stream, until_close: bool) -> list[NaryTree]:
    items: list[NaryTree] = []
    while True:
        tok = stream.peek()
        if tok is None:
            if until_close:
                raise UnbalancedBraces("missing '}'")  # tokenize precludes this
            return items
        if tok.kind == CLOSE:
            if not until_close:
                raise UnexpectedToken(f"unexpected {tok.text!r}", tok.pos)
            stream.next()
            return items
        stream.next()
        if tok.kind == OPEN:
            inner = _parse_items(stream, until_close=True)
            if len(inner) == 1:
                items.append(inner[0])
            elif inner:
                items.append(nnode(inner))
            # empty group contributes nothing
        elif tok.kind == COMMAND:
            items.append(_parse_command(stream, tok))
        elif tok.kind in (SUB, SUP):
            if not items:
                raise UnexpectedToken(f"{tok.text!r} with no base", tok.pos)
            arg = _parse_argument(stream)
            if arg is None:
                stream.dangling.append(tok)
                items.append(nleaf(tok.text))
            else:
                base = items.pop()
                items.append(nnode([base, nleaf(tok.text), arg]))
        else:
            items.append(nleaf(tok.text))


def _parse_argument(stream: _Stream) -> NaryTree | None:
    """One command argument: a brace group or a single atom token."""
    tok = stream.peek()
    if tok is None or tok.kind in (CLOSE, SUB, SUP):
        return None
    stream.next()
    if tok.kind == OPEN:
        inner = _parse_items(stream, until_close=True)
        if not inner:
            return None
        return inner[0] if len(inner) == 1 else nnode(inner)
    return nleaf(tok.text)


def _parse_command(stream: _Stream, tok: Token) -> NaryTree:
    arity = ARITIES.get(tok.text)
    if arity is None:
        nxt = stream.peek()
        if nxt is not None and nxt.kind == OPEN:
            arg = _parse_argument(stream)
            if arg is not None:
                return nnode([nleaf(tok.text), arg])
        return nleaf(tok.text)
    args = []
    for _ in range(arity):
        arg = _parse_argument(stream)
        if arg is None:
            break
        args.append(arg)
    if not args:
        stream.dangling.append(tok)
        return nleaf(tok.text)
    if len(args) == 1:
        return nnode([nleaf(tok.text), args[0]])
    return nnode([nleaf(tok.text), nnode(args)])


def add_end_markers(t: NaryTree, opts: ParserOptions) -> NaryTree:
    if t.is_leaf:
        return t
    children = [add_end_markers(c, opts) for c in t.children]
    first = children[0]
    if first.is_leaf:
        if first.label.startswith("\\"):
            if opts.command_end:
                children.append(nleaf(COMMAND_END))
        elif opts.concat_end:
            children.append(nleaf(CONCAT_END))
    return nnode(children)


def infix_to_prefix(t: NaryTree) -> NaryTree:
    """Move infix-operator leaves to the front of each node, order-stable."""
    if t.is_leaf:
        return t
    children = [infix_to_prefix(c) for c in t.children]
    ops = [c for c in children if c.is_leaf and c.label in INFIX_OPERATORS]
    rest = [c for c in children if not (c.is_leaf and c.label in INFIX_OPERATORS)]
    return nnode(ops + rest)


def to_binary(t: NaryTree) -> BinTree:
    """Left-child right-sibling binarization adapted to leaf-only values.

    A node [c1, c2, ..., ck] becomes (bin(c1), bin([c2..ck])); a single-child
    node collapses to its child.  All swap flags start at zero.
    """
    if t.is_leaf:
        return bleaf(t.label)
    return _bin_list(t.children)


def _bin_list(children) -> BinTree:
    if len(children) == 1:
        return to_binary(children[0])
    return bnode(to_binary(children[0]), _bin_list(children[1:]))


def right_biggest(t: BinTree) -> BinTree:
    """Exchange children wherever size(left) > size(right), bottom up.

    The stored swap flag is XOR-ed on exchange, which makes the traversal
    idempotent and exactly undone by undo_swaps.  Ties are left alone.
    """
    if t.is_leaf:
        return t
    left = right_biggest(t.left)
    right = right_biggest(t.right)
    if left.size > right.size:
        return bnode(right, left, swap=t.swap ^ 1)
    return bnode(left, right, swap=t.swap)


def undo_swaps(t: BinTree) -> BinTree:
    """Re-exchange children wherever swap = 1; inverse of right_biggest."""
    if t.is_leaf:
        return t
    left = undo_swaps(t.left)
    right = undo_swaps(t.right)
    if t.swap:
        return bnode(right, left, swap=0)
    return bnode(left, right, swap=0)


def parse_formula(s: str, opts: ParserOptions | None = None,
                  swap_traversal: bool = True) -> BinTree:
    """Full pipeline from a formula string to a swap-annotated binary tree."""
    opts = opts or ParserOptions()
    t = parse_nary(tokenize(s), opts)
    t = add_end_markers(t, opts)
    if opts.infix_to_prefix:
        t = infix_to_prefix(t)
    b = to_binary(t)
    return right_biggest(b) if swap_traversal else b


def detokenize(t: BinTree) -> str:
    """Reconstruct a formula string from a parsed binary tree.

    Braces are reinserted from the arity table, end markers are dropped and
    tokens are joined with single spaces (the synthetic corpus convention).
    Relies on the end markers to delimit argument groups, so it assumes the
    tree was parsed with the default heuristics (markers on, infix-to-prefix
    off).
    """
    return " ".join(_emit_seq(_spine(undo_swaps(t))))


def _spine(t: BinTree) -> list[BinTree]:
    """Flatten the right spine of a binarized child chain until a leaf."""
    items = []
    node = t
    while not node.is_leaf:
        items.append(node.left)
        node = node.right
    items.append(node)
    return items


def _is_marker(t: BinTree) -> bool:
    return t.is_leaf and t.label in (COMMAND_END, CONCAT_END)


def _node_emits_bare(t: BinTree) -> bool:
    """Internal nodes that re-emit their own syntax need no surrounding braces."""
    seq = _spine(t)
    first = seq[0]
    if first.is_leaf and first.label.startswith("\\"):
        return True
    return len(seq) >= 3 and seq[1].is_leaf and seq[1].label in ("_", "^")


# leaves whose following item is re-emitted inside braces: scripts plus the
# semantic-notation application marker
_WRAP_NEXT = ("_", "^", "@")


def _emit_seq(seq: list[BinTree]) -> list[str]:
    out: list[str] = []
    i = 0
    while i < len(seq):
        it = seq[i]
        if _is_marker(it):
            i += 1
            continue
        if it.is_leaf and it.label in _WRAP_NEXT and i + 1 < len(seq):
            out += [it.label, "{"] + _emit_item(seq[i + 1]) + ["}"]
            i += 2
            continue
        if it.is_leaf and ARITIES.get(it.label):
            arity = ARITIES[it.label]
            out.append(it.label)
            if arity == 1 and i + 1 < len(seq) and not _is_marker(seq[i + 1]):
                out += ["{"] + _emit_item(seq[i + 1]) + ["}"]
                i += 2
                continue
            if arity >= 2 and i + 1 < len(seq) and not seq[i + 1].is_leaf:
                # each argument is one chain item, except the last which may
                # have been flattened into the remainder of the wrapper chain
                wseq = _spine(seq[i + 1])
                for arg in wseq[:arity - 1]:
                    out += ["{"] + _emit_item(arg) + ["}"]
                out += ["{"] + _emit_seq(wseq[arity - 1:]) + ["}"]
                i += 2
                continue
            i += 1
            continue
        if it.is_leaf:
            out.append(it.label)
            i += 1
            continue
        if _node_emits_bare(it):
            out += _emit_seq(_spine(it))
        else:
            out += ["{"] + _emit_seq(_spine(it)) + ["}"]
        i += 1
    return out


def _emit_item(t: BinTree) -> list[str]:
    if t.is_leaf:
        return [] if _is_marker(t) else [t.label]
    return _emit_seq(_spine(t))
