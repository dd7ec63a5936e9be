"""Threshold access trees: parsing, evaluation and polynomial secret sharing.

A leaf is identified by its *path*, the tuple of 1-based child positions
leading from the root to it (the root itself has path ``()``). Paths rather
than attributes key the share maps because one attribute may label several
leaves.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional, Union

import numpy as np

from .errors import CombineAborted, PolicyError, PolicySyntaxError
from .ring import Params, RingElement, add, sample_uniform, scale

Path = tuple[int, ...]
ShareMap = dict[Path, RingElement]


@dataclass(frozen=True)
class Leaf:
    attribute: int

    def __post_init__(self):
        if not isinstance(self.attribute, int) or self.attribute < 1:
            raise PolicyError(f"attribute ids are positive integers, got {self.attribute!r}")

    @property
    def threshold(self) -> int:
        return 1


@dataclass(frozen=True)
class Inner:
    threshold: int
    children: tuple["Node", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise PolicyError("inner node without children")
        if not 1 <= self.threshold <= len(self.children):
            raise PolicyError(f"threshold {self.threshold} outside 1..{len(self.children)}")


Node = Union[Leaf, Inner]


@dataclass(frozen=True)
class AccessTree:
    root: Node

    def walk(self) -> Iterator[tuple[Path, Node]]:
        """Preorder traversal yielding ``(path, node)``."""
        stack: list[tuple[Path, Node]] = [((), self.root)]
        while stack:
            path, node = stack.pop()
            yield path, node
            if isinstance(node, Inner):
                for i in range(len(node.children), 0, -1):
                    stack.append((path + (i,), node.children[i - 1]))

    def leaves(self) -> list[tuple[Path, Leaf]]:
        return [(path, node) for path, node in self.walk() if isinstance(node, Leaf)]

    def leaf_paths(self) -> list[Path]:
        return [path for path, _ in self.leaves()]

    def attributes(self) -> frozenset[int]:
        return frozenset(leaf.attribute for _, leaf in self.leaves())

    def node_at(self, path: Path) -> Node:
        node = self.root
        for i in path:
            node = node.children[i - 1]
        return node

    def depth(self) -> int:
        return max(len(path) for path, _ in self.walk())

    def validate(self, n_attrs: Optional[int] = None, q: Optional[int] = None) -> None:
        for _, node in self.walk():
            if isinstance(node, Leaf):
                if n_attrs is not None and node.attribute > n_attrs:
                    raise PolicyError(f"attribute {node.attribute} outside universe 1..{n_attrs}")
            elif q is not None and len(node.children) >= q:
                raise PolicyError(f"node with {len(node.children)} children needs q > arity")

    def __str__(self):
        return format_policy(self)


def attribute_set(values: Iterable[int], n_attrs: Optional[int] = None) -> frozenset[int]:
    """Validate and freeze an attribute collection."""
    out = frozenset(int(v) for v in values)
    for v in out:
        if v < 1 or (n_attrs is not None and v > n_attrs):
            raise PolicyError(f"attribute {v} outside universe 1..{n_attrs}")
    return out


# ---------------------------------------------------------------------------
# textual syntax

_TOKEN = re.compile(r"\s*(?:(?P<int>\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_.-]*)|(?P<punct>[(),]))")
_KEYWORDS = ("and", "or", "thresh")


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    line_starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def where(offset):
        line = max(i for i, s in enumerate(line_starts) if s <= offset)
        return line + 1, offset - line_starts[line] + 1

    while True:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:]
            stripped = rest.lstrip()
            if not stripped:
                break
            off = pos + len(rest) - len(stripped)
            raise PolicySyntaxError(f"unexpected character {stripped[0]!r}", *where(off))
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), *where(start)))
        pos = m.end()
    toks.append(_Tok("eof", "", *where(len(text))))
    return toks


class _Parser:
    def __init__(self, text, n_attrs, names):
        self.toks = _tokenize(text)
        self.i = 0
        self.n_attrs = n_attrs
        self.names = names or {}

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, text=None):
        tok = self.toks[self.i]
        if (kind and tok.kind != kind) or (text and tok.text != text):
            want = repr(text) if text else kind
            got = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise PolicySyntaxError(f"expected {want}, found {got}", tok.line, tok.col)
        self.i += 1
        return tok

    def leaf(self, attr, tok):
        if attr < 1:
            raise PolicySyntaxError("attribute ids start at 1", tok.line, tok.col)
        if self.n_attrs is not None and attr > self.n_attrs:
            raise PolicySyntaxError(f"attribute {attr} outside universe 1..{self.n_attrs}", tok.line, tok.col)
        return Leaf(attr)

    def expr(self):
        tok = self.take("ident")
        word = tok.text
        if word in _KEYWORDS:
            self.take("punct", "(")
            if word == "thresh":
                k_tok = self.take("int")
                self.take("punct", ",")
            children = [self.expr()]
            while self.peek().text == ",":
                self.take("punct", ",")
                children.append(self.expr())
            self.take("punct", ")")
            if word == "and":
                k = len(children)
            elif word == "or":
                k = 1
            else:
                k = int(k_tok.text)
                if not 1 <= k <= len(children):
                    raise PolicySyntaxError(
                        f"threshold {k} not in 1..{len(children)}", k_tok.line, k_tok.col)
            return Inner(k, tuple(children))
        m = re.fullmatch(r"att(\d+)", word)
        if m:
            return self.leaf(int(m.group(1)), tok)
        if word == "att" and self.peek().kind == "int":
            return self.leaf(int(self.take("int").text), tok)
        if word in self.names:
            return self.leaf(self.names[word], tok)
        raise PolicySyntaxError(f"unknown attribute or operator {word!r}", tok.line, tok.col)


def parse_policy(text: str, n_attrs: Optional[int] = None,
                 names: Optional[Mapping[str, int]] = None) -> AccessTree:
    """Parse ``and(...)``/``or(...)``/``thresh(k, ...)``/``attN`` syntax.

    ``names`` optionally maps bare identifiers to attribute ids, which is how
    the CLI lets policies mention human-readable attribute names.
    """
    parser = _Parser(text, n_attrs, names)
    root = parser.expr()
    parser.take("eof")
    return AccessTree(root)


def format_policy(tree: AccessTree) -> str:
    def fmt(node):
        if isinstance(node, Leaf):
            return f"att{node.attribute}"
        inner = ", ".join(fmt(c) for c in node.children)
        if node.threshold == len(node.children):
            return f"and({inner})"
        if node.threshold == 1:
            return f"or({inner})"
        return f"thresh({node.threshold}, {inner})"

    return fmt(tree.root)


# ---------------------------------------------------------------------------
# satisfaction

def evaluate(tree: AccessTree, att: Iterable[int]) -> bool:
    att = frozenset(att)

    def sat(node):
        if isinstance(node, Leaf):
            return node.attribute in att
        return sum(1 for c in node.children if sat(c)) >= node.threshold

    return sat(tree.root)


def select_satisfying_subset(tree: AccessTree, att: Iterable[int]) -> Optional[frozenset[Path]]:
    """Minimal leaf set witnessing ``att``; lowest-indexed children win ties.

    Every inner node on the way keeps exactly ``k_v`` satisfied children.
    Returns ``None`` when ``att`` does not satisfy the tree.
    """
    att = frozenset(att)

    def pick(path, node):
        if isinstance(node, Leaf):
            return {path} if node.attribute in att else None
        chosen: set[Path] = set()
        taken = 0
        for i, child in enumerate(node.children, start=1):
            sub = pick(path + (i,), child)
            if sub is not None:
                chosen |= sub
                taken += 1
                if taken == node.threshold:
                    return chosen
        return None

    result = pick((), tree.root)
    return None if result is None else frozenset(result)


# ---------------------------------------------------------------------------
# sharing

def lagrange_at_zero(indices: list[int], which: int, q: int) -> int:
    """Weight of ``indices[which]`` when interpolating a polynomial at 0 mod q."""
    if len(set(indices)) != len(indices):
        raise ValueError(f"duplicate interpolation indices {indices}")
    i_j = indices[which]
    num, den = 1, 1
    for t, i_t in enumerate(indices):
        if t != which:
            num = num * (-i_t) % q
            den = den * (i_j - i_t) % q
    return num * pow(den, -1, q) % q


def _evaluate_poly(coeffs: list[RingElement], x: int) -> RingElement:
    # Horner in R_q with scalar x
    acc = coeffs[-1]
    for c in reversed(coeffs[:-1]):
        acc = add(scale(acc, x), c)
    return acc


def share(tree: AccessTree, params: Params, secret: RingElement,
          rng: np.random.Generator) -> ShareMap:
    tree.validate(q=params.q)
    shares: ShareMap = {}
    stack: list[tuple[Path, Node, RingElement]] = [((), tree.root, secret)]
    while stack:
        path, node, value = stack.pop()
        if isinstance(node, Leaf):
            shares[path] = value
            continue
        poly = [value] + [sample_uniform(params, rng) for _ in range(node.threshold - 1)]
        for i, child in enumerate(node.children, start=1):
            stack.append((path + (i,), child, _evaluate_poly(poly, i)))
    return shares


def combine(tree: AccessTree, params: Params, shares: Mapping[Path, RingElement]) -> RingElement:
    """Rebuild the root secret bottom-up from leaf shares.

    Where more than ``k_v`` children are recoverable the lowest-indexed
    ``k_v`` are used. Raises :class:`CombineAborted` if the available leaves
    do not satisfy the tree.
    """
    q = params.q

    def value(path, node):
        if isinstance(node, Leaf):
            return shares.get(path)
        got: list[tuple[int, RingElement]] = []
        for i, child in enumerate(node.children, start=1):
            v = value(path + (i,), child)
            if v is not None:
                got.append((i, v))
                if len(got) == node.threshold:
                    break
        if len(got) < node.threshold:
            return None
        idx = [i for i, _ in got]
        acc = RingElement.zero(params)
        for j, (_, v) in enumerate(got):
            acc = add(acc, scale(v, lagrange_at_zero(idx, j, q)))
        return acc

    result = value((), tree.root)
    if result is None:
        raise CombineAborted("shares do not satisfy the access tree")
    return result


def random_tree(rng: np.random.Generator, n_attrs: int, max_leaves: int = 16,
                max_depth: int = 4, max_arity: int = 4) -> AccessTree:
    """Random threshold tree with at most ``max_leaves`` leaves and given depth bound."""
    budget = [int(rng.integers(1, max_leaves + 1))]

    def build(depth):
        if depth >= max_depth or budget[0] <= 1 or rng.random() < 0.3:
            budget[0] -= 1
            return Leaf(int(rng.integers(1, n_attrs + 1)))
        arity = int(rng.integers(1, min(max_arity, budget[0]) + 1))
        budget[0] -= arity
        children = []
        for _ in range(arity):
            budget[0] += 1  # reserve one leaf slot per child
            children.append(build(depth + 1))
        return Inner(int(rng.integers(1, arity + 1)), tuple(children))

    return AccessTree(build(0))
