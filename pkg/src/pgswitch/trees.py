"""Bracketed constituency trees and leaf distances.

Distances count every edge, preterminal edges included: in
``(S (NP (DT the) (NN dog)) (VP (VBD ran)))`` the leaf ``the`` sits 3 edges
below the root and ``the``/``dog`` are 4 edges apart.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence

_TOKEN = re.compile(r"\(|\)|[^\s()]+")


class ParseError(ValueError):
    def __init__(self, message: str, offset: int, line: int | None = None):
        where = f"line {line}, offset {offset}" if line is not None else f"offset {offset}"
        super().__init__(f"{message} at {where}")
        self.offset = offset
        self.line = line


@dataclass
class ParseTree:
    """A constituent. Preterminals hold exactly one word string as child."""

    label: str
    children: list = field(default_factory=list)

    @property
    def is_preterminal(self) -> bool:
        return len(self.children) == 1 and isinstance(self.children[0], str)

    def preterminals(self) -> Iterator["ParseTree"]:
        if self.is_preterminal:
            yield self
            return
        for ch in self.children:
            yield from ch.preterminals()

    def leaves(self) -> list[str]:
        return [pt.children[0] for pt in self.preterminals()]

    def pos(self) -> list[str]:
        return [pt.label for pt in self.preterminals()]

    def leaf_paths(self) -> list[tuple[int, ...]]:
        """Child-index path from the root down to each leaf's preterminal."""
        out: list[tuple[int, ...]] = []

        def walk(node, path):
            if node.is_preterminal:
                out.append(path)
                return
            for k, ch in enumerate(node.children):
                walk(ch, path + (k,))

        walk(self, ())
        return out

    def to_bracketed(self) -> str:
        if self.is_preterminal:
            return f"({self.label} {self.children[0]})"
        inner = " ".join(ch.to_bracketed() for ch in self.children)
        return f"({self.label} {inner})" if self.label else f"( {inner})"

    def __str__(self):
        return self.to_bracketed()


def parse_tree(text: str, line: int | None = None) -> ParseTree:
    toks = [(m.group(), m.start()) for m in _TOKEN.finditer(text)]
    if not toks:
        raise ParseError("empty tree", 0, line)
    pos = 0

    def node():
        nonlocal pos
        tok, off = toks[pos]
        if tok != "(":
            raise ParseError(f"expected '(' but found {tok!r}", off, line)
        pos += 1
        if pos == len(toks):
            raise ParseError("unexpected end of input", len(text), line)
        label = ""
        if toks[pos][0] not in "()":
            label = toks[pos][0]
            pos += 1
        children: list = []
        while True:
            if pos == len(toks):
                raise ParseError("unbalanced parentheses: unexpected end of input", len(text), line)
            tok, off = toks[pos]
            if tok == ")":
                pos += 1
                break
            if tok == "(":
                children.append(node())
            else:
                if children:
                    raise ParseError(f"word {tok!r} mixed with constituents", off, line)
                children.append(tok)
                pos += 1
                if pos < len(toks) and toks[pos][0] != ")":
                    raise ParseError("preterminal must hold exactly one word", toks[pos][1], line)
        if not children:
            raise ParseError("empty constituent", off, line)
        if not label and len(children) == 1 and isinstance(children[0], str):
            raise ParseError("word without a part-of-speech label", off, line)
        return ParseTree(label, children)

    tree = node()
    if pos != len(toks):
        raise ParseError(f"trailing input {toks[pos][0]!r}", toks[pos][1], line)
    return tree


def read_parses(text: str) -> list[ParseTree]:
    """One bracketed sentence per non-blank line."""
    trees = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if raw.strip():
            trees.append(parse_tree(raw, lineno))
    if not trees:
        raise ParseError("no trees in input", 0)
    return trees


def root_distance(tree: ParseTree, leaf: int) -> int:
    paths = tree.leaf_paths()
    if not 0 <= leaf < len(paths):
        raise IndexError(f"leaf index {leaf} out of range (0..{len(paths) - 1})")
    return len(paths[leaf]) + 1


def _pair_distance(pa: tuple[int, ...], pb: tuple[int, ...]) -> int:
    common = 0
    for x, y in zip(pa, pb):
        if x != y:
            break
        common += 1
    # +1 on each side for the preterminal -> word edge
    return (len(pa) - common + 1) + (len(pb) - common + 1)


def edge_distance(trees: ParseTree | Sequence[ParseTree], i: int) -> int | None:
    """Edges between leaf i-1 and leaf i; None for a sentence-initial leaf.

    ``trees`` is one tree or the sentence trees of a summary, with ``i``
    indexing the concatenated leaves.
    """
    if isinstance(trees, ParseTree):
        trees = [trees]
    offset = 0
    for tree in trees:
        paths = tree.leaf_paths()
        if i < offset + len(paths):
            if i < 0:
                break
            k = i - offset
            return None if k == 0 else _pair_distance(paths[k - 1], paths[k])
        offset += len(paths)
    raise IndexError(f"token index {i} out of range (0..{offset - 1})")


@dataclass
class StructuralFeatures:
    tokens: list[str]
    pos: list[str]
    d_root: list[int]
    d_edge: list[int | None]


def structural_features(trees: Sequence[ParseTree]) -> StructuralFeatures:
    tokens, pos, d_root, d_edge = [], [], [], []
    for tree in trees:
        paths = tree.leaf_paths()
        tokens.extend(tree.leaves())
        pos.extend(tree.pos())
        for k, p in enumerate(paths):
            d_root.append(len(p) + 1)
            d_edge.append(None if k == 0 else _pair_distance(paths[k - 1], p))
    return StructuralFeatures(tokens, pos, d_root, d_edge)


def read_parse_file(path) -> dict[str, list[ParseTree]]:
    """Lines of ``doc_id<TAB>(tree)``; trees keep file order per document."""
    out: dict[str, list[ParseTree]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            if "\t" not in raw:
                raise ParseError("expected doc_id<TAB>tree", 0, lineno)
            doc, text = raw.rstrip("\n").split("\t", 1)
            try:
                out.setdefault(doc, []).append(parse_tree(text, lineno))
            except ParseError as e:
                raise ParseError(f"{path}: {str(e).rsplit(' at ', 1)[0]}", e.offset + len(doc) + 1, lineno) from None
    return out
