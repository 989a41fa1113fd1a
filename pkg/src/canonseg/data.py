"""Treebank and lexicon files, annotation checks and train/dev/test splits.

Treebank lines look like::

    untestably<TAB>(Word (Word (Prefix un) (Word (Word test) (Suffix able))) (Suffix ly))

The leaves are canonical segments; the canonical form is their concatenation.
Blank lines and lines starting with ``#`` are ignored.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Label, ParseTree, check_tree

_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_LEAF_LABELS = {"Word": Label.WORD, "Prefix": Label.PREFIX, "Suffix": Label.SUFFIX}


class FormatError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


@dataclass(frozen=True)
class TreebankEntry:
    surface: str
    canonical: str
    tree: ParseTree

    @property
    def segments(self) -> list[str]:
        return [self.canonical[leaf.start:leaf.end] for leaf in self.tree.leaves()]


def parse_tree(sexpr: str, lineno: int | None = None) -> tuple[ParseTree, str]:
    """Parse a bracketed tree; returns the Root-wrapped tree and its canonical form."""
    tokens = _TOKEN.findall(sexpr)
    if "".join(tokens) != re.sub(r"\s+", "", sexpr):
        raise FormatError(f"unexpected characters in {sexpr!r}", lineno)
    pos = 0
    pieces: list[str] = []

    def expect(tok):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != tok:
            got = tokens[pos] if pos < len(tokens) else "end of input"
            raise FormatError(f"expected {tok!r}, got {got!r}", lineno)
        pos += 1

    def node(offset: int) -> tuple[ParseTree, int]:
        nonlocal pos
        expect("(")
        if pos >= len(tokens) or tokens[pos] in ("(", ")"):
            raise FormatError("missing label", lineno)
        name = tokens[pos]
        pos += 1
        if name not in _LEAF_LABELS:
            raise FormatError(f"unknown label {name!r}", lineno)
        label = _LEAF_LABELS[name]
        if pos < len(tokens) and tokens[pos] not in ("(", ")"):
            seg = tokens[pos]
            pos += 1
            expect(")")
            pieces.append(seg)
            return ParseTree.leaf(label, offset, offset + len(seg)), offset + len(seg)
        if pos < len(tokens) and tokens[pos] == ")":
            raise FormatError(f"empty leaf under {name}", lineno)
        left, mid = node(offset)
        right, end = node(mid)
        expect(")")
        if label is not Label.WORD or (left.label, right.label) not in (
            (Label.PREFIX, Label.WORD),
            (Label.WORD, Label.SUFFIX),
        ):
            raise FormatError(
                f"illegal production {name} -> {left.label.value} {right.label.value}", lineno
            )
        return ParseTree(label, offset, end, (left, right)), end

    tree, _ = node(0)
    if pos != len(tokens):
        raise FormatError(f"trailing tokens after tree: {' '.join(tokens[pos:])!r}", lineno)
    u = "".join(pieces)
    tree = ParseTree.root(tree)
    problem = check_tree(tree, u)
    if problem is not None:
        raise FormatError(problem, lineno)
    return tree, u


def parse_entry(line: str, lineno: int | None = None) -> TreebankEntry:
    line = line.rstrip("\r\n")
    if "\t" not in line:
        raise FormatError("expected <surface>\\t<tree>", lineno)
    surface, sexpr = line.split("\t", 1)
    surface = surface.strip()
    if not surface:
        raise FormatError("empty surface form", lineno)
    tree, u = parse_tree(sexpr, lineno)
    return TreebankEntry(surface, u, tree)


def serialize_entry(entry: TreebankEntry) -> str:
    return f"{entry.surface}\t{entry.tree.to_sexpr(entry.canonical)}"


def _content_lines(lines: Iterable[str]):
    for lineno, line in enumerate(lines, 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield lineno, line


def read_treebank(lines: Iterable[str]) -> list[TreebankEntry]:
    return [parse_entry(line, lineno) for lineno, line in _content_lines(lines)]


def load_treebank(path: str | os.PathLike) -> list[TreebankEntry]:
    with open(path, encoding="utf-8") as fh:
        return read_treebank(fh)


def write_treebank(entries: Iterable[TreebankEntry], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(serialize_entry(e) + "\n")


def read_lexicon(lines: Iterable[str]) -> frozenset:
    return frozenset(line.strip().lower() for _, line in _content_lines(lines))


def load_lexicon(path: str | os.PathLike | None) -> frozenset:
    if path is None:
        return frozenset()
    with open(path, encoding="utf-8") as fh:
        return read_lexicon(fh)


def validate_principles(entry: TreebankEntry, lexicon) -> list[str]:
    """Advisory warnings for Word spans that are not attested words.

    Orthographic restoration legitimately produces unattested canonical
    spans, so these never make an entry invalid.
    """
    warnings = []
    u = entry.canonical
    for node in entry.tree.nodes():
        if node.label is Label.WORD:
            span = u[node.start:node.end]
            if span.lower() not in lexicon:
                warnings.append(f"{entry.surface}: Word span {span!r} is not in the lexicon")
    return warnings


# --------------------------------------------------------------------------
# Splits
# --------------------------------------------------------------------------

DEFAULT_SIZES = (5454, 1000, 1000)
N_SPLITS = 10


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    sizes: tuple[int, int, int] = DEFAULT_SIZES
    index: int = 0

    def __post_init__(self):
        if not 0 <= self.index < N_SPLITS:
            raise ValueError(f"split index must be in [0, {N_SPLITS}), got {self.index}")
        if any(s < 0 for s in self.sizes):
            raise ValueError("split sizes must be non-negative")

    def resolved_sizes(self, total: int) -> tuple[int, int, int]:
        train, dev, test = self.sizes
        wanted = train + dev + test
        if total >= wanted:
            return train, dev, test
        dev = total * dev // wanted
        test = total * test // wanted
        return total - dev - test, dev, test


def split_indices(n_entries: int, spec: SplitSpec) -> tuple[list[int], list[int], list[int]]:
    n_train, n_dev, n_test = spec.resolved_sizes(n_entries)
    universe = np.random.default_rng(spec.seed).permutation(n_entries)[: n_train + n_dev + n_test]
    universe = np.sort(universe)
    order = np.random.default_rng([spec.seed, spec.index]).permutation(universe)
    train = sorted(int(i) for i in order[:n_train])
    dev = sorted(int(i) for i in order[n_train:n_train + n_dev])
    test = sorted(int(i) for i in order[n_train + n_dev:])
    return train, dev, test


def make_splits(entries: Sequence, spec: SplitSpec):
    train, dev, test = split_indices(len(entries), spec)
    return [entries[i] for i in train], [entries[i] for i in dev], [entries[i] for i in test]


def write_split_manifest(directory: str | os.PathLike, indices) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, idx in zip(("train", "dev", "test"), indices):
        path = directory / f"{name}.idx"
        path.write_text("".join(f"{i}\n" for i in idx), encoding="utf-8")
        paths.append(path)
    return paths


def bundled(name: str) -> Path:
    """Path of a data file shipped with the package (``toy_treebank.tsv`` etc.)."""
    return Path(__file__).with_name("resources") / name
