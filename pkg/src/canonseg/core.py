"""Shared domain types: alphabet, labels, parse trees, alignments, sparse vectors.

Spans are half-open character offsets into the canonical form ``u``. Trees are
binary over the four-label word-formation grammar::

    Root   -> Word
    Word   -> Prefix Word | Word Suffix | <chars>+
    Prefix -> <chars>+
    Suffix -> <chars>+
"""
from __future__ import annotations

import enum
import math
import string
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence


class TreeError(ValueError):
    """Raised when a parse tree violates the grammar or does not fit its string."""


class AlignmentError(ValueError):
    """Raised when an alignment does not relate the strings it is used with."""


class BudgetError(ValueError):
    """Raised when a canonical form exceeds the insertion budget ``|w| + k``."""


class GuardError(ValueError):
    """Raised by exponential oracles when the input is too large to enumerate."""


# --------------------------------------------------------------------------
# Alphabet and labels
# --------------------------------------------------------------------------


class Alphabet(Sequence[str]):
    """Ordered, duplicate-free set of single characters."""

    def __init__(self, symbols: Iterable[str] = string.ascii_lowercase):
        symbols = tuple(symbols)
        if not symbols:
            raise ValueError("alphabet must be non-empty")
        if len(set(symbols)) != len(symbols):
            raise ValueError("alphabet has duplicate symbols")
        for s in symbols:
            if not isinstance(s, str) or len(s) != 1:
                raise ValueError(f"alphabet symbols must be single characters, got {s!r}")
        self._symbols = symbols
        self._index = {s: i for i, s in enumerate(symbols)}

    def __getitem__(self, i):
        return self._symbols[i]

    def __len__(self) -> int:
        return len(self._symbols)

    def __iter__(self) -> Iterator[str]:
        return iter(self._symbols)

    def __contains__(self, c) -> bool:
        return c in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Alphabet) and self._symbols == other._symbols

    def __hash__(self) -> int:
        return hash(self._symbols)

    def __repr__(self) -> str:
        return f"Alphabet({''.join(self._symbols)!r})"

    def index(self, c: str) -> int:  # type: ignore[override]
        return self._index[c]

    def covers(self, s: str) -> bool:
        return all(c in self._index for c in s)

    def __str__(self) -> str:
        return "".join(self._symbols)


class Label(str, enum.Enum):
    ROOT = "Root"
    WORD = "Word"
    PREFIX = "Prefix"
    SUFFIX = "Suffix"

    def __str__(self) -> str:
        return self.value


PRETERMINAL_LABELS = (Label.WORD, Label.PREFIX, Label.SUFFIX)


# --------------------------------------------------------------------------
# Parse trees
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParseTree:
    label: Label
    start: int
    end: int
    children: tuple["ParseTree", ...] = ()

    @classmethod
    def leaf(cls, label: Label, start: int, end: int) -> "ParseTree":
        return cls(Label(label), start, end)

    @classmethod
    def binary(cls, left: "ParseTree", right: "ParseTree") -> "ParseTree":
        return cls(Label.WORD, left.start, right.end, (left, right))

    @classmethod
    def root(cls, word: "ParseTree") -> "ParseTree":
        return cls(Label.ROOT, word.start, word.end, (word,))

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    def nodes(self) -> Iterator["ParseTree"]:
        """Pre-order traversal."""
        yield self
        for child in self.children:
            yield from child.nodes()

    def leaves(self) -> Iterator["ParseTree"]:
        if self.is_leaf:
            yield self
        else:
            for child in self.children:
                yield from child.leaves()

    def without_root(self) -> "ParseTree":
        return self.children[0] if self.label is Label.ROOT else self

    def with_root(self) -> "ParseTree":
        return self if self.label is Label.ROOT else ParseTree.root(self)

    def to_sexpr(self, u: str) -> str:
        """Bracketed form with segment strings at the leaves; Root is omitted."""
        node = self.without_root()
        if node.is_leaf:
            return f"({node.label.value} {u[node.start:node.end]})"
        return f"({node.label.value} {' '.join(c.to_sexpr(u) for c in node.children)})"

    def to_brackets(self, u: str) -> str:
        """Compact bracket notation, e.g. ``[[un [[test] able]] ly]``."""
        node = self.without_root()
        if node.is_leaf:
            seg = u[node.start:node.end]
            return f"[{seg}]" if node.label is Label.WORD else seg
        return "[" + " ".join(c.to_brackets(u) for c in node.children) + "]"


def tree_from_segments(shape, segments: Sequence[str] | None = None) -> ParseTree:
    """Build a Root-wrapped tree from a nested ``(label, payload)`` description.

    ``shape`` is either ``(label, "segment")`` for a preterminal or
    ``(Label.WORD, left_shape, right_shape)`` for a binary node.
    """

    def build(node, offset):
        label = Label(node[0])
        if len(node) == 2 and isinstance(node[1], str):
            seg = node[1]
            return ParseTree.leaf(label, offset, offset + len(seg)), offset + len(seg)
        if len(node) != 3:
            raise TreeError(f"malformed shape {node!r}")
        left, mid = build(node[1], offset)
        right, end = build(node[2], mid)
        return ParseTree(label, offset, end, (left, right)), end

    tree, _ = build(shape, 0)
    return ParseTree.root(tree)


_BINARY_RULES = {
    (Label.PREFIX, Label.WORD),
    (Label.WORD, Label.SUFFIX),
}


def check_tree(t: ParseTree, u: str) -> str | None:
    """Return a description of the first violated tree invariant, or None."""
    if not isinstance(t, ParseTree):
        return f"not a ParseTree: {type(t).__name__}"
    if t.start != 0 or t.end != len(u):
        return f"root span ({t.start},{t.end}) does not cover [0,{len(u)})"
    if t.label is Label.ROOT:
        if len(t.children) != 1:
            return "Root must have exactly one child"
        child = t.children[0]
        if child.label is not Label.WORD:
            return f"Root child must be Word, got {child.label.value}"
        if child.span != t.span:
            return "Root child must span the full string"
        t = child
    return _check_node(t, is_top=True)


def _check_node(node: ParseTree, is_top: bool) -> str | None:
    try:
        label = Label(node.label)
    except ValueError:
        return f"unknown label {node.label!r}"
    if label is Label.ROOT:
        return f"Root below the top at ({node.start},{node.end})"
    if node.start >= node.end:
        return f"empty span ({node.start},{node.end}) for {label.value}"
    if is_top and label is not Label.WORD:
        return f"top node must be Word, got {label.value}"
    if not node.children:
        return None
    if len(node.children) != 2:
        return f"{label.value} at ({node.start},{node.end}) has {len(node.children)} children"
    left, right = node.children
    if label is not Label.WORD or (left.label, right.label) not in _BINARY_RULES:
        return (
            f"illegal production {label.value} -> {left.label} {right.label} "
            f"at ({node.start},{node.end})"
        )
    if left.start != node.start or right.end != node.end:
        return f"children do not cover parent span ({node.start},{node.end})"
    if left.end != right.start:
        return f"non-tiling sibling spans ({left.start},{left.end}) and ({right.start},{right.end})"
    return _check_node(left, False) or _check_node(right, False)


def validate_tree(t: ParseTree, u: str) -> str | None:
    """Alias of :func:`check_tree`; ``None`` means the tree is valid."""
    return check_tree(t, u)


def require_tree(t: ParseTree, u: str) -> None:
    problem = check_tree(t, u)
    if problem is not None:
        raise TreeError(problem)


def tree_to_segments(t: ParseTree, u: str) -> list[str]:
    require_tree(t, u)
    return [u[leaf.start:leaf.end] for leaf in t.leaves()]


MAX_ENUMERATION_LENGTH = 8


def enumerate_trees(u: str) -> list[ParseTree]:
    """All grammar-valid Root-wrapped trees over ``u`` (exponential; |u| <= 8)."""
    n = len(u)
    if not 1 <= n <= MAX_ENUMERATION_LENGTH:
        raise GuardError(f"enumerate_trees needs 1 <= |u| <= {MAX_ENUMERATION_LENGTH}, got {n}")
    memo: dict[tuple[int, int], list[ParseTree]] = {}

    def words(i, k):
        if (i, k) in memo:
            return memo[i, k]
        out = [ParseTree.leaf(Label.WORD, i, k)]
        for j in range(i + 1, k):
            prefix = ParseTree.leaf(Label.PREFIX, i, j)
            for right in words(j, k):
                out.append(ParseTree.binary(prefix, right))
            suffix = ParseTree.leaf(Label.SUFFIX, j, k)
            for left in words(i, j):
                out.append(ParseTree.binary(left, suffix))
        memo[i, k] = out
        return out

    return [ParseTree.root(t) for t in words(0, n)]


# --------------------------------------------------------------------------
# Alignments
# --------------------------------------------------------------------------

SUB, DEL, INS = "S", "D", "I"


@dataclass(frozen=True)
class EditAction:
    """One monotonic edit step between the surface word and its canonical form.

    ``consumed`` is read from the surface word; ``emitted`` is written to the
    canonical form. Substitutions do both, deletions only consume, insertions
    only emit.
    """

    kind: str
    consumed: str | None = None
    emitted: str | None = None

    def __post_init__(self):
        if self.kind == SUB:
            ok = self.consumed is not None and self.emitted is not None
        elif self.kind == DEL:
            ok = self.consumed is not None and self.emitted is None
        elif self.kind == INS:
            ok = self.consumed is None and self.emitted is not None
        else:
            ok = False
        if not ok:
            raise AlignmentError(f"malformed edit action {self!r}")
        for c in (self.consumed, self.emitted):
            if c is not None and len(c) != 1:
                raise AlignmentError(f"edit actions move single characters, got {c!r}")

    @classmethod
    def sub(cls, consumed: str, emitted: str) -> "EditAction":
        return cls(SUB, consumed, emitted)

    @classmethod
    def delete(cls, consumed: str) -> "EditAction":
        return cls(DEL, consumed, None)

    @classmethod
    def insert(cls, emitted: str) -> "EditAction":
        return cls(INS, None, emitted)

    @property
    def name(self) -> str:
        """Stable identifier used in feature strings, e.g. ``S:a>b``."""
        if self.kind == SUB:
            return f"S:{self.consumed}>{self.emitted}"
        if self.kind == DEL:
            return f"D:{self.consumed}"
        return f"I:{self.emitted}"

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Alignment:
    actions: tuple[EditAction, ...]

    def __init__(self, actions: Iterable[EditAction]):
        object.__setattr__(self, "actions", tuple(actions))

    @property
    def canonical(self) -> str:
        return "".join(a.emitted for a in self.actions if a.emitted is not None)

    @property
    def surface(self) -> str:
        return "".join(a.consumed for a in self.actions if a.consumed is not None)

    def aligns(self, u: str, w: str) -> bool:
        return self.canonical == u and self.surface == w

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def __str__(self) -> str:
        return " ".join(a.name for a in self.actions)


# --------------------------------------------------------------------------
# Sparse vectors
# --------------------------------------------------------------------------


class SparseVector(dict):
    """Mapping from feature identifiers to reals with no stored zeros."""

    def __init__(self, entries: Mapping[str, float] | Iterable[tuple[str, float]] = ()):
        super().__init__()
        items = entries.items() if isinstance(entries, Mapping) else entries
        for key, value in items:
            self.add_to(key, value)

    @classmethod
    def from_counts(cls, features: Iterable[str], scale: float = 1.0) -> "SparseVector":
        out = cls()
        for f in features:
            out.add_to(f, scale)
        return out

    def add_to(self, key: str, value: float) -> None:
        value = self.get(key, 0.0) + value
        if value == 0.0:
            self.pop(key, None)
        else:
            self[key] = value

    def iadd(self, other: Mapping[str, float], scale: float = 1.0) -> "SparseVector":
        for key, value in other.items():
            self.add_to(key, scale * value)
        return self

    def dot(self, other: Mapping[str, float]) -> float:
        if len(other) < len(self):
            self, other = other, self  # type: ignore[assignment]
        get = other.get
        total = 0.0
        for key, value in self.items():
            w = get(key)
            if w is not None:
                total += value * w
        return total

    def scaled(self, factor: float) -> "SparseVector":
        return SparseVector((k, factor * v) for k, v in self.items())

    def __add__(self, other):
        return SparseVector(self).iadd(other)

    def __sub__(self, other):
        return SparseVector(self).iadd(other, -1.0)

    def __neg__(self):
        return self.scaled(-1.0)

    def subset(self, prefix: str) -> "SparseVector":
        return SparseVector((k, v) for k, v in self.items() if k.startswith(prefix))

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values()))

    def copy(self) -> "SparseVector":
        return SparseVector(self)


# --------------------------------------------------------------------------
# Model parameters
# --------------------------------------------------------------------------

DEFAULT_K = 5


@dataclass
class ModelParameters:
    """Parser weights ``omega`` and transducer weights ``eta`` plus their context."""

    omega: SparseVector = field(default_factory=SparseVector)
    eta: SparseVector = field(default_factory=SparseVector)
    alphabet: Alphabet = field(default_factory=Alphabet)
    k: int = DEFAULT_K
    lexicon: frozenset = frozenset()
    transducer_config: "object | None" = None
    parser_config: "object | None" = None
    structure: str = "hier"

    def __post_init__(self):
        if self.structure not in ("hier", "flat"):
            raise ValueError(f"structure must be 'hier' or 'flat', got {self.structure!r}")
        if self.k < 0:
            raise ValueError(f"insertion budget k must be non-negative, got {self.k}")
        # shared dicts are kept as-is; training mutates one namespaced vector in place
        if not isinstance(self.omega, SparseVector):
            self.omega = SparseVector(self.omega)
        if not isinstance(self.eta, SparseVector):
            self.eta = SparseVector(self.eta)
        if not isinstance(self.alphabet, Alphabet):
            self.alphabet = Alphabet(self.alphabet)
        if not isinstance(self.lexicon, frozenset):
            self.lexicon = frozenset(w.lower() for w in self.lexicon)
        if self.transducer_config is None:
            from .transducer import TransducerFeatureConfig

            self.transducer_config = TransducerFeatureConfig()
        if self.parser_config is None:
            from .parser import ParserFeatureConfig

            self.parser_config = ParserFeatureConfig()

    def in_lexicon(self, segment: str) -> bool:
        return segment.lower() in self.lexicon

    def vector(self) -> SparseVector:
        """Both weight vectors in one namespace (feature ids carry their factor)."""
        return SparseVector(self.omega).iadd(self.eta)

    def with_vector(self, theta: Mapping[str, float]) -> "ModelParameters":
        omega = SparseVector((f, v) for f, v in theta.items() if not f.startswith("t|"))
        eta = SparseVector((f, v) for f, v in theta.items() if f.startswith("t|"))
        return ModelParameters(
            omega, eta, self.alphabet, self.k, self.lexicon,
            self.transducer_config, self.parser_config, self.structure,
        )
