"""Segmentation and tree metrics.

Conventions: morpheme and constituent matching use multisets and are
micro-averaged over the item list. Constituents are ``(label, yield, start)``
triples for every node except Root, preterminals included, so trees over
different canonical forms stay comparable.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .core import Label

BOUNDARY = "#"


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


@dataclass(frozen=True)
class SegMetrics:
    accuracy: float
    morpheme_precision: float
    morpheme_recall: float
    morpheme_f1: float
    avg_edit_distance: float


@dataclass(frozen=True)
class TreeMetrics:
    constituent_precision: float
    constituent_recall: float
    constituent_f1: float


def _check_lengths(pred, gold):
    if len(pred) != len(gold):
        raise ValueError(f"prediction and gold lists differ in length: {len(pred)} vs {len(gold)}")


def accuracy(pred: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]) -> float:
    """Fraction of items whose segment list matches gold exactly."""
    _check_lengths(pred, gold)
    if not gold:
        return 0.0
    return sum(list(p) == list(g) for p, g in zip(pred, gold)) / len(gold)


def _multiset_prf(pred_bags, gold_bags) -> tuple[float, float, float]:
    hit = n_pred = n_gold = 0
    for p, g in zip(pred_bags, gold_bags):
        hit += sum((p & g).values())
        n_pred += sum(p.values())
        n_gold += sum(g.values())
    precision = hit / n_pred if n_pred else 0.0
    recall = hit / n_gold if n_gold else 0.0
    return precision, recall, _f1(precision, recall)


def morpheme_f1(pred, gold) -> tuple[float, float, float]:
    _check_lengths(pred, gold)
    return _multiset_prf([Counter(p) for p in pred], [Counter(g) for g in gold])


def levenshtein(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def boundary_edit_distance(pred, gold) -> float:
    """Mean unit-cost edit distance between ``#``-joined segmentations."""
    _check_lengths(pred, gold)
    if not gold:
        return 0.0
    total = 0
    for p, g in zip(pred, gold):
        if any(BOUNDARY in s for s in list(p) + list(g)):
            raise ValueError(f"segments may not contain the boundary marker {BOUNDARY!r}")
        total += levenshtein(BOUNDARY.join(p), BOUNDARY.join(g))
    return total / len(gold)


def constituents(tree, u: str) -> Counter:
    out = Counter()
    for node in tree.nodes():
        if node.label is Label.ROOT:
            continue
        out[(node.label.value, u[node.start:node.end], node.start)] += 1
    return out


def constituent_f1(pred, gold) -> tuple[float, float, float]:
    """``pred`` and ``gold`` are sequences of ``(tree, u)`` pairs."""
    _check_lengths(pred, gold)
    return _multiset_prf([constituents(t, u) for t, u in pred], [constituents(t, u) for t, u in gold])


def segmentation_metrics(pred, gold) -> SegMetrics:
    p, r, f = morpheme_f1(pred, gold)
    return SegMetrics(accuracy(pred, gold), p, r, f, boundary_edit_distance(pred, gold))


def tree_metrics(pred, gold) -> TreeMetrics:
    return TreeMetrics(*constituent_f1(pred, gold))


REPORT_HEADER = (
    "# morpheme F1: multiset match per word, micro-averaged\n"
    "# edit: unit-cost Levenshtein over segments joined with '#', mean per word\n"
    "# constituent F1: (label, yield, start) per non-Root node incl. preterminals, multiset, micro-averaged\n"
)


def format_report(seg: SegMetrics, tree: TreeMetrics | None = None, header: bool = True) -> str:
    rows = [
        ("morpheme_precision", seg.morpheme_precision),
        ("morpheme_recall", seg.morpheme_recall),
        ("morpheme_f1", seg.morpheme_f1),
        ("edit_distance", seg.avg_edit_distance),
        ("accuracy", seg.accuracy),
    ]
    lines = [f"{name}\t{value:.4f}" for name, value in rows]
    if tree is None:
        lines.append("constituent_f1\tN/A")
    else:
        lines.append(f"constituent_precision\t{tree.constituent_precision:.4f}")
        lines.append(f"constituent_recall\t{tree.constituent_recall:.4f}")
        lines.append(f"constituent_f1\t{tree.constituent_f1:.4f}")
    return (REPORT_HEADER if header else "") + "\n".join(lines) + "\n"
