"""Exhaustive reference computations for small inputs.

These enumerate alignments, canonical forms, trees and segmentations
explicitly, sharing nothing with the dynamic programs except the feature
definitions. Every entry point refuses inputs beyond its guard.
"""
from __future__ import annotations

import itertools
import math
from typing import Callable, Iterator, Mapping, Sequence

from .core import (
    Alignment,
    Alphabet,
    EditAction,
    GuardError,
    SparseVector,
    enumerate_trees,
)

MAX_ALIGN_LENGTH = 6
MAX_ALPHABET = 3
MAX_JOINT_LENGTH = 5


def enumerate_alignments(u: str, w: str) -> list[Alignment]:
    """Every monotonic alignment between ``u`` (emitted) and ``w`` (consumed)."""
    if len(u) > MAX_ALIGN_LENGTH or len(w) > MAX_ALIGN_LENGTH:
        raise GuardError(f"alignment enumeration limited to length {MAX_ALIGN_LENGTH}")
    out = []

    def walk(i, j, acc):
        if i == len(w) and j == len(u):
            out.append(Alignment(acc))
            return
        if i < len(w) and j < len(u):
            walk(i + 1, j + 1, acc + [EditAction.sub(w[i], u[j])])
        if j < len(u):
            walk(i, j + 1, acc + [EditAction.insert(u[j])])
        if i < len(w):
            walk(i + 1, j, acc + [EditAction.delete(w[i])])

    walk(0, 0, [])
    return out


def delannoy(m: int, n: int) -> int:
    return sum(math.comb(m, d) * math.comb(n, d) * 2**d for d in range(min(m, n) + 1))


def canonical_forms(alphabet: Alphabet, max_len: int) -> Iterator[str]:
    for length in range(1, max_len + 1):
        for chars in itertools.product(alphabet, repeat=length):
            yield "".join(chars)


def lattice_paths(w: str, alphabet: Alphabet, k: int) -> Iterator[tuple[str, Alignment]]:
    """All accepting ``(u, a)`` pairs of the edit lattice."""
    if len(alphabet) > MAX_ALPHABET or len(w) + k > MAX_JOINT_LENGTH:
        raise GuardError(f"lattice enumeration needs |alphabet| <= {MAX_ALPHABET} and |w|+k <= {MAX_JOINT_LENGTH}")
    for u in canonical_forms(alphabet, len(w) + k):
        for a in enumerate_alignments(u, w):
            yield u, a


def enumerate_segmentations(u: str) -> list[tuple[int, ...]]:
    """Boundary tuples (including 0 and |u|) of every segmentation of ``u``."""
    if not 1 <= len(u) <= 12:
        raise GuardError("segmentation enumeration needs 1 <= |u| <= 12")
    inner = range(1, len(u))
    out = []
    for r in range(len(u)):
        for cuts in itertools.combinations(inner, r):
            out.append((0, *cuts, len(u)))
    return out


def log_sum(values: Sequence[float]) -> float:
    top = max(values)
    return top + math.log(math.fsum(math.exp(v - top) for v in values))


def weighted_mean(pairs: Sequence[tuple[float, Mapping[str, float]]]) -> SparseVector:
    """``sum_i p_i x_i`` for log-weights normalized over the list."""
    log_z = log_sum([lw for lw, _ in pairs])
    out = SparseVector()
    for lw, vec in pairs:
        out.iadd(vec, math.exp(lw - log_z))
    return out


def central_difference(
    fn: Callable[[Mapping[str, float]], float],
    theta: Mapping[str, float],
    keys: Sequence[str],
    step: float = 1e-5,
) -> dict[str, float]:
    """Central finite differences of ``fn`` at ``theta`` along each key."""
    out = {}
    for key in keys:
        hi = dict(theta)
        lo = dict(theta)
        hi[key] = hi.get(key, 0.0) + step
        lo[key] = lo.get(key, 0.0) - step
        out[key] = (fn(hi) - fn(lo)) / (2 * step)
    return out


def relative_error(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


# --------------------------------------------------------------------------
# Joint-model references
# --------------------------------------------------------------------------


def joint_analyses(w: str, theta, factor):
    """Yield ``(u, structure, a, log_score, features)`` for every joint analysis.

    ``factor`` enumerates structures of ``u`` and scores/featurizes them.
    """
    from . import transducer as tr

    config = theta.transducer_config
    if len(theta.alphabet) > MAX_ALPHABET or len(w) + theta.k > MAX_JOINT_LENGTH:
        raise GuardError(
            f"joint oracle needs |alphabet| <= {MAX_ALPHABET} and |w|+k <= {MAX_JOINT_LENGTH}"
        )
    for u in canonical_forms(theta.alphabet, len(w) + theta.k):
        structures = [(s, factor.features(s, u)) for s in factor.enumerate(u)]
        for a in enumerate_alignments(u, w):
            g = tr.alignment_features(u, a, w, config)
            lg = g.dot(theta.eta)
            for s, f in structures:
                yield u, s, a, lg + f.dot(factor.weights), f, g


def brute_force_log_partition(w: str, theta, factor) -> float:
    return log_sum([row[3] for row in joint_analyses(w, theta, factor)])


def brute_force_gradient(w: str, theta, factor) -> SparseVector:
    """Exact ``grad log Z`` as the expected joint feature vector."""
    return weighted_mean([(row[3], SparseVector(row[4]).iadd(row[5])) for row in joint_analyses(w, theta, factor)])


def brute_force_argmax(w: str, theta, factor) -> tuple[str, object, float]:
    """Best ``(u, structure)`` under the alignment-marginal score.

    Ties go to the smallest ``u``, then to the structure the factor's own
    tie-break prefers (its ``enumerate`` order ranks structures accordingly).
    """
    best = None
    per_pair: dict[tuple, list[float]] = {}
    order = []
    for u, s, _a, lw, _f, _g in joint_analyses(w, theta, factor):
        key = (u, s)
        if key not in per_pair:
            per_pair[key] = []
            order.append(key)
        per_pair[key].append(lw)
    for key in sorted(order, key=lambda us: (us[0], factor.rank(us[1]))):
        score = log_sum(per_pair[key])
        if best is None or score > best[2]:
            best = (key[0], key[1], score)
    return best


class TreeEnumerator:
    """Parser-side adapter for the joint oracles."""

    def __init__(self, omega, lexicon, config=None):
        from .parser import DEFAULT_CONFIG

        self.weights = omega
        self.lexicon = lexicon
        self.config = config or DEFAULT_CONFIG

    def enumerate(self, u):
        return enumerate_trees(u)

    def features(self, t, u):
        from .parser import tree_feature_vector

        return tree_feature_vector(t, u, self.lexicon, self.config)

    def rank(self, t):
        return viterbi_rank(t)


def viterbi_rank(t) -> tuple:
    """Sort key reproducing the CKY tie-break among equal-scoring trees."""
    from .core import Label

    node = t.without_root()

    def key(n):
        if n.is_leaf:
            return (0,)
        left, right = n.children
        j = left.end
        if left.label is Label.PREFIX:
            return (1, j, 0, key(right))
        return (1, j, 1, key(left))

    return key(node)
