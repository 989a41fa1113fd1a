"""Flat baseline: a zeroth-order semi-Markov segmenter over canonical forms.

It replaces the tree factor of the joint model with a chain of unlabeled
segments and shares everything else (transducer, proposal, training loop).
Segment features: the segment string, lexicon membership, a length bucket and
the character bigram straddling the segment's left boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import ModelParameters, SparseVector, TreeError
from .oracle import enumerate_segmentations

START = "<s>"
MAX_LENGTH_BUCKET = 8


@dataclass(frozen=True)
class Span:
    start: int
    end: int


@dataclass(frozen=True)
class FlatSegmentation:
    """Boundaries ``(0, b1, ..., |u|)`` of a segmentation."""

    boundaries: tuple[int, ...]

    @classmethod
    def from_segments(cls, segments) -> "FlatSegmentation":
        out = [0]
        for s in segments:
            out.append(out[-1] + len(s))
        return cls(tuple(out))

    def leaves(self) -> Iterator[Span]:
        b = self.boundaries
        for i in range(len(b) - 1):
            yield Span(b[i], b[i + 1])

    def segments(self, u: str) -> list[str]:
        return [u[s.start:s.end] for s in self.leaves()]

    def __len__(self) -> int:
        return len(self.boundaries) - 1


def check_segmentation(s: FlatSegmentation, u: str) -> str | None:
    b = s.boundaries
    if len(b) < 2 or b[0] != 0 or b[-1] != len(u):
        return f"boundaries {b} do not tile [0,{len(u)})"
    if any(x >= y for x, y in zip(b, b[1:])):
        return f"boundaries {b} are not strictly increasing"
    return None


def require_segmentation(s: FlatSegmentation, u: str) -> None:
    problem = check_segmentation(s, u)
    if problem is not None:
        raise TreeError(problem)


def segment_features(u: str, i: int, j: int, lexicon) -> list[str]:
    seg = u[i:j]
    length = j - i
    bucket = f"{MAX_LENGTH_BUCKET}+" if length >= MAX_LENGTH_BUCKET else str(length)
    feats = [f"f|seg|{seg}", f"f|len|{bucket}", f"f|bd|{u[i - 1] if i > 0 else START}|{u[i]}"]
    if seg.lower() in lexicon:
        feats.append("f|lex")
    return feats


def segmentation_features(s: FlatSegmentation, u: str, lexicon) -> SparseVector:
    require_segmentation(s, u)
    out = SparseVector()
    for sp in s.leaves():
        for f in segment_features(u, sp.start, sp.end, lexicon):
            out.add_to(f, 1.0)
    return out


def semimarkov_score(s: FlatSegmentation, u: str, psi, lexicon) -> float:
    return math.exp(segmentation_features(s, u, lexicon).dot(psi))


class SemiMarkovChart:
    def __init__(self, u: str, psi, lexicon):
        if not u:
            raise TreeError("cannot segment the empty string")
        self.u = u
        self.lexicon = lexicon
        n = len(u)
        get = psi.get
        self.seg = [[-math.inf] * (n + 1) for _ in range(n + 1)]
        for i in range(n):
            for j in range(i + 1, n + 1):
                self.seg[i][j] = math.fsum(get(f, 0.0) for f in segment_features(u, i, j, lexicon))
        alpha = [-math.inf] * (n + 1)
        alpha[0] = 0.0
        for j in range(1, n + 1):
            alpha[j] = float(np.logaddexp.reduce([alpha[i] + self.seg[i][j] for i in range(j)]))
        beta = [-math.inf] * (n + 1)
        beta[n] = 0.0
        for i in range(n - 1, -1, -1):
            beta[i] = float(np.logaddexp.reduce([self.seg[i][j] + beta[j] for j in range(i + 1, n + 1)]))
        self.alpha, self.beta = alpha, beta

    @property
    def log_partition(self) -> float:
        return self.alpha[len(self.u)]

    def viterbi(self) -> tuple[FlatSegmentation, float]:
        """Best segmentation; ties go to fewer segments, then leftmost-longest."""
        n = len(self.u)
        best: list = [None] * (n + 1)
        best[n] = (0.0, 0, None)
        for i in range(n - 1, -1, -1):
            top = None
            for e in range(i + 1, n + 1):
                score = self.seg[i][e] + best[e][0]
                key = (score, -(1 + best[e][1]), e)
                if top is None or key > top[0]:
                    top = (key, e)
            (score, neg_count, _), e = top
            best[i] = (score, -neg_count, e)
        bounds = [0]
        while bounds[-1] != n:
            bounds.append(best[bounds[-1]][2])
        return FlatSegmentation(tuple(bounds)), best[0][0]

    def sample(self, rng: np.random.Generator) -> tuple[FlatSegmentation, float]:
        n = len(self.u)
        bounds = [n]
        log_prob = 0.0
        j = n
        while j > 0:
            logits = np.array([self.alpha[i] + self.seg[i][j] for i in range(j)])
            probs = np.exp(logits - self.alpha[j])
            cum = np.cumsum(probs)
            i = int(min(np.searchsorted(cum, rng.random() * cum[-1], side="right"), j - 1))
            log_prob += logits[i] - self.alpha[j]
            bounds.append(i)
            j = i
        return FlatSegmentation(tuple(reversed(bounds))), float(log_prob)

    def expected_features(self) -> SparseVector:
        n = len(self.u)
        log_z = self.log_partition
        out = SparseVector()
        for i in range(n):
            for j in range(i + 1, n + 1):
                p = math.exp(self.alpha[i] + self.seg[i][j] + self.beta[j] - log_z)
                if p:
                    for f in segment_features(self.u, i, j, self.lexicon):
                        out.add_to(f, p)
        return out


def semimarkov_log_partition(u: str, psi, lexicon) -> float:
    return SemiMarkovChart(u, psi, lexicon).log_partition


def semimarkov_partition(u: str, psi, lexicon) -> float:
    """Sum of ``semimarkov_score`` over all ``2^(|u|-1)`` segmentations of ``u``."""
    return math.exp(semimarkov_log_partition(u, psi, lexicon))


def semimarkov_viterbi(u: str, psi, lexicon) -> tuple[FlatSegmentation, float]:
    return SemiMarkovChart(u, psi, lexicon).viterbi()


def semimarkov_expected_features(u: str, psi, lexicon) -> SparseVector:
    return SemiMarkovChart(u, psi, lexicon).expected_features()


def segmentation_rank(s: FlatSegmentation) -> tuple:
    """Sort key matching the Viterbi tie-break (smaller is preferred)."""
    lengths = [sp.end - sp.start for sp in s.leaves()]
    return (len(lengths), tuple(-x for x in lengths))


class SemiMarkovFactor:
    """Structure factor with the same surface as :class:`canonseg.joint.ParserFactor`."""

    kind = "flat"

    def __init__(self, psi, lexicon):
        self.weights = psi
        self.lexicon = lexicon
        self._charts: dict[str, SemiMarkovChart] = {}

    def chart(self, u):
        c = self._charts.get(u)
        if c is None:
            c = self._charts[u] = SemiMarkovChart(u, self.weights, self.lexicon)
        return c

    def check(self, s, u):
        require_segmentation(s, u)

    def log_partition(self, u):
        return self.chart(u).log_partition

    def sample(self, u, rng):
        return self.chart(u).sample(rng)

    def viterbi(self, u):
        return self.chart(u).viterbi()

    def features(self, s, u):
        return segmentation_features(s, u, self.lexicon)

    def log_score(self, s, u):
        return self.features(s, u).dot(self.weights)

    def expected_features(self, u):
        return self.chart(u).expected_features()

    def enumerate(self, u):
        return [FlatSegmentation(b) for b in enumerate_segmentations(u)]

    def rank(self, s):
        return segmentation_rank(s)


def flat_parameters(theta: ModelParameters) -> ModelParameters:
    """Copy of ``theta`` configured for the semi-Markov structure factor."""
    return ModelParameters(
        theta.omega, theta.eta, theta.alphabet, theta.k, theta.lexicon,
        theta.transducer_config, theta.parser_config, "flat",
    )


def decode_flat(w: str, theta: ModelParameters, n_samples: int, seed):
    from .joint import decode

    return decode(w, flat_parameters(theta), n_samples, seed)


def log_likelihood_and_gradient_flat(entry, theta: ModelParameters, n_samples: int, seed):
    from .joint import log_likelihood_and_gradient

    return log_likelihood_and_gradient(entry, flat_parameters(theta), n_samples, seed)
