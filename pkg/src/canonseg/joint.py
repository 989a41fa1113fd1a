"""Joint model over canonical forms, trees and alignments given a surface word.

``p(t, a, u | w)`` is proportional to ``score_omega(t, u) * score_eta(u, a, w)``.
Alignments are always summed out in closed form. The partition function over
all canonical forms is never computed during training: its gradient is
estimated by self-normalized importance sampling with a pipeline proposal
(transducer draw of ``u``, then a structure draw given ``u``), and the
alignment part of each sample's statistic is replaced by its exact posterior
expectation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import oracle
from . import parser as ps
from . import transducer as tr
from .core import (
    Alignment,
    AlignmentError,
    BudgetError,
    GuardError,
    ModelParameters,
    ParseTree,
    SparseVector,
    require_tree,
)


class TrainingDataError(ValueError):
    """A training entry cannot be analysed under the current model settings."""


@dataclass(frozen=True)
class Analysis:
    w: str
    u: str
    t: Any
    a: Optional[Alignment] = None

    @property
    def segments(self) -> list[str]:
        return [self.u[leaf.start:leaf.end] for leaf in self.t.leaves()]


@dataclass
class WeightedSample:
    analysis: Analysis
    log_target: float
    log_proposal: float
    weight: float = 1.0

    @property
    def log_ratio(self) -> float:
        return self.log_target - self.log_proposal


def normalize_log_weights(log_weights) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=float)
    lw = lw - lw.max()
    p = np.exp(lw)
    return p / p.sum()


# --------------------------------------------------------------------------
# Structure factors
# --------------------------------------------------------------------------


class ParserFactor:
    """The WCFG factor with per-``u`` chart caching."""

    kind = "hier"

    def __init__(self, omega, lexicon, config=None):
        self.weights = omega
        self.lexicon = lexicon
        self.config = config or ps.DEFAULT_CONFIG
        self._charts: dict[str, ps.Chart] = {}

    def chart(self, u: str) -> ps.Chart:
        c = self._charts.get(u)
        if c is None:
            c = self._charts[u] = ps.Chart(u, self.weights, self.lexicon, self.config)
        return c

    def check(self, t, u):
        require_tree(t, u)

    def log_partition(self, u):
        return self.chart(u).log_inside

    def sample(self, u, rng):
        return self.chart(u).sample(rng)

    def viterbi(self, u):
        return self.chart(u).viterbi()

    def features(self, t, u):
        return ps.tree_feature_vector(t, u, self.lexicon, self.config)

    def log_score(self, t, u):
        return self.features(t, u).dot(self.weights)

    def expected_features(self, u):
        return self.chart(u).expected_features()

    def enumerate(self, u):
        return oracle.TreeEnumerator(self.weights, self.lexicon, self.config).enumerate(u)

    def rank(self, t):
        return oracle.viterbi_rank(t)


def make_factor(theta: ModelParameters):
    if getattr(theta, "structure", "hier") == "flat":
        from .baseline import SemiMarkovFactor

        return SemiMarkovFactor(theta.omega, theta.lexicon)
    return ParserFactor(theta.omega, theta.lexicon, theta.parser_config)


# --------------------------------------------------------------------------
# Exact scores
# --------------------------------------------------------------------------


def log_unnormalized_marginal(u: str, t, w: str, theta: ModelParameters, factor=None) -> float:
    """``log[score_omega(t, u) * sum_a score_eta(u, a, w)]``."""
    factor = factor or make_factor(theta)
    factor.check(t, u)
    tr.check_budget(u, w, theta.k)
    return factor.log_score(t, u) + tr.log_pair_score(u, w, theta.eta, theta.k, theta.transducer_config)


def brute_force_partition(w: str, theta: ModelParameters, factor=None) -> float:
    """Exact ``Z(w)`` by enumerating canonical forms, alignments and structures.

    Guarded to ``|alphabet| <= 3`` and ``|w| + k <= 5``.
    """
    return math.exp(brute_force_log_partition(w, theta, factor))


def brute_force_log_partition(w: str, theta: ModelParameters, factor=None) -> float:
    return oracle.brute_force_log_partition(w, theta, factor or make_factor(theta))


def brute_force_log_likelihood(entry, theta: ModelParameters, factor=None) -> float:
    factor = factor or make_factor(theta)
    return log_unnormalized_marginal(entry.canonical, entry.tree, entry.surface, theta, factor) - (
        brute_force_log_partition(entry.surface, theta, factor)
    )


# --------------------------------------------------------------------------
# Proposal
# --------------------------------------------------------------------------


class Proposal:
    """Pipeline proposal ``q(u, t | w) = q(u | w) q(t | u)`` for one surface word.

    ``q(u | w)`` is the transducer's alignment-marginal distribution and
    ``q(t | u)`` the structure factor's own conditional, both under the
    current parameters.
    """

    def __init__(self, w: str, theta: ModelParameters, factor=None):
        self.w = w
        self.theta = theta
        self.factor = factor or make_factor(theta)
        self.edit = tr.EditWeights(w, theta.eta, theta.alphabet, theta.transducer_config)
        self.sampler = tr.CanonicalSampler(w, theta.eta, theta.alphabet, theta.k, weights=self.edit)
        self._pair: dict[str, float] = {}
        self._marg: dict[str, tr.ArcMarginals] = {}

    @property
    def log_transducer_partition(self) -> float:
        return self.sampler.log_z

    def log_pair(self, u: str) -> float:
        v = self._pair.get(u)
        if v is None:
            v = self._pair[u] = self.edit.log_pair_score(u)
        return v

    def posterior(self, u: str) -> tr.ArcMarginals:
        m = self._marg.get(u)
        if m is None:
            m = self._marg[u] = self.edit.posterior_marginals(u)
        return m

    def draw(self, rng: np.random.Generator) -> WeightedSample:
        u, a, _ = self.sampler.sample(rng)
        t, log_q_t = self.factor.sample(u, rng)
        log_pair = self.log_pair(u)
        log_q = log_pair - self.log_transducer_partition + log_q_t
        log_target = self.factor.log_partition(u) + log_q_t + log_pair
        return WeightedSample(Analysis(self.w, u, t, a), log_target, log_q)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def propose(w: str, theta: ModelParameters, seed) -> WeightedSample:
    """Draw one ``(u, t)`` from the pipeline proposal with its target and proposal log-densities."""
    return Proposal(w, theta).draw(_rng(seed))


# --------------------------------------------------------------------------
# Gradient estimation
# --------------------------------------------------------------------------


def naive_gradient_term(sample: Analysis, theta: ModelParameters, factor=None) -> SparseVector:
    """Structure features plus the raw ``g(u, a, w)`` of the sampled alignment."""
    if sample.a is None:
        raise AlignmentError("naive gradient term needs a sampled alignment")
    factor = factor or make_factor(theta)
    out = factor.features(sample.t, sample.u)
    return out.iadd(tr.alignment_features(sample.u, sample.a, sample.w, theta.transducer_config))


def rb_gradient_term(sample: Analysis, theta: ModelParameters, factor=None) -> SparseVector:
    """Structure features plus the alignment-posterior expectation of ``g``."""
    factor = factor or make_factor(theta)
    out = factor.features(sample.t, sample.u)
    return out.iadd(
        tr.alignment_posterior_features(sample.u, sample.w, theta.eta, theta.k, theta.transducer_config)
    )


@dataclass
class ImportanceEstimate:
    gradient: SparseVector
    log_z: float
    samples: list = field(default_factory=list)


def importance_estimate(
    w: str, theta: ModelParameters, n_samples: int, seed, rao_blackwell: bool = True, proposal=None
) -> ImportanceEstimate:
    """Self-normalized importance estimate of ``grad log Z(w)`` and of ``log Z(w)``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = _rng(seed)
    proposal = proposal or Proposal(w, theta)
    factor = proposal.factor
    samples = [proposal.draw(rng) for _ in range(n_samples)]
    log_ratios = np.array([s.log_ratio for s in samples])
    weights = normalize_log_weights(log_ratios)
    top = log_ratios.max()
    log_z = float(top + math.log(np.exp(log_ratios - top).sum()) - math.log(n_samples))

    grad = SparseVector()
    per_u: dict[str, float] = {}
    for s, wt in zip(samples, weights.tolist()):
        s.weight = wt
        grad.iadd(factor.features(s.analysis.t, s.analysis.u), wt)
        if rao_blackwell:
            per_u[s.analysis.u] = per_u.get(s.analysis.u, 0.0) + wt
        else:
            grad.iadd(tr.alignment_features(s.analysis.u, s.analysis.a, w, theta.transducer_config), wt)
    if rao_blackwell and per_u:
        total = None
        for u in sorted(per_u):
            m = proposal.posterior(u)
            if total is None:
                total = tr.ArcMarginals.zeros(proposal.edit)
            total.iadd(m, per_u[u])
        grad.iadd(total.features())
    return ImportanceEstimate(grad, log_z, samples)


def estimate_logZ_gradient(
    w: str, theta: ModelParameters, n_samples: int, seed, rao_blackwell: bool = True
) -> SparseVector:
    return importance_estimate(w, theta, n_samples, seed, rao_blackwell).gradient


def check_entry(entry, theta: ModelParameters) -> None:
    u, w = entry.canonical, entry.surface
    if len(u) > len(w) + theta.k:
        raise TrainingDataError(
            f"entry {w!r}: canonical form {u!r} is longer than |w|+k={len(w) + theta.k}"
        )
    if not theta.alphabet.covers(u):
        bad = sorted(set(u) - set(theta.alphabet))
        raise TrainingDataError(f"entry {w!r}: canonical symbols {bad} outside the alphabet")


def observed_statistic(entry, theta: ModelParameters, proposal: Proposal) -> SparseVector:
    factor = proposal.factor
    out = factor.features(entry.tree, entry.canonical)
    return out.iadd(proposal.posterior(entry.canonical).features())


def log_likelihood_and_gradient(entry, theta: ModelParameters, n_samples: int, seed) -> tuple[float, SparseVector]:
    """Estimated ``log p(t, u | w)`` of a gold entry and its gradient.

    The gradient is the gold statistic (structure features plus the alignment
    posterior expectation) minus the importance estimate of ``grad log Z``.
    """
    check_entry(entry, theta)
    proposal = Proposal(entry.surface, theta)
    factor = proposal.factor
    factor.check(entry.tree, entry.canonical)
    est = importance_estimate(entry.surface, theta, n_samples, seed, proposal=proposal)
    observed = observed_statistic(entry, theta, proposal)
    log_target = factor.log_score(entry.tree, entry.canonical) + proposal.log_pair(entry.canonical)
    return log_target - est.log_z, observed - est.gradient


# --------------------------------------------------------------------------
# Decoding
# --------------------------------------------------------------------------


@dataclass
class Decoded:
    analysis: Analysis
    log_score: float
    candidates: dict = field(default_factory=dict)


def decode_with_candidates(w: str, theta: ModelParameters, n_samples: int, seed, proposal=None) -> Decoded:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = _rng(seed)
    proposal = proposal or Proposal(w, theta)
    factor = proposal.factor
    forms = {proposal.sampler.sample(rng)[0] for _ in range(n_samples)}
    best = None
    candidates = {}
    for u in sorted(forms):
        t, log_t = factor.viterbi(u)
        score = log_t + proposal.log_pair(u)
        candidates[u] = (t, score)
        if best is None or score > best[2]:
            best = (u, t, score)
    u, t, score = best
    return Decoded(Analysis(w, u, t), score, candidates)


def decode(w: str, theta: ModelParameters, n_samples: int, seed) -> Analysis:
    """Sample canonical forms, parse each with Viterbi, return the best-scoring pair."""
    return decode_with_candidates(w, theta, n_samples, seed).analysis


__all__ = [
    "Analysis",
    "WeightedSample",
    "TrainingDataError",
    "ParserFactor",
    "Proposal",
    "log_unnormalized_marginal",
    "brute_force_partition",
    "propose",
    "estimate_logZ_gradient",
    "naive_gradient_term",
    "rb_gradient_term",
    "log_likelihood_and_gradient",
    "decode",
    "BudgetError",
    "GuardError",
    "ParseTree",
]
