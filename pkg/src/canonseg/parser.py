"""Weighted CFG (CRF parser) over canonical forms.

A tree's score is ``exp(sum of f(pi, u) . omega)`` over its anchored
productions. Preterminals emit whole spans (``Label -> chars+``), so the chart
keeps three labels per span. Binary productions are ``Word -> Prefix Word``
and ``Word -> Word Suffix``; the Root unary carries no features.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import Label, ParseTree, SparseVector, TreeError, require_tree

W, P, S = Label.WORD, Label.PREFIX, Label.SUFFIX
RULE_PW = "W>P.W"
RULE_WS = "W>W.S"
_LEAF_RULE = {W: "W>+", P: "P>+", S: "S>+"}
_ABBREV = {W: "W", P: "P", S: "S"}

NEG_INF = -math.inf


@dataclass(frozen=True)
class ParserFeatureConfig:
    segment: bool = True
    lexicon: bool = True
    segment_label: bool = True
    production: bool = True
    production_backoff: bool = True


DEFAULT_CONFIG = ParserFeatureConfig()


def span_features(label: Label, seg: str, lexicon, config: ParserFeatureConfig = DEFAULT_CONFIG) -> list[str]:
    feats = []
    if config.segment:
        feats.append(f"p|seg|{seg}")
    if config.lexicon and seg.lower() in lexicon:
        feats.append("p|lex")
    if config.segment_label:
        feats.append(f"p|sl|{_ABBREV[label]}|{seg}")
    return feats


def preterminal_features(label: Label, i: int, j: int, u: str, lexicon, config=DEFAULT_CONFIG) -> list[str]:
    """Features of ``Label_{i,j} -> u[i:j]``."""
    feats = span_features(label, u[i:j], lexicon, config)
    if config.production:
        feats.append(f"p|rule|{_LEAF_RULE[label]}")
    return feats


def binary_features(rule: str, i: int, j: int, k: int, u: str, lexicon, config=DEFAULT_CONFIG) -> list[str]:
    """Features of ``Word_{i,k} -> B_{i,j} C_{j,k}``.

    The production indicator is anchored on the two characters around the
    split point; its backoffs are the bare rule and the parent label.
    """
    feats = span_features(W, u[i:k], lexicon, config)
    if config.production:
        feats.append(f"p|rule|{rule}|{u[j - 1]}{u[j]}")
    if config.production_backoff:
        feats.append(f"p|rule|{rule}")
        feats.append("p|parent|W")
    return feats


def anchored_productions(t: ParseTree) -> Iterable[tuple]:
    """``Pi(t)`` as ``("leaf", label, i, j)`` or ``("bin", rule, i, j, k)`` tuples."""
    for node in t.nodes():
        if node.label is Label.ROOT:
            continue
        if node.is_leaf:
            yield ("leaf", node.label, node.start, node.end)
        else:
            left, right = node.children
            rule = RULE_PW if left.label is P else RULE_WS
            yield ("bin", rule, node.start, left.end, node.end)


def production_features(pi, u, lexicon, config=DEFAULT_CONFIG) -> list[str]:
    if pi[0] == "leaf":
        return preterminal_features(pi[1], pi[2], pi[3], u, lexicon, config)
    return binary_features(pi[1], pi[2], pi[3], pi[4], u, lexicon, config)


def tree_feature_vector(t: ParseTree, u: str, lexicon, config=DEFAULT_CONFIG) -> SparseVector:
    require_tree(t, u)
    out = SparseVector()
    for pi in anchored_productions(t):
        for f in production_features(pi, u, lexicon, config):
            out.add_to(f, 1.0)
    return out


def log_tree_score(t: ParseTree, u: str, omega, lexicon, config=DEFAULT_CONFIG) -> float:
    return tree_feature_vector(t, u, lexicon, config).dot(omega)


def tree_score(t: ParseTree, u: str, omega, lexicon, config=DEFAULT_CONFIG) -> float:
    return math.exp(log_tree_score(t, u, omega, lexicon, config))


def _logsumexp(values: list[float]) -> float:
    top = max(values)
    if top == NEG_INF:
        return NEG_INF
    return top + math.log(math.fsum(math.exp(v - top) for v in values))


def _logaddexp(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def _draw_index(weights: list[float], r: float) -> int:
    """Index drawn with probability proportional to ``weights`` given ``r ~ U[0,1)``."""
    target = r * sum(weights)
    acc = 0.0
    last = 0
    for idx, wgt in enumerate(weights):
        if wgt > 0.0:
            last = idx
            acc += wgt
            if target < acc:
                return idx
    return last


class Chart:
    """Inside chart for one canonical form.

    ``leaf[L][i][k]`` holds preterminal log weights; ``inside[L][i][k]`` the
    log sum over subtrees labelled ``L`` spanning ``u[i:k]``.
    """

    def __init__(self, u: str, omega, lexicon, config: ParserFeatureConfig = DEFAULT_CONFIG):
        if not u:
            raise TreeError("cannot parse the empty string")
        self.u = u
        self.omega = omega
        self.lexicon = lexicon
        self.config = config
        n = len(u)
        get = omega.get
        # inlined copy of span/preterminal features: one lookup per template
        lex_w = get("p|lex", 0.0) if config.lexicon else 0.0
        rule_w = {L: get(f"p|rule|{_LEAF_RULE[L]}", 0.0) if config.production else 0.0 for L in (W, P, S)}
        parent_w = get("p|parent|W", 0.0) if config.production_backoff else 0.0
        leaf_w = [[NEG_INF] * (n + 1) for _ in range(n + 1)]
        leaf_p = [[NEG_INF] * (n + 1) for _ in range(n + 1)]
        leaf_s = [[NEG_INF] * (n + 1) for _ in range(n + 1)]
        # binary node weight minus the anchored production term
        span_w = [[NEG_INF] * (n + 1) for _ in range(n + 1)]
        for i in range(n):
            for k in range(i + 1, n + 1):
                seg = u[i:k]
                base = get("p|seg|" + seg, 0.0) if config.segment else 0.0
                if config.lexicon and seg.lower() in lexicon:
                    base += lex_w
                if config.segment_label:
                    sl_w = get("p|sl|W|" + seg, 0.0)
                    sl_p = get("p|sl|P|" + seg, 0.0)
                    sl_s = get("p|sl|S|" + seg, 0.0)
                else:
                    sl_w = sl_p = sl_s = 0.0
                leaf_w[i][k] = base + sl_w + rule_w[W]
                leaf_p[i][k] = base + sl_p + rule_w[P]
                leaf_s[i][k] = base + sl_s + rule_w[S]
                if k - i >= 2:
                    span_w[i][k] = base + sl_w + parent_w
        self.leaf = {W: leaf_w, P: leaf_p, S: leaf_s}
        self.span_w = span_w
        self.rule = {}
        for rule in (RULE_PW, RULE_WS):
            base = get(f"p|rule|{rule}", 0.0) if config.production_backoff else 0.0
            anch = [NEG_INF] * (n + 1)
            for j in range(1, n):
                anch[j] = base + (get(f"p|rule|{rule}|{u[j - 1]}{u[j]}", 0.0) if config.production else 0.0)
            self.rule[rule] = anch
        self._inside = None

    @property
    def inside_w(self):
        if self._inside is None:
            self._inside = self._fill()
        return self._inside

    def binary_weight(self, rule: str, i: int, j: int, k: int) -> float:
        return self.span_w[i][k] + self.rule[rule][j]

    def _fill(self):
        n = len(self.u)
        ins_w = [[NEG_INF] * (n + 1) for _ in range(n + 1)]
        leaf_w, leaf_p, leaf_s = self.leaf[W], self.leaf[P], self.leaf[S]
        r_pw, r_ws = self.rule[RULE_PW], self.rule[RULE_WS]
        exp, log = math.exp, math.log
        for length in range(1, n + 1):
            for i in range(0, n - length + 1):
                k = i + length
                terms = [leaf_w[i][k]]
                sw = self.span_w[i][k]
                lp_i = leaf_p[i]
                for j in range(i + 1, k):
                    terms.append(sw + r_pw[j] + lp_i[j] + ins_w[j][k])
                    terms.append(sw + r_ws[j] + ins_w[i][j] + leaf_s[j][k])
                top = max(terms)
                ins_w[i][k] = top + log(sum(exp(t - top) for t in terms)) if top != NEG_INF else NEG_INF
        return ins_w

    @property
    def log_inside(self) -> float:
        return self.inside_w[0][len(self.u)]

    def options(self, i: int, k: int) -> list[tuple]:
        """Ways to build ``Word_{i,k}`` with their log weights, in tie-break order."""
        out = [(("leaf",), self.leaf[W][i][k])]
        sw = self.span_w[i][k]
        for j in range(i + 1, k):
            out.append(((RULE_PW, j), sw + self.rule[RULE_PW][j] + self.leaf[P][i][j]))
            out.append(((RULE_WS, j), sw + self.rule[RULE_WS][j] + self.leaf[S][j][k]))
        return out

    # -- Viterbi -------------------------------------------------------------

    def viterbi(self) -> tuple[ParseTree, float]:
        n = len(self.u)
        best = [[None] * (n + 1) for _ in range(n + 1)]
        for length in range(1, n + 1):
            for i in range(0, n - length + 1):
                k = i + length
                top_score, top_choice = NEG_INF, None
                for choice, lw in self.options(i, k):
                    if choice[0] == "leaf":
                        score = lw
                    elif choice[0] == RULE_PW:
                        score = lw + best[choice[1]][k][0]
                    else:
                        score = lw + best[i][choice[1]][0]
                    if top_choice is None or score > top_score:
                        top_score, top_choice = score, choice
                best[i][k] = (top_score, top_choice)

        def build(i, k):
            choice = best[i][k][1]
            if choice[0] == "leaf":
                return ParseTree.leaf(W, i, k)
            rule, j = choice
            if rule == RULE_PW:
                return ParseTree.binary(ParseTree.leaf(P, i, j), build(j, k))
            return ParseTree.binary(build(i, j), ParseTree.leaf(S, j, k))

        return ParseTree.root(build(0, n)), best[0][n][0]

    # -- sampling --------------------------------------------------------------

    def sample(self, rng: np.random.Generator) -> tuple[ParseTree, float]:
        """Top-down draw from ``p(t | u)``; returns the tree and its exact log probability."""
        log_prob = 0.0

        def draw(i, k):
            nonlocal log_prob
            opts = self.options(i, k)
            logits = []
            for choice, lw in opts:
                if choice[0] == "leaf":
                    logits.append(lw)
                elif choice[0] == RULE_PW:
                    logits.append(lw + self.inside_w[choice[1]][k])
                else:
                    logits.append(lw + self.inside_w[i][choice[1]])
            total = self.inside_w[i][k]
            idx = _draw_index([math.exp(v - total) for v in logits], rng.random())
            choice, lw = opts[idx]
            log_prob += logits[idx] - total
            if choice[0] == "leaf":
                return ParseTree.leaf(W, i, k)
            rule, j = choice
            if rule == RULE_PW:
                return ParseTree.binary(ParseTree.leaf(P, i, j), draw(j, k))
            return ParseTree.binary(draw(i, j), ParseTree.leaf(S, j, k))

        tree = draw(0, len(self.u))
        return ParseTree.root(tree), log_prob

    # -- outside / expectations ----------------------------------------------

    def expected_features(self) -> SparseVector:
        """``E[tree_feature_vector]`` under ``p(t | u)`` via inside-outside."""
        n = len(self.u)
        u, lex, config = self.u, self.lexicon, self.config
        out_w = [[NEG_INF] * (n + 1) for _ in range(n + 1)]
        out_w[0][n] = 0.0
        log_z = self.log_inside
        result = SparseVector()

        def add(feats, logp):
            p = math.exp(logp)
            if p == 0.0:
                return
            for f in feats:
                result.add_to(f, p)

        for length in range(n, 0, -1):
            for i in range(0, n - length + 1):
                k = i + length
                o = out_w[i][k]
                if o == NEG_INF:
                    continue
                add(preterminal_features(W, i, k, u, lex, config), o + self.leaf[W][i][k] - log_z)
                for j in range(i + 1, k):
                    lw = self.binary_weight(RULE_PW, i, j, k)
                    pw = o + lw + self.leaf[P][i][j] + self.inside_w[j][k] - log_z
                    add(binary_features(RULE_PW, i, j, k, u, lex, config), pw)
                    add(preterminal_features(P, i, j, u, lex, config), pw)
                    out_w[j][k] = _logaddexp(out_w[j][k], o + lw + self.leaf[P][i][j])
                    lw = self.binary_weight(RULE_WS, i, j, k)
                    ps = o + lw + self.inside_w[i][j] + self.leaf[S][j][k] - log_z
                    add(binary_features(RULE_WS, i, j, k, u, lex, config), ps)
                    add(preterminal_features(S, j, k, u, lex, config), ps)
                    out_w[i][j] = _logaddexp(out_w[i][j], o + lw + self.leaf[S][j][k])
        return result


def log_inside(u: str, omega, lexicon, config=DEFAULT_CONFIG) -> float:
    return Chart(u, omega, lexicon, config).log_inside


def inside(u: str, omega, lexicon, config=DEFAULT_CONFIG) -> float:
    """Sum of ``tree_score`` over all trees of ``u``."""
    return math.exp(log_inside(u, omega, lexicon, config))


def cky_viterbi(u: str, omega, lexicon, config=DEFAULT_CONFIG) -> tuple[ParseTree, float]:
    """Highest-scoring tree and its log score.

    Exact ties prefer a preterminal over a binary node, then the smaller split
    point, then the Prefix branch over the Suffix branch.
    """
    return Chart(u, omega, lexicon, config).viterbi()


def sample_tree(u: str, omega, lexicon, seed, config=DEFAULT_CONFIG) -> tuple[ParseTree, float]:
    return Chart(u, omega, lexicon, config).sample(np.random.default_rng(seed))


def expected_tree_features(u: str, omega, lexicon, config=DEFAULT_CONFIG) -> SparseVector:
    return Chart(u, omega, lexicon, config).expected_features()
