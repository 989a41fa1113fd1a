"""Weighted edit transducer between a surface word ``w`` and a canonical form ``u``.

An alignment is a monotonic sequence of substitutions, deletions (consume a
surface character, emit nothing) and insertions (emit a canonical character,
consume nothing). Its score is ``exp(g(u, a, w) . eta)``, where ``g`` sums
per-arc features. Arc features may look at any part of ``w`` but only at the
previously emitted canonical character, so the lattice over all canonical
forms has states ``(surface position, emitted length, previous output)``.

The emitted length is capped at ``|w| + k``; deletions are unrestricted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
from scipy.special import logsumexp

from .core import (
    DEL,
    INS,
    SUB,
    Alignment,
    AlignmentError,
    Alphabet,
    BudgetError,
    EditAction,
    SparseVector,
)

START = "<s>"
LEFT_PAD = "<w>"
RIGHT_PAD = "</w>"

NEG_INF = -math.inf


@dataclass(frozen=True)
class TransducerFeatureConfig:
    window: int = 2
    action_identity: bool = True
    action_kind: bool = True
    surface_context: bool = True
    previous_output: bool = True


DEFAULT_CONFIG = TransducerFeatureConfig()


def _context(w: str, pos: int) -> str:
    if pos < 0:
        return LEFT_PAD
    if pos >= len(w):
        return RIGHT_PAD
    return w[pos]


def arc_features(
    action: EditAction, i: int, prev: str, w: str, config: TransducerFeatureConfig = DEFAULT_CONFIG
) -> list[str]:
    """Feature identifiers of one edit arc taken at surface position ``i``.

    ``prev`` is the previously emitted canonical character (``START`` before
    the first one). Insertions at position ``i`` happen before ``w[i]``.
    """
    name = action.name
    feats = []
    if config.action_identity:
        feats.append(f"t|id|{name}")
    if config.action_kind:
        feats.append(f"t|kind|{action.kind}")
    if config.surface_context:
        for off in range(-config.window, config.window + 1):
            feats.append(f"t|ctx|{off}={_context(w, i + off)}|{name}")
    if config.previous_output:
        feats.append(f"t|prev|{prev}|{name}")
    return feats


def alignment_features(
    u: str, a: Alignment, w: str, config: TransducerFeatureConfig = DEFAULT_CONFIG
) -> SparseVector:
    """``g(u, a, w)``: summed arc features along the alignment."""
    if not a.aligns(u, w):
        raise AlignmentError(f"alignment {a} does not relate u={u!r} and w={w!r}")
    out = SparseVector()
    i = 0
    prev = START
    for action in a:
        for f in arc_features(action, i, prev, w, config):
            out.add_to(f, 1.0)
        if action.consumed is not None:
            i += 1
        if action.emitted is not None:
            prev = action.emitted
    return out


def log_score_triple(u, a, w, eta, config=DEFAULT_CONFIG) -> float:
    return alignment_features(u, a, w, config).dot(eta)


def score_triple(u: str, a: Alignment, w: str, eta, config=DEFAULT_CONFIG) -> float:
    """``exp(g(u, a, w) . eta)``."""
    return math.exp(log_score_triple(u, a, w, eta, config))


def check_budget(u: str, w: str, k: int) -> None:
    if len(u) > len(w) + k:
        raise BudgetError(f"|u|={len(u)} exceeds |w|+k={len(w) + k} for u={u!r}, w={w!r}")


# --------------------------------------------------------------------------
# Pair scores on the (u, w)-constrained grid, arc weights read off features
# --------------------------------------------------------------------------


def _lse(values: list[float]) -> float:
    top = max(values)
    if top == NEG_INF:
        return NEG_INF
    return top + math.log(sum(math.exp(v - top) for v in values))


def _direct_arc_weight(u, w, eta, config) -> Callable[[str, int, int], float]:
    get = eta.get

    def weight(kind: str, i: int, j: int) -> float:
        prev = u[j - 1] if j > 0 else START
        if kind == SUB:
            action = EditAction.sub(w[i], u[j])
        elif kind == DEL:
            action = EditAction.delete(w[i])
        else:
            action = EditAction.insert(u[j])
        return math.fsum(get(f, 0.0) for f in arc_features(action, i, prev, w, config))

    return weight


def _grid_arcs(n: int, m: int) -> Iterator[tuple[str, int, int, int, int]]:
    """Arcs of the constrained grid as ``(kind, i, j, i', j')``, topologically ordered."""
    for i in range(n + 1):
        for j in range(m + 1):
            if i < n and j < m:
                yield SUB, i, j, i + 1, j + 1
            if j < m:
                yield INS, i, j, i, j + 1
            if i < n:
                yield DEL, i, j, i + 1, j


def _grid_forward_backward(u, w, weight):
    n, m = len(w), len(u)
    arcs = [(kind, i, j, i2, j2, weight(kind, i, j)) for kind, i, j, i2, j2 in _grid_arcs(n, m)]
    alpha = np.full((n + 1, m + 1), NEG_INF)
    alpha[0, 0] = 0.0
    for _, i, j, i2, j2, lw in arcs:
        alpha[i2, j2] = _lse([alpha[i2, j2], alpha[i, j] + lw])
    beta = np.full((n + 1, m + 1), NEG_INF)
    beta[n, m] = 0.0
    for _, i, j, i2, j2, lw in reversed(arcs):
        beta[i, j] = _lse([beta[i, j], beta[i2, j2] + lw])
    return arcs, alpha, beta


def log_pair_score(u: str, w: str, eta, k: int, config=DEFAULT_CONFIG) -> float:
    check_budget(u, w, k)
    _, alpha, _ = _grid_forward_backward(u, w, _direct_arc_weight(u, w, eta, config))
    return float(alpha[len(w), len(u)])


def pair_score(u: str, w: str, eta, k: int, config=DEFAULT_CONFIG) -> float:
    """Sum of ``score_triple`` over every monotonic alignment of ``u`` and ``w``.

    The budget ``k`` only restricts ``|u| <= |w| + k``; with ``eta = 0`` the
    result is the Delannoy number ``D(|u|, |w|)``.
    """
    return math.exp(log_pair_score(u, w, eta, k, config))


def alignment_posterior_features(u: str, w: str, eta, k: int, config=DEFAULT_CONFIG) -> SparseVector:
    """Expected ``g(u, a, w)`` under ``p(a | u, w)``, by forward-backward on the grid."""
    check_budget(u, w, k)
    arcs, alpha, beta = _grid_forward_backward(u, w, _direct_arc_weight(u, w, eta, config))
    log_z = alpha[len(w), len(u)]
    out = SparseVector()
    for kind, i, j, i2, j2, lw in arcs:
        post = math.exp(alpha[i, j] + lw + beta[i2, j2] - log_z)
        if post == 0.0:
            continue
        prev = u[j - 1] if j > 0 else START
        if kind == SUB:
            action = EditAction.sub(w[i], u[j])
        elif kind == DEL:
            action = EditAction.delete(w[i])
        else:
            action = EditAction.insert(u[j])
        for f in arc_features(action, i, prev, w, config):
            out.add_to(f, post)
    return out


# --------------------------------------------------------------------------
# Compiled arc weights for the full lattice
# --------------------------------------------------------------------------


def _lse_matvec(a: np.ndarray, m_exp: np.ndarray, m_shift: np.ndarray) -> np.ndarray:
    """``log(exp(a) @ exp(M))`` with ``M = log(m_exp) + m_shift`` column-shifted."""
    top = np.max(a, axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(a - top) @ m_exp) + top + m_shift


def _shifted(m: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    shift = np.max(m, axis=axis)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    return np.exp(m - np.expand_dims(shift, axis)), shift


class EditWeights:
    """Log arc weights of the edit lattice for one surface word.

    Prev-output index 0 is the start marker; index ``1 + c`` is alphabet
    symbol ``c``. ``sub[i][p, c]`` consumes ``w[i]`` and emits ``c``;
    ``ins[i][p, c]`` emits ``c`` before ``w[i]``; ``dele[i][p]`` consumes
    ``w[i]``.
    """

    def __init__(self, w: str, eta, alphabet: Alphabet, config: TransducerFeatureConfig = DEFAULT_CONFIG):
        self.w = w
        self.alphabet = alphabet
        self.config = config
        self.prev_tokens = [START] + list(alphabet)
        get = eta.get
        r = config.window
        n = len(w)
        syms = list(alphabet)
        n_prev = len(syms) + 1

        def base(names, kind, i):
            vals = np.zeros(len(names))
            for idx, name in enumerate(names):
                total = 0.0
                if config.action_identity:
                    total += get(f"t|id|{name}", 0.0)
                if config.action_kind:
                    total += get(f"t|kind|{kind}", 0.0)
                if config.surface_context:
                    for off in range(-r, r + 1):
                        total += get(f"t|ctx|{off}={_context(w, i + off)}|{name}", 0.0)
                vals[idx] = total
            return vals

        def prev_matrix(names):
            mat = np.zeros((n_prev, len(names)))
            if config.previous_output:
                for p, ptok in enumerate(self.prev_tokens):
                    for idx, name in enumerate(names):
                        mat[p, idx] = get(f"t|prev|{ptok}|{name}", 0.0)
            return mat

        ins_names = [f"I:{c}" for c in syms]
        ins_prev = prev_matrix(ins_names)
        sub_prev_cache: dict[str, np.ndarray] = {}
        del_prev_cache: dict[str, np.ndarray] = {}
        self.sub_names, self.del_names = [], []
        self.ins_names = ins_names
        self.sub, self.ins, self.dele = [], [], []
        for i in range(n + 1):
            self.ins.append(base(ins_names, INS, i)[None, :] + ins_prev)
            if i == n:
                break
            x = w[i]
            sub_names = [f"S:{x}>{c}" for c in syms]
            del_name = [f"D:{x}"]
            if x not in sub_prev_cache:
                sub_prev_cache[x] = prev_matrix(sub_names)
                del_prev_cache[x] = prev_matrix(del_name)[:, 0]
            self.sub.append(base(sub_names, SUB, i)[None, :] + sub_prev_cache[x])
            self.dele.append(base(del_name, DEL, i)[0] + del_prev_cache[x])
            self.sub_names.append(sub_names)
            self.del_names.append(del_name[0])
        n_sym = len(syms)
        self._sub_stack = np.stack(self.sub) if n else np.zeros((0, n_prev, n_sym))
        self._ins_stack = np.stack(self.ins)
        self._del_stack = np.stack(self.dele) if n else np.zeros((0, n_prev))
        self._sub_exp = [_shifted(m, 0) for m in self.sub]
        self._ins_exp = [_shifted(m, 0) for m in self.ins]
        self._sub_exp_t = [_shifted(m.T, 0) for m in self.sub]
        self._ins_exp_t = [_shifted(m.T, 0) for m in self.ins]

    # -- constrained grid (single canonical form) --------------------------

    def _grid_tables(self, u: str):
        """Arc log weights on the ``(|w|+1) x (|u|+1)`` grid of one canonical form.

        ``S[i][j]`` is the substitution out of node ``(i, j)``, ``I[i][j]`` the
        insertion and ``D[i][j]`` the deletion.
        """
        if not self.alphabet.covers(u):
            raise AlignmentError(f"canonical form {u!r} has symbols outside {self.alphabet!r}")
        idx = np.fromiter((self.alphabet.index(c) for c in u), dtype=np.intp, count=len(u))
        prev = np.concatenate(([0], idx + 1))
        n = len(self.w)
        sub = self._sub_stack[:, prev[:-1], idx] if n else np.zeros((0, len(u)))
        ins = self._ins_stack[:, prev[:-1], idx]
        dele = self._del_stack[:, prev] if n else np.zeros((0, len(u) + 1))
        return idx, prev, sub, ins, dele

    @staticmethod
    def _grid_alpha(sub, ins, dele):
        """Forward sums on the grid; the insertion chain of a row is a log-cumsum."""
        n, m = dele.shape[0], ins.shape[1]
        alpha = np.full((n + 1, m + 1), NEG_INF)
        lead = np.full(m + 1, NEG_INF)
        lead[0] = 0.0
        for i in range(n + 1):
            if i:
                lead = alpha[i - 1] + dele[i - 1]
                lead[1:] = np.logaddexp(lead[1:], alpha[i - 1, :-1] + sub[i - 1])
            offset = np.concatenate(([0.0], np.cumsum(ins[i])))
            alpha[i] = np.logaddexp.accumulate(lead - offset) + offset
        return alpha

    @staticmethod
    def _grid_beta(sub, ins, dele):
        n, m = dele.shape[0], ins.shape[1]
        beta = np.full((n + 1, m + 1), NEG_INF)
        lead = np.full(m + 1, NEG_INF)
        lead[m] = 0.0
        for i in range(n, -1, -1):
            if i < n:
                lead = beta[i + 1] + dele[i]
                lead[:-1] = np.logaddexp(lead[:-1], beta[i + 1, 1:] + sub[i])
            # offset[j] = sum of ins[i][j:]
            offset = np.concatenate((np.cumsum(ins[i][::-1])[::-1], [0.0]))
            beta[i] = (np.logaddexp.accumulate((lead - offset)[::-1]) + offset[::-1])[::-1]
        return beta

    def log_pair_score(self, u: str) -> float:
        _, _, sub, ins, dele = self._grid_tables(u)
        return float(self._grid_alpha(sub, ins, dele)[-1, -1])

    def posterior_marginals(self, u: str) -> "ArcMarginals":
        """Alignment-posterior arc marginals for ``u`` as dense arrays."""
        idx, prev, sub, ins, dele = self._grid_tables(u)
        n, m = len(self.w), len(u)
        alpha = self._grid_alpha(sub, ins, dele)
        beta = self._grid_beta(sub, ins, dele)
        log_z = alpha[n, m]
        marg = ArcMarginals.zeros(self)
        pj = prev[:-1]
        for i in range(n + 1):
            post_i = np.exp(alpha[i, :-1] + ins[i] + beta[i, 1:] - log_z)
            np.add.at(marg.ins[i], (pj, idx), post_i)
            if i < n:
                post_s = np.exp(alpha[i, :-1] + sub[i] + beta[i + 1, 1:] - log_z)
                np.add.at(marg.sub[i], (pj, idx), post_s)
                post_d = np.exp(alpha[i] + dele[i] + beta[i + 1] - log_z)
                np.add.at(marg.dele[i], prev, post_d)
        return marg

    # -- full lattice --------------------------------------------------------

    def forward(self, k: int) -> np.ndarray:
        """Log forward sums ``alpha[i, j, p]`` over the lattice with ``j <= |w| + k``."""
        n = len(self.w)
        J = n + k + 1
        n_prev = len(self.prev_tokens)
        alpha = np.full((n + 1, J, n_prev), NEG_INF)
        alpha[0, 0, 0] = 0.0
        for i in range(n + 1):
            if i > 0:
                row = alpha[i - 1]
                m_exp, shift = self._sub_exp[i - 1]
                alpha[i, 1:, 1:] = _lse_matvec(row[:-1], m_exp, shift)
                alpha[i] = np.logaddexp(alpha[i], row + self.dele[i - 1][None, :])
            m_exp, shift = self._ins_exp[i]
            for j in range(1, J):
                alpha[i, j, 1:] = np.logaddexp(alpha[i, j, 1:], _lse_matvec(alpha[i, j - 1], m_exp, shift))
        return alpha

    def backward(self, k: int) -> np.ndarray:
        n = len(self.w)
        J = n + k + 1
        n_prev = len(self.prev_tokens)
        beta = np.full((n + 1, J, n_prev), NEG_INF)
        beta[n, 1:, :] = 0.0
        for i in range(n, -1, -1):
            if i < n:
                nxt = beta[i + 1]
                m_exp, shift = self._sub_exp_t[i]
                beta[i, :-1] = np.logaddexp(beta[i, :-1], _lse_matvec(nxt[1:, 1:], m_exp, shift))
                beta[i] = np.logaddexp(beta[i], nxt + self.dele[i][None, :])
            m_exp, shift = self._ins_exp_t[i]
            for j in range(J - 2, -1, -1):
                beta[i, j] = np.logaddexp(beta[i, j], _lse_matvec(beta[i, j + 1, 1:], m_exp, shift))
        return beta

    @staticmethod
    def log_partition_from_forward(alpha: np.ndarray) -> float:
        return float(logsumexp(alpha[-1, 1:, :]))

    def lattice_marginals(self, k: int) -> "ArcMarginals":
        """Expected arc counts over all accepting lattice paths."""
        alpha = self.forward(k)
        beta = self.backward(k)
        log_z = self.log_partition_from_forward(alpha)
        marg = ArcMarginals.zeros(self)
        n = len(self.w)
        with np.errstate(invalid="ignore"):
            for i in range(n + 1):
                a = alpha[i]
                if i < n:
                    s = a[:-1, :, None] + self.sub[i][None] + beta[i + 1, 1:, None, 1:]
                    marg.sub[i] = np.exp(logsumexp(s, axis=0) - log_z)
                    d = a + self.dele[i][None, :] + beta[i + 1]
                    marg.dele[i] = np.exp(logsumexp(d, axis=0) - log_z)
                t = a[:-1, :, None] + self.ins[i][None] + beta[i, 1:, None, 1:]
                marg.ins[i] = np.exp(logsumexp(t, axis=0) - log_z)
        for arr in marg.sub + marg.ins + marg.dele:
            np.nan_to_num(arr, copy=False, nan=0.0)
        return marg


@dataclass
class ArcMarginals:
    """Dense expected arc counts, convertible to a feature expectation."""

    weights: EditWeights
    sub: list
    ins: list
    dele: list

    @classmethod
    def zeros(cls, ew: EditWeights) -> "ArcMarginals":
        return cls(
            ew,
            [np.zeros_like(m) for m in ew.sub],
            [np.zeros_like(m) for m in ew.ins],
            [np.zeros_like(m) for m in ew.dele],
        )

    def iadd(self, other: "ArcMarginals", scale: float = 1.0) -> "ArcMarginals":
        for mine, theirs in zip(self.sub + self.ins + self.dele, other.sub + other.ins + other.dele):
            mine += scale * theirs
        return self

    def features(self) -> SparseVector:
        ew = self.weights
        config = ew.config
        w = ew.w
        r = config.window
        out = SparseVector()

        def emit(names, kind, i, mat):
            # mat: (n_prev, len(names))
            totals = mat.sum(axis=0)
            for idx, name in enumerate(names):
                tot = float(totals[idx])
                if tot == 0.0:
                    continue
                if config.action_identity:
                    out.add_to(f"t|id|{name}", tot)
                if config.action_kind:
                    out.add_to(f"t|kind|{kind}", tot)
                if config.surface_context:
                    for off in range(-r, r + 1):
                        out.add_to(f"t|ctx|{off}={_context(w, i + off)}|{name}", tot)
                if config.previous_output:
                    for p, ptok in enumerate(ew.prev_tokens):
                        v = float(mat[p, idx])
                        if v != 0.0:
                            out.add_to(f"t|prev|{ptok}|{name}", v)

        for i in range(len(w) + 1):
            emit(ew.ins_names, INS, i, self.ins[i])
            if i < len(w):
                emit(ew.sub_names[i], SUB, i, self.sub[i])
                emit([ew.del_names[i]], DEL, i, self.dele[i][:, None])
        return out


def transducer_log_partition(w: str, eta, alphabet: Alphabet, k: int, config=DEFAULT_CONFIG) -> float:
    return EditWeights.log_partition_from_forward(EditWeights(w, eta, alphabet, config).forward(k))


def transducer_partition(w: str, eta, alphabet: Alphabet, k: int, config=DEFAULT_CONFIG) -> float:
    """Sum of ``score_triple`` over all canonical forms ``1 <= |u| <= |w| + k`` and alignments."""
    return math.exp(transducer_log_partition(w, eta, alphabet, k, config))


def lattice_expected_features(w: str, eta, alphabet: Alphabet, k: int, config=DEFAULT_CONFIG) -> SparseVector:
    """Gradient of the log transducer partition with respect to ``eta``."""
    return EditWeights(w, eta, alphabet, config).lattice_marginals(k).features()


# --------------------------------------------------------------------------
# Forward filtering, backward sampling
# --------------------------------------------------------------------------


class CanonicalSampler:
    """Draws ``(u, a)`` with probability ``score_triple / transducer_partition``.

    Backward steps out of a lattice state use a cumulative table built the
    first time the state is visited.
    """

    def __init__(self, w: str, eta, alphabet: Alphabet, k: int, config=DEFAULT_CONFIG, weights: EditWeights | None = None):
        self.weights = weights if weights is not None else EditWeights(w, eta, alphabet, config)
        self.w = w
        self.k = k
        self.alpha = self.weights.forward(k)
        self.log_z = EditWeights.log_partition_from_forward(self.alpha)
        final = self.alpha[-1, 1:, :]
        self._n_prev = final.shape[1]
        self._final_cum = np.cumsum(np.exp(final.ravel() - self.log_z))
        self._tables: dict[tuple[int, int, int], tuple] = {}

    def _table(self, i: int, j: int, p: int):
        key = (i, j, p)
        hit = self._tables.get(key)
        if hit is not None:
            return hit
        ew, alpha = self.weights, self.alpha
        n_prev = self._n_prev
        arc_w = np.full(2 * n_prev + 1, NEG_INF)
        logits = np.full(2 * n_prev + 1, NEG_INF)
        if p > 0:
            c = p - 1
            if i > 0 and j > 0:
                arc_w[:n_prev] = ew.sub[i - 1][:, c]
                logits[:n_prev] = alpha[i - 1, j - 1] + arc_w[:n_prev]
            if j > 0:
                arc_w[n_prev:2 * n_prev] = ew.ins[i][:, c]
                logits[n_prev:2 * n_prev] = alpha[i, j - 1] + arc_w[n_prev:2 * n_prev]
        if i > 0:
            arc_w[-1] = ew.dele[i - 1][p]
            logits[-1] = alpha[i - 1, j, p] + arc_w[-1]
        cum = np.cumsum(np.exp(logits - logits.max()))
        hit = (cum, cum[-1], arc_w.tolist())
        self._tables[key] = hit
        return hit

    def _pick(self, cum, total, rng) -> int:
        idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
        idx = min(idx, len(cum) - 1)
        # never land on a zero-probability entry
        while idx > 0 and cum[idx] == cum[idx - 1]:
            idx -= 1
        return idx

    def sample(self, rng: np.random.Generator) -> tuple[str, Alignment, float]:
        ew = self.weights
        syms = ew.alphabet
        w = self.w
        n_prev = self._n_prev
        flat = self._pick(self._final_cum, self._final_cum[-1], rng)
        j, p = divmod(flat, n_prev)
        i, j = len(w), j + 1
        log_weight = 0.0
        actions = []
        while i > 0 or j > 0:
            cum, total, arc_w = self._table(i, j, p)
            choice = self._pick(cum, total, rng)
            log_weight += arc_w[choice]
            if choice < n_prev:
                actions.append(EditAction.sub(w[i - 1], syms[p - 1]))
                i, j, p = i - 1, j - 1, choice
            elif choice < 2 * n_prev:
                actions.append(EditAction.insert(syms[p - 1]))
                j, p = j - 1, choice - n_prev
            else:
                actions.append(EditAction.delete(w[i - 1]))
                i -= 1
        actions.reverse()
        a = Alignment(actions)
        return a.canonical, a, float(log_weight - self.log_z)


def sample_canonical(w: str, eta, alphabet: Alphabet, k: int, seed, config=DEFAULT_CONFIG):
    """One draw ``(u, a, log q(u, a | w))`` from the transducer."""
    return CanonicalSampler(w, eta, alphabet, k, config).sample(np.random.default_rng(seed))
