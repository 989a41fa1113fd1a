import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from canonseg import oracle
from canonseg import transducer as tr
from canonseg.core import Alignment, Alphabet, BudgetError, EditAction

AB = Alphabet("ab")


def random_eta(keys, seed, scale=0.5):
    rng = np.random.default_rng(seed)
    return {k: float(v) for k, v in zip(sorted(keys), rng.normal(0, scale, len(keys)))}


def lattice_keys(w, k, alphabet=AB):
    keys = set()
    for u, a in oracle.lattice_paths(w, alphabet, k):
        keys |= set(tr.alignment_features(u, a, w))
    return keys


def hand_arc_score(a, w, eta):
    """Per-arc scorer written against the feature template, not ``arc_features``."""
    total, i, prev = 0.0, 0, "<s>"
    for act in a:
        name = act.name
        names = [f"t|id|{name}", f"t|kind|{act.kind}", f"t|prev|{prev}|{name}"]
        for off in (-2, -1, 0, 1, 2):
            pos = i + off
            ctx = "<w>" if pos < 0 else "</w>" if pos >= len(w) else w[pos]
            names.append(f"t|ctx|{off}={ctx}|{name}")
        total += sum(eta.get(n, 0.0) for n in names)
        if act.consumed is not None:
            i += 1
        if act.emitted is not None:
            prev = act.emitted
    return total


def test_score_triple_trivial():
    a = Alignment([EditAction.sub("a", "a"), EditAction.sub("b", "b")])
    assert tr.score_triple("ab", a, "ab", {}) == 1.0
    assert tr.score_triple("ab", a, "ab", {"t|id|S:a>a": math.log(2)}) == pytest.approx(2.0, abs=1e-12)


def test_score_triple_is_product_of_arc_weights():
    w, u = "untestably", "untestablely"
    # restore "le" before the surface "ly"
    acts = [EditAction.sub(c, c) for c in "untestab"]
    acts += [EditAction.insert("l"), EditAction.insert("e"), EditAction.sub("l", "l"), EditAction.sub("y", "y")]
    a = Alignment(acts)
    assert a.aligns(u, w)
    feats = tr.alignment_features(u, a, w)
    eta = random_eta(feats, 3)
    assert tr.log_score_triple(u, a, w, eta) == pytest.approx(hand_arc_score(a, w, eta), abs=1e-12)


@pytest.mark.parametrize("m, n, count", [(1, 1, 3), (2, 2, 13), (2, 1, 5), (3, 2, 25)])
def test_pair_score_delannoy(m, n, count):
    assert len(oracle.enumerate_alignments("a" * m, "a" * n)) == count == oracle.delannoy(m, n)
    assert tr.pair_score("a" * m, "b" * n, {}, 5) == pytest.approx(count, rel=1e-14)


@given(st.text("ab", min_size=1, max_size=4), st.text("ab", min_size=1, max_size=4), st.integers(0, 1000))
def test_pair_score_matches_enumeration(u, w, seed):
    aligns = oracle.enumerate_alignments(u, w)
    keys = set().union(*(tr.alignment_features(u, a, w) for a in aligns))
    eta = random_eta(keys, seed)
    exact = math.exp(oracle.log_sum([tr.log_score_triple(u, a, w, eta) for a in aligns]))
    assert oracle.relative_error(tr.pair_score(u, w, eta, 4), exact) < 1e-12
    ew = tr.EditWeights(w, eta, AB)
    assert oracle.relative_error(math.exp(ew.log_pair_score(u)), exact) < 1e-12


def test_pair_score_budget():
    with pytest.raises(BudgetError):
        tr.pair_score("aaaa", "a", {}, 2)


def test_partition_counts_lattice_paths():
    paths = list(oracle.lattice_paths("a", AB, 1))
    # u in {a, b}: 3 each; u of length 2: 4 forms x 5 alignments
    assert len(paths) == 2 * 3 + 4 * 5 == 26
    assert tr.transducer_partition("a", {}, AB, 1) == pytest.approx(26.0, rel=1e-14)
    for u in ("a", "ab", "bb"):
        assert tr.transducer_partition("a", {}, AB, 1) >= tr.pair_score(u, "a", {}, 1)


@pytest.mark.parametrize("seed", range(3))
def test_partition_matches_enumeration(seed):
    w, k = "ab", 2
    paths = list(oracle.lattice_paths(w, AB, k))
    eta = random_eta(lattice_keys(w, k), seed)
    exact = math.exp(oracle.log_sum([tr.log_score_triple(u, a, w, eta) for u, a in paths]))
    assert oracle.relative_error(tr.transducer_partition(w, eta, AB, k), exact) < 1e-10


def test_partition_empty_budget_single_form():
    # k = 0 on a one-letter alphabet admits only u = "a"
    a1 = Alphabet("a")
    assert tr.transducer_partition("a", {}, a1, 0) == pytest.approx(tr.pair_score("a", "a", {}, 0))


def test_posterior_uniform_at_zero():
    aligns = oracle.enumerate_alignments("a", "b")
    expected = Counter()
    for a in aligns:
        for f, v in tr.alignment_features("a", a, "b").items():
            expected[f] += v / len(aligns)
    got = tr.alignment_posterior_features("a", "b", {}, 1)
    assert set(got) == set(expected)
    for f in expected:
        assert got[f] == pytest.approx(expected[f], abs=1e-12)


def test_posterior_degenerate_all_substitute():
    eta = {"t|kind|I": -200.0, "t|kind|D": -200.0}
    u, w = "ab", "ba"
    sub = Alignment([EditAction.sub("b", "a"), EditAction.sub("a", "b")])
    g = tr.alignment_features(u, sub, w)
    got = tr.alignment_posterior_features(u, w, eta, 0)
    for f in set(got) | set(g):
        assert got.get(f, 0.0) == pytest.approx(g.get(f, 0.0), abs=1e-10)


@pytest.mark.parametrize("seed", range(4))
def test_posterior_matches_enumeration(seed):
    u, w = "abb", "ba"
    aligns = oracle.enumerate_alignments(u, w)
    feats = [tr.alignment_features(u, a, w) for a in aligns]
    eta = random_eta(set().union(*feats), seed)
    logs = np.array([f.dot(eta) for f in feats])
    p = np.exp(logs - oracle.log_sum(logs.tolist()))
    expected = oracle.weighted_mean(list(zip(logs.tolist(), feats)))
    got = tr.alignment_posterior_features(u, w, eta, 1)
    for f in set(got) | set(expected):
        assert abs(got.get(f, 0.0) - expected.get(f, 0.0)) < 1e-10
    assert p.sum() == pytest.approx(1.0)


def test_lattice_expected_features_matches_enumeration():
    w, k = "ba", 1
    paths = list(oracle.lattice_paths(w, AB, k))
    feats = [tr.alignment_features(u, a, w) for u, a in paths]
    eta = random_eta(set().union(*feats), 11)
    expected = oracle.weighted_mean([(f.dot(eta), f) for f in feats])
    got = tr.lattice_expected_features(w, eta, AB, k)
    for f in set(got) | set(expected):
        assert abs(got.get(f, 0.0) - expected.get(f, 0.0)) < 1e-10


def test_log_partition_gradient_by_finite_differences():
    w, k = "ab", 1
    keys = sorted(lattice_keys(w, k))
    eta = random_eta(keys, 5)
    grad = tr.lattice_expected_features(w, eta, AB, k)
    fd = oracle.central_difference(lambda th: tr.transducer_log_partition(w, th, AB, k), eta, keys, 1e-5)
    for key in keys:
        a, b = grad.get(key, 0.0), fd[key]
        assert abs(a - b) / max(abs(a), abs(b), 1e-5) < 1e-4


def test_sampler_log_probability_and_determinism():
    w, k = "ab", 1
    eta = random_eta(lattice_keys(w, k), 2)
    log_z = tr.transducer_log_partition(w, eta, AB, k)
    for seed in range(20):
        u, a, lq = tr.sample_canonical(w, eta, AB, k, seed)
        assert a.aligns(u, w) and 1 <= len(u) <= len(w) + k
        assert lq == pytest.approx(tr.log_score_triple(u, a, w, eta) - log_z, abs=1e-10)
        assert tr.sample_canonical(w, eta, AB, k, seed)[:2] == (u, a)


def test_sampler_chi_square_nonuniform():
    w, k = "a", 1
    paths = list(oracle.lattice_paths(w, AB, k))
    eta = random_eta(lattice_keys(w, k), 9, scale=0.8)
    logs = np.array([tr.log_score_triple(u, a, w, eta) for u, a in paths])
    probs = np.exp(logs - oracle.log_sum(logs.tolist()))
    index = {(u, a): i for i, (u, a) in enumerate(paths)}
    sampler = tr.CanonicalSampler(w, eta, AB, k)
    rng = np.random.default_rng(0)
    n = 20000
    counts = np.zeros(len(paths))
    for _ in range(n):
        u, a, _ = sampler.sample(rng)
        counts[index[(u, a)]] += 1
    assert stats.chisquare(counts, probs * n).pvalue > 0.01


@given(st.text("ab", min_size=1, max_size=3), st.text("ab", min_size=1, max_size=3), st.integers(0, 1000))
def test_posterior_in_convex_hull(u, w, seed):
    aligns = oracle.enumerate_alignments(u, w)
    feats = [tr.alignment_features(u, a, w) for a in aligns]
    keys = set().union(*feats)
    post = tr.alignment_posterior_features(u, w, random_eta(keys, seed, 1.0), 3)
    for f in keys:
        vals = [g.get(f, 0.0) for g in feats]
        assert min(vals) - 1e-9 <= post.get(f, 0.0) <= max(vals) + 1e-9
