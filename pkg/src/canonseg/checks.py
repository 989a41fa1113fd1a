"""Guarded comparisons of the dynamic programs against exhaustive enumeration.

Each ``check_*`` function returns a :class:`CheckResult` with the worst
relative error it saw. The ``oracle`` subcommand and the acceptance tests
both run these.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import logsumexp

from . import baseline, oracle, parser
from . import transducer as tr
from .core import Alphabet, GuardError, SparseVector, enumerate_trees
from .oracle import relative_error

PARSER_ALPHABET = "abc"
MAX_PARSER_LENGTH = 6
FD_FLOOR = 1e-5


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float
    cases: int
    seconds: float
    details: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}\t{self.name}\tmax_rel_err={self.max_error:.3e}\ttol={self.tolerance:.0e}"
            f"\tcases={self.cases}\tseconds={self.seconds:.2f}"
        )


def _random_vector(keys, rng: np.random.Generator, scale: float) -> SparseVector:
    return SparseVector({k: float(v) for k, v in zip(keys, rng.normal(0.0, scale, len(keys)))})


def _parser_cases(rng: np.random.Generator, max_len: int):
    """One random string per length; the lexicon holds a few of its substrings."""
    cases = []
    for n in range(1, max_len + 1):
        u = "".join(rng.choice(list(PARSER_ALPHABET), n))
        lexicon = frozenset({u, u[: max(1, n // 2)], u[n // 2:]})
        cases.append((u, lexicon))
    return cases


def check_parser(draws: int = 50, max_len: int = MAX_PARSER_LENGTH, seed: int = 0, scale: float = 1.0) -> CheckResult:
    """``inside`` against summing ``tree_score`` over ``enumerate_trees``."""
    if max_len > MAX_PARSER_LENGTH:
        raise GuardError(f"parser oracle limited to |u| <= {MAX_PARSER_LENGTH}")
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst, cases = 0.0, 0
    for u, lexicon in _parser_cases(rng, max_len):
        # ``inside(u, 0)`` counts trees: 3^(n-1)
        worst = max(worst, relative_error(parser.inside(u, {}, lexicon), 3.0 ** (len(u) - 1)))
        cases += 1
    for _ in range(draws):
        for u, lexicon in _parser_cases(rng, max_len):
            trees = enumerate_trees(u)
            feats = [parser.tree_feature_vector(t, u, lexicon) for t in trees]
            keys = sorted(set().union(*feats))
            omega = _random_vector(keys, rng, scale)
            exact = math.fsum(math.exp(f.dot(omega)) for f in feats)
            worst = max(worst, relative_error(parser.inside(u, omega, lexicon), exact))
            cases += 1
    return CheckResult("parser-inside", worst, 1e-10, cases, time.perf_counter() - start)


def _words(alphabet: Alphabet, max_w: int):
    for n in range(1, max_w + 1):
        for chars in itertools.product(alphabet, repeat=n):
            yield "".join(chars)


class _PathMatrix:
    """Feature counts of every accepting lattice path as a sparse matrix.

    Built once per surface word at the largest budget; smaller budgets select
    the rows with ``|u| <= |w| + k``.
    """

    def __init__(self, w: str, alphabet: Alphabet, k: int, config=tr.DEFAULT_CONFIG):
        rows, forms, index = [], [], {}
        for u, a in oracle.lattice_paths(w, alphabet, k):
            rows.append(tr.alignment_features(u, a, w, config))
            forms.append(u)
        for g in rows:
            for f in g:
                index.setdefault(f, len(index))
        data, ri, ci = [], [], []
        for r, g in enumerate(rows):
            for f, v in g.items():
                ri.append(r)
                ci.append(index[f])
                data.append(v)
        self.keys = sorted(index, key=index.get)
        self.matrix = sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), len(index)))
        self.forms = np.array(forms)
        self.lengths = np.array([len(u) for u in forms])

    def log_scores(self, eta) -> np.ndarray:
        vec = np.array([eta.get(f, 0.0) for f in self.keys])
        return self.matrix @ vec


def check_transducer(
    draws: int = 50, alphabet: str = "ab", max_w: int = 3, max_k: int = 2, seed: int = 0, scale: float = 0.5
) -> CheckResult:
    """``pair_score`` and ``transducer_partition`` against enumerated paths."""
    alpha = Alphabet(alphabet)
    if len(alpha) > oracle.MAX_ALPHABET or max_w + max_k > oracle.MAX_JOINT_LENGTH:
        raise GuardError(
            f"transducer oracle needs |alphabet| <= {oracle.MAX_ALPHABET} and |w|+k <= {oracle.MAX_JOINT_LENGTH}"
        )
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    details = []
    worst, cases = 0.0, 0
    # eta = 0: alignment counts are Delannoy numbers
    for m, n in ((1, 1), (2, 2)):
        got = tr.pair_score("a" * m, "a" * n, {}, max(0, m - n))
        err = relative_error(got, oracle.delannoy(m, n))
        details.append(f"D({m},{n})={oracle.delannoy(m, n)} pair_score={got:.12g}")
        worst = max(worst, err)
        cases += 1
    paths = {w: _PathMatrix(w, alpha, max_k) for w in _words(alpha, max_w)}
    keys = sorted(set().union(*(p.keys for p in paths.values())))
    for _ in range(draws):
        eta = _random_vector(keys, rng, scale)
        for w, pm in paths.items():
            all_scores = pm.log_scores(eta)
            ew = tr.EditWeights(w, eta, alpha)
            for k in range(max_k + 1):
                keep = pm.lengths <= len(w) + k
                scores, forms = all_scores[keep], pm.forms[keep]
                exact = float(logsumexp(scores))
                got = tr.transducer_log_partition(w, eta, alpha, k)
                worst = max(worst, relative_error(math.exp(got), math.exp(exact)))
                # one canonical form per case for pair_score, both implementations
                u = str(forms[rng.integers(len(forms))])
                exact_pair = math.exp(float(logsumexp(scores[forms == u])))
                worst = max(worst, relative_error(tr.pair_score(u, w, eta, k), exact_pair))
                worst = max(worst, relative_error(math.exp(ew.log_pair_score(u)), exact_pair))
                cases += 1
    return CheckResult("transducer-partition", worst, 1e-10, cases, time.perf_counter() - start, details)


def _fd_error(analytic, fn, theta, keys, step) -> float:
    numeric = oracle.central_difference(fn, theta, keys, step)
    worst = 0.0
    for key in keys:
        a, b = analytic.get(key, 0.0), numeric[key]
        scale = max(abs(a), abs(b), FD_FLOOR)
        worst = max(worst, abs(a - b) / scale)
    return worst


def check_gradients(seed: int = 0, step: float = 1e-5, draws: int = 5) -> CheckResult:
    """Exact factor log-likelihood gradients against central differences.

    Covers ``log p(u | w)`` for the transducer, ``log p(t | u)`` for the
    parser and ``log p(s | u)`` for the semi-Markov baseline. Coordinates are
    every feature the factor can touch; errors are relative with a floor of
    ``FD_FLOOR`` on the denominator.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    alpha = Alphabet("ab")
    worst, cases = 0.0, 0
    for _ in range(draws):
        w, u, k = "ab", "abb", 1
        keys = sorted(tr.lattice_expected_features(w, {}, alpha, k))
        eta = _random_vector(keys, rng, 0.5)

        def ll_t(theta):
            return tr.log_pair_score(u, w, theta, k) - tr.transducer_log_partition(w, theta, alpha, k)

        grad = tr.alignment_posterior_features(u, w, eta, k) - tr.lattice_expected_features(w, eta, alpha, k)
        worst = max(worst, _fd_error(grad, ll_t, eta, keys, step))
        cases += len(keys)

        u = "abcab"
        lexicon = frozenset({"ab", "cab"})
        trees = enumerate_trees(u)
        gold = trees[int(rng.integers(len(trees)))]
        keys = sorted(set().union(*(parser.tree_feature_vector(t, u, lexicon) for t in trees)))
        omega = _random_vector(keys, rng, 1.0)

        def ll_p(theta):
            return parser.log_tree_score(gold, u, theta, lexicon) - parser.log_inside(u, theta, lexicon)

        grad = parser.tree_feature_vector(gold, u, lexicon) - parser.expected_tree_features(u, omega, lexicon)
        worst = max(worst, _fd_error(grad, ll_p, omega, keys, step))
        cases += len(keys)

        segs = [baseline.FlatSegmentation(b) for b in oracle.enumerate_segmentations(u)]
        gold_s = segs[int(rng.integers(len(segs)))]
        keys = sorted(set().union(*(baseline.segmentation_features(s, u, lexicon) for s in segs)))
        psi = _random_vector(keys, rng, 1.0)

        def ll_s(theta):
            return baseline.segmentation_features(gold_s, u, lexicon).dot(theta) - baseline.semimarkov_log_partition(u, theta, lexicon)

        grad = baseline.segmentation_features(gold_s, u, lexicon) - baseline.semimarkov_expected_features(u, psi, lexicon)
        worst = max(worst, _fd_error(grad, ll_s, psi, keys, step))
        cases += len(keys)
    return CheckResult("factor-gradients", worst, 1e-4, cases, time.perf_counter() - start)


CHECKS = {"parser": check_parser, "transducer": check_transducer, "gradient": check_gradients}
