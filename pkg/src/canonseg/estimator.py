"""scikit-learn style wrappers around :func:`canonseg.training.train`.

``X`` is a sequence of surface words. ``y`` holds the gold analyses, one per
word, as bracketed trees (``"(Word (Prefix un) (Word lock))"``),
``(canonical, tree)`` pairs or :class:`~canonseg.data.TreebankEntry` objects.
"""
from __future__ import annotations

from typing import Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import evaluation
from .core import Alphabet, Label, ParseTree, require_tree
from .data import FormatError, TreebankEntry, load_lexicon, parse_tree
from .joint import Analysis
from .training import DEV_METRICS, TrainConfig, predict_words, score_predictions, train


def check_words(X, name: str = "X") -> list[str]:
    """Validate a sequence of non-empty surface words."""
    if isinstance(X, str):
        raise TypeError(f"{name} must be a sequence of words, not a single string")
    try:
        words = list(X)
    except TypeError as err:
        raise TypeError(f"{name} must be an iterable of strings") from err
    for i, w in enumerate(words):
        if not isinstance(w, str):
            raise TypeError(f"{name}[{i}] is {type(w).__name__}, expected str")
        if not w or w != w.strip():
            raise ValueError(f"{name}[{i}] = {w!r} is empty or has surrounding whitespace")
    return words


def _as_entry(w: str, target, i: int) -> TreebankEntry:
    if isinstance(target, TreebankEntry):
        if target.surface != w:
            raise ValueError(f"y[{i}] is an entry for {target.surface!r}, but X[{i}] is {w!r}")
        return target
    if isinstance(target, str):
        try:
            tree, u = parse_tree(target)
        except FormatError as err:
            raise ValueError(f"y[{i}]: {err}") from err
        return TreebankEntry(w, u, tree)
    if isinstance(target, tuple) and len(target) == 2:
        u, tree = target
        if isinstance(tree, str):
            tree, parsed_u = parse_tree(tree)
            if parsed_u != u:
                raise ValueError(f"y[{i}]: tree leaves spell {parsed_u!r}, not {u!r}")
        if not isinstance(tree, ParseTree):
            raise TypeError(f"y[{i}]: expected a ParseTree or bracketed string")
        if tree.label is not Label.ROOT:
            tree = ParseTree.root(tree)
        require_tree(tree, u)
        return TreebankEntry(w, u, tree)
    raise TypeError(f"y[{i}] has unsupported type {type(target).__name__}")


def check_targets(X, y) -> list[TreebankEntry]:
    """Validate ``X`` and ``y`` together and return treebank entries."""
    words = check_words(X)
    if y is None:
        raise ValueError("y is required")
    targets = list(y)
    if len(targets) != len(words):
        raise ValueError(f"X and y differ in length: {len(words)} vs {len(targets)}")
    if not words:
        raise ValueError("cannot fit on an empty dataset")
    return [_as_entry(w, t, i) for i, (w, t) in enumerate(zip(words, targets))]


def infer_alphabet(entries: Sequence[TreebankEntry]) -> Alphabet:
    chars = set()
    for e in entries:
        chars.update(e.surface)
        chars.update(e.canonical)
    return Alphabet(sorted(chars))


class _Segmenter(BaseEstimator):
    _kind = "hier"

    def __init__(
        self,
        epochs: int = 100,
        learning_rate: float = 0.1,
        lambda_grid=(0.0, 0.1, 0.2, 0.3, 0.4, 0.5),
        n_samples: int = 100,
        n_decode_samples: int = 100,
        patience: int = 10,
        dev_metric: str = "morpheme_f1",
        k: int = 5,
        alphabet=None,
        lexicon=None,
        seed: int = 0,
        workers: int = 1,
    ):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.lambda_grid = lambda_grid
        self.n_samples = n_samples
        self.n_decode_samples = n_decode_samples
        self.patience = patience
        self.dev_metric = dev_metric
        self.k = k
        self.alphabet = alphabet
        self.lexicon = lexicon
        self.seed = seed
        self.workers = workers

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            lambda_grid=tuple(self.lambda_grid),
            n_samples=self.n_samples,
            n_decode_samples=self.n_decode_samples,
            patience=self.patience,
            dev_metric=self.dev_metric,
            seed=self.seed,
            workers=self.workers,
        )

    def _lexicon(self) -> frozenset:
        if self.lexicon is None:
            return frozenset()
        if isinstance(self.lexicon, str):
            return load_lexicon(self.lexicon)
        return frozenset(w.lower() for w in self.lexicon)

    def _alphabet(self, entries) -> Alphabet:
        if self.alphabet is None:
            return Alphabet()
        if self.alphabet == "infer":
            return infer_alphabet(entries)
        return self.alphabet if isinstance(self.alphabet, Alphabet) else Alphabet(self.alphabet)

    def fit(self, X, y, X_dev=None, y_dev=None):
        """Train on ``(X, y)``; the dev set defaults to the training set."""
        if self.dev_metric not in DEV_METRICS:
            raise ValueError(f"dev_metric must be one of {DEV_METRICS}")
        if self._kind == "flat" and self.dev_metric == "constituent_f1":
            raise ValueError("the flat model has no trees; pick another dev_metric")
        entries = check_targets(X, y)
        dev = entries if X_dev is None else check_targets(X_dev, y_dev)
        self.params_, self.training_log_ = train(
            entries,
            dev,
            self._kind,
            self._config(),
            alphabet=self._alphabet(entries + (dev if dev is not entries else [])),
            k=self.k,
            lexicon=self._lexicon(),
        )
        self.n_features_ = len(self.params_.omega)
        return self

    def predict_analyses(self, X) -> list[Analysis]:
        check_is_fitted(self, "params_")
        words = check_words(X)
        return predict_words(words, self.params_, self.n_decode_samples, self.seed, self.workers)

    def predict(self, X) -> list[list[str]]:
        """Canonical segment lists, one per word."""
        return [a.segments for a in self.predict_analyses(X)]

    def predict_canonical(self, X) -> list[str]:
        return [a.u for a in self.predict_analyses(X)]

    def evaluate(self, X, y) -> dict:
        """All applicable metrics as a dict (``constituent_f1`` only for trees)."""
        gold = check_targets(X, y)
        return score_predictions(self.predict_analyses(X), gold, self._kind)

    def score(self, X, y) -> float:
        """Morpheme F1 on ``(X, y)``."""
        gold = check_targets(X, y)
        pred = self.predict(X)
        return evaluation.morpheme_f1(pred, [e.segments for e in gold])[2]


class HierarchicalSegmenter(_Segmenter):
    """Joint transducer and tree model; predicts canonical forms with parses."""

    _kind = "hier"

    def predict_trees(self, X) -> list[str]:
        """Bracketed trees over the predicted canonical forms."""
        return [a.t.to_sexpr(a.u) for a in self.predict_analyses(X)]


class FlatSegmenter(_Segmenter):
    """Transducer joined with a semi-Markov segmenter (no tree structure)."""

    _kind = "flat"


__all__ = ["HierarchicalSegmenter", "FlatSegmenter", "check_words", "check_targets", "infer_alphabet"]
